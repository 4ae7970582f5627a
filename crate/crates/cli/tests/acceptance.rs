//! Acceptance suite: runs every reproduction criterion at full size and
//! prints one pass/fail line each, then checks that a mis-scaled gasket is
//! rejected. Set `RESFORM_QUICK=1` for reduced sample counts.

use std::process::ExitCode;
use std::time::Instant;

use resform_cli::reproduce::{criteria, run_criterion, Config};

fn main() -> ExitCode {
    let cfg = if std::env::var_os("RESFORM_QUICK").is_some() { Config::quick() } else { Config::default() };
    let mut failures = 0;
    for (id, _, _) in criteria() {
        let start = Instant::now();
        let o = run_criterion(id, &cfg);
        println!(
            "[{}] C{} {} ({:.1}s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.title,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        failures += usize::from(!o.passed);
    }

    let control = Config { gasket_factor: 1.6, ..Config::quick() };
    let o = run_criterion(4, &control);
    let rejected = !o.passed;
    println!(
        "[{}] negative control: gasket factor 1.6 {} compatibility",
        if rejected { "PASS" } else { "FAIL" },
        if rejected { "fails" } else { "unexpectedly passes" }
    );
    failures += usize::from(!rejected);

    if failures == 0 {
        println!("acceptance: all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} check(s) failed");
        ExitCode::FAILURE
    }
}
