use std::io::{IsTerminal, Write};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use resform_cli::output::to_json;
use resform_cli::{run, Cli};
use serde_json::json;

fn color_enabled() -> bool {
    std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal()
}

fn colorize(text: &str) -> String {
    text.lines()
        .map(|l| {
            let l = l.replacen(" PASS ", " \x1b[32mPASS\x1b[0m ", 1);
            l.replacen(" FAIL ", " \x1b[31mFAIL\x1b[0m ", 1) + "\n"
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let reproduce = matches!(cli.command, resform_cli::Command::ReproduceAll { .. });
    match run(&cli) {
        Ok(report) => {
            let text = if reproduce && color_enabled() { colorize(&report.stdout) } else { report.stdout };
            let _ = std::io::stdout().write_all(text.as_bytes());
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            let msg = to_json(&json!({"error": e.kind(), "message": e.to_string()}));
            let _ = std::io::stderr().write_all(msg.as_bytes());
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
