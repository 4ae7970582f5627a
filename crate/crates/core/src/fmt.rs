//! Number formatting shared by every text output.

/// 17 significant digits in scientific notation; parses back to the same
/// `f64` bit pattern.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        // normalize -0.0 so outputs do not depend on the sign of zero
        return format!("{:.16e}", 0.0f64);
    }
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::fmt17;

    #[test]
    fn round_trips() {
        for v in [1.0 / 3.0, 0.1, 1e-300, -2.5e17, f64::MAX, f64::MIN_POSITIVE] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
        assert_eq!(fmt17(-0.0), fmt17(0.0));
    }
}
