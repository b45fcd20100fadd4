//! Deterministic number formatting shared by identities and CLI output.

/// Rounds to 12 significant digits and prints the shortest decimal that
/// reproduces the rounded value.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return fixed12(x);
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Scientific notation with 12 significant digits; `inf`, `-inf` and `nan`
/// spelled out.
pub fn fixed12(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.11e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_rounds_noise_away() {
        assert_eq!(sig12(5.0), "5");
        assert_eq!(sig12(0.1 + 0.2), "0.3");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(f64::INFINITY), "inf");
    }

    #[test]
    fn fixed12_is_stable() {
        assert_eq!(fixed12(1.5), "1.50000000000e0");
        assert_eq!(fixed12(-2.0e-8), "-2.00000000000e-8");
    }
}
