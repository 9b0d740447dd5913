//! Small shared helpers.

/// Format a float with 17 significant digits, `%g` style: decimal notation for
/// moderate exponents, scientific otherwise, trailing zeros stripped.
///
/// 17 significant digits are enough to round-trip any finite `f64` exactly.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    // Take the decimal exponent from the rounded scientific form so that
    // values like 9.999...e-5 that round up to 1e-4 land in the right branch.
    let sci = format!("{:.16e}", x);
    let epos = sci.find('e').expect("scientific format");
    let exp: i32 = sci[epos + 1..].parse().expect("exponent");
    if (-4..17).contains(&exp) {
        let frac = (16 - exp).max(0) as usize;
        let fixed = format!("{:.*}", frac, x);
        trim_trailing_zeros(&fixed).to_string()
    } else {
        let mantissa = trim_trailing_zeros(&sci[..epos]);
        format!("{}e{}", mantissa, exp)
    }
}

fn trim_trailing_zeros(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.')
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_values() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(0.25), "0.25");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(1.0 / 3.0), "0.33333333333333331");
        // 1e-7 has no exact binary representation; all 17 digits show.
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-8");
    }

    #[test]
    fn boundary_exponents() {
        // Powers of two are exact, so the trimming is visible at both ends
        // of the decimal window.
        assert_eq!(fmt_g17(0.0001220703125), "0.0001220703125");
        assert_eq!(fmt_g17(2f64.powi(-30)), "9.3132257461547852e-10");
        assert_eq!(fmt_g17(1e16), "10000000000000000");
        assert_eq!(fmt_g17(1e20), "1e20");
    }

    proptest! {
        #[test]
        fn round_trips_exactly(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = fmt_g17(x).parse().unwrap();
            prop_assert!(back == x || (x == 0.0 && back == 0.0));
        }
    }
}
