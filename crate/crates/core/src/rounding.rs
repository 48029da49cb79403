//! Directed rounding to a number of significant decimal digits.
//!
//! Published constants and thresholds are quoted at a fixed number of
//! significant digits; the direction is always the conservative one for the
//! quantity at hand.

fn scale_for(x: f64, digits: u32) -> f64 {
    let exponent = x.abs().log10().floor() as i32;
    10f64.powi(digits as i32 - 1 - exponent)
}

/// Smallest number with `digits` significant digits that is `>= x`.
pub fn round_up_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = scale_for(x, digits);
    let scaled = x * s;
    let r = scaled.round();
    let up = if (scaled - r).abs() <= 1e-9 * scaled.abs().max(1.0) {
        r
    } else {
        scaled.ceil()
    };
    up / s
}

/// Largest number with `digits` significant digits that is `<= x`.
pub fn round_down_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = scale_for(x, digits);
    let scaled = x * s;
    let r = scaled.round();
    let down = if (scaled - r).abs() <= 1e-9 * scaled.abs().max(1.0) {
        r
    } else {
        scaled.floor()
    };
    down / s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directed() {
        assert_eq!(round_up_sig(0.19834, 2), 0.2);
        assert_eq!(round_up_sig(0.066204, 2), 0.067);
        assert_eq!(round_up_sig(2.0, 3), 2.0);
        assert_eq!(round_down_sig(1.51434, 3), 1.51);
        assert_eq!(round_down_sig(0.877193, 3), 0.877);
        assert_eq!(round_up_sig(1.87212, 3), 1.88);
    }
}
