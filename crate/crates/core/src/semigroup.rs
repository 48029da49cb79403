//! Estimators for the heat semigroup `e^{tΔ}` on zero-mean solenoidal fields
//! of the torus, and the Mittag-Leffler function.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

const QUAD_TOL: f64 = 1e-12;

/// Bounds for the heat semigroup as a map between Sobolev levels.
///
/// `u(t) = e^{-Bt}` bounds `e^{tΔ}` on `H^n`, while
/// `u_minus(t) = mu_minus(t) e^{-Bt}` bounds it from `H^{n-1}` to `H^n`.
/// For `t > breakpoint` the latter is exactly `tail_amplitude * e^{-Bt}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatSemigroup {
    pub decay: f64,
    pub sigma: f64,
    pub breakpoint: f64,
    pub tail_amplitude: f64,
    pub convolution_bound: f64,
}

impl Default for HeatSemigroup {
    fn default() -> Self {
        Self::navier_stokes()
    }
}

/// Result of the numerical reproduction of `sup_t N(t) = sqrt(2)`.
#[derive(Clone, Debug)]
pub struct ConvolutionCheck {
    pub sup: f64,
    pub argsup: f64,
    /// `C = ∫_0^{1/4} e^{3s} / sqrt(2 e s) ds`.
    pub tail_constant: f64,
    /// `N(0.2)`, bounded by `1/sqrt(2)` on the short-time branch.
    pub at_short_time: f64,
    pub samples: Vec<(f64, f64)>,
}

impl HeatSemigroup {
    /// Parameters for the Laplacian on zero-mean divergence-free fields:
    /// `B = 1`, `sigma = 1/2`, breakpoint `1/4`, tail amplitude and
    /// convolution bound `sqrt(2)`.
    pub fn navier_stokes() -> Self {
        Self {
            decay: 1.0,
            sigma: 0.5,
            breakpoint: 0.25,
            tail_amplitude: std::f64::consts::SQRT_2,
            convolution_bound: std::f64::consts::SQRT_2,
        }
    }

    pub fn u(&self, t: f64) -> f64 {
        (-self.decay * t).exp()
    }

    pub fn mu_minus(&self, t: f64) -> Result<f64> {
        if t <= 0.0 || t.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "mu_minus needs t > 0, got {t}"
            )));
        }
        Ok(self.mu_minus_unchecked(t))
    }

    pub fn u_minus(&self, t: f64) -> Result<f64> {
        Ok((-self.decay * t).exp() * self.mu_minus(t)?)
    }

    fn mu_minus_unchecked(&self, t: f64) -> f64 {
        if t <= self.breakpoint {
            (2.0 * t).exp() / (2.0 * std::f64::consts::E * t).sqrt()
        } else {
            self.tail_amplitude
        }
    }

    /// `u_minus(r^2) * 2r` on the short-time branch: the integrable
    /// `1/sqrt(t)` singularity removed by the substitution `t = r^2`.
    fn regularised_short(&self, r: f64) -> f64 {
        2.0 * (r * r).exp() / (2.0 * std::f64::consts::E).sqrt()
    }

    /// `∫_lo^hi u_minus(σ) w(σ) dσ` for `0 <= lo <= hi`, exact in the
    /// singularity at `σ = 0` through the substitution `σ = r^2` on the
    /// short-time part.
    pub fn integrate_u_minus<W: Fn(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        weight: W,
        tol: f64,
    ) -> f64 {
        assert!(
            0.0 <= lo && lo <= hi,
            "integration bounds must satisfy 0 <= lo <= hi"
        );
        let mut total = 0.0;
        let split = self.breakpoint;
        if lo < split {
            let top = hi.min(split);
            total += adaptive_simpson(
                |r| self.regularised_short(r) * weight(r * r),
                lo.sqrt(),
                top.sqrt(),
                tol,
            );
        }
        if hi > split {
            let bottom = lo.max(split);
            let a = self.tail_amplitude;
            let b = self.decay;
            total += adaptive_simpson(|s| a * (-b * s).exp() * weight(s), bottom, hi, tol);
        }
        total
    }

    /// `gamma(t) = ∫_0^t e^s / sqrt(s) ds = 2 ∫_0^{sqrt t} e^{r^2} dr`.
    pub fn gamma_integral(&self, t: f64) -> f64 {
        2.0 * adaptive_simpson(|r| (r * r).exp(), 0.0, t.sqrt(), QUAD_TOL)
    }

    /// The nondecreasing majorant `U(t) >= ∫_0^t u_minus`, with `U(0) = 0`;
    /// `t = +∞` is accepted.
    pub fn big_u(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "U(t) needs t >= 0, got {t}"
            )));
        }
        let s2 = std::f64::consts::SQRT_2;
        if t <= self.breakpoint {
            return Ok(self.gamma_integral(t) / s2);
        }
        let head = self.gamma_integral(self.breakpoint) / s2;
        let tail = if t.is_infinite() { 0.0 } else { (-t).exp() };
        Ok(head + s2 * ((-self.breakpoint).exp() - tail))
    }

    /// Infallible `U` for internal use on validated nonnegative times.
    pub(crate) fn big_u_at(&self, t: f64) -> f64 {
        self.big_u(t.max(0.0)).expect("nonnegative time")
    }

    /// `N(t) = ∫_0^t mu_minus(t - s) e^{-s} ds`.
    pub fn convolution_profile(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let inv = 1.0 / (2.0 * std::f64::consts::E).sqrt();
        let short = t.min(self.breakpoint);
        let head = adaptive_simpson(
            |r| {
                let s = r * r;
                2.0 * inv * (2.0 * s).exp() * (s - t).exp()
            },
            0.0,
            short.sqrt(),
            QUAD_TOL,
        );
        let tail = if t > self.breakpoint {
            let a = self.tail_amplitude;
            adaptive_simpson(|s| a * (s - t).exp(), self.breakpoint, t, QUAD_TOL)
        } else {
            0.0
        };
        head + tail
    }

    /// Numerically reproduces `sup_{t >= 0} N(t) = sqrt(2)` on 400
    /// log-spaced points of `[1e-4, 50]`.
    pub fn check_convolution_bound(&self) -> ConvolutionCheck {
        let points = 400;
        let (lo, hi) = (1e-4f64.ln(), 50f64.ln());
        let samples: Vec<(f64, f64)> = (0..points)
            .map(|i| {
                let t = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
                (t, self.convolution_profile(t))
            })
            .collect();
        let (argsup, sup) =
            samples
                .iter()
                .copied()
                .fold((0.0, f64::NEG_INFINITY), |acc, (t, v)| {
                    if v > acc.1 {
                        (t, v)
                    } else {
                        acc
                    }
                });
        let inv = 1.0 / (2.0 * std::f64::consts::E).sqrt();
        let tail_constant =
            2.0 * inv * adaptive_simpson(|r| (3.0 * r * r).exp(), 0.0, 0.5, QUAD_TOL);
        ConvolutionCheck {
            sup,
            argsup,
            tail_constant,
            at_short_time: self.convolution_profile(0.2),
            samples,
        }
    }
}

/// `E_sigma(z) = Σ_l z^l / Γ(l sigma + 1)` for `sigma > 0`, `z >= 0`.
pub fn mittag_leffler(sigma: f64, z: f64) -> Result<f64> {
    if sigma <= 0.0 || z < 0.0 || !z.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Mittag-Leffler needs sigma > 0 and finite z >= 0, got sigma = {sigma}, z = {z}"
        )));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let lz = z.ln();
    let mut sum = 1.0;
    let mut prev = 1.0;
    for l in 1..100_000u32 {
        let lf = l as f64;
        let term = (lf * lz - ln_gamma(lf * sigma + 1.0)).exp();
        sum += term;
        if term < 1e-16 * sum && term <= prev {
            break;
        }
        prev = term;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_continuity() {
        let h = HeatSemigroup::navier_stokes();
        let left = (0.5f64).exp() / (std::f64::consts::E / 2.0).sqrt();
        assert!((left - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((h.mu_minus(0.25).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_time() {
        let h = HeatSemigroup::navier_stokes();
        assert!(h.mu_minus(0.0).is_err());
        assert!(h.big_u(-1.0).is_err());
    }

    #[test]
    fn gamma_matches_series() {
        let h = HeatSemigroup::navier_stokes();
        let x: f64 = 0.5;
        let mut series = 0.0;
        let mut fact = 1.0;
        for j in 0..40 {
            if j > 0 {
                fact *= j as f64;
            }
            series += x.powi(2 * j + 1) / ((2 * j + 1) as f64 * fact);
        }
        assert!((h.gamma_integral(0.25) - 2.0 * series).abs() < 1e-12);
    }
}
