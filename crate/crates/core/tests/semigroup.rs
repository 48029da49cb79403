use std::f64::consts::SQRT_2;

use approx::assert_relative_eq;
use nscert::quad::composite_simpson;
use nscert::semigroup::{mittag_leffler, HeatSemigroup};
use proptest::prelude::*;
use statrs::function::erf::erfc;

/// `γ(t) = Σ_j t^{j+1/2} / (j! (j + 1/2))`.
fn gamma_series(t: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0;
    for j in 0..60 {
        if j > 0 {
            fact *= j as f64;
        }
        sum += t.powf(j as f64 + 0.5) / (fact * (j as f64 + 0.5));
    }
    sum
}

#[test]
fn u_at_infinity() {
    let est = HeatSemigroup::navier_stokes();
    let u = est.big_u(f64::INFINITY).unwrap();
    assert!(u > 1.872 && u < 1.873, "{u}");
    let closed = gamma_series(0.25) / SQRT_2 + SQRT_2 * (-0.25f64).exp();
    assert_relative_eq!(u, closed, max_relative = 1e-12);
}

#[test]
fn u_is_a_nondecreasing_majorant() {
    let est = HeatSemigroup::navier_stokes();
    let mut prev = 0.0;
    for i in 1..=60 {
        let t = 0.05 * i as f64;
        let u = est.big_u(t).unwrap();
        assert!(u >= prev);
        // Direct integral of u_- after the substitution s = r^2 near zero.
        let head = composite_simpson(
            |r| 2.0 * r * est.u_minus((r * r).max(1e-300)).unwrap_or(0.0),
            0.0,
            t.min(0.25).sqrt(),
            2000,
        );
        let tail = if t > 0.25 {
            composite_simpson(|s| est.u_minus(s).unwrap(), 0.25, t, 2000)
        } else {
            0.0
        };
        assert!(u >= head + tail - 1e-10, "t = {t}");
        prev = u;
    }
    assert_eq!(est.big_u(0.0).unwrap(), 0.0);
}

#[test]
fn convolution_bound_and_tail_constant() {
    let est = HeatSemigroup::navier_stokes();
    let check = est.check_convolution_bound();
    assert!(
        check.sup <= SQRT_2 + 1e-9 && check.sup >= SQRT_2 - 1e-3,
        "{}",
        check.sup
    );
    assert!(check.tail_constant <= 0.6, "{}", check.tail_constant);
}

#[test]
fn mu_minus_branches_meet_at_the_breakpoint() {
    let est = HeatSemigroup::navier_stokes();
    let short = (2.0f64 * 0.25).exp() / (2.0 * std::f64::consts::E * 0.25).sqrt();
    assert_relative_eq!(short, est.mu_minus(0.25).unwrap(), epsilon = 1e-15);
    assert_relative_eq!(
        est.mu_minus(0.25 + 1e-12).unwrap(),
        est.mu_minus(0.25).unwrap(),
        epsilon = 1e-11
    );
}

#[test]
fn mittag_leffler_special_cases() {
    for z in [0.0, 0.3, 1.0, 2.5] {
        assert_relative_eq!(
            mittag_leffler(1.0, z).unwrap(),
            z.exp(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            mittag_leffler(0.5, z).unwrap(),
            (z * z).exp() * erfc(-z),
            max_relative = 1e-10
        );
    }
    assert!(mittag_leffler(0.0, 1.0).is_err());
    assert!(mittag_leffler(0.5, -1.0).is_err());
}

proptest! {
    #[test]
    fn u_minus_dominates_u(t in 1e-4f64..20.0) {
        let est = HeatSemigroup::navier_stokes();
        prop_assert!(est.u_minus(t).unwrap() >= est.u(t));
    }

    #[test]
    fn integrate_u_minus_is_additive(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let est = HeatSemigroup::navier_stokes();
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let whole = est.integrate_u_minus(v[0], v[2], |_| 1.0, 1e-13);
        let parts = est.integrate_u_minus(v[0], v[1], |_| 1.0, 1e-13) + est.integrate_u_minus(v[1], v[2], |_| 1.0, 1e-13);
        prop_assert!((whole - parts).abs() < 1e-10);
    }
}
