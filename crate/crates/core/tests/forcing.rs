use std::sync::Arc;

use approx::assert_relative_eq;
use nscert::error::Error;
use nscert::field::{
    basis_normalisation, random_solenoidal_field, FourierField, GalerkinSet, WaveVector,
};
use nscert::forcing::*;
use num_complex::Complex64;

fn with_mean(f: &FourierField, mean: &[f64]) -> FourierField {
    let mut out = f.clone();
    let s = basis_normalisation(f.dim());
    out.insert(
        WaveVector::zero(f.dim()),
        mean.iter().map(|v| Complex64::new(v / s, 0.0)).collect(),
    )
    .unwrap();
    out
}

fn magnitudes(f: &FourierField) -> Vec<(WaveVector, f64)> {
    let mut out: Vec<_> = f
        .without_mean()
        .stored()
        .map(|(k, c)| {
            (
                k.clone(),
                c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.components().cmp(b.0.components()));
    out
}

#[test]
fn frame_paths_have_closed_forms() {
    let profile = with_mean(
        &random_solenoidal_field(2, 3, 1.0, 1, 0.3).unwrap(),
        &[0.4, -0.2, 0.1],
    );
    let rate = 0.7;
    let eta = Arc::new(ExponentialForcing::decaying(profile, rate));
    let m0 = vec![1.0, 0.0, -0.5];
    let frame = FrameReduction::new(m0.clone(), eta).unwrap();
    let a = [0.4, -0.2, 0.1];
    for t in [0.0, 0.3, 1.5] {
        let e = (-rate * t).exp();
        let m = frame.mean_path(t).unwrap();
        let h = frame.shift_path(t).unwrap();
        for i in 0..3 {
            assert_relative_eq!(m[i], m0[i] + a[i] * (1.0 - e) / rate, epsilon = 1e-10);
            let shift = m0[i] * t + a[i] * (t / rate - (1.0 - e) / (rate * rate));
            assert_relative_eq!(h[i], shift, epsilon = 1e-10);
        }
    }
}

#[test]
fn reduction_round_trips() {
    let v0 = with_mean(
        &random_solenoidal_field(4, 2, 1.0, 2, 1.0).unwrap(),
        &[0.3, 0.6],
    );
    let eta = Arc::new(ExponentialForcing::steady(with_mean(
        &random_solenoidal_field(9, 2, 1.0, 1, 0.2).unwrap(),
        &[0.1, 0.0],
    )));
    let (f0, xi, frame) = reduce_to_zero_mean(&v0, eta.clone()).unwrap();
    assert!(f0.is_zero_mean());
    assert_eq!(frame.initial_mean(), v0.mean().as_slice());
    assert!(frame.reconstruct(&f0, 0.0).unwrap().max_abs_diff(&v0) <= 1e-14);
    for t in [0.2, 1.0] {
        let nu = frame.reconstruct(&f0, t).unwrap();
        assert_eq!(magnitudes(&nu).len(), magnitudes(&f0).len());
        for (a, b) in magnitudes(&nu).iter().zip(magnitudes(&f0)) {
            assert_relative_eq!(a.1, b.1, epsilon = 1e-14);
        }
        let m = frame.mean_path(t).unwrap();
        for (x, y) in nu.mean().iter().zip(&m) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        let reduced = xi.eval(t).unwrap();
        assert!(reduced.is_zero_mean());
        for (a, b) in magnitudes(&reduced)
            .iter()
            .zip(magnitudes(&eta.eval(t).unwrap()))
        {
            assert_eq!(a.0, b.0);
            assert_relative_eq!(a.1, b.1, epsilon = 1e-14);
        }
    }
}

#[test]
fn nonlinearity_is_solenoidal_and_mean_free() {
    let f = random_solenoidal_field(1, 3, 2.0, 2, 1.0).unwrap();
    let forcing = ExponentialForcing::steady(with_mean(
        &random_solenoidal_field(2, 3, 1.0, 1, 0.5).unwrap(),
        &[1.0, 0.0, 0.0],
    ));
    let set = GalerkinSet::cube(3, 2);
    for support in [None, Some(&set)] {
        let p = nonlinearity(&f, 0.5, &forcing, support).unwrap();
        assert!(p.is_zero_mean());
        assert!(p.is_solenoidal());
        if let Some(s) = support {
            assert!(p.stored().all(|(k, _)| s.contains(k)));
        }
    }
}

#[test]
fn forcing_outside_its_horizon_is_an_error() {
    let forcing = ExponentialForcing::steady(FourierField::zero(2)).with_horizon(1.0);
    assert!(forcing.eval(1.0).is_ok());
    assert!(matches!(
        forcing.eval(1.5),
        Err(Error::ForcingOutOfRange { .. })
    ));
    let frame = FrameReduction::new(vec![0.0, 0.0], Arc::new(forcing)).unwrap();
    assert!(frame.mean_path(2.0).is_err());
    assert!(FrameReduction::new(vec![0.0; 3], Arc::new(ZeroForcing { dim: 2 })).is_err());
}
