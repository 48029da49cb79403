use std::sync::Arc;

use nscert::field::{random_solenoidal_field, FourierField, GalerkinSet, WaveVector};
use nscert::forcing::{ExponentialForcing, ForcingModel, ZeroForcing};
use nscert::galerkin::*;
use num_complex::Complex64;

fn datum(dim: usize, norm: f64) -> FourierField {
    random_solenoidal_field(7, dim, 2.0, 2, norm).unwrap()
}

fn unforced(set: GalerkinSet, f: &FourierField) -> GalerkinSystem {
    GalerkinSystem::new(set, f, Arc::new(ZeroForcing { dim: f.dim() })).unwrap()
}

#[test]
fn zero_datum_stays_zero() {
    let sys = unforced(GalerkinSet::cube(2, 2), &FourierField::zero(2));
    let traj = integrate(&sys, 1.0, &IntegratorOptions::default()).unwrap();
    assert_eq!(traj.end(), 1.0);
    for i in 0..traj.times().len() {
        assert_eq!(traj.state(i).sobolev_norm(2.0), 0.0);
    }
}

#[test]
fn linear_system_follows_the_heat_flow() {
    let f = datum(2, 0.5);
    let sys = unforced(GalerkinSet::cube(2, 2), &f).linear();
    let traj = integrate(&sys, 1.0, &IntegratorOptions::default()).unwrap();
    for t in [0.0, 0.13, 0.5, 1.0] {
        let exact = sys.datum().heat_flow(t);
        assert!(traj.at(t).unwrap().max_abs_diff(&exact) <= 1e-8, "t = {t}");
    }
}

#[test]
fn single_shear_mode_decays_exactly() {
    let mut f = FourierField::zero(3);
    f.insert(
        WaveVector::new(vec![1, 0, 0]),
        vec![Complex64::ZERO, Complex64::new(0.3, 0.1), Complex64::ZERO],
    )
    .unwrap();
    let sys = unforced(GalerkinSet::cube(3, 1), &f);
    let traj = integrate(&sys, 2.0, &IntegratorOptions::default()).unwrap();
    for t in [0.5, 1.7, 2.0] {
        assert!(traj.at(t).unwrap().max_abs_diff(&f.heat_flow(t)) <= 1e-10);
    }
}

#[test]
fn vector_field_is_solenoidal_and_mean_free() {
    let f = datum(3, 1.0);
    let forcing =
        ExponentialForcing::decaying(random_solenoidal_field(3, 3, 1.0, 1, 0.2).unwrap(), 1.0);
    let sys = GalerkinSystem::new(GalerkinSet::cube(3, 2), &f, Arc::new(forcing)).unwrap();
    let rhs = sys.rhs(&sys.datum(), 0.3).unwrap();
    assert!(rhs.max_div_defect() <= 1e-10);
    assert!(rhs.mean().iter().all(|v| v.abs() <= 1e-14));
    for k in rhs.stored().map(|(k, _)| k.clone()) {
        assert!(sys.set().contains(&k));
    }
}

#[test]
fn tighter_tolerances_converge() {
    let f = datum(2, 2.0);
    let sys = unforced(GalerkinSet::cube(2, 3), &f);
    let coarse = integrate(&sys, 1.0, &IntegratorOptions::default()).unwrap();
    let fine = integrate(
        &sys,
        1.0,
        &IntegratorOptions {
            rtol: 1e-11,
            atol: 1e-14,
            ..Default::default()
        },
    )
    .unwrap();
    for t in [0.25, 0.6, 1.0] {
        let diff = coarse
            .at(t)
            .unwrap()
            .sub(&fine.at(t).unwrap())
            .unwrap()
            .sobolev_norm(2.0);
        assert!(diff <= 1e-6, "t = {t}: {diff}");
    }
}

#[test]
fn energy_balance_holds() {
    let f = datum(3, 1.5);
    let sys = unforced(GalerkinSet::cube(3, 2), &f);
    let traj = integrate(&sys, 1.0, &IntegratorOptions::default()).unwrap();
    let report = balance_diagnostics(&traj).unwrap();
    assert!(
        report.max_energy_increase <= 0.0,
        "{}",
        report.max_energy_increase
    );
    assert!(
        report.max_identity_residual <= 1e-6,
        "{}",
        report.max_identity_residual
    );
    assert_eq!(report.max_forcing_work, 0.0);
    assert!(report.max_mean <= 1e-14);
}

#[test]
fn forced_energy_identity_holds() {
    let f = datum(2, 0.5);
    let forcing =
        ExponentialForcing::decaying(random_solenoidal_field(5, 2, 1.0, 2, 0.5).unwrap(), 0.5);
    let sys = GalerkinSystem::new(GalerkinSet::cube(2, 2), &f, Arc::new(forcing)).unwrap();
    let traj = integrate(&sys, 1.0, &IntegratorOptions::default()).unwrap();
    let report = balance_diagnostics(&traj).unwrap();
    assert!(report.max_forcing_work > 0.0);
    assert!(
        report.max_identity_residual <= 1e-6,
        "{}",
        report.max_identity_residual
    );
}

#[test]
fn picard_iteration_contracts_to_the_trajectory() {
    let f = datum(2, 0.4);
    let sys = unforced(GalerkinSet::cube(2, 2), &f);
    let traj = integrate(
        &sys,
        1.0,
        &IntegratorOptions {
            rtol: 1e-11,
            atol: 1e-14,
            ..Default::default()
        },
    )
    .unwrap();
    let step = 0.01;
    let samples: Vec<FourierField> = (0..=100)
        .map(|i| traj.at(i as f64 * step).unwrap())
        .collect();
    let at_fixed_point = picard_iterate(&sys, &samples, step, 1, 2.0).unwrap();
    assert!(
        at_fixed_point.differences[0] <= 1e-4,
        "{}",
        at_fixed_point.differences[0]
    );

    let zeros = vec![FourierField::zero(2); 101];
    let run = picard_iterate(&sys, &zeros, step, 8, 2.0).unwrap();
    for w in run.differences.windows(2) {
        assert!(w[1] <= w[0]);
    }
    let last = run.iterates.last().unwrap();
    let gap = last
        .iter()
        .zip(&samples)
        .map(|(a, b)| a.sub(b).unwrap().sobolev_norm(2.0))
        .fold(0.0, f64::max);
    assert!(gap <= 1e-3, "{gap}");
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let f = datum(3, 1.0);
    assert!(GalerkinSystem::new(
        GalerkinSet::cube(2, 2),
        &f,
        Arc::new(ZeroForcing { dim: 2 })
    )
    .is_err());
    let sys = unforced(GalerkinSet::cube(3, 1), &f);
    let traj = integrate(&sys, 0.5, &IntegratorOptions::default()).unwrap();
    assert!(traj.at(0.6).is_err());
    assert!(picard_iterate(&sys, &[f], 0.1, 1, 2.0).is_err());
    let _: &dyn ForcingModel = sys.forcing().as_ref();
}
