use std::sync::Arc;

use approx::assert_relative_eq;
use nscert::control::*;
use nscert::error::Error;
use nscert::grid::*;
use nscert::quad::composite_simpson;
use nscert::semigroup::HeatSemigroup;
use proptest::prelude::*;

const STEP: f64 = 0.05;
const CELLS: usize = 40;

fn est() -> HeatSemigroup {
    HeatSemigroup::navier_stokes()
}

fn uniform() -> (TimeGrid, GridCoefficients) {
    let grid = TimeGrid::uniform(STEP, CELLS).unwrap();
    let coeffs = grid_coefficients(&grid, &est()).unwrap();
    (grid, coeffs)
}

fn control(error: f64, distance: f64) -> ControlProblem {
    ControlProblem {
        error: Arc::new(move |_| error),
        distance: Arc::new(move |t| distance * (1.0 - (-t).exp())),
        k: 0.2,
    }
}

fn solve(problem: &GridProblem, coeffs: &GridCoefficients, mode: MemoryMode) -> GridSolution {
    solve_control_grid(problem, coeffs, mode, StepPolicy::Lookahead).unwrap()
}

#[test]
fn zero_problem_has_zero_solution() {
    let (grid, coeffs) = uniform();
    let problem = GridProblem::from_profiles(&control(0.0, 0.0), &grid);
    let sol = solve(&problem, &coeffs, MemoryMode::Reduced);
    assert_eq!(sol.status, GridStatus::Completed);
    assert!(sol.values.iter().all(|v| *v == 0.0));
}

#[test]
fn full_and_reduced_memory_agree() {
    let (grid, coeffs) = uniform();
    let problem = GridProblem::from_profiles(&control(0.2, 0.3), &grid);
    let reduced = solve(&problem, &coeffs, MemoryMode::Reduced);
    let full = solve(&problem, &coeffs, MemoryMode::Full);
    assert_eq!(reduced.status, GridStatus::Completed);
    assert_eq!(full.status, GridStatus::Completed);
    for (a, b) in reduced.values.iter().zip(&full.values) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
    for (a, b) in reduced.memory.iter().zip(&full.memory) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}

#[test]
fn solutions_satisfy_the_discrete_and_continuous_inequality() {
    let (grid, coeffs) = uniform();
    for (e, d) in [(0.1, 0.0), (0.3, 0.2), (0.6, 0.0)] {
        let control = control(e, d);
        let problem = GridProblem::from_profiles(&control, &grid);
        let sol = solve(&problem, &coeffs, MemoryMode::Reduced);
        assert_eq!(sol.status, GridStatus::Completed);
        assert!(sol.max_violation(&problem, &coeffs).unwrap() <= 1e-12);
        let cert = sol.certificate(Some(control));
        let times: Vec<f64> = (1..=10).map(|i| 0.1973 * i as f64).collect();
        let report = residual_check(&cert, &est(), &times).unwrap();
        assert!(report.min_slack >= -1e-8, "e = {e}: {}", report.min_slack);
    }
}

#[test]
fn grid_tube_is_close_to_the_analytic_tube() {
    let (grid, coeffs) = uniform();
    for e in [0.1, 0.3] {
        let problem = GridProblem::from_profiles(&control(e, 0.0), &grid);
        let sol = solve(&problem, &coeffs, MemoryMode::Reduced);
        let analytic = zero_certificate(
            e,
            &ForcingEnvelope::none(),
            0.2,
            &est(),
            Regime::FiniteHorizon(2.0),
        )
        .unwrap();
        for (t, r) in sol.times.iter().zip(&sol.values) {
            assert!(
                *r <= 1.1 * analytic.tube_at(*t).unwrap(),
                "e = {e}, t = {t}"
            );
        }
    }
}

#[test]
fn large_errors_stall() {
    let (grid, coeffs) = uniform();
    let problem = GridProblem::from_profiles(&control(1.5, 0.0), &grid);
    let sol = solve(&problem, &coeffs, MemoryMode::Reduced);
    assert!(matches!(sol.status, GridStatus::Stalled { .. }));
    assert!(sol.horizon() < 2.0);
    assert!(sol.certificate(None).horizon < 2.0);
}

#[test]
fn tail_cells_match_closed_forms() {
    let (grid, coeffs) = uniform();
    let t = grid.times();
    let a = est().tail_amplitude;
    for m in 7..CELLS {
        for k in 0..m - 5 {
            assert!(coeffs.is_tail(m, k));
            let c = coeffs.cell(m, k);
            assert_eq!(c.tag, CellTag::Tail);
            let n = a * (-t[m]).exp() * (t[k + 1].exp() - t[k].exp());
            assert_relative_eq!(c.n, n, max_relative = 1e-13);
            // With v = (s - t_k)/τ: ∫ e^{s} v ds and ∫ e^{s} v^2 ds.
            let (ek, ek1) = (t[k].exp(), t[k + 1].exp());
            let i = a * (-t[m]).exp() * (ek1 - (ek1 - ek) / STEP);
            let h = a * (-t[m]).exp() * (ek1 - 2.0 * (ek1 - (ek1 - ek) / STEP) / STEP);
            assert_relative_eq!(c.i, i, max_relative = 1e-11);
            assert_relative_eq!(c.h, h, max_relative = 1e-10);
            let scaled = coeffs.tail_unscaled(k);
            assert_relative_eq!(scaled.n * coeffs.tail_scale(m), c.n, max_relative = 1e-13);
        }
    }
}

#[test]
fn moments_are_ordered() {
    let (_, coeffs) = uniform();
    for m in 0..CELLS {
        for k in 0..=m {
            let c = coeffs.cell(m, k);
            assert!(0.0 < c.h && c.h <= c.i && c.i <= c.n, "({m}, {k}): {c:?}");
        }
    }
}

#[test]
fn window_is_the_singular_zone() {
    let (_, coeffs) = uniform();
    assert_eq!(coeffs.window(), Some(5));
    for m in 0..CELLS {
        for k in 0..=m {
            assert_eq!(!coeffs.is_tail(m, k), k + 5 >= m);
        }
    }
    assert_eq!(coeffs.cell(3, 3).tag, CellTag::Diagonal);
    assert_eq!(coeffs.cell(3, 1).tag, CellTag::NearEnvelope);
}

#[test]
fn cell_moments_dominate_direct_quadrature() {
    let (grid, coeffs) = uniform();
    let e = est();
    let t = grid.times();
    for m in [1, 3, 6, 12] {
        for frac in [0.1, 0.5, 1.0] {
            let time = t[m] + frac * STEP;
            for k in 0..m {
                let c = coeffs.cell(m, k);
                let v = |s: f64| (s - t[k]) / STEP;
                let w = |s: f64| e.u_minus(time - s).unwrap();
                let direct =
                    |j: i32| composite_simpson(|s| w(s) * v(s).powi(j), t[k], t[k + 1], 400);
                assert!(c.h >= direct(2) * (1.0 - 1e-9), "({m}, {k}) at {time}");
                assert!(c.i >= direct(1) * (1.0 - 1e-9));
                assert!(c.n >= direct(0) * (1.0 - 1e-9));
            }
            // The diagonal cell bounds the mass of u_- on the partial cell.
            let partial = e.integrate_u_minus(0.0, time - t[m], |_| 1.0, 1e-13);
            assert!(coeffs.cell(m, m).n >= partial);
        }
    }
}

#[test]
fn step_solve_returns_the_smallest_fixed_point() {
    let (_, coeffs) = uniform();
    let cell = coeffs.cell(0, 0);
    let x = step_solve(0.2, 0.0, 0.3, 0.0, 0.2, &cell).unwrap();
    let q = step_quadratic(0.2, 0.0, 0.3, 0.0, 0.2, &cell);
    assert!((q.eval(x) - x).abs() < 1e-14);
    assert!(q.eval(x * (1.0 - 1e-6)) > x * (1.0 - 1e-6));
    assert!(step_solve(5.0, 0.0, 0.3, 0.0, 0.2, &cell).is_none());
}

#[test]
fn nonuniform_full_memory_matches_uniform() {
    let (grid, coeffs) = uniform();
    let irregular = TimeGrid::from_times(grid.times().to_vec()).unwrap();
    let table = grid_coefficients(&irregular, &est()).unwrap();
    assert_eq!(table.window(), None);
    for m in 0..CELLS {
        for k in 0..=m {
            let (a, b) = (coeffs.cell(m, k), table.cell(m, k));
            assert_relative_eq!(a.n, b.n, max_relative = 1e-9);
            assert_relative_eq!(a.h, b.h, max_relative = 1e-9);
        }
    }
    let problem = GridProblem::from_profiles(&control(0.2, 0.1), &grid);
    let u = solve(&problem, &coeffs, MemoryMode::Full);
    let n = solve(&problem, &table, MemoryMode::Full);
    assert_eq!(u.status, n.status);
    for (a, b) in u.values.iter().zip(&n.values) {
        assert_relative_eq!(a, b, max_relative = 1e-6);
    }
}

#[test]
fn volterra_error_data_matches_samples() {
    let (grid, coeffs) = uniform();
    let eps: Vec<f64> = (0..CELLS)
        .map(|k| 0.01 * (1.0 + k as f64 / CELLS as f64))
        .collect();
    let delta = 0.1;
    let samples: Vec<f64> = (0..CELLS)
        .map(|m| {
            (-grid.times()[m]).exp() * delta
                + (0..=m).map(|k| coeffs.cell(m, k).n * eps[k]).sum::<f64>()
        })
        .collect();
    let distance = vec![0.0; CELLS];
    let a = GridProblem {
        error: ErrorData::Volterra { delta, eps },
        distance: distance.clone(),
        k: 0.2,
    };
    let b = GridProblem {
        error: ErrorData::Samples(samples),
        distance,
        k: 0.2,
    };
    assert_eq!(
        solve(&a, &coeffs, MemoryMode::Reduced),
        solve(&b, &coeffs, MemoryMode::Reduced)
    );
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(
        TimeGrid::uniform(0.0, 4),
        Err(Error::InvalidArgument(_))
    ));
    assert!(TimeGrid::uniform(0.05, 0).is_err());
    assert!(TimeGrid::from_times(vec![0.1, 0.2]).is_err());
    assert!(TimeGrid::from_times(vec![0.0, 0.2, 0.2]).is_err());
    assert!(grid_coefficients(&TimeGrid::uniform(0.03, 10).unwrap(), &est()).is_err());
    let irregular = TimeGrid::from_times(vec![0.0, 0.1, 0.15, 0.4]).unwrap();
    let table = grid_coefficients(&irregular, &est()).unwrap();
    let problem = GridProblem {
        error: ErrorData::Samples(vec![0.1; 3]),
        distance: vec![0.0; 3],
        k: 0.2,
    };
    assert!(solve_control_grid(&problem, &table, MemoryMode::Reduced, StepPolicy::Greedy).is_err());
    let (_, coeffs) = uniform();
    let short = GridProblem {
        error: ErrorData::Samples(vec![0.1; 3]),
        distance: vec![0.0; 3],
        k: 0.2,
    };
    assert!(matches!(
        solve_control_grid(&short, &coeffs, MemoryMode::Full, StepPolicy::Greedy),
        Err(Error::DimensionMismatch { .. })
    ));
    let negative = GridProblem {
        error: ErrorData::Samples(vec![-0.1; CELLS]),
        distance: vec![0.0; CELLS],
        k: 0.2,
    };
    assert!(solve_control_grid(&negative, &coeffs, MemoryMode::Full, StepPolicy::Greedy).is_err());
}

proptest! {
    #[test]
    fn phi_is_nonnegative_and_matches_its_integral_form(a in 0.0f64..3.0, x in 0.0f64..3.0, d in 0.0f64..2.0, m in 0usize..CELLS, back in 0usize..CELLS) {
        let (_, coeffs) = uniform();
        let k = m.saturating_sub(back);
        let c = coeffs.cell(m, k);
        let value = phi_polynomial(&c, d, a, x);
        prop_assert!(value >= 0.0);
        // ℛ = a + (x - a)v gives ℛ^2 + 2Dℛ = a^2 + 2Da + 2(a + D)(x - a)v + (x - a)^2 v^2.
        let expected = (a * a + 2.0 * d * a) * c.n + 2.0 * (a + d) * (x - a) * c.i + (x - a).powi(2) * c.h;
        prop_assert!((value - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        prop_assert!(phi_polynomial(&c, d, a, x.max(a) + 0.1) >= value || x > a);
    }

    #[test]
    fn admissible_values_satisfy_the_step(error in 0.0f64..0.3, memory in 0.0f64..0.2, prev in 0.0f64..1.0) {
        let (_, coeffs) = uniform();
        let cell = coeffs.cell(0, 0);
        let q = step_quadratic(error, memory, prev, 0.0, 0.2, &cell);
        if let Some((lo, hi)) = q.admissible(prev) {
            for x in [lo, 0.5 * (lo + hi), hi] {
                prop_assert!(q.eval(x) <= x.min(prev) * (1.0 + 1e-12) + 1e-15);
            }
        }
    }
}
