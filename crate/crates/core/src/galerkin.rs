//! The Galerkin system `φ' = Δφ + 𝔓^G 𝒫(φ, t)`, its exponential integrator,
//! the Picard iteration and energy diagnostics.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{basis_normalisation, FourierField, GalerkinSet, WaveVector};
use crate::forcing::ForcingModel;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Dense state layout: `d` complex components per representative mode.
type State = Vec<Complex64>;

/// The Galerkin ODE on a set `G`.
#[derive(Clone)]
pub struct GalerkinSystem {
    set: GalerkinSet,
    dim: usize,
    reps: Vec<WaveVector>,
    index: HashMap<WaveVector, usize>,
    /// `|k|^2` per representative.
    decay: Vec<f64>,
    /// Components of every member of `G`, flattened.
    full_comps: Vec<f64>,
    /// Representative index and conjugation flag of every member.
    full_rep: Vec<(usize, bool)>,
    /// Per output representative, the member pairs `(h, k - h)`.
    pairs: Vec<Vec<(u32, u32)>>,
    forcing: Arc<dyn ForcingModel>,
    datum: State,
    nonlinear: bool,
}

impl std::fmt::Debug for GalerkinSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GalerkinSystem")
            .field("dim", &self.dim)
            .field("modes", &self.reps.len())
            .field("nonlinear", &self.nonlinear)
            .finish_non_exhaustive()
    }
}

impl GalerkinSystem {
    /// Builds the system; the datum is projected onto `G`.
    pub fn new(
        set: GalerkinSet,
        datum: &FourierField,
        forcing: Arc<dyn ForcingModel>,
    ) -> Result<Self> {
        let dim = set.dim();
        for found in [datum.dim(), forcing.dim()] {
            if found != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found,
                });
            }
        }
        let reps = set.representatives();
        let index: HashMap<WaveVector, usize> = reps
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let decay = reps.iter().map(|k| k.norm_sq() as f64).collect();
        let mut full_comps = Vec::with_capacity(2 * reps.len() * dim);
        let mut full_rep = Vec::with_capacity(2 * reps.len());
        let mut full_index = HashMap::with_capacity(2 * reps.len());
        for (i, k) in reps.iter().enumerate() {
            for (v, conj) in [(k.clone(), false), (-k, true)] {
                full_index.insert(v.clone(), full_rep.len() as u32);
                full_comps.extend(v.components().iter().map(|&c| c as f64));
                full_rep.push((i, conj));
            }
        }
        let members: Vec<(WaveVector, u32)> =
            full_index.iter().map(|(k, &i)| (k.clone(), i)).collect();
        let pairs = reps
            .par_iter()
            .map(|k| {
                let mut out: Vec<(u32, u32)> = members
                    .iter()
                    .filter_map(|(h, hi)| full_index.get(&(k - h)).map(|&li| (*hi, li)))
                    .collect();
                out.sort_unstable();
                out
            })
            .collect();
        let mut system = Self {
            set,
            dim,
            reps,
            index,
            decay,
            full_comps,
            full_rep,
            pairs,
            forcing,
            datum: Vec::new(),
            nonlinear: true,
        };
        system.datum = system.to_dense(datum);
        Ok(system)
    }

    /// Drops the quadratic term, leaving `φ' = Δφ + 𝔓^G ξ`.
    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn set(&self) -> &GalerkinSet {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn datum(&self) -> FourierField {
        self.to_field(&self.datum)
    }

    pub fn forcing(&self) -> &Arc<dyn ForcingModel> {
        &self.forcing
    }

    fn to_dense(&self, f: &FourierField) -> State {
        let mut out = vec![ZERO; self.reps.len() * self.dim];
        for (k, c) in f.stored() {
            if let Some(&i) = self.index.get(k) {
                out[i * self.dim..(i + 1) * self.dim].copy_from_slice(c);
            }
        }
        out
    }

    fn to_field(&self, y: &[Complex64]) -> FourierField {
        let mut f = FourierField::zero(self.dim);
        for (i, k) in self.reps.iter().enumerate() {
            let c = &y[i * self.dim..(i + 1) * self.dim];
            if c.iter().any(|z| *z != ZERO) {
                f.insert(k.clone(), c.to_vec()).expect("dimensions agree");
            }
        }
        f
    }

    fn member(&self, y: &[Complex64], full: u32, comp: usize) -> Complex64 {
        let (i, conj) = self.full_rep[full as usize];
        let z = y[i * self.dim + comp];
        if conj {
            z.conj()
        } else {
            z
        }
    }

    /// `𝔓^G(-𝔏(φ·∂φ) + ξ(t))` in dense form.
    fn nonlinear_part(&self, t: f64, y: &[Complex64]) -> Result<State> {
        let d = self.dim;
        let mut out = self.to_dense(&self.forcing.eval(t)?);
        if !self.nonlinear {
            return Ok(out);
        }
        let pref = Complex64::new(0.0, basis_normalisation(d));
        let adv: Vec<State> = self
            .pairs
            .par_iter()
            .enumerate()
            .map(|(o, pairs)| {
                let mut acc = vec![ZERO; d];
                for &(h, l) in pairs {
                    let lc = &self.full_comps[l as usize * d..(l as usize + 1) * d];
                    let s: Complex64 = (0..d).map(|i| self.member(y, h, i) * lc[i]).sum();
                    if s == ZERO {
                        continue;
                    }
                    for (i, a) in acc.iter_mut().enumerate() {
                        *a += s * self.member(y, l, i);
                    }
                }
                let k = self.reps[o].components();
                let kc: Complex64 = acc
                    .iter()
                    .zip(k)
                    .map(|(z, &ki)| z * ki as f64)
                    .sum::<Complex64>()
                    / self.decay[o];
                acc.iter()
                    .zip(k)
                    .map(|(z, &ki)| pref * (z - kc * ki as f64))
                    .collect()
            })
            .collect();
        for (o, a) in adv.into_iter().enumerate() {
            for (i, z) in a.into_iter().enumerate() {
                out[o * d + i] -= z;
            }
        }
        Ok(out)
    }

    /// Full right-hand side `Δφ + 𝔓^G 𝒫(φ, t)`.
    pub fn rhs(&self, state: &FourierField, t: f64) -> Result<FourierField> {
        let y = self.to_dense(state);
        let mut n = self.nonlinear_part(t, &y)?;
        for (i, z) in n.iter_mut().enumerate() {
            *z -= self.decay[i / self.dim] * y[i];
        }
        Ok(self.to_field(&n))
    }

    fn propagate(&self, y: &[Complex64], c: f64) -> State {
        y.iter()
            .enumerate()
            .map(|(i, z)| z * (-c * self.decay[i / self.dim]).exp())
            .collect()
    }
}

/// Integrator settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            initial_step: 1e-3,
            max_steps: 200_000,
        }
    }
}

/// Accepted steps; dense output takes a partial step from the preceding node.
#[derive(Clone)]
pub struct Trajectory {
    system: GalerkinSystem,
    options: IntegratorOptions,
    times: Vec<f64>,
    states: Vec<State>,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("steps", &self.times.len())
            .finish_non_exhaustive()
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B_HAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct StepResult {
    next: State,
    err: f64,
}

/// One Lawson-type Dormand-Prince step: stages are carried with the exact
/// linear propagator so only the nonlinear part is treated explicitly.
fn lawson_step(
    sys: &GalerkinSystem,
    t: f64,
    y: &[Complex64],
    h: f64,
    opts: &IntegratorOptions,
) -> Result<StepResult> {
    let mut stages: Vec<State> = Vec::with_capacity(7);
    let mut u = y.to_vec();
    for i in 0..7 {
        if i > 0 {
            u = sys.propagate(y, C[i] * h);
            for (j, nj) in stages.iter().enumerate() {
                if A[i][j] == 0.0 {
                    continue;
                }
                let p = sys.propagate(nj, (C[i] - C[j]) * h);
                for (a, b) in u.iter_mut().zip(p) {
                    *a += b * (h * A[i][j]);
                }
            }
        }
        stages.push(sys.nonlinear_part(t + C[i] * h, &u)?);
    }
    let next = u;
    let mut err = vec![ZERO; y.len()];
    for (j, nj) in stages.iter().enumerate() {
        let bj = if j < 6 { A[6][j] } else { 0.0 };
        let w = bj - B_HAT[j];
        let p = sys.propagate(nj, (1.0 - C[j]) * h);
        for (e, z) in err.iter_mut().zip(p) {
            *e += z * (h * w);
        }
    }
    let ms: f64 = err
        .iter()
        .zip(y.iter().zip(&next))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum::<f64>()
        / err.len().max(1) as f64;
    Ok(StepResult {
        next,
        err: ms.sqrt(),
    })
}

/// Integrates the system on `[0, horizon]`.
pub fn integrate(
    system: &GalerkinSystem,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mut t = 0.0;
    let mut y = system.datum.clone();
    let mut traj = Trajectory {
        system: system.clone(),
        options: *opts,
        times: vec![0.0],
        states: vec![y.clone()],
    };
    if y.is_empty() {
        traj.times.push(horizon);
        traj.states.push(Vec::new());
        return Ok(traj);
    }
    let mut h = opts.initial_step.min(horizon);
    let mut steps = 0;
    while t < horizon {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { t });
        }
        steps += 1;
        let last_step = t + h >= horizon;
        let step = if last_step { horizon - t } else { h };
        if step < 1e-14 * t.max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let res = lawson_step(system, t, &y, step, opts)?;
        let factor = if res.err == 0.0 {
            5.0
        } else {
            (0.9 * res.err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if res.err <= 1.0 {
            t = if last_step { horizon } else { t + step };
            y = res.next;
            traj.times.push(t);
            traj.states.push(y.clone());
            h = step * factor;
        } else {
            h = step * factor.min(0.9);
        }
    }
    Ok(traj)
}

impl Trajectory {
    pub fn system(&self) -> &GalerkinSystem {
        &self.system
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty trajectory")
    }

    /// State at the `i`-th accepted step.
    pub fn state(&self, i: usize) -> FourierField {
        self.system.to_field(&self.states[i])
    }

    /// Dense output at `t`: one step of the integrator from the preceding
    /// node, shorter than the accepted step there.
    pub fn at(&self, t: f64) -> Result<FourierField> {
        let end = self.end();
        if !(0.0..=end).contains(&t) {
            return Err(Error::OutsideTrajectory { t, end });
        }
        let i = self
            .times
            .partition_point(|&s| s <= t)
            .clamp(1, self.times.len())
            - 1;
        let t0 = self.times[i];
        if t == t0 || self.states[i].is_empty() {
            return Ok(self.system.to_field(&self.states[i]));
        }
        let res = lawson_step(&self.system, t0, &self.states[i], t - t0, &self.options)?;
        Ok(self.system.to_field(&res.next))
    }

    /// CSV rows `t,norm_0,norm_n,norm_p,div_defect` at the accepted steps.
    pub fn write_csv<W: std::io::Write>(&self, w: W, n: f64, p: f64) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "norm_0", "norm_n", "norm_p", "div_defect"])?;
        for (i, &t) in self.times.iter().enumerate() {
            let f = self.state(i);
            out.write_record([
                format!("{t}"),
                format!("{:e}", f.sobolev_norm(0.0)),
                format!("{:e}", f.sobolev_norm(n)),
                format!("{:e}", f.sobolev_norm(p)),
                format!("{:e}", f.max_div_defect()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Weights `∫_0^Δ e^{-λw} (w/Δ) dw / Δ` and `∫_0^Δ e^{-λw} (1 - w/Δ) dw / Δ`
/// as functions of `z = λΔ`.
fn product_weights(z: f64) -> (f64, f64) {
    if z < 1e-3 {
        (0.5 - z / 3.0 + z * z / 8.0, 0.5 - z / 6.0 + z * z / 24.0)
    } else {
        let e = (-z).exp();
        ((1.0 - e * (1.0 + z)) / (z * z), (z - 1.0 + e) / (z * z))
    }
}

/// Picard iterates on a uniform grid.
#[derive(Clone, Debug)]
pub struct PicardRun {
    pub times: Vec<f64>,
    /// `iterates[j][i]` is `φ_j(t_i)`.
    pub iterates: Vec<Vec<FourierField>>,
    /// `sup_i ‖φ_{j+1}(t_i) - φ_j(t_i)‖_n`.
    pub differences: Vec<f64>,
}

/// Applies the Volterra map `φ ↦ e^{tΔ}f0 + ∫_0^t e^{(t-s)Δ} 𝔓^G𝒫(φ(s), s) ds`
/// `iterations` times, starting from `start` sampled on `t_i = i·step`. The
/// integral uses exact exponential weights with `𝒫` interpolated linearly.
pub fn picard_iterate(
    system: &GalerkinSystem,
    start: &[FourierField],
    step: f64,
    iterations: usize,
    n: f64,
) -> Result<PicardRun> {
    if start.len() < 2 || !(step > 0.0) {
        return Err(Error::InvalidArgument(
            "Picard iteration needs a grid of at least two positive steps".into(),
        ));
    }
    let times: Vec<f64> = (0..start.len()).map(|i| i as f64 * step).collect();
    let d = system.dim;
    let weights: Vec<(f64, f64, f64)> = system
        .decay
        .iter()
        .map(|&lam| {
            let z = lam * step;
            let (wa, wb) = product_weights(z);
            ((-z).exp(), step * wa, step * wb)
        })
        .collect();
    let mut current: Vec<State> = start.iter().map(|f| system.to_dense(f)).collect();
    let mut iterates = vec![start.to_vec()];
    let mut differences = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let forcing: Vec<State> = times
            .iter()
            .zip(&current)
            .map(|(&t, y)| system.nonlinear_part(t, y))
            .collect::<Result<_>>()?;
        let mut next: Vec<State> = Vec::with_capacity(times.len());
        next.push(system.datum.clone());
        for i in 0..times.len() - 1 {
            let prev = &next[i];
            let y: State = (0..prev.len())
                .map(|j| {
                    let (e, wa, wb) = weights[j / d];
                    prev[j] * e + forcing[i][j] * wa + forcing[i + 1][j] * wb
                })
                .collect();
            next.push(y);
        }
        let diff = next
            .iter()
            .zip(&current)
            .map(|(a, b)| {
                let delta: State = a.iter().zip(b).map(|(x, y)| x - y).collect();
                system.to_field(&delta).sobolev_norm(n)
            })
            .fold(0.0, f64::max);
        differences.push(diff);
        iterates.push(next.iter().map(|y| system.to_field(y)).collect());
        current = next;
    }
    Ok(PicardRun {
        times,
        iterates,
        differences,
    })
}

/// Outcome of the momentum and energy balance checks.
#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    /// Largest `‖φ(t_{i+1})‖_{L²} - ‖φ(t_i)‖_{L²}` over accepted steps.
    pub max_energy_increase: f64,
    /// Largest relative residual of `½ d/dt‖φ‖² = ⟨φ|Δφ⟩ + ⟨φ|ξ⟩`, with the
    /// derivative by central differences of the dense output.
    pub max_identity_residual: f64,
    /// Largest `|⟨φ|ξ⟩|` seen; zero for unforced runs.
    pub max_forcing_work: f64,
    /// Largest mean-mode magnitude of any state.
    pub max_mean: f64,
}

pub fn balance_diagnostics(traj: &Trajectory) -> Result<BalanceReport> {
    let sys = &traj.system;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_residual: f64 = 0.0;
    let mut max_work: f64 = 0.0;
    let mut max_mean: f64 = 0.0;
    let norms: Vec<f64> = (0..traj.times.len())
        .map(|i| traj.state(i).sobolev_norm(0.0))
        .collect();
    for w in norms.windows(2) {
        max_increase = max_increase.max(w[1] - w[0]);
    }
    let end = traj.end();
    for i in 0..traj.times.len() {
        let t = traj.times[i];
        let phi = traj.state(i);
        max_mean = max_mean.max(phi.mean().iter().map(|v| v.abs()).fold(0.0, f64::max));
        let delta = 1e-4
            * (traj.times.get(i + 1).copied().unwrap_or(end) - traj.times[i.saturating_sub(1)])
                .max(1e-8);
        if t - delta < 0.0 || t + delta > end {
            continue;
        }
        let e_plus = traj.at(t + delta)?.sobolev_norm(0.0).powi(2);
        let e_minus = traj.at(t - delta)?.sobolev_norm(0.0).powi(2);
        let lhs = 0.25 * (e_plus - e_minus) / delta;
        let dissipation = -phi
            .stored()
            .map(|(k, c)| 2.0 * k.norm_sq() as f64 * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>();
        let xi = sys.to_field(&sys.to_dense(&sys.forcing.eval(t)?));
        let work = phi.inner_l2(&xi)?.re;
        max_work = max_work.max(work.abs());
        let scale = dissipation.abs() + work.abs() + f64::MIN_POSITIVE;
        max_residual = max_residual.max((lhs - dissipation - work).abs() / scale);
    }
    Ok(BalanceReport {
        max_energy_increase: if max_increase.is_finite() {
            max_increase
        } else {
            0.0
        },
        max_identity_residual: max_residual,
        max_forcing_work: max_work,
        max_mean,
    })
}
