//! Piecewise-linear numerical solutions of the quadratic control inequality.
//!
//! `ℛ` is sought as the linear interpolant of values `ℛ_0, ℛ_1, …` on a time
//! grid. On every cell the memory integral is bounded by a quadratic form
//! `Φ_{mk}(ℛ_k, ℛ_{k+1})` whose coefficients are upper bounds of
//! `u_-`-weighted moments, so each step reduces to a scalar quadratic
//! inequality for the next value.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{Certificate, CertificateKind, ControlProblem, Premise, Tube};
use crate::error::{Error, Result};
use crate::semigroup::HeatSemigroup;

const MOMENT_TOL: f64 = 1e-14;
const TAIL_EPS: f64 = 1e-12;
const START_CANDIDATES: usize = 64;
const LOOKAHEAD_WINDOWS: usize = 4;
const DEFAULT_WINDOW: usize = 5;
const BISECTION_STEPS: usize = 60;
const CONTINUATION_SLACK: f64 = 1e-9;
/// Relative growth rates of the trial continuations.
const RAMP_SLOPES: [f64; 7] = [0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6];

/// Grid instants `0 = t_0 < t_1 < …`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    step: Option<f64>,
}

impl TimeGrid {
    /// `t_m = m τ` for `m = 0..=cells`.
    pub fn uniform(step: f64, cells: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {step}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one cell".into(),
            ));
        }
        Ok(Self {
            times: (0..=cells).map(|m| m as f64 * step).collect(),
            step: Some(step),
        })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "grid must start at 0 and contain at least two instants".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "grid instants must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, step: None })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn cells(&self) -> usize {
        self.times.len() - 1
    }

    pub fn uniform_step(&self) -> Option<f64> {
        self.step
    }

    pub fn width(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

/// How a cell's moments were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellTag {
    /// The cell containing `t`, bounded through the moments of `u_-` on `[0, τ]`.
    Diagonal,
    /// Earlier cell inside the singular zone, with the monotone envelope
    /// `u_-(t-s) <= u_-(t_m - s)`.
    NearEnvelope,
    /// Cell entirely in the exponential zone, in closed form.
    Tail,
}

/// Upper bounds of the moments `∫ u_-(t-s) v^j ds`, `j = 2, 1, 0`, over one
/// cell, with `v` the cell's local coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellCoefficients {
    pub h: f64,
    pub i: f64,
    pub n: f64,
    pub tag: CellTag,
}

/// `Φ(a, x) = (H+N-2I)a^2 + 2(I-H)ax + Hx^2 + 2(N-I)D a + 2I D x`.
pub fn phi_polynomial(c: &CellCoefficients, d: f64, a: f64, x: f64) -> f64 {
    (c.h + c.n - 2.0 * c.i) * a * a
        + 2.0 * (c.i - c.h) * a * x
        + c.h * x * x
        + 2.0 * (c.n - c.i) * d * a
        + 2.0 * c.i * d * x
}

/// `∫_0^1 e^{c v} v^j dv` for `j = 0, 1, 2`.
fn exp_moments(c: f64) -> [f64; 3] {
    if c.abs() <= 1.0 {
        let mut out = [0.0; 3];
        let mut term = 1.0;
        for i in 0..40 {
            if i > 0 {
                term *= c / i as f64;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += term / (i + j + 1) as f64;
            }
        }
        out
    } else {
        let e = c.exp();
        [
            (e - 1.0) / c,
            (e * (c - 1.0) + 1.0) / (c * c),
            (e * (c * c - 2.0 * c + 2.0) - 2.0) / (c * c * c),
        ]
    }
}

/// Coefficient tables for one grid and semigroup estimator.
#[derive(Clone, Debug)]
pub struct GridCoefficients {
    grid: TimeGrid,
    est: HeatSemigroup,
    /// Uniform grids: near-zone cells indexed by lag `m - k`.
    lags: Vec<CellCoefficients>,
    /// Number of cells spanning the singular zone, `θ = L τ`, uniform grids.
    window: Option<usize>,
    /// Nonuniform grids: near-zone cells `(m, k)` with `k <= m`.
    table: Vec<Vec<Option<CellCoefficients>>>,
}

/// Diagonal-cell moments from `β1 = ∫u_- V^2`, `β2 = ∫u_- ψ(V)`, `β3 = ∫u_-`
/// on `[0, τ]` with `V = (τ-σ)/τ` and `ψ(V) = max_{0<=v<=V} v(1-v)`.
fn diagonal_cell(est: &HeatSemigroup, tau: f64) -> CellCoefficients {
    let v = |sigma: f64| (tau - sigma) / tau;
    let b1 = est.integrate_u_minus(0.0, tau, |s| v(s).powi(2), MOMENT_TOL);
    let b2 = est.integrate_u_minus(0.0, 0.5 * tau, |_| 0.25, MOMENT_TOL)
        + est.integrate_u_minus(0.5 * tau, tau, |s| v(s) * (1.0 - v(s)), MOMENT_TOL);
    let b3 = est.integrate_u_minus(0.0, tau, |_| 1.0, MOMENT_TOL);
    CellCoefficients {
        h: b1,
        i: b1 + b2,
        n: b1 + 2.0 * b2 + b3,
        tag: CellTag::Diagonal,
    }
}

/// Moments of the envelope `u_-(t_m - s)` over `[t_k, t_{k+1}]`, `k < m`.
fn near_cell(est: &HeatSemigroup, tm: f64, tk: f64, tk1: f64) -> CellCoefficients {
    let width = tk1 - tk;
    let v = |sigma: f64| (tm - sigma - tk) / width;
    let (lo, hi) = (tm - tk1, tm - tk);
    CellCoefficients {
        h: est.integrate_u_minus(lo, hi, |s| v(s).powi(2), MOMENT_TOL),
        i: est.integrate_u_minus(lo, hi, v, MOMENT_TOL),
        n: est.integrate_u_minus(lo, hi, |_| 1.0, MOMENT_TOL),
        tag: CellTag::NearEnvelope,
    }
}

/// Builds the coefficient tables. On uniform grids the singular zone must
/// be a whole number of cells.
pub fn grid_coefficients(grid: &TimeGrid, est: &HeatSemigroup) -> Result<GridCoefficients> {
    let theta = est.breakpoint;
    if let Some(tau) = grid.uniform_step() {
        let ratio = theta / tau;
        let window = ratio.round();
        if (ratio - window).abs() > 1e-9 || window < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "uniform grid needs the breakpoint {theta} to be a positive multiple of the step {tau}"
            )));
        }
        let window = window as usize;
        let lags: Vec<CellCoefficients> = (0..=window)
            .into_par_iter()
            .map(|j| {
                if j == 0 {
                    diagonal_cell(est, tau)
                } else {
                    let tm = j as f64 * tau;
                    near_cell(est, tm, 0.0, tau)
                }
            })
            .collect();
        return Ok(GridCoefficients {
            grid: grid.clone(),
            est: *est,
            lags,
            window: Some(window),
            table: Vec::new(),
        });
    }
    let t = grid.times();
    let table = (0..grid.cells())
        .into_par_iter()
        .map(|m| {
            (0..=m)
                .map(|k| {
                    if m == k {
                        Some(diagonal_cell(est, grid.width(m)))
                    } else if t[k + 1] <= t[m] - theta + TAIL_EPS {
                        None
                    } else {
                        Some(near_cell(est, t[m], t[k], t[k + 1]))
                    }
                })
                .collect()
        })
        .collect();
    Ok(GridCoefficients {
        grid: grid.clone(),
        est: *est,
        lags: Vec::new(),
        window: None,
        table,
    })
}

impl GridCoefficients {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn estimator(&self) -> &HeatSemigroup {
        &self.est
    }

    /// `L` with `θ = Lτ` on uniform grids.
    pub fn window(&self) -> Option<usize> {
        self.window
    }

    /// Whether cell `k` lies in the exponential zone as seen from step `m`.
    pub fn is_tail(&self, m: usize, k: usize) -> bool {
        match self.window {
            Some(l) => k + l < m,
            None => self.table[m][k].is_none(),
        }
    }

    /// Closed-form tail moments `∫_{t_k}^{t_{k+1}} e^{Bs} v^j ds`.
    pub fn tail_unscaled(&self, k: usize) -> CellCoefficients {
        let b = self.est.decay;
        let width = self.grid.width(k);
        let [j0, j1, j2] = exp_moments(b * width);
        let pre = (b * self.grid.times[k]).exp() * width;
        CellCoefficients {
            h: pre * j2,
            i: pre * j1,
            n: pre * j0,
            tag: CellTag::Tail,
        }
    }

    /// `A e^{-B t_m}`, the factor turning unscaled tail moments into `(m, k)` moments.
    pub fn tail_scale(&self, m: usize) -> f64 {
        self.est.tail_amplitude * (-self.est.decay * self.grid.times[m]).exp()
    }

    /// Moments of cell `k` as seen from step `m >= k`.
    pub fn cell(&self, m: usize, k: usize) -> CellCoefficients {
        assert!(k <= m, "cell index must not exceed the step");
        if self.is_tail(m, k) {
            let b = self.est.decay;
            let width = self.grid.width(k);
            let [j0, j1, j2] = exp_moments(b * width);
            let pre = self.est.tail_amplitude
                * (-b * (self.grid.times[m] - self.grid.times[k])).exp()
                * width;
            return CellCoefficients {
                h: pre * j2,
                i: pre * j1,
                n: pre * j0,
                tag: CellTag::Tail,
            };
        }
        match self.window {
            Some(_) => self.lags[m - k],
            None => self.table[m][k].expect("near-zone cell"),
        }
    }
}

/// `q(x) = αx^2 + βx + γ`, the left-hand side of one step as a function of
/// the next value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepQuadratic {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl StepQuadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.alpha * x + self.beta) * x + self.gamma
    }

    /// `{x >= 0 : q(x) <= x}` as an interval.
    pub fn fixed_interval(&self) -> Option<(f64, f64)> {
        let (a, b, c) = (self.alpha, self.beta - 1.0, self.gamma);
        if a == 0.0 {
            if b < 0.0 {
                return Some((c / -b, f64::INFINITY));
            }
            return if c <= 0.0 && b == 0.0 {
                Some((0.0, f64::INFINITY))
            } else {
                None
            };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 || b > 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // Stable smaller root.
        let lo = if c == 0.0 { 0.0 } else { 2.0 * c / (-b + sq) };
        let hi = (-b + sq) / (2.0 * a);
        Some((lo.max(0.0), hi))
    }

    /// Largest `x >= 0` with `q(x) <= cap`, or `None` when `q(0) > cap`.
    pub fn level(&self, cap: f64) -> Option<f64> {
        if self.gamma > cap {
            return None;
        }
        let (a, b, c) = (self.alpha, self.beta, self.gamma - cap);
        if a == 0.0 {
            return Some(if b == 0.0 { f64::INFINITY } else { -c / b });
        }
        let sq = (b * b - 4.0 * a * c).sqrt();
        Some(if b + sq == 0.0 {
            0.0
        } else {
            -2.0 * c / (b + sq)
        })
    }

    /// `{x >= 0 : q(x) <= min(x, cap)}`.
    pub fn admissible(&self, cap: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.fixed_interval()?;
        let top = hi.min(self.level(cap)?);
        (lo <= top).then_some((lo, top))
    }
}

/// Step quadratic for cell `m`: `ℰ_m + K[memory + Φ_mm(ℛ_m, x)]`.
pub fn step_quadratic(
    error: f64,
    memory: f64,
    prev: f64,
    distance: f64,
    k: f64,
    cell: &CellCoefficients,
) -> StepQuadratic {
    StepQuadratic {
        alpha: k * cell.h,
        beta: k * (2.0 * (cell.i - cell.h) * prev + 2.0 * cell.i * distance),
        gamma: error
            + k * (memory
                + (cell.h + cell.n - 2.0 * cell.i) * prev * prev
                + 2.0 * (cell.n - cell.i) * distance * prev),
    }
}

/// Smallest admissible next value, or `None` if the step stalls.
pub fn step_solve(
    error: f64,
    memory: f64,
    prev: f64,
    distance: f64,
    k: f64,
    cell: &CellCoefficients,
) -> Option<f64> {
    step_quadratic(error, memory, prev, distance, k, cell)
        .admissible(prev)
        .map(|(lo, _)| lo)
}

/// Rule used to pick one value from the admissible interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StepPolicy {
    /// The smallest admissible value.
    Greedy,
    /// The smallest admissible value from which a linear ramp continuation
    /// stays feasible for the longest span of steps tried, starting at four
    /// singular-zone widths and halving.
    Lookahead,
}

/// Which memory organisation the solver uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MemoryMode {
    /// Every past cell is re-evaluated at every step.
    Full,
    /// Exponential-zone cells are folded into a running sum `𝒮_m`.
    Reduced,
}

/// Source of the per-cell error bounds `ℰ_m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ErrorData {
    /// `ℰ_m` given directly.
    Samples(Vec<f64>),
    /// `ℰ_m = u(t_m) δ + Σ_{k<=m} N_mk ε_k`.
    Volterra { delta: f64, eps: Vec<f64> },
}

/// Discretised control problem: `ℰ_m`, `D_m` per cell and `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridProblem {
    pub error: ErrorData,
    pub distance: Vec<f64>,
    pub k: f64,
}

impl GridProblem {
    /// Samples monotone profiles on every cell by the larger endpoint value.
    pub fn from_profiles(problem: &ControlProblem, grid: &TimeGrid) -> Self {
        let t = grid.times();
        let sup = |f: &dyn Fn(f64) -> f64, m: usize| f(t[m]).max(f(t[m + 1]));
        Self {
            error: ErrorData::Samples((0..grid.cells()).map(|m| sup(&*problem.error, m)).collect()),
            distance: (0..grid.cells())
                .map(|m| sup(&*problem.distance, m))
                .collect(),
            k: problem.k,
        }
    }

    fn errors(&self, coeffs: &GridCoefficients) -> Result<Vec<f64>> {
        let cells = coeffs.grid.cells();
        let out = match &self.error {
            ErrorData::Samples(e) => e.clone(),
            ErrorData::Volterra { delta, eps } => {
                if eps.len() < cells {
                    return Err(Error::DimensionMismatch {
                        expected: cells,
                        found: eps.len(),
                    });
                }
                (0..cells)
                    .map(|m| {
                        let u = (-coeffs.est.decay * coeffs.grid.times[m]).exp();
                        u * delta + (0..=m).map(|k| coeffs.cell(m, k).n * eps[k]).sum::<f64>()
                    })
                    .collect()
            }
        };
        if out.len() < cells || self.distance.len() < cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                found: out.len().min(self.distance.len()),
            });
        }
        if out.iter().chain(&self.distance).any(|v| !(*v >= 0.0)) || !(self.k >= 0.0) {
            return Err(Error::InvalidArgument(
                "grid problem data must be nonnegative".into(),
            ));
        }
        Ok(out)
    }
}

/// Whether the recursion reached the end of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GridStatus {
    Completed,
    /// No admissible value for `ℛ_{step+1}`; the solution is valid on `[0, t_step)`.
    Stalled {
        step: usize,
    },
}

/// Values `ℛ_0..ℛ_M` with the tail memory `𝒮_m` used at each step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub memory: Vec<f64>,
    pub status: GridStatus,
}

struct Recursion<'a> {
    coeffs: &'a GridCoefficients,
    errors: Vec<f64>,
    distance: &'a [f64],
    k: f64,
    mode: MemoryMode,
    values: Vec<f64>,
    /// `tail_prefix[j] = Σ_{k<j}` unscaled tail `Φ_k`.
    tail_prefix: Vec<f64>,
}

impl Recursion<'_> {
    fn phi(&self, c: &CellCoefficients, k: usize) -> f64 {
        phi_polynomial(c, self.distance[k], self.values[k], self.values[k + 1])
    }

    /// `Σ_{k<count} Φ_{target,k}(ℛ_k, ℛ_{k+1})`.
    fn memory(&self, target: usize, count: usize) -> f64 {
        match (self.mode, self.coeffs.window) {
            (MemoryMode::Reduced, Some(l)) => {
                let tail_cells = target
                    .saturating_sub(l + 1)
                    .min(count)
                    .min(self.tail_prefix.len() - 1);
                let tail = self.coeffs.tail_scale(target) * self.tail_prefix[tail_cells];
                tail + (tail_cells..count)
                    .map(|k| self.phi(&self.coeffs.cell(target, k), k))
                    .sum::<f64>()
            }
            _ => (0..count)
                .map(|k| self.phi(&self.coeffs.cell(target, k), k))
                .sum(),
        }
    }

    /// Appends the unscaled tail term of the newest completed cell.
    fn push_tail(&mut self) {
        let k = self.tail_prefix.len() - 1;
        let c = self.coeffs.tail_unscaled(k);
        let next = self.tail_prefix[k] + self.phi(&c, k);
        self.tail_prefix.push(next);
    }

    fn step(&self, m: usize) -> StepQuadratic {
        let memory = self.memory(m, m);
        step_quadratic(
            self.errors[m],
            memory,
            self.values[m],
            self.distance[m],
            self.k,
            &self.coeffs.cell(m, m),
        )
    }

    /// Whether the ramp `ℛ_j = y (1 + slope (t_j - t_{m+1}))`, `j > m`,
    /// satisfies the next `span` steps.
    fn continues(&mut self, m: usize, y: f64, slope: f64, span: usize) -> bool {
        let end = (m + 1 + span).min(self.errors.len());
        let base = self.values.len();
        let times = self.coeffs.grid.times();
        let ramp = |j: usize| y * (1.0 + slope * (times[j] - times[m + 1]));
        self.values.push(y);
        let mut ok = true;
        for j in m + 1..end {
            self.values.push(ramp(j + 1));
            if self.errors[j] + self.k * self.memory(j, j + 1)
                > ramp(j) * (1.0 - CONTINUATION_SLACK)
            {
                ok = false;
                break;
            }
        }
        self.values.truncate(base);
        ok
    }

    /// Lookahead spans tried in order, longest first.
    fn spans(&self) -> Vec<usize> {
        let mut span = LOOKAHEAD_WINDOWS * self.coeffs.window.unwrap_or(DEFAULT_WINDOW).max(1);
        let mut out = Vec::new();
        while span > 1 {
            out.push(span);
            span /= 2;
        }
        out.push(1);
        out
    }

    /// Smallest value in `[lo, hi]` from which some ramp continues for the
    /// longest possible span, with that span; `(0, lo)` when not even one
    /// step continues.
    fn lookahead_pick(&mut self, m: usize, lo: f64, hi: f64) -> (usize, f64) {
        if m + 1 >= self.errors.len() || !hi.is_finite() {
            return (0, lo);
        }
        for span in self.spans() {
            let mut best: Option<f64> = None;
            for slope in RAMP_SLOPES {
                if !self.continues(m, hi, slope, span) {
                    continue;
                }
                let pick = if self.continues(m, lo, slope, span) {
                    lo
                } else {
                    let (mut a, mut b) = (lo, hi);
                    for _ in 0..BISECTION_STEPS {
                        let mid = 0.5 * (a + b);
                        if self.continues(m, mid, slope, span) {
                            b = mid;
                        } else {
                            a = mid;
                        }
                    }
                    b
                };
                best = Some(best.map_or(pick, |v| v.min(pick)));
            }
            if let Some(pick) = best {
                return (span, pick);
            }
        }
        (0, lo)
    }

    /// Chosen `ℛ_{m+1}` with the lookahead span it achieved.
    fn choose_ranked(&mut self, m: usize, policy: StepPolicy) -> Option<(usize, f64)> {
        let q = self.step(m);
        let (lo, hi) = q.admissible(self.values[m])?;
        let (span, pick) = match policy {
            StepPolicy::Lookahead => self.lookahead_pick(m, lo, hi),
            StepPolicy::Greedy => (0, lo),
        };
        Some((span, nudge(&q, pick, self.values[m])))
    }

    fn choose(&mut self, m: usize, policy: StepPolicy) -> Option<f64> {
        self.choose_ranked(m, policy).map(|(_, x)| x)
    }
}

/// Raises `x` by rounding-level amounts until `q(x) <= min(x, cap)` holds in
/// floating point.
fn nudge(q: &StepQuadratic, mut x: f64, cap: f64) -> f64 {
    for _ in 0..16 {
        let lhs = q.eval(x);
        if lhs <= x && lhs <= cap {
            break;
        }
        if lhs > x {
            x += 2.0 * (lhs - x) + f64::EPSILON * x.abs();
        } else {
            break;
        }
    }
    x
}

/// Runs the recursion on the whole grid.
pub fn solve_control_grid(
    problem: &GridProblem,
    coeffs: &GridCoefficients,
    mode: MemoryMode,
    policy: StepPolicy,
) -> Result<GridSolution> {
    if mode == MemoryMode::Reduced && coeffs.window.is_none() {
        return Err(Error::InvalidArgument(
            "reduced memory needs a uniform grid".into(),
        ));
    }
    let errors = problem.errors(coeffs)?;
    let cells = coeffs.grid.cells();
    let times = coeffs.grid.times().to_vec();
    let mut rec = Recursion {
        coeffs,
        errors,
        distance: &problem.distance,
        k: problem.k,
        mode,
        values: Vec::with_capacity(cells + 1),
        tail_prefix: vec![0.0],
    };
    let window = coeffs.window.unwrap_or(0);
    let mut memory_log = vec![0.0];

    // Joint choice of (ℛ_0, ℛ_1): the smallest ℛ_1 over the start candidates.
    let Some((r0, r1)) = start_pair(&mut rec, policy) else {
        return Ok(GridSolution {
            times,
            values: Vec::new(),
            memory: Vec::new(),
            status: GridStatus::Stalled { step: 0 },
        });
    };
    rec.values.clear();
    rec.values.extend([r0, r1]);
    for m in 1..cells {
        if mode == MemoryMode::Reduced && m > window {
            rec.push_tail();
        }
        memory_log.push(if mode == MemoryMode::Reduced {
            rec.tail_prefix[m.saturating_sub(window + 1).min(rec.tail_prefix.len() - 1)]
        } else {
            0.0
        });
        match rec.choose(m, policy) {
            Some(x) => rec.values.push(x),
            None => {
                return Ok(GridSolution {
                    times,
                    values: rec.values,
                    memory: memory_log,
                    status: GridStatus::Stalled { step: m },
                })
            }
        }
    }
    if mode == MemoryMode::Full {
        memory_log = full_memory_log(&rec, window);
    }
    Ok(GridSolution {
        times,
        values: rec.values,
        memory: memory_log,
        status: GridStatus::Completed,
    })
}

/// Tail sums `𝒮_m` recomputed for reporting in full-memory mode.
fn full_memory_log(rec: &Recursion<'_>, window: usize) -> Vec<f64> {
    let cells = rec.values.len() - 1;
    let mut out = Vec::with_capacity(cells);
    let mut acc = 0.0;
    let mut next_tail = 0;
    for m in 0..cells {
        let tail_cells = if rec.coeffs.window.is_some() {
            m.saturating_sub(window + 1)
        } else {
            (0..m).take_while(|&k| rec.coeffs.is_tail(m, k)).count()
        };
        while next_tail < tail_cells {
            acc += rec.phi(&rec.coeffs.tail_unscaled(next_tail), next_tail);
            next_tail += 1;
        }
        out.push(acc);
    }
    out
}

fn start_pair(rec: &mut Recursion<'_>, policy: StepPolicy) -> Option<(f64, f64)> {
    let e0 = rec.errors[0];
    let diag = rec.coeffs.cell(0, 0);
    let d0 = rec.distance[0];
    let k = rec.k;
    // Smallest R with ℰ_0 + KΦ_00(R, R) <= R.
    let constant = StepQuadratic {
        alpha: k * diag.n,
        beta: 2.0 * k * diag.n * d0,
        gamma: e0,
    };
    let (base, upper) = constant.fixed_interval()?;
    let base = nudge(&constant, base, f64::INFINITY);
    let top = if k > 0.0 {
        1.0 / (4.0 * k * rec.coeffs.est.convolution_bound)
    } else {
        base
    };
    // Scan [ℰ_0, 1/(4KN)] when it lies above the constant root, else up to the larger root.
    let (from, to) = if top > base {
        (e0.max(base), top)
    } else {
        (base, upper.min(2.0 * base))
    };
    let mut candidates = vec![base];
    if to > from && from > 0.0 {
        let (l0, l1) = (from.ln(), to.ln());
        candidates.extend(
            (0..START_CANDIDATES)
                .map(|i| (l0 + (l1 - l0) * i as f64 / (START_CANDIDATES - 1) as f64).exp()),
        );
    }
    // Prefer the longest feasible continuation, then the smallest ℛ_1.
    let mut best: Option<(usize, f64, f64)> = None;
    for r0 in candidates {
        rec.values.clear();
        rec.values.push(r0);
        if let Some((span, r1)) = rec.choose_ranked(0, policy) {
            if best.is_none_or(|(s, _, b)| span > s || (span == s && r1 < b)) {
                best = Some((span, r0, r1));
            }
        }
    }
    best.map(|(_, r0, r1)| (r0, r1))
}

impl GridSolution {
    /// End of the certified interval.
    pub fn horizon(&self) -> f64 {
        match self.status {
            GridStatus::Completed => *self.times.last().expect("nonempty grid"),
            GridStatus::Stalled { step } => self.times[step],
        }
    }

    /// `max_m [ℰ_m + K Σ_k Φ_mk(ℛ_k, ℛ_{k+1}) - min(ℛ_m, ℛ_{m+1})]` with
    /// full-memory sums; nonpositive for a feasible solution.
    pub fn max_violation(&self, problem: &GridProblem, coeffs: &GridCoefficients) -> Result<f64> {
        let errors = problem.errors(coeffs)?;
        let solved = self.values.len().saturating_sub(1);
        let mut worst = f64::NEG_INFINITY;
        for (m, error) in errors.iter().enumerate().take(solved) {
            let sum: f64 = (0..=m)
                .map(|k| {
                    phi_polynomial(
                        &coeffs.cell(m, k),
                        problem.distance[k],
                        self.values[k],
                        self.values[k + 1],
                    )
                })
                .sum();
            let lhs = error + problem.k * sum;
            worst = worst.max(lhs - self.values[m].min(self.values[m + 1]));
        }
        Ok(worst)
    }

    /// Certificate with the piecewise-linear tube, valid up to [`Self::horizon`].
    pub fn certificate(&self, problem: Option<ControlProblem>) -> Certificate {
        let n = self.values.len();
        if n == 0 {
            return Certificate {
                kind: CertificateKind::NumericGrid,
                horizon: 0.0,
                premises: vec![Premise::new(
                    "discrete steps solved",
                    0.0,
                    self.times.len() as f64 - 1.0,
                )],
                tube: Tube::Constant(0.0),
                problem,
            };
        }
        let premise = Premise::new(
            "discrete steps solved",
            n.saturating_sub(1) as f64,
            self.times.len() as f64 - 1.0,
        );
        Certificate {
            kind: CertificateKind::NumericGrid,
            horizon: self.horizon(),
            premises: vec![premise],
            tube: Tube::PiecewiseLinear {
                times: self.times[..n].to_vec(),
                values: self.values.clone(),
            },
            problem,
        }
    }

    /// CSV rows `m,t_m,R_m,S_m,status`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["m", "t_m", "R_m", "S_m", "status"])?;
        let status = match self.status {
            GridStatus::Completed => "completed".to_string(),
            GridStatus::Stalled { step } => format!("stalled-at-{step}"),
        };
        for (m, r) in self.values.iter().enumerate() {
            let s = self.memory.get(m).copied().unwrap_or(f64::NAN);
            out.write_record([
                m.to_string(),
                format!("{}", self.times[m]),
                format!("{r:e}"),
                format!("{s:e}"),
                status.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_moments_agree_across_branches() {
        let series = exp_moments(1.0);
        let e = 1f64.exp();
        let closed = [e - 1.0, 1.0, e - 2.0];
        for (a, b) in series.iter().zip(closed) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_interval_roots() {
        let q = StepQuadratic {
            alpha: 2.0,
            beta: 0.0,
            gamma: 0.1,
        };
        let (lo, hi) = q.fixed_interval().unwrap();
        assert!((q.eval(lo) - lo).abs() < 1e-15);
        assert!((q.eval(hi) - hi).abs() < 1e-14);
        assert!(StepQuadratic {
            alpha: 2.0,
            beta: 0.0,
            gamma: 1.0
        }
        .fixed_interval()
        .is_none());
    }
}
