//! Closed-form solutions `ℛ(t)` of the quadratic control inequality
//!
//! `ℰ(t) + K ∫_0^t u_-(t-s) [2 𝒟(s) ℛ(s) + ℛ(s)^2] ds <= ℛ(t)`
//!
//! in the finite-horizon and exponential-decay regimes, including the
//! Galerkin error certificates.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rounding::{round_down_sig, round_up_sig};
use crate::semigroup::HeatSemigroup;

/// Tolerance used when checking a premise `lhs <= rhs`.
const PREMISE_SLACK: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// A time profile `t ↦ value`.
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant_profile(v: f64) -> Profile {
    Arc::new(move |_| v)
}

/// `X(z) = (1 - sqrt(1-z)) / (z/2)` on `[0, 1]`, with `X(0) = 1`.
pub fn shape_x(z: f64) -> Result<f64> {
    if !(0.0..=1.0 + PREMISE_SLACK).contains(&z) {
        return Err(Error::InvalidArgument(format!(
            "X(z) needs z in [0, 1], got {z}"
        )));
    }
    Ok(2.0 / (1.0 + (1.0 - z).max(0.0).sqrt()))
}

/// `(1 - z/2 - sqrt(1-z)) / (z^2/8)` on `[0, 1]`, with value 1 at `z = 0`.
pub fn shape_xscript(z: f64) -> Result<f64> {
    let x = shape_x(z)?;
    Ok(x * x)
}

/// `Υ(μ, δ, ε)`, the smaller root of `μ R^2 - (1 - 2μδ) R + ε = 0`, which
/// equals `ε` when `μ = 0`. Requires `2μδ + 2 sqrt(με) <= 1`.
pub fn upsilon(mu: f64, delta: f64, eps: f64) -> Result<f64> {
    if mu < 0.0
        || delta < 0.0
        || eps < 0.0
        || !(mu.is_finite() && delta.is_finite() && eps.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "Upsilon needs finite nonnegative arguments, got ({mu}, {delta}, {eps})"
        )));
    }
    let lhs = 2.0 * mu * delta + 2.0 * (mu * eps).sqrt();
    if lhs > 1.0 + PREMISE_SLACK {
        return Err(Error::InvalidArgument(format!(
            "Upsilon needs 2μδ + 2√(με) <= 1, got {lhs}"
        )));
    }
    let b = 1.0 - 2.0 * mu * delta;
    let disc = (b * b - 4.0 * mu * eps).max(0.0);
    if eps == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * eps / (b + disc.sqrt()))
}

/// The proposition a certificate was derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertificateKind {
    LocalExistence,
    Monotone,
    ZeroFiniteHorizon,
    ZeroExponential,
    Exponential,
    AFlow,
    GalerkinFiniteHorizon,
    GalerkinExponential,
    NumericGrid,
}

impl fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::LocalExistence => "local existence",
            Self::Monotone => "monotone data",
            Self::ZeroFiniteHorizon => "zero approximate solution, finite horizon",
            Self::ZeroExponential => "zero approximate solution, exponential decay",
            Self::Exponential => "exponential decay",
            Self::AFlow => "linear-flow approximate solution",
            Self::GalerkinFiniteHorizon => "Galerkin approximation, finite horizon",
            Self::GalerkinExponential => "Galerkin approximation, exponential decay",
            Self::NumericGrid => "piecewise-linear numerical solution",
        };
        f.write_str(s)
    }
}

/// A verified inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Premise {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl Premise {
    pub fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            label: label.into(),
            lhs,
            rhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + PREMISE_SLACK
    }
}

/// A certificate that could not be issued, with the violated inequality.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{kind} refused: {} = {:.6} exceeds {}", premise.label, premise.lhs, premise.rhs)]
pub struct Refusal {
    pub kind: CertificateKind,
    pub premise: Premise,
}

fn require(kind: CertificateKind, premise: Premise) -> Result<Premise> {
    if premise.holds() && premise.lhs.is_finite() {
        Ok(premise)
    } else {
        Err(Refusal { kind, premise }.into())
    }
}

/// The radius profile of a certificate.
#[derive(Clone)]
pub enum Tube {
    Constant(f64),
    /// `amplitude · e^{-rate t}`.
    Exponential {
        amplitude: f64,
        rate: f64,
    },
    Profile(Profile),
    /// Linear interpolation of `(times, values)`.
    PiecewiseLinear {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl fmt::Debug for Tube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(r) => write!(f, "Constant({r})"),
            Self::Exponential { amplitude, rate } => {
                write!(f, "Exponential({amplitude} e^(-{rate} t))")
            }
            Self::Profile(_) => write!(f, "Profile(..)"),
            Self::PiecewiseLinear { times, .. } => {
                write!(f, "PiecewiseLinear({} nodes)", times.len())
            }
        }
    }
}

impl Tube {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(r) => *r,
            Self::Exponential { amplitude, rate } => amplitude * (-rate * t).exp(),
            Self::Profile(f) => f(t),
            Self::PiecewiseLinear { times, values } => {
                let i = times.partition_point(|&s| s <= t);
                if i == 0 {
                    return values[0];
                }
                if i >= times.len() {
                    return *values.last().expect("nonempty");
                }
                let (t0, t1) = (times[i - 1], times[i]);
                let w = (t - t0) / (t1 - t0);
                values[i - 1] * (1.0 - w) + values[i] * w
            }
        }
    }
}

/// The data `(ℰ, 𝒟, K)` of the control inequality a tube solves.
#[derive(Clone)]
pub struct ControlProblem {
    pub error: Profile,
    pub distance: Profile,
    pub k: f64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

/// An existence horizon and a tube around the approximate solution.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub horizon: f64,
    pub premises: Vec<Premise>,
    pub tube: Tube,
    pub problem: Option<ControlProblem>,
}

impl Certificate {
    /// Tube radius at `t ∈ [0, horizon]`.
    pub fn tube_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutsideTrajectory {
                t,
                end: self.horizon,
            });
        }
        Ok(self.tube.eval(t))
    }

    /// `count` equispaced samples on `[0, min(horizon, span)]`.
    pub fn samples(&self, span: f64, count: usize) -> Vec<(f64, f64)> {
        let end = self.horizon.min(span);
        (0..count)
            .map(|i| {
                let t = if count > 1 {
                    end * i as f64 / (count - 1) as f64
                } else {
                    0.0
                };
                (t, self.tube.eval(t))
            })
            .collect()
    }

    /// Writes `t,tube` CSV rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W, span: f64, count: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "tube"])?;
        for (t, r) in self.samples(span, count) {
            out.write_record([format!("{t}"), format!("{r:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Bound on the forcing in the `H^{n-1}` norm.
#[derive(Clone)]
pub enum ForcingEnvelope {
    /// `‖ξ(t)‖ <= Ξ(t)` with `Ξ` nondecreasing.
    Bound(Profile),
    /// `‖ξ(t)‖ <= J e^{-2Bt}`.
    Exponential(f64),
}

impl fmt::Debug for ForcingEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bound(_) => write!(f, "Bound(..)"),
            Self::Exponential(j) => write!(f, "Exponential({j})"),
        }
    }
}

impl ForcingEnvelope {
    pub fn constant(xi: f64) -> Self {
        Self::Bound(constant_profile(xi))
    }

    pub fn none() -> Self {
        Self::Exponential(0.0)
    }

    /// `Ξ(t)`, a nondecreasing bound valid in either representation.
    pub fn bound_at(&self, t: f64) -> f64 {
        match self {
            Self::Bound(f) => f(t),
            Self::Exponential(j) => *j,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = match self {
            Self::Bound(f) => !(f(0.0) >= 0.0),
            Self::Exponential(j) => !(*j >= 0.0),
        };
        if bad {
            return Err(Error::InvalidArgument(
                "forcing envelope must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Finite horizon `T` (possibly `+∞`, using `𝒰(∞)`) or exponential decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Regime {
    FiniteHorizon(f64),
    Exponential,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// Searches a constant radius `R` and horizon `T` with
/// `ℰ(T) + 𝒰(T) (2K𝒟(T)R + KR^2) <= R`, which suffices for nondecreasing
/// `ℰ`, `𝒟`. `R` ranges over 256 log-spaced values in `[1e-8, 1e4]` and `T`
/// is found by bisection; the pair with the longest horizon wins.
pub fn local_existence(
    error: Profile,
    distance: Profile,
    k: f64,
    est: &HeatSemigroup,
) -> Result<Certificate> {
    check_nonneg("K", k)?;
    let g = |r: f64, t: f64| {
        let u = est.big_u_at(t);
        error(t) + u * (2.0 * k * distance(t) * r + k * r * r) - r
    };
    let mut best: Option<(f64, f64)> = None;
    let grid = 256;
    for i in 0..grid {
        let r = 10f64.powf(-8.0 + 12.0 * i as f64 / (grid - 1) as f64);
        if g(r, f64::INFINITY) <= 0.0 {
            best = Some((r, f64::INFINITY));
            break;
        }
        if g(r, 0.0) > 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1e3);
        if g(r, hi) <= 0.0 {
            lo = hi;
        } else {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if g(r, mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if lo > 0.0 && best.is_none_or(|(_, t)| lo > t) {
            best = Some((r, lo));
        }
    }
    let (r, horizon) = best.ok_or_else(|| {
        Error::NoCertificate("no admissible (R, T) pair on the search grid".into())
    })?;
    let premise = Premise::new("E(T) + U(T)(2KD(T)R + KR^2) - R", g(r, horizon), 0.0);
    Ok(Certificate {
        kind: CertificateKind::LocalExistence,
        horizon,
        premises: vec![premise],
        tube: Tube::Constant(r),
        problem: Some(ControlProblem { error, distance, k }),
    })
}

/// Tube `Υ(K𝒰(t), 𝒟(t), ℰ(t))` for nondecreasing `ℰ`, `𝒟`, under
/// `2 sqrt(K𝒰(T)ℰ(T)) + 2K𝒰(T)𝒟(T) <= 1`.
pub fn monotone_certificate(
    error: Profile,
    distance: Profile,
    k: f64,
    est: &HeatSemigroup,
    horizon: f64,
) -> Result<Certificate> {
    monotone_with_kind(CertificateKind::Monotone, error, distance, k, est, horizon)
}

fn monotone_with_kind(
    kind: CertificateKind,
    error: Profile,
    distance: Profile,
    k: f64,
    est: &HeatSemigroup,
    horizon: f64,
) -> Result<Certificate> {
    check_nonneg("K", k)?;
    check_nonneg("horizon", horizon)?;
    let ku = k * est.big_u_at(horizon);
    let lhs = 2.0 * (ku * error(horizon)).sqrt() + 2.0 * ku * distance(horizon);
    let premise = require(kind, Premise::new("2√(KU(T)E(T)) + 2KU(T)D(T)", lhs, 1.0))?;
    let est = *est;
    let (e, d) = (error.clone(), distance.clone());
    let tube: Profile = Arc::new(move |t| {
        let mu = k * est.big_u_at(t.min(horizon));
        upsilon(mu, d(t), e(t)).unwrap_or(f64::INFINITY)
    });
    Ok(Certificate {
        kind,
        horizon,
        premises: vec![premise],
        tube: Tube::Profile(tube),
        problem: Some(ControlProblem { error, distance, k }),
    })
}

/// Constant-`R` exponential certificate under `2 sqrt(KNE) + 2KND <= 1`:
/// `R` is the smaller root of `KN R^2 - (1 - 2KND) R + E = 0`, tube `R e^{-Bt}`.
pub fn exp_certificate(e: f64, d: f64, k: f64, est: &HeatSemigroup) -> Result<Certificate> {
    exp_with_kind(CertificateKind::Exponential, e, d, k, est, Vec::new())
}

fn exp_with_kind(
    kind: CertificateKind,
    e: f64,
    d: f64,
    k: f64,
    est: &HeatSemigroup,
    mut premises: Vec<Premise>,
) -> Result<Certificate> {
    check_nonneg("E", e)?;
    check_nonneg("D", d)?;
    check_nonneg("K", k)?;
    let kn = k * est.convolution_bound;
    let lhs = 2.0 * (kn * e).sqrt() + 2.0 * kn * d;
    premises.push(require(kind, Premise::new("2√(KNE) + 2KND", lhs, 1.0))?);
    let r = upsilon(kn, d, e)?;
    let b = est.decay;
    Ok(Certificate {
        kind,
        horizon: f64::INFINITY,
        premises,
        tube: Tube::Exponential {
            amplitude: r,
            rate: b,
        },
        problem: Some(ControlProblem {
            error: Arc::new(move |t| e * (-b * t).exp()),
            distance: Arc::new(move |t| d * (-b * t).exp()),
            k,
        }),
    })
}

/// Certificate around the zero approximate solution.
///
/// Finite horizon: `ℱ(t) = ‖f0‖ + Ξ(t)𝒰(t)`, premise `4K𝒰(T)ℱ(T) <= 1`,
/// tube `ℱ(t) X(4K𝒰(t)ℱ(t))`. Exponential: `F = ‖f0‖ + NJ`, premise
/// `4KNF <= 1`, tube `F X(4KNF) e^{-Bt}`.
pub fn zero_certificate(
    datum_norm: f64,
    forcing: &ForcingEnvelope,
    k: f64,
    est: &HeatSemigroup,
    regime: Regime,
) -> Result<Certificate> {
    check_nonneg("datum norm", datum_norm)?;
    forcing.check()?;
    match regime {
        Regime::FiniteHorizon(horizon) => {
            let est_c = *est;
            let env = forcing.clone();
            let big_f: Profile =
                Arc::new(move |t| datum_norm + env.bound_at(t) * est_c.big_u_at(t));
            let lhs = 4.0 * k * est.big_u_at(horizon) * big_f(horizon);
            let kind = CertificateKind::ZeroFiniteHorizon;
            let premise = require(kind, Premise::new("4KU(T)F(T)", lhs, 1.0))?;
            let mut cert = monotone_with_kind(kind, big_f, constant_profile(0.0), k, est, horizon)?;
            cert.premises.insert(0, premise);
            Ok(cert)
        }
        Regime::Exponential => {
            let j = match forcing {
                ForcingEnvelope::Exponential(j) => *j,
                ForcingEnvelope::Bound(_) => {
                    return Err(Error::InvalidArgument(
                        "exponential regime needs an exponential forcing envelope".into(),
                    ))
                }
            };
            let big_f = datum_norm + est.convolution_bound * j;
            let kind = CertificateKind::ZeroExponential;
            let premise = require(
                kind,
                Premise::new("4KNF", 4.0 * k * est.convolution_bound * big_f, 1.0),
            )?;
            exp_with_kind(kind, big_f, 0.0, k, est, vec![premise])
        }
    }
}

/// Certificate around the linear flow `φ' = Δφ + ξ`: premise `4KNF <= 1`,
/// tube `KNF^2 𝒳(4KNF) e^{-Bt}`, which is the exponential certificate with
/// `E = KNF^2` and `D = F`.
pub fn aflow_certificate(
    datum_norm: f64,
    j: f64,
    k: f64,
    est: &HeatSemigroup,
) -> Result<Certificate> {
    check_nonneg("datum norm", datum_norm)?;
    check_nonneg("J", j)?;
    let nn = est.convolution_bound;
    let big_f = datum_norm + nn * j;
    let kind = CertificateKind::AFlow;
    let premise = require(kind, Premise::new("4KNF", 4.0 * k * nn * big_f, 1.0))?;
    let mut cert = exp_with_kind(
        kind,
        k * nn * big_f * big_f,
        big_f,
        k,
        est,
        vec![premise.clone()],
    )?;
    let amplitude = k * nn * big_f * big_f * shape_xscript(4.0 * k * nn * big_f)?;
    cert.tube = Tube::Exponential {
        amplitude,
        rate: est.decay,
    };
    Ok(cert)
}

/// Global-existence thresholds for the zero approximate solution, quoted at
/// three significant digits in the conservative direction.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZeroThresholds {
    /// `𝒰(∞)` rounded up.
    pub u_infinity: f64,
    /// Largest `‖f0‖ + 𝒰(∞)Ξ` with `4K𝒰(∞)(‖f0‖ + 𝒰(∞)Ξ) <= 1`, rounded down.
    pub finite_horizon: f64,
    /// Largest `F` with `4KNF <= 1`, rounded down after rounding `4KN` up.
    pub exponential: f64,
}

pub fn zero_thresholds(k: f64, est: &HeatSemigroup) -> ZeroThresholds {
    let u_inf = est.big_u_at(f64::INFINITY);
    ZeroThresholds {
        u_infinity: round_up_sig(u_inf, 3),
        finite_horizon: round_down_sig(1.0 / (4.0 * k * u_inf), 3),
        exponential: round_down_sig(1.0 / round_up_sig(4.0 * k * est.convolution_bound, 3), 3),
    }
}

/// Outcome of substituting a tube back into its control inequality.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// `(t, ℛ(t) - LHS(t))` per sample.
    pub slacks: Vec<(f64, f64)>,
    pub min_slack: f64,
}

/// Evaluates `ℛ(t) - ℰ(t) - K ∫_0^t u_-(t-s)(2𝒟(s)ℛ(s) + ℛ(s)^2) ds` at
/// each sample time by adaptive quadrature with the `u_-` singularity removed.
pub fn residual_check(
    cert: &Certificate,
    est: &HeatSemigroup,
    times: &[f64],
) -> Result<ResidualReport> {
    let problem = cert
        .problem
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("certificate carries no control problem".into()))?;
    let mut slacks = Vec::with_capacity(times.len());
    for &t in times {
        let r_t = cert.tube_at(t)?;
        let integrand = |sigma: f64| {
            let s = t - sigma;
            let r = cert.tube.eval(s);
            2.0 * (problem.distance)(s) * r + r * r
        };
        let memory = est.integrate_u_minus(0.0, t, integrand, RESIDUAL_TOL);
        let lhs = (problem.error)(t) + problem.k * memory;
        slacks.push((t, r_t - lhs));
    }
    let min_slack = slacks.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(ResidualReport { slacks, min_slack })
}

/// Data of a Galerkin error certificate with indices `n <= p`.
#[derive(Clone, Debug)]
pub struct GalerkinInputs {
    pub n: f64,
    pub p: f64,
    /// `‖f0‖_n` and `‖f0‖_p`.
    pub datum_n: f64,
    pub datum_p: f64,
    /// Forcing envelopes in `H^{n-1}` and `H^{p-1}`.
    pub forcing_n: ForcingEnvelope,
    pub forcing_p: ForcingEnvelope,
    pub k_n: f64,
    pub k_p: f64,
}

/// How the horizon of a finite-horizon Galerkin certificate is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum HorizonRequest {
    Finite(f64),
    Infinite,
    /// Largest horizon (three significant digits, rounded down) at which the
    /// Galerkin norm bounds apply; `+∞` if they apply globally.
    Auto,
    Exponential,
}

/// Values quoted at three significant digits, rounded conservatively.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DisplayedAnalysis {
    pub a: f64,
    pub b: f64,
    pub threshold: f64,
    pub rough: f64,
}

/// The `|G|`-independent part of a Galerkin certificate: the premise takes
/// the form `a + b / |G|^{(p-n)/2} <= 1`.
#[derive(Clone, Debug)]
pub struct GalerkinAnalysis {
    pub inputs: GalerkinInputs,
    pub estimator: HeatSemigroup,
    pub exponential: bool,
    pub horizon: f64,
    /// Unrounded solution of the horizon equation when chosen automatically.
    pub horizon_exact: Option<f64>,
    pub a: f64,
    pub b: f64,
    /// `|G|` needed for the premise: `(b / (1-a))^{2/(p-n)}`.
    pub threshold: f64,
    /// `ℛ(t) <= rough / |G|^{p-n}` for every admissible `G`.
    pub rough: f64,
    pub displayed: DisplayedAnalysis,
    pub premises: Vec<Premise>,
}

impl GalerkinInputs {
    fn check(&self) -> Result<()> {
        if !(self.p >= self.n) {
            return Err(Error::InvalidArgument(format!(
                "need p >= n, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        check_nonneg("datum norm", self.datum_n)?;
        check_nonneg("datum norm", self.datum_p)?;
        check_nonneg("K_n", self.k_n)?;
        check_nonneg("K_p", self.k_p)?;
        self.forcing_n.check()?;
        self.forcing_p.check()
    }

    /// `ℱ_m(t) = ‖f0‖_m + Ξ_{m-1}(t) 𝒰(t)`.
    fn big_f(&self, high: bool, t: f64, est: &HeatSemigroup) -> f64 {
        let (datum, env) = if high {
            (self.datum_p, &self.forcing_p)
        } else {
            (self.datum_n, &self.forcing_n)
        };
        datum + env.bound_at(t) * est.big_u_at(t)
    }

    /// `F_m = ‖f0‖_m + N J_{m-1}`.
    fn exp_f(&self, high: bool, est: &HeatSemigroup) -> Result<f64> {
        let (datum, env) = if high {
            (self.datum_p, &self.forcing_p)
        } else {
            (self.datum_n, &self.forcing_n)
        };
        match env {
            ForcingEnvelope::Exponential(j) => Ok(datum + est.convolution_bound * j),
            ForcingEnvelope::Bound(_) => Err(Error::InvalidArgument(
                "exponential regime needs exponential forcing envelopes".into(),
            )),
        }
    }

    fn k(&self, high: bool) -> f64 {
        if high {
            self.k_p
        } else {
            self.k_n
        }
    }

    /// `4 K_m 𝒰(t) ℱ_m(t)`.
    fn finite_load(&self, high: bool, t: f64, est: &HeatSemigroup) -> f64 {
        4.0 * self.k(high) * est.big_u_at(t) * self.big_f(high, t, est)
    }

    /// `𝒟_n(t) = ℱ_n X(4K_n𝒰ℱ_n)`.
    pub fn distance_finite(&self, t: f64, est: &HeatSemigroup) -> f64 {
        let z = self.finite_load(false, t, est);
        self.big_f(false, t, est) * shape_x(z).unwrap_or(f64::INFINITY)
    }

    /// `𝒴_p(t) = ℱ_p [1 + K_p𝒰ℱ_p X^2(4K_p𝒰ℱ_p)]`.
    pub fn estimator_finite(&self, t: f64, est: &HeatSemigroup) -> f64 {
        let z = self.finite_load(true, t, est);
        let x = shape_x(z).unwrap_or(f64::INFINITY);
        let f = self.big_f(true, t, est);
        f * (1.0 + 0.25 * z * x * x)
    }

    /// `D_n = F_n X(4N K_n F_n)`.
    pub fn distance_exp(&self, est: &HeatSemigroup) -> Result<f64> {
        let f = self.exp_f(false, est)?;
        Ok(f * shape_x(4.0 * est.convolution_bound * self.k_n * f)?)
    }

    /// `Y_p = F_p [1 + N K_p F_p X^2(4N K_p F_p)]`.
    pub fn estimator_exp(&self, est: &HeatSemigroup) -> Result<f64> {
        let f = self.exp_f(true, est)?;
        let z = 4.0 * est.convolution_bound * self.k_p * f;
        let x = shape_x(z)?;
        Ok(f * (1.0 + 0.25 * z * x * x))
    }
}

/// Largest `T` with `4K_m𝒰(T)ℱ_m(T) <= 1` for `m = n, p`, by bisection.
fn auto_horizon(inputs: &GalerkinInputs, est: &HeatSemigroup) -> Result<f64> {
    let load = |t: f64| {
        inputs
            .finite_load(false, t, est)
            .max(inputs.finite_load(true, t, est))
    };
    if load(f64::INFINITY) <= 1.0 {
        return Ok(f64::INFINITY);
    }
    if load(0.0) > 1.0 {
        return Err(Refusal {
            kind: CertificateKind::GalerkinFiniteHorizon,
            premise: Premise::new("max_m 4K_m U(0) F_m(0)", load(0.0), 1.0),
        }
        .into());
    }
    let mut hi = 1.0;
    while load(hi) <= 1.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if load(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Computes the `|G|`-independent quantities of a Galerkin certificate and
/// checks the Galerkin norm premises.
pub fn galerkin_analysis(
    inputs: GalerkinInputs,
    est: &HeatSemigroup,
    request: HorizonRequest,
) -> Result<GalerkinAnalysis> {
    inputs.check()?;
    let exponent = inputs.p - inputs.n;
    let (exponential, horizon, horizon_exact) = match request {
        HorizonRequest::Finite(t) => {
            check_nonneg("horizon", t)?;
            (false, t, None)
        }
        HorizonRequest::Infinite => (false, f64::INFINITY, None),
        HorizonRequest::Auto => {
            let exact = auto_horizon(&inputs, est)?;
            (false, round_down_sig(exact, 3), Some(exact))
        }
        HorizonRequest::Exponential => (true, f64::INFINITY, None),
    };
    let mut premises = Vec::new();
    let (a, b, y) = if exponential {
        let kind = CertificateKind::GalerkinExponential;
        let nn = est.convolution_bound;
        for (high, label) in [(false, "4N K_n F_n"), (true, "4N K_p F_p")] {
            let lhs = 4.0 * nn * inputs.k(high) * inputs.exp_f(high, est)?;
            premises.push(require(kind, Premise::new(label, lhs, 1.0))?);
        }
        let d_n = inputs.distance_exp(est)?;
        let y_p = inputs.estimator_exp(est)?;
        let a = 2.0 * nn * inputs.k_n * d_n;
        let b = 2.0 * (nn * inputs.k_n * y_p).sqrt();
        (a, b, y_p)
    } else {
        let kind = CertificateKind::GalerkinFiniteHorizon;
        for (high, label) in [(false, "4K_n U(T) F_n(T)"), (true, "4K_p U(T) F_p(T)")] {
            premises.push(require(
                kind,
                Premise::new(label, inputs.finite_load(high, horizon, est), 1.0),
            )?);
        }
        let u = est.big_u_at(horizon);
        let d_n = inputs.distance_finite(horizon, est);
        let y_p = inputs.estimator_finite(horizon, est);
        let a = 2.0 * inputs.k_n * u * d_n;
        let b = 2.0 * (inputs.k_n * u * y_p).sqrt();
        (a, b, y_p)
    };
    let kind = if exponential {
        CertificateKind::GalerkinExponential
    } else {
        CertificateKind::GalerkinFiniteHorizon
    };
    if a >= 1.0 {
        return Err(Refusal {
            kind,
            premise: Premise::new("a", a, 1.0),
        }
        .into());
    }
    let power = if exponent > 0.0 {
        2.0 / exponent
    } else {
        f64::INFINITY
    };
    let ratio = b / (1.0 - a);
    let threshold = if exponent > 0.0 {
        ratio.powf(power)
    } else if ratio <= 1.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let rough = 2.0 * y / (1.0 - a);
    let (a_d, b_d) = (round_up_sig(a, 3), round_up_sig(b, 3));
    let threshold_d = if exponent > 0.0 {
        round_up_sig((b_d / (1.0 - a_d)).powf(power), 3)
    } else {
        threshold
    };
    Ok(GalerkinAnalysis {
        inputs,
        estimator: *est,
        exponential,
        horizon,
        horizon_exact,
        a,
        b,
        threshold,
        rough,
        displayed: DisplayedAnalysis {
            a: a_d,
            b: b_d,
            threshold: threshold_d,
            rough: round_up_sig(rough, 3),
        },
        premises,
    })
}

impl GalerkinAnalysis {
    pub fn exponent(&self) -> f64 {
        self.inputs.p - self.inputs.n
    }

    /// Issues the certificate for a Galerkin set of resolution `|G|`.
    pub fn certificate(&self, resolution: f64) -> Result<Certificate> {
        let est = self.estimator;
        let factor = resolution.powf(-self.exponent());
        let lhs = self.a + self.b * factor.sqrt();
        if self.exponential {
            let kind = CertificateKind::GalerkinExponential;
            let mut premises = self.premises.clone();
            premises.push(require(
                kind,
                Premise::new("a + b/|G|^{(p-n)/2}", lhs, 1.0),
            )?);
            let e = self.inputs.estimator_exp(&est)? * factor;
            let d = self.inputs.distance_exp(&est)?;
            exp_with_kind(kind, e, d, self.inputs.k_n, &est, premises)
        } else {
            let kind = CertificateKind::GalerkinFiniteHorizon;
            let mut premises = self.premises.clone();
            premises.push(require(
                kind,
                Premise::new("a + b/|G|^{(p-n)/2}", lhs, 1.0),
            )?);
            let (i1, i2) = (self.inputs.clone(), self.inputs.clone());
            let error: Profile = Arc::new(move |t| i1.estimator_finite(t, &est) * factor);
            let distance: Profile = Arc::new(move |t| i2.distance_finite(t, &est));
            let mut cert =
                monotone_with_kind(kind, error, distance, self.inputs.k_n, &est, self.horizon)?;
            premises.append(&mut cert.premises);
            cert.premises = premises;
            Ok(cert)
        }
    }
}
