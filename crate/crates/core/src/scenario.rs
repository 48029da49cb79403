//! Scenario files, the certification pipeline, Galerkin runs with a
//! reference-resolution containment check, and the table of published values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{
    default_constant, kernel_bracket, sigma_bracket, BilinearConstant, Lattice,
};
use crate::control::{
    galerkin_analysis, zero_certificate, zero_thresholds, Certificate, ControlProblem,
    ForcingEnvelope, GalerkinAnalysis, GalerkinInputs, HorizonRequest, Refusal, Regime,
};
use crate::error::{Error, Result};
use crate::field::{random_solenoidal_field, FourierField, GalerkinSet, WaveVector};
use crate::forcing::{ExponentialForcing, ForcingModel, ZeroForcing};
use crate::galerkin::{integrate, GalerkinSystem, IntegratorOptions};
use crate::grid::{
    grid_coefficients, solve_control_grid, GridProblem, GridSolution, GridStatus, MemoryMode,
    StepPolicy, TimeGrid,
};
use crate::semigroup::HeatSemigroup;

/// Initial datum: bounds on its norms, or an explicit field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatumSpec {
    /// `‖f0‖_n` and `‖f0‖_p`; runs synthesise a field within these bounds.
    Norms {
        norm_n: f64,
        norm_p: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_datum_box")]
        box_radius: u32,
    },
    File {
        path: PathBuf,
    },
}

fn default_datum_box() -> u32 {
    2
}

/// Forcing description.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    None,
    /// Constant bounds `Ξ_{n-1}`, `Ξ_{p-1}`.
    ConstantEnvelope { xi_n: f64, xi_p: f64 },
    /// Bounds `J_{n-1} e^{-2t}`, `J_{p-1} e^{-2t}`.
    ExponentialEnvelope { j_n: f64, j_p: f64 },
    /// `ξ(t) = e^{-rate t} ξ_0` with `ξ_0` read from a field file.
    Explicit {
        path: PathBuf,
        #[serde(default)]
        rate: f64,
    },
}

/// Galerkin set: a cube radius or an explicit symmetric list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GalerkinSpec {
    Radius { radius: u32 },
    Modes { modes: Vec<Vec<i32>> },
}

/// Horizon: a number, `"infinity"` or `"auto"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonSpec {
    Finite(f64),
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FiniteHorizon,
    Exponential,
}

/// Hand-entered constants; only honoured with `allow: true`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverride {
    pub k_n: f64,
    pub k_p: f64,
    #[serde(default)]
    pub allow: bool,
}

/// A certification problem as stored in a JSON scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub d: usize,
    pub n: f64,
    pub p: f64,
    pub datum: DatumSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub galerkin: Option<GalerkinSpec>,
    pub horizon: HorizonSpec,
    pub mode: Mode,
    #[serde(default)]
    pub constants: Option<ConstantsOverride>,
}

fn json_error(origin: &str, e: &serde_json::Error) -> Error {
    Error::Parse(format!(
        "{origin}: line {}, column {}: {e}",
        e.line(),
        e.column()
    ))
}

impl Scenario {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| json_error(origin, &e))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario; relative field paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatumSpec::File { path: p } = &mut s.datum {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let ForcingSpec::Explicit { path: p, .. } = &mut s.forcing {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parse(m));
        if self.d < 2 {
            return bad(format!(
                "field 'd': dimension must be at least 2, got {}",
                self.d
            ));
        }
        if !(self.n > self.d as f64 / 2.0) {
            return bad(format!("field 'n': need n > d/2, got n = {}", self.n));
        }
        if !(self.p >= self.n) {
            return bad(format!("field 'p': need p >= n, got p = {}", self.p));
        }
        if let DatumSpec::Norms { norm_n, norm_p, .. } = self.datum {
            if !(norm_n >= 0.0 && norm_p >= 0.0) {
                return bad("field 'datum': norms must be nonnegative".into());
            }
        }
        let nonneg = match &self.forcing {
            ForcingSpec::None | ForcingSpec::Explicit { .. } => true,
            ForcingSpec::ConstantEnvelope { xi_n, xi_p } => *xi_n >= 0.0 && *xi_p >= 0.0,
            ForcingSpec::ExponentialEnvelope { j_n, j_p } => *j_n >= 0.0 && *j_p >= 0.0,
        };
        if !nonneg {
            return bad("field 'forcing': envelopes must be nonnegative".into());
        }
        self.horizon_request()?;
        if let Some(c) = self.constants {
            if !c.allow {
                return bad(
                    "field 'constants': hand-entered constants need \"allow\": true".into(),
                );
            }
        }
        Ok(())
    }

    pub fn horizon_request(&self) -> Result<HorizonRequest> {
        let finite = match &self.horizon {
            HorizonSpec::Finite(t) if *t > 0.0 => Ok(HorizonRequest::Finite(*t)),
            HorizonSpec::Finite(t) => Err(Error::Parse(format!(
                "field 'horizon': must be positive, got {t}"
            ))),
            HorizonSpec::Named(s) if s == "infinity" => Ok(HorizonRequest::Infinite),
            HorizonSpec::Named(s) if s == "auto" => Ok(HorizonRequest::Auto),
            HorizonSpec::Named(s) => Err(Error::Parse(format!(
                "field 'horizon': expected a number, \"infinity\" or \"auto\", got \"{s}\""
            ))),
        }?;
        Ok(if self.mode == Mode::Exponential {
            HorizonRequest::Exponential
        } else {
            finite
        })
    }

    /// Explicit Galerkin set, if the scenario names one.
    pub fn galerkin_set(&self) -> Result<Option<GalerkinSet>> {
        match &self.galerkin {
            None => Ok(None),
            Some(GalerkinSpec::Radius { radius }) => Ok(Some(GalerkinSet::cube(self.d, *radius))),
            Some(GalerkinSpec::Modes { modes }) => {
                GalerkinSet::new(self.d, modes.iter().map(|m| WaveVector::new(m.clone()))).map(Some)
            }
        }
    }

    fn explicit_forcing(&self) -> Result<Option<(FourierField, f64)>> {
        match &self.forcing {
            ForcingSpec::Explicit { path, rate } => {
                let f =
                    FourierField::read_from(std::io::BufReader::new(std::fs::File::open(path)?))?;
                if f.dim() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        found: f.dim(),
                    });
                }
                Ok(Some((f.without_mean(), *rate)))
            }
            _ => Ok(None),
        }
    }

    /// Envelopes in `H^{n-1}` and `H^{p-1}`.
    pub fn envelopes(&self) -> Result<(ForcingEnvelope, ForcingEnvelope)> {
        Ok(match &self.forcing {
            ForcingSpec::None => (ForcingEnvelope::none(), ForcingEnvelope::none()),
            ForcingSpec::ConstantEnvelope { xi_n, xi_p } => (
                ForcingEnvelope::constant(*xi_n),
                ForcingEnvelope::constant(*xi_p),
            ),
            ForcingSpec::ExponentialEnvelope { j_n, j_p } => (
                ForcingEnvelope::Exponential(*j_n),
                ForcingEnvelope::Exponential(*j_p),
            ),
            ForcingSpec::Explicit { .. } => {
                let (f, rate) = self.explicit_forcing()?.expect("explicit forcing");
                let (a, b) = (f.sobolev_norm(self.n - 1.0), f.sobolev_norm(self.p - 1.0));
                if rate >= 2.0 {
                    (
                        ForcingEnvelope::Exponential(a),
                        ForcingEnvelope::Exponential(b),
                    )
                } else {
                    (ForcingEnvelope::constant(a), ForcingEnvelope::constant(b))
                }
            }
        })
    }

    /// The forcing model used by runs; envelope-only scenarios are run unforced.
    pub fn forcing_model(&self) -> Result<Arc<dyn ForcingModel>> {
        Ok(match self.explicit_forcing()? {
            Some((f, rate)) => Arc::new(ExponentialForcing::decaying(f, rate)),
            None => Arc::new(ZeroForcing { dim: self.d }),
        })
    }

    /// The zero-mean datum: read from file, or synthesised in the box with
    /// `‖f0‖_n <= norm_n` and `‖f0‖_p <= norm_p`.
    pub fn datum_field(&self) -> Result<FourierField> {
        match &self.datum {
            DatumSpec::File { path } => {
                let f =
                    FourierField::read_from(std::io::BufReader::new(std::fs::File::open(path)?))?;
                if f.dim() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        found: f.dim(),
                    });
                }
                Ok(f.without_mean())
            }
            DatumSpec::Norms {
                norm_n,
                norm_p,
                seed,
                box_radius,
            } => {
                if *norm_p == 0.0 || *norm_n == 0.0 {
                    return Ok(FourierField::zero(self.d));
                }
                let f = random_solenoidal_field(*seed, self.d, self.p, *box_radius, *norm_p)?;
                let low = f.sobolev_norm(self.n);
                Ok(if low > *norm_n {
                    f.scale(norm_n / low)
                } else {
                    f
                })
            }
        }
    }

    /// `(‖f0‖_n, ‖f0‖_p)` used by the certificates.
    pub fn datum_norms(&self) -> Result<(f64, f64)> {
        match &self.datum {
            DatumSpec::Norms { norm_n, norm_p, .. } => Ok((*norm_n, *norm_p)),
            DatumSpec::File { .. } => {
                let f = self.datum_field()?;
                Ok((f.sobolev_norm(self.n), f.sobolev_norm(self.p)))
            }
        }
    }

    /// `K_n`, `K_p` with their evidence, unless overridden.
    pub fn constants(&self) -> Result<(f64, f64, Vec<BilinearConstant>)> {
        if let Some(c) = self.constants.filter(|c| c.allow) {
            return Ok((c.k_n, c.k_p, Vec::new()));
        }
        let kn = default_constant(self.n, self.d, Lattice::Punctured)?;
        let kp = if self.p == self.n {
            kn.clone()
        } else {
            default_constant(self.p, self.d, Lattice::Punctured)?
        };
        Ok((kn.value, kp.value, vec![kn, kp]))
    }

    pub fn galerkin_inputs(&self) -> Result<GalerkinInputs> {
        let (datum_n, datum_p) = self.datum_norms()?;
        let (forcing_n, forcing_p) = self.envelopes()?;
        let (k_n, k_p, _) = self.constants()?;
        Ok(GalerkinInputs {
            n: self.n,
            p: self.p,
            datum_n,
            datum_p,
            forcing_n,
            forcing_p,
            k_n,
            k_p,
        })
    }
}

/// The three published Galerkin scenarios on `T^3` with `n = 2`, `p = 4`.
pub fn published_scenarios() -> Vec<Scenario> {
    let base =
        |name: &str, nn: f64, np: f64, forcing: ForcingSpec, horizon: &str, mode: Mode| Scenario {
            name: Some(name.into()),
            d: 3,
            n: 2.0,
            p: 4.0,
            datum: DatumSpec::Norms {
                norm_n: nn,
                norm_p: np,
                seed: 1,
                box_radius: 2,
            },
            forcing,
            galerkin: None,
            horizon: HorizonSpec::Named(horizon.into()),
            mode,
            constants: None,
        };
    let env = ForcingSpec::ConstantEnvelope {
        xi_n: 0.025,
        xi_p: 0.25,
    };
    vec![
        base(
            "scenario-1",
            0.15,
            1.50,
            env.clone(),
            "infinity",
            Mode::FiniteHorizon,
        ),
        base("scenario-2", 0.20, 2.00, env, "auto", Mode::FiniteHorizon),
        base(
            "scenario-3",
            0.20,
            2.00,
            ForcingSpec::None,
            "infinity",
            Mode::Exponential,
        ),
    ]
}

/// Outcome of `certify`.
#[derive(Clone, Debug)]
pub struct CertifyReport {
    pub scenario: Scenario,
    pub k_n: f64,
    pub k_p: f64,
    pub evidence: Vec<BilinearConstant>,
    pub zero: std::result::Result<Certificate, Refusal>,
    pub analysis: std::result::Result<GalerkinAnalysis, Refusal>,
    /// Certificate for the scenario's own Galerkin set, if one was given.
    pub galerkin: Option<std::result::Result<Certificate, Refusal>>,
    /// Numerical fallback when the analytic zero-solution certificate is refused.
    pub grid: Option<GridSolution>,
}

fn split_refusal<T>(r: Result<T>) -> Result<std::result::Result<T, Refusal>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(Error::Refused(r)) => Ok(Err(r)),
        Err(e) => Err(e),
    }
}

/// Runs the certificate chain: zero solution, Galerkin analysis and, when
/// the zero-solution certificate is refused, the numerical grid solver.
pub fn certify(scenario: &Scenario) -> Result<CertifyReport> {
    scenario.validate()?;
    let est = HeatSemigroup::navier_stokes();
    let (k_n, k_p, evidence) = scenario.constants()?;
    let inputs = scenario.galerkin_inputs()?;
    let request = scenario.horizon_request()?;
    let analysis = split_refusal(galerkin_analysis(inputs.clone(), &est, request))?;
    let regime = match (request, &analysis) {
        (HorizonRequest::Exponential, _) => Regime::Exponential,
        (HorizonRequest::Finite(t), _) => Regime::FiniteHorizon(t),
        (HorizonRequest::Auto, Ok(a)) => Regime::FiniteHorizon(a.horizon),
        _ => Regime::FiniteHorizon(f64::INFINITY),
    };
    let zero = split_refusal(zero_certificate(
        inputs.datum_n,
        &inputs.forcing_n,
        k_n,
        &est,
        regime,
    ))?;
    let galerkin = match (scenario.galerkin_set()?, &analysis) {
        (Some(set), Ok(a)) => Some(split_refusal(a.certificate(set.resolution()))?),
        _ => None,
    };
    let grid = if zero.is_err() {
        let span = match regime {
            Regime::FiniteHorizon(t) if t.is_finite() => t.min(10.0),
            _ => 10.0,
        };
        Some(zero_solution_grid(
            inputs.datum_n,
            &inputs.forcing_n,
            k_n,
            &est,
            span,
        )?)
    } else {
        None
    };
    Ok(CertifyReport {
        scenario: scenario.clone(),
        k_n,
        k_p,
        evidence,
        zero,
        analysis,
        galerkin,
        grid,
    })
}

/// Grid solution of the zero-solution problem `ℰ = ‖f0‖ + Ξ𝒰`, `𝒟 = 0`.
pub fn zero_solution_grid(
    datum_norm: f64,
    forcing: &ForcingEnvelope,
    k: f64,
    est: &HeatSemigroup,
    span: f64,
) -> Result<GridSolution> {
    let step = est.breakpoint / 5.0;
    let cells = ((span / step).ceil() as usize).max(1);
    let grid = TimeGrid::uniform(step, cells)?;
    let coeffs = grid_coefficients(&grid, est)?;
    let env = forcing.clone();
    let est_c = *est;
    let problem = ControlProblem {
        error: Arc::new(move |t| datum_norm + env.bound_at(t) * est_c.big_u_at(t)),
        distance: Arc::new(|_| 0.0),
        k,
    };
    let discrete = GridProblem::from_profiles(&problem, &grid);
    solve_control_grid(
        &discrete,
        &coeffs,
        MemoryMode::Reduced,
        StepPolicy::Lookahead,
    )
}

/// Three significant digits, keeping trailing zeros.
fn fmt_sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (2 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

fn fmt_horizon(t: f64) -> String {
    if t.is_infinite() {
        "infinity".into()
    } else {
        format!("{t}")
    }
}

fn render_certificate(out: &mut String, c: &Certificate) {
    writeln!(out, "  kind: {}", c.kind).ok();
    writeln!(out, "  horizon: {}", fmt_horizon(c.horizon)).ok();
    for p in &c.premises {
        writeln!(out, "  premise: {} = {:.6} <= {}", p.label, p.lhs, p.rhs).ok();
    }
    let span = if c.horizon.is_finite() {
        c.horizon
    } else {
        5.0
    };
    let samples: Vec<String> = c
        .samples(span, 6)
        .iter()
        .map(|(t, r)| format!("{t:.3}:{r:.4e}"))
        .collect();
    writeln!(out, "  tube samples: {}", samples.join(" ")).ok();
}

impl CertifyReport {
    /// Whether any certificate was issued; with an explicit Galerkin set
    /// that certificate is the one that counts.
    pub fn certified(&self) -> bool {
        match &self.galerkin {
            Some(g) => g.is_ok(),
            None => self.analysis.is_ok() || self.zero.is_ok(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let s = &self.scenario;
        writeln!(out, "scenario: {}", s.name.as_deref().unwrap_or("unnamed")).ok();
        writeln!(
            out,
            "dimension d = {}, indices n = {}, p = {}",
            s.d, s.n, s.p
        )
        .ok();
        writeln!(out, "constants: K_n = {}, K_p = {}", self.k_n, self.k_p).ok();
        if self.evidence.is_empty() {
            writeln!(out, "  provenance: hand-entered override").ok();
        }
        for c in &self.evidence {
            writeln!(
                out,
                "  provenance: n = {} sup over box |k_i| <= {} in [{:.6}, {:.6}] at {:?}, Sigma_n in [{:.6}, {:.6}] (evidence-based sup)",
                c.n, c.policy.search_box, c.sup_box.lo, c.sup_box.hi, c.argsup, c.sigma.lo, c.sigma.hi
            )
            .ok();
        }
        let th = zero_thresholds(self.k_n, &HeatSemigroup::navier_stokes());
        writeln!(
            out,
            "zero-solution thresholds: ||f0||_n + {} Xi < {}; exponential F <= {}",
            th.u_infinity, th.finite_horizon, th.exponential
        )
        .ok();
        writeln!(out, "zero approximate solution:").ok();
        match &self.zero {
            Ok(c) => render_certificate(&mut out, c),
            Err(r) => {
                writeln!(out, "  refused: {r}").ok();
            }
        }
        if let Some(g) = &self.grid {
            match g.status {
                GridStatus::Completed => writeln!(
                    out,
                    "numerical grid fallback: completed, certified on [0, {}]",
                    g.horizon()
                ),
                GridStatus::Stalled { step } => {
                    writeln!(
                        out,
                        "numerical grid fallback: stalled at step {step}, certified on [0, {})",
                        g.horizon()
                    )
                }
            }
            .ok();
        }
        writeln!(out, "Galerkin analysis:").ok();
        match &self.analysis {
            Ok(a) => {
                let e = a.exponent();
                let gpow = if (e / 2.0 - 1.0).abs() < 1e-12 {
                    "|G|".to_string()
                } else {
                    format!("|G|^{}", e / 2.0)
                };
                let dp = &a.displayed;
                if let Some(exact) = a.horizon_exact {
                    writeln!(
                        out,
                        "  T = {} (solves the horizon equation at {:.6})",
                        fmt_horizon(a.horizon),
                        exact
                    )
                    .ok();
                } else {
                    writeln!(out, "  T = {}", fmt_horizon(a.horizon)).ok();
                }
                for p in &a.premises {
                    writeln!(out, "  premise: {} = {:.6} <= {}", p.label, p.lhs, p.rhs).ok();
                }
                writeln!(
                    out,
                    "  premise: {} + {}/{} <= 1  (a = {:.6}, b = {:.6})",
                    dp.a, dp.b, gpow, a.a, a.b
                )
                .ok();
                writeln!(
                    out,
                    "  admissible for |G| >= {:.2}  (exact {:.6})",
                    dp.threshold, a.threshold
                )
                .ok();
                let decay = if a.exponential { "*e^(-t)" } else { "" };
                writeln!(
                    out,
                    "  tube <= {}{}/|G|^{}  (exact {:.6})",
                    fmt_sig3(dp.rough),
                    decay,
                    e,
                    a.rough
                )
                .ok();
            }
            Err(r) => {
                writeln!(out, "  refused: {r}").ok();
            }
        }
        if let Some(g) = &self.galerkin {
            writeln!(out, "Galerkin certificate for the given set:").ok();
            match g {
                Ok(c) => render_certificate(&mut out, c),
                Err(r) => {
                    writeln!(out, "  refused: {r}").ok();
                }
            }
        }
        writeln!(
            out,
            "status: {}",
            if self.certified() {
                "certified"
            } else {
                "refused"
            }
        )
        .ok();
        out
    }
}

/// Settings for [`run`].
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub g_radius: u32,
    pub ref_radius: Option<u32>,
    pub t_end: f64,
    pub samples: usize,
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            g_radius: 2,
            ref_radius: Some(4),
            t_end: 2.0,
            samples: 20,
            force: false,
        }
    }
}

/// One row of the containment table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContainmentSample {
    pub t: f64,
    pub difference: f64,
    pub tube: f64,
    pub reference_tube: f64,
    pub margin: f64,
}

/// Outcome of [`run`].
#[derive(Debug)]
pub struct RunReport {
    pub admissible: bool,
    pub certificate: Option<Certificate>,
    pub trajectory: crate::galerkin::Trajectory,
    pub reference: Option<crate::galerkin::Trajectory>,
    pub containment: Vec<ContainmentSample>,
    /// `min_t [tube(t) + reference tube(t) - ‖φ^{G'} - φ^G‖_n(t)]`.
    pub margin: Option<f64>,
}

/// Integrates the scenario on the cube of radius `g_radius` and optionally
/// on a reference cube, and compares the difference with the certified tubes.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    scenario.validate()?;
    let est = HeatSemigroup::navier_stokes();
    let datum = scenario.datum_field()?;
    let forcing = scenario.forcing_model()?;
    let set = GalerkinSet::cube(scenario.d, opts.g_radius);
    let analysis = split_refusal(galerkin_analysis(
        scenario.galerkin_inputs()?,
        &est,
        scenario.horizon_request()?,
    ))?;
    let cert_for = |radius: u32| -> Result<Option<Certificate>> {
        match &analysis {
            Ok(a) => Ok(split_refusal(
                a.certificate(GalerkinSet::cube(scenario.d, radius).resolution()),
            )?
            .ok()),
            Err(_) => Ok(None),
        }
    };
    let certificate = cert_for(opts.g_radius)?;
    let admissible = certificate.is_some();
    if !admissible && !opts.force {
        let why = match &analysis {
            Err(r) => r.to_string(),
            Ok(a) => format!(
                "|G| = {:.4} is below the threshold {:.4}",
                set.resolution(),
                a.threshold
            ),
        };
        return Err(Error::NoCertificate(format!(
            "scenario not admissible ({why}); use --force to run anyway"
        )));
    }
    let t_end = match &certificate {
        Some(c) => opts.t_end.min(c.horizon),
        None => opts.t_end,
    };
    let int_opts = IntegratorOptions::default();
    let system = GalerkinSystem::new(set, &datum, forcing.clone())?;
    let trajectory = integrate(&system, t_end, &int_opts)?;
    let (reference, containment, margin) = match opts.ref_radius {
        Some(r) => {
            let ref_system =
                GalerkinSystem::new(GalerkinSet::cube(scenario.d, r), &datum, forcing)?;
            let reference = integrate(&ref_system, t_end, &int_opts)?;
            let ref_cert = cert_for(r)?;
            let mut rows = Vec::with_capacity(opts.samples);
            for i in 0..opts.samples {
                let t = t_end * i as f64 / (opts.samples.max(2) - 1) as f64;
                let diff = reference
                    .at(t)?
                    .sub(&trajectory.at(t)?)?
                    .sobolev_norm(scenario.n);
                let tube = certificate.as_ref().map_or(f64::NAN, |c| c.tube.eval(t));
                let reference_tube = ref_cert.as_ref().map_or(f64::NAN, |c| c.tube.eval(t));
                rows.push(ContainmentSample {
                    t,
                    difference: diff,
                    tube,
                    reference_tube,
                    margin: tube + reference_tube - diff,
                });
            }
            let margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
            (Some(reference), rows, margin.is_finite().then_some(margin))
        }
        None => (None, Vec::new(), None),
    };
    Ok(RunReport {
        admissible,
        certificate,
        trajectory,
        reference,
        containment,
        margin,
    })
}

impl RunReport {
    pub fn write_containment_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "difference", "tube", "reference_tube", "margin"])?;
        for r in &self.containment {
            out.write_record(
                [r.t, r.difference, r.tube, r.reference_tube, r.margin].map(|v| format!("{v:e}")),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One published value and its reproduction.
#[derive(Clone, Debug, Serialize)]
pub struct GoldenRow {
    pub label: String,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn row(label: &str, expected: f64, computed: f64, tolerance: f64) -> GoldenRow {
    GoldenRow {
        label: label.into(),
        expected,
        computed,
        tolerance,
        pass: (computed - expected).abs() <= tolerance,
    }
}

/// Recomputes every published constant and scenario value.
pub fn reproduce_published() -> Result<Vec<GoldenRow>> {
    let est = HeatSemigroup::navier_stokes();
    let mut rows = Vec::new();
    let k2 = default_constant(2.0, 3, Lattice::Punctured)?;
    let k4 = default_constant(4.0, 3, Lattice::Punctured)?;
    rows.push(row("K_2", 0.20, k2.value, 1e-12));
    rows.push(row("K_4", 0.067, k4.value, 1e-12));
    let sigma = sigma_bracket(2.0, 3, Lattice::Punctured, 250.0)?;
    rows.push(row("Sigma_2 lower (lambda = 250)", 0.03607, sigma.lo, 5e-6));
    rows.push(row("Sigma_2 upper (lambda = 250)", 0.03934, sigma.hi, 5e-6));
    let kern = kernel_bracket(
        &WaveVector::new(vec![3, 0, 0]),
        4.0,
        Lattice::Punctured,
        10.0,
    )?;
    rows.push(row("K_4 kernel at (3,0,0) upper", 0.004383, kern.hi, 1e-6));
    rows.push(row("U(infinity)", 1.8725, est.big_u(f64::INFINITY)?, 5e-4));
    let conv = est.check_convolution_bound();
    rows.push(row("sup N(t)", std::f64::consts::SQRT_2, conv.sup, 1e-3));
    rows.push(GoldenRow {
        label: "tail constant C (at most 0.6)".into(),
        expected: 0.6,
        computed: conv.tail_constant,
        tolerance: 0.0,
        pass: conv.tail_constant <= 0.6,
    });
    let th2 = zero_thresholds(k2.value, &est);
    let th4 = zero_thresholds(k4.value, &est);
    rows.push(row("U(infinity) rounded up", 1.88, th2.u_infinity, 1e-12));
    rows.push(row(
        "finite-horizon threshold n = 2",
        0.667,
        th2.finite_horizon,
        1e-12,
    ));
    rows.push(row(
        "finite-horizon threshold n = 4",
        1.99,
        th4.finite_horizon,
        1e-12,
    ));
    rows.push(row(
        "exponential threshold F_2",
        0.877,
        th2.exponential,
        1e-12,
    ));
    rows.push(row(
        "exponential threshold F_4",
        2.63,
        th4.exponential,
        1e-12,
    ));
    let scenarios = published_scenarios();
    let expected = [
        (None, 0.161, 2.31, 2.76, 8.71, 0.05),
        (Some(1.51), 0.163, 2.41, 2.88, 11.1, 0.1),
        (None, 0.121, 1.75, 2.00, 6.10, 0.05),
    ];
    for (i, (s, (t, a, b, thr, rough, rough_tol))) in scenarios.iter().zip(expected).enumerate() {
        let label = |what: &str| format!("scenario {} {what}", i + 1);
        let an = galerkin_analysis(s.galerkin_inputs()?, &est, s.horizon_request()?)?;
        if let Some(t) = t {
            rows.push(row(&label("horizon T"), t, an.horizon, 0.01));
        }
        rows.push(row(&label("coefficient a"), a, an.displayed.a, 0.005));
        rows.push(row(&label("coefficient b"), b, an.displayed.b, 0.005));
        rows.push(row(
            &label("threshold |G|"),
            thr,
            an.displayed.threshold,
            0.01,
        ));
        rows.push(row(
            &label("rough tube coefficient"),
            rough,
            an.displayed.rough,
            rough_tol,
        ));
    }
    Ok(rows)
}
