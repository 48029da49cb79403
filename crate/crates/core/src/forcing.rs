//! Time-dependent forcing models and the zero-mean frame reduction.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{FourierField, GalerkinSet};
use crate::quad::adaptive_simpson;

const FRAME_TOL: f64 = 1e-10;

/// A divergence-free forcing `t ↦ ξ(t)` with a declared time horizon.
pub trait ForcingModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Forcing is defined on `[0, horizon]`.
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }

    fn eval(&self, t: f64) -> Result<FourierField>;

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::ForcingOutOfRange { t, horizon });
        }
        Ok(())
    }
}

/// `ξ ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroForcing {
    pub dim: usize,
}

impl ForcingModel for ZeroForcing {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64) -> Result<FourierField> {
        self.check_time(t)?;
        Ok(FourierField::zero(self.dim))
    }
}

/// `ξ(t) = e^{-rate t} ξ_0` on `[0, horizon]`; `rate = 0` gives a steady forcing.
#[derive(Clone, Debug)]
pub struct ExponentialForcing {
    pub profile: FourierField,
    pub rate: f64,
    pub horizon: f64,
}

impl ExponentialForcing {
    pub fn steady(profile: FourierField) -> Self {
        Self {
            profile,
            rate: 0.0,
            horizon: f64::INFINITY,
        }
    }

    pub fn decaying(profile: FourierField, rate: f64) -> Self {
        Self {
            profile,
            rate,
            horizon: f64::INFINITY,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

impl ForcingModel for ExponentialForcing {
    fn dim(&self) -> usize {
        self.profile.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn eval(&self, t: f64) -> Result<FourierField> {
        self.check_time(t)?;
        Ok(self.profile.scale((-self.rate * t).exp()))
    }
}

/// Mean and shift paths of the moving frame: `m(t) = m0 + ∫_0^t ⟨η⟩` and
/// `h(t) = ∫_0^t m`.
#[derive(Clone)]
pub struct FrameReduction {
    m0: Vec<f64>,
    eta: Arc<dyn ForcingModel>,
}

impl std::fmt::Debug for FrameReduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameReduction")
            .field("m0", &self.m0)
            .finish_non_exhaustive()
    }
}

impl FrameReduction {
    pub fn new(m0: Vec<f64>, eta: Arc<dyn ForcingModel>) -> Result<Self> {
        if m0.len() != eta.dim() {
            return Err(Error::DimensionMismatch {
                expected: eta.dim(),
                found: m0.len(),
            });
        }
        Ok(Self { m0, eta })
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn initial_mean(&self) -> &[f64] {
        &self.m0
    }

    fn mean_component(&self, i: usize, s: f64) -> f64 {
        // The integrator only calls this inside the validated range.
        self.eta.eval(s).map(|f| f.mean()[i]).unwrap_or(f64::NAN)
    }

    fn integrate<F: Fn(usize, f64) -> f64>(&self, t: f64, f: F) -> Result<Vec<f64>> {
        self.eta.check_time(t)?;
        (0..self.dim())
            .map(|i| {
                let v = adaptive_simpson(|s| f(i, s), 0.0, t, FRAME_TOL);
                if v.is_nan() {
                    return Err(Error::InvalidArgument(format!(
                        "forcing mean not evaluable on [0, {t}]"
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    /// `m(t)`.
    pub fn mean_path(&self, t: f64) -> Result<Vec<f64>> {
        let acc = self.integrate(t, |i, s| self.mean_component(i, s))?;
        Ok(self.m0.iter().zip(acc).map(|(a, b)| a + b).collect())
    }

    /// `h(t) = m0 t + ∫_0^t (t - s) ⟨η(s)⟩ ds`.
    pub fn shift_path(&self, t: f64) -> Result<Vec<f64>> {
        let acc = self.integrate(t, |i, s| (t - s) * self.mean_component(i, s))?;
        Ok(self.m0.iter().zip(acc).map(|(a, b)| a * t + b).collect())
    }

    /// Restores the physical field `ν(t)` from the reduced `φ(t)`: mode `k`
    /// is multiplied by `e^{-i k·h(t)}` and the mean is set to `m(t)`.
    pub fn reconstruct(&self, phi: &FourierField, t: f64) -> Result<FourierField> {
        if phi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: phi.dim(),
            });
        }
        let h = self.shift_path(t)?;
        let m = self.mean_path(t)?;
        let mut out = phi.without_mean().map_modes(|k, c| {
            let phase = Complex64::from_polar(1.0, -k.dot_real(&h));
            c.iter().map(|z| z * phase).collect()
        });
        let scale = (2.0 * PI).powf(self.dim() as f64 / 2.0);
        let zero = crate::field::WaveVector::zero(self.dim());
        out.insert(
            zero,
            m.iter().map(|v| Complex64::new(v * scale, 0.0)).collect(),
        )?;
        Ok(out)
    }
}

/// The reduced forcing `ξ(t)` with coefficients `η_k(t) e^{i k·h(t)}`, `k ≠ 0`.
#[derive(Clone, Debug)]
pub struct ReducedForcing {
    frame: FrameReduction,
}

impl ForcingModel for ReducedForcing {
    fn dim(&self) -> usize {
        self.frame.dim()
    }

    fn horizon(&self) -> f64 {
        self.frame.eta.horizon()
    }

    fn eval(&self, t: f64) -> Result<FourierField> {
        let eta = self.frame.eta.eval(t)?;
        let h = self.frame.shift_path(t)?;
        Ok(eta.without_mean().map_modes(|k, c| {
            let phase = Complex64::from_polar(1.0, k.dot_real(&h));
            c.iter().map(|z| z * phase).collect()
        }))
    }
}

/// Splits `ν0` into its mean `m0` and zero-mean part `f0`, and moves the
/// forcing into the frame translating with the mean velocity.
pub fn reduce_to_zero_mean(
    v0: &FourierField,
    eta: Arc<dyn ForcingModel>,
) -> Result<(FourierField, ReducedForcing, FrameReduction)> {
    if v0.dim() != eta.dim() {
        return Err(Error::DimensionMismatch {
            expected: v0.dim(),
            found: eta.dim(),
        });
    }
    let frame = FrameReduction::new(v0.mean(), eta)?;
    let xi = ReducedForcing {
        frame: frame.clone(),
    };
    Ok((v0.without_mean(), xi, frame))
}

/// `𝒫(f, t) = -𝔏(f·∂f) + ξ(t)`, optionally restricted to `support`. The
/// mean mode is dropped; it vanishes identically for solenoidal `f`.
pub fn nonlinearity(
    f: &FourierField,
    t: f64,
    forcing: &dyn ForcingModel,
    support: Option<&GalerkinSet>,
) -> Result<FourierField> {
    let adv = FourierField::advect(f, f, support)?.without_mean();
    let mut xi = forcing.eval(t)?.without_mean();
    if let Some(set) = support {
        xi = xi.galerkin_project(set);
    }
    xi.add_scaled(&adv.leray_project(), -1.0)
}
