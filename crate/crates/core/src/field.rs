//! Fourier-side representation of real vector fields on the torus `T^d`.
//!
//! A field is a finite collection of complex `d`-vectors indexed by integer
//! wavevectors. Only one representative of every `±k` pair is stored (the
//! one whose first nonzero component is positive); the partner coefficient is
//! the complex conjugate and is synthesised on read, so every field is real
//! by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative tolerance for the divergence-free check.
pub const DIV_TOLERANCE: f64 = 1e-10;

/// A complex `d`-vector attached to one wavevector.
pub type Coeff = Vec<Complex64>;

/// Integer wavevector `k ∈ Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveVector(Vec<i32>);

impl WaveVector {
    pub fn new(components: Vec<i32>) -> Self {
        Self(components)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[i32] {
        &self.0
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// True when the first nonzero component is positive.
    pub fn is_representative(&self) -> bool {
        self.0.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
    }

    /// The Sobolev weight `(1 + |k|^2)^n`.
    pub fn weight(&self, n: f64) -> f64 {
        (1.0 + self.norm_sq() as f64).powf(n)
    }

    /// Bilinear (unconjugated) product `k · c`.
    pub fn dot(&self, c: &[Complex64]) -> Complex64 {
        self.0.iter().zip(c).map(|(&k, &z)| z * k as f64).sum()
    }

    /// `k · x` for a real vector `x`.
    pub fn dot_real(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum()
    }
}

impl std::ops::Neg for &WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector(self.0.iter().map(|c| -c).collect())
    }
}

impl std::ops::Add for &WaveVector {
    type Output = WaveVector;
    fn add(self, rhs: &WaveVector) -> WaveVector {
        WaveVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl std::ops::Sub for &WaveVector {
    type Output = WaveVector;
    fn sub(self, rhs: &WaveVector) -> WaveVector {
        WaveVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl std::fmt::Display for WaveVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

fn conj(c: &[Complex64]) -> Coeff {
    c.iter().map(|z| z.conj()).collect()
}

fn norm_sq(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum()
}

/// Normalisation `(2π)^{-d/2}` of the Fourier basis.
pub fn basis_normalisation(dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0)
}

/// A real vector field on `T^d` given by finitely many Fourier modes.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    dim: usize,
    modes: BTreeMap<WaveVector, Coeff>,
}

impl FourierField {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            modes: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Sets the coefficient at `k`; the coefficient at `-k` becomes its
    /// conjugate. At `k = 0` only the real part is kept.
    pub fn insert(&mut self, k: WaveVector, c: Coeff) -> Result<()> {
        self.check_dim(k.dim())?;
        self.check_dim(c.len())?;
        if k.is_zero() {
            self.modes
                .insert(k, c.iter().map(|z| Complex64::new(z.re, 0.0)).collect());
        } else if k.is_representative() {
            self.modes.insert(k, c);
        } else {
            self.modes.insert(-&k, conj(&c));
        }
        Ok(())
    }

    /// Adds `c` to the coefficient at `k` (and its conjugate at `-k`).
    pub fn accumulate(&mut self, k: &WaveVector, c: &[Complex64]) -> Result<()> {
        self.check_dim(k.dim())?;
        let (key, val) = if k.is_zero() {
            (
                k.clone(),
                c.iter()
                    .map(|z| Complex64::new(z.re, 0.0))
                    .collect::<Coeff>(),
            )
        } else if k.is_representative() {
            (k.clone(), c.to_vec())
        } else {
            (-k, conj(c))
        };
        let slot = self
            .modes
            .entry(key)
            .or_insert_with(|| vec![Complex64::new(0.0, 0.0); self.dim]);
        for (s, v) in slot.iter_mut().zip(val) {
            *s += v;
        }
        Ok(())
    }

    pub fn remove(&mut self, k: &WaveVector) {
        if k.is_zero() || k.is_representative() {
            self.modes.remove(k);
        } else {
            self.modes.remove(&-k);
        }
    }

    /// Coefficient at `k`, synthesised from the stored partner if needed.
    pub fn get(&self, k: &WaveVector) -> Option<Coeff> {
        if k.is_zero() || k.is_representative() {
            self.modes.get(k).cloned()
        } else {
            self.modes.get(&-k).map(|c| conj(c))
        }
    }

    /// Physically stored modes: one per `±k` pair, plus possibly `k = 0`.
    pub fn stored(&self) -> impl Iterator<Item = (&WaveVector, &Coeff)> {
        self.modes.iter()
    }

    /// Every mode including synthesised conjugate partners.
    pub fn all_modes(&self) -> Vec<(WaveVector, Coeff)> {
        let mut out = Vec::with_capacity(2 * self.modes.len());
        for (k, c) in &self.modes {
            out.push((k.clone(), c.clone()));
            if !k.is_zero() {
                out.push((-k, conj(c)));
            }
        }
        out
    }

    /// Number of modes counting both members of each `±k` pair.
    pub fn mode_count(&self) -> usize {
        self.modes
            .keys()
            .map(|k| if k.is_zero() { 1 } else { 2 })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Sobolev norm `‖f‖_n = sqrt(Σ_k (1+|k|^2)^n |f_k|^2)`.
    pub fn sobolev_norm(&self, n: f64) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| {
                let mult = if k.is_zero() { 1.0 } else { 2.0 };
                mult * k.weight(n) * norm_sq(c)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// The spatial mean `(2π)^{-d/2} f_0`.
    pub fn mean(&self) -> Vec<f64> {
        let s = basis_normalisation(self.dim);
        match self.modes.get(&WaveVector::zero(self.dim)) {
            Some(c) => c.iter().map(|z| s * z.re).collect(),
            None => vec![0.0; self.dim],
        }
    }

    /// Largest `|k · f_k|` over the stored modes.
    pub fn max_div_defect(&self) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| k.dot(c).norm())
            .fold(0.0, f64::max)
    }

    /// Mean vector and maximal divergence defect.
    pub fn mean_and_divergence(&self) -> (Vec<f64>, f64) {
        (self.mean(), self.max_div_defect())
    }

    pub fn is_zero_mean(&self) -> bool {
        !self.modes.contains_key(&WaveVector::zero(self.dim))
    }

    /// Divergence defect within [`DIV_TOLERANCE`] relative to `max |k||f_k|`.
    pub fn is_solenoidal(&self) -> bool {
        let scale = self
            .modes
            .iter()
            .map(|(k, c)| k.norm() * norm_sq(c).sqrt())
            .fold(0.0, f64::max);
        self.max_div_defect() <= DIV_TOLERANCE * scale.max(f64::MIN_POSITIVE)
    }

    /// Leray projection: `c - (k·c) k / |k|^2` on each mode, identity at `k = 0`.
    pub fn leray_project(&self) -> FourierField {
        let modes = self
            .modes
            .iter()
            .map(|(k, c)| {
                if k.is_zero() {
                    return (k.clone(), c.clone());
                }
                let kc = k.dot(c) / k.norm_sq() as f64;
                let out = c
                    .iter()
                    .zip(k.components())
                    .map(|(&z, &ki)| z - kc * ki as f64)
                    .collect();
                (k.clone(), out)
            })
            .collect();
        FourierField {
            dim: self.dim,
            modes,
        }
    }

    /// Keeps only the modes belonging to `set` (the mean mode is dropped).
    pub fn galerkin_project(&self, set: &GalerkinSet) -> FourierField {
        let modes = self
            .modes
            .iter()
            .filter(|(k, _)| set.contains(k))
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        FourierField {
            dim: self.dim,
            modes,
        }
    }

    /// Drops the mean mode.
    pub fn without_mean(&self) -> FourierField {
        let mut out = self.clone();
        out.modes.remove(&WaveVector::zero(self.dim));
        out
    }

    /// Applies `e^{tΔ}`: mode `k` multiplied by `e^{-|k|^2 t}`.
    pub fn heat_flow(&self, t: f64) -> FourierField {
        self.map_modes(|k, c| {
            let f = (-(k.norm_sq() as f64) * t).exp();
            c.iter().map(|z| z * f).collect()
        })
    }

    /// Applies a per-mode map to every stored coefficient. The map must
    /// commute with conjugation for the result to stay real.
    pub fn map_modes<F: Fn(&WaveVector, &Coeff) -> Coeff>(&self, f: F) -> FourierField {
        let modes = self
            .modes
            .iter()
            .map(|(k, c)| (k.clone(), f(k, c)))
            .collect();
        FourierField {
            dim: self.dim,
            modes,
        }
    }

    pub fn scale(&self, s: f64) -> FourierField {
        self.map_modes(|_, c| c.iter().map(|z| z * s).collect())
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &FourierField, s: f64) -> Result<FourierField> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        for (k, c) in &other.modes {
            let slot = out
                .modes
                .entry(k.clone())
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); self.dim]);
            for (a, b) in slot.iter_mut().zip(c) {
                *a += b * s;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FourierField) -> Result<FourierField> {
        self.add_scaled(other, -1.0)
    }

    /// `L^2` inner product `Σ_k conj(u_k) · v_k` over all modes.
    pub fn inner_l2(&self, other: &FourierField) -> Result<Complex64> {
        self.check_dim(other.dim)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, u) in &self.modes {
            if let Some(v) = other.modes.get(k) {
                let p: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                // The partner mode contributes the conjugate.
                acc += if k.is_zero() { p } else { p + p.conj() };
            }
        }
        Ok(acc)
    }

    /// Largest coefficient-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &FourierField) -> f64 {
        let keys: BTreeSet<&WaveVector> = self.modes.keys().chain(other.modes.keys()).collect();
        let zero = vec![Complex64::new(0.0, 0.0); self.dim];
        keys.into_iter()
            .map(|k| {
                let a = self.modes.get(k).unwrap_or(&zero);
                let b = other.modes.get(k).unwrap_or(&zero);
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// The advection term `v·∂w` with Fourier coefficients
    /// `i (2π)^{-d/2} Σ_h [v_h · (k-h)] w_{k-h}`, computed exactly over the
    /// Minkowski sum of the two supports and optionally restricted to
    /// `support`.
    pub fn advect(
        v: &FourierField,
        w: &FourierField,
        support: Option<&GalerkinSet>,
    ) -> Result<FourierField> {
        v.check_dim(w.dim)?;
        let dim = v.dim;
        let pref = Complex64::new(0.0, basis_normalisation(dim));
        let vmodes = v.all_modes();
        let wmodes = w.all_modes();
        let mut out = FourierField::zero(dim);
        for (h, vh) in &vmodes {
            for (l, wl) in &wmodes {
                let k = h + l;
                if !(k.is_zero() || k.is_representative()) {
                    continue;
                }
                if let Some(set) = support {
                    if !set.contains(&k) {
                        continue;
                    }
                }
                let s = pref * l.dot(vh);
                let slot = out
                    .modes
                    .entry(k)
                    .or_insert_with(|| vec![Complex64::new(0.0, 0.0); dim]);
                for (a, b) in slot.iter_mut().zip(wl) {
                    *a += s * b;
                }
            }
        }
        if let Some(c) = out.modes.get_mut(&WaveVector::zero(dim)) {
            for z in c.iter_mut() {
                z.im = 0.0;
            }
        }
        Ok(out)
    }

    /// Writes the plain-text serialisation: a header with `d` and flags,
    /// then one `k1 … kd re1 im1 … red imd` row per stored mode.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# nscert-field d={} zero_mean={} solenoidal={}",
            self.dim,
            self.is_zero_mean(),
            self.is_solenoidal()
        )?;
        for (k, c) in &self.modes {
            let mut line = String::new();
            for ki in k.components() {
                write!(line, "{ki} ").expect("write to string");
            }
            for z in c {
                write!(line, " {:.17e} {:.17e}", z.re, z.im).expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the format produced by [`FourierField::write_to`].
    pub fn read_from<R: BufRead>(r: R) -> Result<FourierField> {
        let mut dim = None;
        let mut field: Option<FourierField> = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("d=") {
                        let d: usize = v.parse().map_err(|_| {
                            Error::Parse(format!("line {}: bad dimension '{v}'", lineno + 1))
                        })?;
                        dim = Some(d);
                        field = Some(FourierField::zero(d));
                    }
                }
                continue;
            }
            let d = dim
                .ok_or_else(|| Error::Parse(format!("line {}: data before header", lineno + 1)))?;
            let toks: Vec<&str> = trimmed.split_whitespace().collect();
            if toks.len() != 3 * d {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    3 * d,
                    toks.len()
                )));
            }
            let bad = |t: &str| Error::Parse(format!("line {}: bad number '{t}'", lineno + 1));
            let k = toks[..d]
                .iter()
                .map(|t| t.parse::<i32>().map_err(|_| bad(t)))
                .collect::<Result<Vec<_>>>()?;
            let vals = toks[d..]
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
                .collect::<Result<Vec<_>>>()?;
            let c = vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            field
                .as_mut()
                .expect("header seen")
                .insert(WaveVector::new(k), c)?;
        }
        field.ok_or_else(|| Error::Parse("missing header line".into()))
    }

    pub fn from_text(s: &str) -> Result<FourierField> {
        Self::read_from(s.as_bytes())
    }
}

/// A finite symmetric set of nonzero wavevectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GalerkinSet {
    dim: usize,
    members: BTreeSet<WaveVector>,
}

impl GalerkinSet {
    /// Validates `0 ∉ G` and `k ∈ G ⇔ -k ∈ G`.
    pub fn new(dim: usize, members: impl IntoIterator<Item = WaveVector>) -> Result<Self> {
        let members: BTreeSet<WaveVector> = members.into_iter().collect();
        for k in &members {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.dim(),
                });
            }
            if k.is_zero() {
                return Err(Error::InvalidArgument(
                    "Galerkin set must not contain 0".into(),
                ));
            }
            if !members.contains(&-k) {
                return Err(Error::InvalidArgument(format!(
                    "Galerkin set contains {k} but not its negative"
                )));
            }
        }
        Ok(Self { dim, members })
    }

    /// All nonzero `k` with `max_i |k_i| <= radius`.
    pub fn cube(dim: usize, radius: u32) -> Self {
        let members = lattice_box(dim, radius as i32)
            .filter(|k| !k.is_zero())
            .collect();
        Self { dim, members }
    }

    /// All nonzero `k` with `|k| <= radius`.
    pub fn ball(dim: usize, radius: f64) -> Self {
        let r = radius.floor() as i32;
        let r2 = radius * radius;
        let members = lattice_box(dim, r)
            .filter(|k| !k.is_zero() && k.norm_sq() as f64 <= r2)
            .collect();
        Self { dim, members }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: &WaveVector) -> bool {
        self.members.contains(k)
    }

    pub fn members(&self) -> impl Iterator<Item = &WaveVector> {
        self.members.iter()
    }

    /// One member of each `±k` pair.
    pub fn representatives(&self) -> Vec<WaveVector> {
        self.members
            .iter()
            .filter(|k| k.is_representative())
            .cloned()
            .collect()
    }

    /// Resolution `|G| = inf_{k ∉ G, k ≠ 0} sqrt(1 + |k|^2)`; `sqrt 2` for
    /// the empty set.
    pub fn resolution(&self) -> f64 {
        let reach = self
            .members
            .iter()
            .map(|k| k.components().iter().map(|c| c.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        // Every lattice point outside the box of radius `reach` has norm at
        // least `reach + 1`, attained on the enlarged box.
        let best = lattice_box(self.dim, reach + 1)
            .filter(|k| !k.is_zero() && !self.members.contains(k))
            .map(|k| k.norm_sq())
            .min()
            .expect("enlarged box always has excluded points");
        (1.0 + best as f64).sqrt()
    }

    /// `1 / |G|^{p-n}`, the factor in `‖(1-P^G) v‖_n <= ‖v‖_p / |G|^{p-n}`.
    pub fn truncation_factor(&self, n: f64, p: f64) -> Result<f64> {
        if p < n {
            return Err(Error::InvalidArgument(format!(
                "need n <= p, got n = {n}, p = {p}"
            )));
        }
        Ok(self.resolution().powf(-(p - n)))
    }
}

/// `(|G|, 1/|G|^{p-n})`.
pub fn galerkin_resolution(set: &GalerkinSet, p: f64, n: f64) -> Result<(f64, f64)> {
    Ok((set.resolution(), set.truncation_factor(n, p)?))
}

/// Iterates the integer box `max_i |k_i| <= radius` in lexicographic order.
pub fn lattice_box(dim: usize, radius: i32) -> impl Iterator<Item = WaveVector> {
    let side = (2 * radius + 1).max(0) as usize;
    let total = side.pow(dim as u32);
    (0..total).map(move |mut idx| {
        let mut comps = vec![0i32; dim];
        for c in comps.iter_mut().rev() {
            *c = (idx % side) as i32 - radius;
            idx /= side;
        }
        WaveVector::new(comps)
    })
}

/// Deterministic random real, zero-mean, divergence-free field supported in
/// the box of the given radius, rescaled so that `‖f‖_n = target_norm`.
pub fn random_solenoidal_field(
    seed: u64,
    dim: usize,
    n: f64,
    box_radius: u32,
    target_norm: f64,
) -> Result<FourierField> {
    if target_norm <= 0.0 || target_norm.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "target norm must be positive, got {target_norm}"
        )));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument(
            "dimension must be at least 2".into(),
        ));
    }
    if box_radius == 0 {
        return Err(Error::InvalidArgument(
            "box radius 0 hosts no nonzero solenoidal mode".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = FourierField::zero(dim);
    for k in GalerkinSet::cube(dim, box_radius).representatives() {
        let c: Coeff = (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        raw.insert(k, c)?;
    }
    let projected = raw.leray_project();
    let norm = projected.sobolev_norm(n);
    if norm == 0.0 {
        return Err(Error::InvalidArgument(
            "random draw produced a vanishing field".into(),
        ));
    }
    Ok(projected.scale(target_norm / norm))
}
