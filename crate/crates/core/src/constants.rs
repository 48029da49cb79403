//! Certified brackets for the lattice sums `Σ_n` and kernels `𝒦_n(k)`, and
//! the bilinear-estimate constants `K_n` with `‖v·∂w‖_{n-1} <= K_n ‖v‖_n ‖w‖_n`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{lattice_box, WaveVector};
use crate::rounding::round_up_sig;

/// Which lattice the fields live on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Lattice {
    /// All of `Z^d`.
    Full,
    /// `Z^d \ {0}`, for zero-mean fields.
    Punctured,
}

impl std::fmt::Display for Lattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Lattice::Full => "full",
            Lattice::Punctured => "punctured",
        })
    }
}

/// A rigorous enclosure `lo <= value <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "invalid bracket [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersects(&self, other: &Bracket) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Kernel cutoff `Λ(k) = inner` for `|k| < threshold`, `slope·|k|` beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelCutoff {
    pub inner: f64,
    pub threshold: f64,
    pub slope: f64,
}

impl KernelCutoff {
    pub fn at(&self, k: &WaveVector) -> f64 {
        let r = k.norm();
        if r < self.threshold {
            self.inner
        } else {
            self.slope * r
        }
    }
}

/// Cutoffs for `Σ_n` and `𝒦_n`, and the search box for the sup over `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffPolicy {
    pub lambda_sigma: f64,
    pub kernel: KernelCutoff,
    pub search_box: u32,
}

impl CutoffPolicy {
    /// The published choices for `(n, d) = (2, 3)` and `(4, 3)`; otherwise
    /// `Λ(k) = max(2√d, 3|k|)`, `λ = 250` and a box of radius 6.
    pub fn default_for(n: f64, dim: usize) -> Self {
        if dim == 3 && n == 2.0 {
            return Self {
                lambda_sigma: 250.0,
                kernel: KernelCutoff {
                    inner: 24.0,
                    threshold: 4.0,
                    slope: 6.0,
                },
                search_box: 10,
            };
        }
        if dim == 3 && n == 4.0 {
            return Self {
                lambda_sigma: 250.0,
                kernel: KernelCutoff {
                    inner: 10.0,
                    threshold: 10.0 / 3.0,
                    slope: 3.0,
                },
                search_box: 6,
            };
        }
        let floor = 2.0 * (dim as f64).sqrt();
        Self {
            lambda_sigma: 250.0,
            kernel: KernelCutoff {
                inner: floor,
                threshold: floor / 3.0,
                slope: 3.0,
            },
            search_box: 6,
        }
    }
}

/// A certified value of `K_n` together with the evidence it was derived from.
#[derive(Clone, Debug, Serialize)]
pub struct BilinearConstant {
    pub n: f64,
    pub dim: usize,
    pub lattice: Lattice,
    /// `√max(sup_box.hi, sigma.hi)` rounded up to two significant digits.
    pub value: f64,
    /// Bracket for `max_k 𝒦_n(k)` over the search box.
    pub sup_box: Bracket,
    /// Wavevector attaining the largest upper bracket in the box.
    pub argsup: Vec<i32>,
    /// Bracket for the limit `Σ_n = lim_{|k|→∞} 𝒦_n(k)`.
    pub sigma: Bracket,
    pub policy: CutoffPolicy,
}

fn check_convergent(n: f64, dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be at least 2, got {dim}"
        )));
    }
    let half = dim as f64 / 2.0;
    if n <= half || !n.is_finite() {
        return Err(Error::DivergentSum { n, half_dim: half });
    }
    Ok(())
}

fn check_cutoff(value: f64, dim: usize, what: &str) -> Result<()> {
    let floor = 2.0 * (dim as f64).sqrt();
    if !(value >= floor) || !value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{what} = {value} must be at least 2√d = {floor}"
        )));
    }
    Ok(())
}

/// `(1+d)^n / [2^{d-1} π^{d/2} Γ(d/2) (2n-d) (cut - √d)^{2n-d}]`.
fn tail_factor(n: f64, dim: usize, cut: f64) -> f64 {
    let d = dim as f64;
    (1.0 + d).powf(n)
        / (2f64.powf(d - 1.0)
            * PI.powf(d / 2.0)
            * gamma(d / 2.0)
            * (2.0 * n - d)
            * (cut - d.sqrt()).powf(2.0 * n - d))
}

/// Compensated summation.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Number of representations `r_d(s)` of each `s < limit` as a sum of `d`
/// squares, by repeated convolution with the one-dimensional counts.
fn shell_counts(dim: usize, limit: usize) -> Vec<u64> {
    let mut one = vec![0u64; limit];
    let mut x = 0usize;
    while x * x < limit {
        one[x * x] += if x == 0 { 1 } else { 2 };
        x += 1;
    }
    let squares: Vec<(usize, u64)> = one
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| (s, c))
        .collect();
    let mut acc = one.clone();
    for _ in 1..dim {
        let mut next = vec![0u64; limit];
        for (s, &a) in acc.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for &(q, c) in &squares {
                if s + q >= limit {
                    break;
                }
                next[s + q] += a * c;
            }
        }
        acc = next;
    }
    acc
}

/// Bracket for `Σ_n = (2π)^{-d} Σ_h (1+|h|^2)^{-n}`: the truncated sum over
/// `|h| < λ` and that sum plus the tail bound.
pub fn sigma_bracket(n: f64, dim: usize, lattice: Lattice, lambda: f64) -> Result<Bracket> {
    check_convergent(n, dim)?;
    check_cutoff(lambda, dim, "lambda")?;
    let l2 = lambda * lambda;
    let limit = l2.ceil() as usize;
    let counts = shell_counts(dim, limit);
    let start = match lattice {
        Lattice::Full => 0,
        Lattice::Punctured => 1,
    };
    let mut acc = Kahan::default();
    for (s, &c) in counts.iter().enumerate().skip(start) {
        if c > 0 && (s as f64) < l2 {
            acc.add(c as f64 * (1.0 + s as f64).powf(-n));
        }
    }
    let lo = acc.sum * (2.0 * PI).powf(-(dim as f64));
    Bracket::new(lo, lo + tail_factor(n, dim, lambda))
}

/// Lattice points of the ball `|h| < radius`, sorted by `|h|^2`.
struct SortedBall {
    dim: usize,
    points: Vec<i32>,
    norms: Vec<i64>,
}

impl SortedBall {
    fn new(dim: usize, radius: f64, lattice: Lattice) -> Self {
        let r2 = radius * radius;
        let mut pts: Vec<(i64, WaveVector)> = lattice_box(dim, radius.ceil() as i32)
            .filter(|h| (h.norm_sq() as f64) < r2)
            .filter(|h| lattice == Lattice::Full || !h.is_zero())
            .map(|h| (h.norm_sq(), h))
            .collect();
        pts.sort();
        let norms = pts.iter().map(|(s, _)| *s).collect();
        let points = pts
            .iter()
            .flat_map(|(_, h)| h.components().to_vec())
            .collect();
        Self { dim, points, norms }
    }

    /// Number of leading points with `|h| < radius`.
    fn prefix(&self, radius: f64) -> usize {
        let r2 = radius * radius;
        self.norms.partition_point(|&s| (s as f64) < r2)
    }
}

/// Table of `(1+s)^{-n}` for integer `s`.
struct InversePowers {
    n: f64,
    table: Vec<f64>,
}

impl InversePowers {
    fn new(n: f64, len: usize) -> Self {
        Self {
            n,
            table: (0..len).map(|s| (1.0 + s as f64).powf(-n)).collect(),
        }
    }

    fn get(&self, s: i64) -> f64 {
        self.table
            .get(s as usize)
            .copied()
            .unwrap_or_else(|| (1.0 + s as f64).powf(-self.n))
    }
}

/// `λ(k)` in the kernel tail bound.
fn kernel_lambda(k2: f64, cut: f64) -> f64 {
    let r = k2.sqrt();
    if cut < r {
        1.0 + k2
    } else {
        (1.0 + k2) / (1.0 + (cut - r).powi(2))
    }
}

fn kernel_with_ball(
    k: &WaveVector,
    n: f64,
    cut: f64,
    ball: &SortedBall,
    pows: &InversePowers,
) -> Result<Bracket> {
    let dim = ball.dim;
    let kc = k.components();
    let count = ball.prefix(cut);
    let mut acc = Kahan::default();
    for (idx, h) in ball.points.chunks_exact(dim).take(count).enumerate() {
        let kh2: i64 = kc
            .iter()
            .zip(h)
            .map(|(&a, &b)| ((a - b) as i64).pow(2))
            .sum();
        if kh2 == 0 {
            continue;
        }
        acc.add(kh2 as f64 * pows.get(ball.norms[idx]) * pows.get(kh2));
    }
    let k2 = k.norm_sq() as f64;
    let pref = (1.0 + k2).powf(n - 1.0) * (2.0 * PI).powf(-(dim as f64));
    let lo = pref * acc.sum;
    let hi = lo + kernel_lambda(k2, cut).powf(n - 1.0) * tail_factor(n, dim, cut);
    Bracket::new(lo, hi)
}

/// Bracket for `𝒦_n(k)`: the truncated sum over `|h| < Λ` and that sum plus
/// the tail bound.
pub fn kernel_bracket(k: &WaveVector, n: f64, lattice: Lattice, cutoff: f64) -> Result<Bracket> {
    let dim = k.dim();
    check_convergent(n, dim)?;
    check_cutoff(cutoff, dim, "Lambda(k)")?;
    let ball = SortedBall::new(dim, cutoff, lattice);
    let reach = (cutoff + k.norm()).ceil() as usize;
    let pows = InversePowers::new(n, reach * reach + 1);
    kernel_with_ball(k, n, cutoff, &ball, &pows)
}

/// Representatives `0 <= k_1 <= … <= k_d <= radius` of the box modulo signed
/// permutations, under which `𝒦_n` is invariant.
fn fundamental_domain(dim: usize, radius: u32) -> Vec<WaveVector> {
    let mut out = Vec::new();
    let mut cur = vec![0i32; dim];
    fn rec(pos: usize, lo: i32, radius: i32, cur: &mut Vec<i32>, out: &mut Vec<WaveVector>) {
        if pos == cur.len() {
            out.push(WaveVector::new(cur.clone()));
            return;
        }
        for v in lo..=radius {
            cur[pos] = v;
            rec(pos + 1, v, radius, cur, out);
        }
    }
    rec(0, 0, radius as i32, &mut cur, &mut out);
    out
}

/// Computes `K_n`: kernel brackets on every `k` of the search box, the limit
/// bracket `Σ_n`, and `√max` of the two upper ends rounded up to two
/// significant digits.
pub fn bilinear_constant(
    n: f64,
    dim: usize,
    lattice: Lattice,
    policy: &CutoffPolicy,
) -> Result<BilinearConstant> {
    check_convergent(n, dim)?;
    check_cutoff(policy.lambda_sigma, dim, "lambda")?;
    let ks: Vec<WaveVector> = fundamental_domain(dim, policy.search_box)
        .into_iter()
        .filter(|k| lattice == Lattice::Full || !k.is_zero())
        .collect();
    if ks.is_empty() {
        return Err(Error::InvalidArgument(
            "search box contains no admissible wavevector".into(),
        ));
    }
    let cuts: Vec<f64> = ks.iter().map(|k| policy.kernel.at(k)).collect();
    for &c in &cuts {
        check_cutoff(c, dim, "Lambda(k)")?;
    }
    let max_cut = cuts.iter().copied().fold(0.0, f64::max);
    let max_k = ks.iter().map(|k| k.norm()).fold(0.0, f64::max);
    let ball = SortedBall::new(dim, max_cut, lattice);
    let reach = (max_cut + max_k).ceil() as usize;
    let pows = InversePowers::new(n, reach * reach + 1);
    let brackets: Vec<Bracket> = ks
        .par_iter()
        .zip(&cuts)
        .map(|(k, &c)| kernel_with_ball(k, n, c, &ball, &pows))
        .collect::<Result<_>>()?;
    let (best, _) = brackets
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, b)| {
            if b.hi > acc.1 {
                (i, b.hi)
            } else {
                acc
            }
        });
    let sup_lo = brackets.iter().map(|b| b.lo).fold(0.0, f64::max);
    let sup_box = Bracket::new(sup_lo, brackets[best].hi)?;
    let sigma = sigma_bracket(n, dim, lattice, policy.lambda_sigma)?;
    let value = round_up_sig(sup_box.hi.max(sigma.hi).sqrt(), 2);
    Ok(BilinearConstant {
        n,
        dim,
        lattice,
        value,
        sup_box,
        argsup: ks[best].components().to_vec(),
        sigma,
        policy: *policy,
    })
}

/// `bilinear_constant` with the default policy, memoised per process.
pub fn default_constant(n: f64, dim: usize, lattice: Lattice) -> Result<BilinearConstant> {
    type Cache = Mutex<HashMap<(u64, usize, Lattice), BilinearConstant>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (n.to_bits(), dim, lattice);
    if let Some(c) = cache.lock().expect("constant cache poisoned").get(&key) {
        return Ok(c.clone());
    }
    let c = bilinear_constant(n, dim, lattice, &CutoffPolicy::default_for(n, dim))?;
    cache
        .lock()
        .expect("constant cache poisoned")
        .insert(key, c.clone());
    Ok(c)
}
