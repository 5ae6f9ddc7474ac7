//! Analysis and synthesis against a wavelet system, mollifier-based function-space
//! norms, atom/kernel certification and the sequence-vs-function norm experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battle_lemarie::{scaling_phi, wavelet_psi};
use crate::bspline::{bspline, PiecewisePolynomial};
use crate::error::{Error, Result};
use crate::euler_frobenius::order_tables;
use crate::localized::{
    localization_coefficients, AxisGenerators, AxisSpec, DyadicIndex, WaveletSystem,
};
use crate::seqspace::{norm_b, norm_f, CoefficientTree, DyadicCube};
use crate::tensor::{advance, integrate_tensor, Separable, SeparableSum};
use crate::weights::{SpaceKind, SpaceParams, WeightKind, WeightModel};

/// Default number of levels.
pub const DEFAULT_DEPTH: u32 = 8;

/// Grid cells times nodes beyond which weighted integration refuses to run.
const QUADRATURE_BUDGET: f64 = 4e8;
/// Largest stored band of a Gram block.
const GRAM_BUDGET: usize = 50_000_000;

// ---------------------------------------------------------------------------
// analysis

fn level_of(i: usize, d: u32) -> u32 {
    if i == 0 {
        0
    } else {
        d - 1
    }
}

/// Integer `τ` with `(a + τ)/2^e < hi` and `(b + τ)/2^e > lo`.
fn overlap_range(gen: (f64, f64), f: (f64, f64), e: u32) -> (i64, i64) {
    let s = 2f64.powi(e as i32);
    ((s * f.0 - gen.1).floor() as i64 + 1, (s * f.1 - gen.0).ceil() as i64 - 1)
}

/// `λ_{00τ} = ⟨f, Φ_τ⟩` and `λ_{idτ} = 2^{dN/2}⟨f, Ψ_{i(d−1)τ}⟩` for `d ≤ depth`, stored for
/// every index whose support overlaps the support of `f`.
pub fn analyze(f: &SeparableSum, system: &WaveletSystem, depth: u32) -> Result<CoefficientTree> {
    if f.dim != system.dim {
        return Err(Error::InvalidParams(format!("function on ℝ^{} for a system on ℝ^{}", f.dim, system.dim)));
    }
    let dim = system.dim;
    let mut tree = CoefficientTree::new(dim);
    let terms: Vec<&Separable> = f.terms.iter().filter(|t| t.support().is_some()).collect();
    if terms.is_empty() {
        return Ok(tree);
    }
    let mut layers = vec![(0usize, 0u32)];
    for d in 1..=depth {
        layers.extend((1..=system.wavelet_types()).map(|i| (i, d)));
    }
    for (i, d) in layers {
        let e = level_of(i, d);
        let scale = 2f64.powi(e as i32);
        let norm = 2f64.powf((e + d) as f64 * dim as f64 / 2.0);
        // per term, per axis: (first τ, pairings)
        let mut tables: Vec<Vec<(i64, Vec<f64>)>> = Vec::with_capacity(terms.len());
        for t in &terms {
            let mut per_axis = Vec::with_capacity(dim);
            for l in 0..dim {
                let g = system.axes[l].generator(WaveletSystem::is_wavelet_axis(i, l));
                let (Some(gs), Some(fs)) = (g.support(), t.factors[l].support()) else {
                    per_axis.clear();
                    break;
                };
                let (lo, hi) = overlap_range(gs, fs, e);
                let vals: Vec<f64> = (lo..=hi)
                    .into_par_iter()
                    .map(|tau| t.factors[l].inner_product(&g.affine_arg(scale, tau as f64)))
                    .collect();
                per_axis.push((lo, vals));
            }
            tables.push(per_axis);
        }
        let live: Vec<(&&Separable, &Vec<(i64, Vec<f64>)>)> =
            terms.iter().zip(&tables).filter(|(_, tab)| tab.len() == dim && tab.iter().all(|a| !a.1.is_empty())).collect();
        if live.is_empty() {
            continue;
        }
        let lo: Vec<i64> = (0..dim).map(|l| live.iter().map(|(_, tab)| tab[l].0).min().unwrap()).collect();
        let hi: Vec<i64> =
            (0..dim).map(|l| live.iter().map(|(_, tab)| tab[l].0 + tab[l].1.len() as i64 - 1).max().unwrap()).collect();
        let sizes: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
        let mut idx = vec![0usize; dim];
        loop {
            let tau: Vec<i64> = idx.iter().zip(&lo).map(|(&k, &a)| a + k as i64).collect();
            let mut v = 0.0;
            let mut touched = false;
            for (t, tab) in &live {
                let ks: Option<Vec<usize>> = (0..dim)
                    .map(|l| {
                        let k = tau[l] - tab[l].0;
                        (k >= 0 && (k as usize) < tab[l].1.len()).then_some(k as usize)
                    })
                    .collect();
                if let Some(ks) = ks {
                    touched = true;
                    v += t.coeff * ks.iter().enumerate().map(|(l, &k)| tab[l].1[k]).product::<f64>();
                }
            }
            if touched {
                tree.add(i, d, tau, norm * v)?;
            }
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
    }
    Ok(tree)
}

/// Samples on a rectilinear grid, first axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledGrid {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

/// Largest number of interpolation terms built from a grid.
const SAMPLE_BUDGET: usize = 200_000;

impl SampledGrid {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > crate::localized::MAX_DIM {
            return Err(Error::InvalidParams("grid dimension must be 1..=3".into()));
        }
        for a in &axes {
            if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) || a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams("grid axes must be finite and strictly increasing".into()));
            }
        }
        let count: usize = axes.iter().map(|a| a.len()).product();
        if values.len() != count || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("expected {count} finite samples, got {}", values.len())));
        }
        Ok(Self { axes, values })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn hat(axis: &[f64], j: usize) -> PiecewisePolynomial {
        let mut parts = Vec::new();
        if j > 0 {
            let h = axis[j] - axis[j - 1];
            parts.push((axis[j - 1], axis[j], vec![0.0, 1.0 / h]));
        }
        if j + 1 < axis.len() {
            let h = axis[j + 1] - axis[j];
            parts.push((axis[j], axis[j + 1], vec![1.0, -1.0 / h]));
        }
        PiecewisePolynomial::from_parts(&parts)
    }

    /// Multilinear interpolant, zero outside the grid box.
    pub fn interpolant(&self) -> Result<SeparableSum> {
        let dim = self.dim();
        if dim == 1 {
            let a = &self.axes[0];
            let parts: Vec<(f64, f64, Vec<f64>)> = a
                .windows(2)
                .zip(self.values.windows(2))
                .map(|(x, v)| (x[0], x[1], vec![v[0], (v[1] - v[0]) / (x[1] - x[0])]))
                .collect();
            return Ok(SeparableSum::from_1d(PiecewisePolynomial::from_parts(&parts)));
        }
        let nonzero = self.values.iter().filter(|v| **v != 0.0).count();
        if nonzero > SAMPLE_BUDGET {
            return Err(Error::QuadratureBudgetExceeded(format!(
                "{nonzero} nonzero samples exceed the interpolation budget {SAMPLE_BUDGET}"
            )));
        }
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.len()).collect();
        let mut out = SeparableSum::zero(dim);
        let mut idx = vec![0usize; dim];
        let mut pos = 0;
        loop {
            let v = self.values[pos];
            if v != 0.0 {
                out.push(Separable::new(v, (0..dim).map(|l| Self::hat(&self.axes[l], idx[l])).collect()));
            }
            pos += 1;
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
        Ok(out)
    }

    /// `Σ_l h_l²/8 · max |second divided difference along l|`, an estimate of the
    /// interpolation error in sup norm.
    pub fn interpolation_error_estimate(&self) -> f64 {
        let dim = self.dim();
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.len()).collect();
        let mut strides = vec![1usize; dim];
        for l in 1..dim {
            strides[l] = strides[l - 1] * sizes[l - 1];
        }
        let mut total = 0.0;
        for l in 0..dim {
            let a = &self.axes[l];
            let hmax = a.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let mut worst: f64 = 0.0;
            let mut idx = vec![0usize; dim];
            let mut pos = 0;
            loop {
                let j = idx[l];
                if j > 0 && j + 1 < a.len() {
                    let (v0, v1, v2) =
                        (self.values[pos - strides[l]], self.values[pos], self.values[pos + strides[l]]);
                    let d1 = (v1 - v0) / (a[j] - a[j - 1]);
                    let d2 = (v2 - v1) / (a[j + 1] - a[j]);
                    worst = worst.max((2.0 * (d2 - d1) / (a[j + 1] - a[j - 1])).abs());
                }
                pos += 1;
                if !advance(&mut idx, &sizes) {
                    break;
                }
            }
            total += hmax * hmax / 8.0 * worst;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledAnalysis {
    pub tree: CoefficientTree,
    /// Bound on `|λ − λ_exact|` propagated from the interpolation error estimate.
    pub error_bound: f64,
}

/// Analysis of sampled data: exact pairings of the multilinear interpolant.
pub fn analyze_sampled(grid: &SampledGrid, system: &WaveletSystem, depth: u32) -> Result<SampledAnalysis> {
    let f = grid.interpolant()?;
    let tree = analyze(&f, system, depth)?;
    let eps = grid.interpolation_error_estimate();
    // |⟨f − If, g⟩| ≤ ε‖g‖_1, and the level-d coefficient carries 2^{N/2}‖Ψ_i‖_1
    let l1 = |i: usize| -> f64 {
        (0..system.dim)
            .map(|l| {
                let g = system.axes[l].generator(WaveletSystem::is_wavelet_axis(i, l));
                g.support().map_or(0.0, |(a, b)| g.sup_norm() * (b - a))
            })
            .product()
    };
    let mut bound = eps * l1(0);
    if depth >= 1 {
        for i in 1..=system.wavelet_types() {
            bound = bound.max(eps * 2f64.powf(system.dim as f64 / 2.0) * l1(i));
        }
    }
    Ok(SampledAnalysis { tree, error_bound: bound })
}

// ---------------------------------------------------------------------------
// synthesis

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMode {
    /// `Σ λ_{00τ}Φ_τ + Σ λ_{idτ}2^{−dN/2}Ψ_{i(d−1)τ}` with the analysis coefficients as they are.
    /// Exact only for orthonormal generators. Serialized as `paper` for the CLI.
    #[serde(rename = "paper", alias = "direct")]
    Direct,
    /// Applies the inverse Gram operator of each `(i, d)` block first.
    Dual,
}

/// Lower band of a symmetric positive definite matrix, Cholesky-factored in place.
struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (j + self.bw - i)]
    }

    fn factor(n: usize, bw: usize, a: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut me = Self { n, bw, l: vec![0.0; n * (bw + 1)] };
        let mut scale: f64 = 0.0;
        for i in 0..n {
            scale = scale.max(a(i, i).abs());
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = a(i, j);
                for k in k0..j {
                    sum -= me.at(i, k) * me.at(j, k);
                }
                let slot = i * (bw + 1) + (j + bw - i);
                if i == j {
                    if !(sum > 1e-13 * scale) {
                        return Err(Error::GramSingular { pivot: i, value: sum });
                    }
                    me.l[slot] = sum.sqrt();
                } else {
                    me.l[slot] = sum / me.at(j, j);
                }
            }
        }
        Ok(me)
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }
}

/// Per-axis Gram table `T(h) = ⟨g(· − h), g⟩`, `|h| ≤ reach`.
fn axis_gram(g: &PiecewisePolynomial) -> (i64, Vec<f64>) {
    let Some((a, b)) = g.support() else {
        return (0, vec![0.0]);
    };
    let reach = ((b - a).ceil() as i64 - 1).max(0);
    let vals = (-reach..=reach).map(|h| g.shift(h as f64).inner_product(g)).collect();
    (reach, vals)
}

/// Solves `G c = r` on the bounding box of `layer`, with `r` zero off the layer.
fn dual_block(system: &WaveletSystem, i: usize, layer: &[(Vec<i64>, f64)]) -> Result<Vec<(Vec<i64>, f64)>> {
    let dim = system.dim;
    let grams: Vec<(i64, Vec<f64>)> =
        (0..dim).map(|l| axis_gram(system.axes[l].generator(WaveletSystem::is_wavelet_axis(i, l)))).collect();
    let lo: Vec<i64> = (0..dim).map(|l| layer.iter().map(|e| e.0[l]).min().unwrap()).collect();
    let hi: Vec<i64> = (0..dim).map(|l| layer.iter().map(|e| e.0[l]).max().unwrap()).collect();
    let sizes: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
    let mut strides = vec![1usize; dim];
    for l in 1..dim {
        strides[l] = strides[l - 1] * sizes[l - 1];
    }
    let n: usize = sizes.iter().product();
    let bw: usize = (0..dim).map(|l| (grams[l].0 as usize).min(sizes[l] - 1) * strides[l]).sum();
    if n.saturating_mul(bw + 1) > GRAM_BUDGET {
        return Err(Error::InvalidParams(format!("Gram block of size {n} with bandwidth {bw} is too large")));
    }
    let decode = |p: usize| -> Vec<usize> { (0..dim).map(|l| (p / strides[l]) % sizes[l]).collect() };
    let entry = |r: usize, c: usize| -> f64 {
        let (a, b) = (decode(r), decode(c));
        let mut v = 1.0;
        for l in 0..dim {
            let h = a[l] as i64 - b[l] as i64;
            if h.abs() > grams[l].0 {
                return 0.0;
            }
            v *= grams[l].1[(h + grams[l].0) as usize];
        }
        v
    };
    let chol = BandedCholesky::factor(n, bw, entry)?;
    let mut rhs = vec![0.0; n];
    for (tau, v) in layer {
        let p: usize = (0..dim).map(|l| (tau[l] - lo[l]) as usize * strides[l]).sum();
        rhs[p] = *v;
    }
    chol.solve(&mut rhs);
    Ok(rhs
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .map(|(p, v)| (decode(p).iter().zip(&lo).map(|(&k, &a)| a + k as i64).collect(), v))
        .collect())
}

/// Reconstruction from a coefficient tree.
pub fn synthesize(tree: &CoefficientTree, system: &WaveletSystem, mode: SynthesisMode) -> Result<SeparableSum> {
    if tree.dim != system.dim {
        return Err(Error::InvalidParams(format!("tree on ℝ^{} for a system on ℝ^{}", tree.dim, system.dim)));
    }
    let dim = system.dim;
    let keys: Vec<(usize, u32)> = tree.layer_keys().collect();
    let blocks: Vec<Result<Vec<Separable>>> = keys
        .par_iter()
        .map(|&(i, d)| {
            let e = level_of(i, d);
            let norm = if d == 0 { 1.0 } else { 2f64.powf(-(d as f64) * dim as f64 / 2.0) };
            let layer: Vec<(Vec<i64>, f64)> = tree.layer(i, d).map(|(t, v)| (t.clone(), norm * v)).collect();
            let coeffs = match mode {
                SynthesisMode::Direct => layer,
                SynthesisMode::Dual => dual_block(system, i, &layer)?,
            };
            coeffs
                .into_iter()
                .map(|(tau, c)| {
                    let mut m = system.member(&DyadicIndex::new(i, e, tau))?;
                    m.coeff *= c;
                    Ok(m)
                })
                .collect()
        })
        .collect();
    let mut out = SeparableSum::zero(dim);
    for b in blocks {
        for t in b? {
            out.push(t);
        }
    }
    Ok(out)
}

/// Single-axis system built from the truncated orthonormal pair `(φ, ψ)`; useful as a
/// Parseval reference for analysis and direct synthesis.
pub fn orthonormal_system(n: usize, k: i64, s: i64, tol: f64, dim: usize) -> Result<WaveletSystem> {
    let tables = order_tables(n)?;
    let phi = scaling_phi(&tables, k, tol)?.base;
    let psi = wavelet_psi(&tables, k, s, tol)?.base;
    let spec = AxisSpec::new(n, 0, 0, k, s);
    let coefficients = localization_coefficients(&tables, None, 0)?;
    let axis = AxisGenerators { spec, coefficients, phi, psi };
    if dim == 0 || dim > crate::localized::MAX_DIM {
        return Err(Error::InvalidParams(format!("dimension must be 1..=3, got {dim}")));
    }
    Ok(WaveletSystem { dim, axes: vec![axis; dim], n0: n })
}

// ---------------------------------------------------------------------------
// mollifiers and convolution norms

/// `φ_0 = u^{⊗N}` with `u` a symmetric combination of centred B-splines normalized by
/// `∫u = 1` and `∫x^j u = 0` for `1 ≤ j ≤ Γ`, so `φ = φ_0 − 2^{−N}φ_0(·/2)` has vanishing
/// moments up to order `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub gamma: usize,
    pub dim: usize,
    pub spline_order: usize,
    /// Coefficients of `B(· − j)` for `j = 0, ±1, …` (symmetric).
    pub shifts: Vec<(i64, f64)>,
    pub profile: PiecewisePolynomial,
}

/// Default centred spline order of the mollifier profile.
pub const MOLLIFIER_ORDER: usize = 9;

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c] == 0.0 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

impl MollifierSpec {
    pub fn new(gamma: usize, dim: usize) -> Result<Self> {
        Self::with_order(gamma, dim, MOLLIFIER_ORDER)
    }

    pub fn with_order(gamma: usize, dim: usize, spline_order: usize) -> Result<Self> {
        if dim == 0 || dim > crate::localized::MAX_DIM {
            return Err(Error::InvalidParams(format!("dimension must be 1..=3, got {dim}")));
        }
        if gamma > 12 {
            return Err(Error::InvalidParams(format!("moment order {gamma} too large (max 12)")));
        }
        let centred = bspline(spline_order).shift(-((spline_order + 1) as f64) / 2.0);
        let half = gamma / 2;
        let basis: Vec<PiecewisePolynomial> = (0..=half)
            .map(|j| {
                if j == 0 {
                    centred.clone()
                } else {
                    centred.shift(j as f64).add(&centred.shift(-(j as f64)))
                }
            })
            .collect();
        let a: Vec<Vec<f64>> = (0..=half).map(|r| basis.iter().map(|b| b.moment(2 * r)).collect()).collect();
        let mut rhs = vec![0.0; half + 1];
        rhs[0] = 1.0;
        let c = solve_dense(a, rhs).ok_or_else(|| Error::InvalidParams("mollifier moment system is singular".into()))?;
        let terms: Vec<(f64, &PiecewisePolynomial)> = c.iter().copied().zip(basis.iter()).collect();
        let profile = PiecewisePolynomial::linear_combination(&terms);
        let mut shifts = vec![(0, c[0])];
        for (j, &cj) in c.iter().enumerate().skip(1) {
            shifts.push((j as i64, cj));
            shifts.push((-(j as i64), cj));
        }
        Ok(Self { gamma, dim, spline_order, shifts, profile })
    }

    /// `v_j = 2^j u(2^j ·)`.
    fn dilated_profile(&self, j: i32) -> PiecewisePolynomial {
        let s = 2f64.powi(j);
        self.profile.affine_arg(s, 0.0).scale(s)
    }

    /// `φ_0` for `d = 0`, otherwise `φ_d = 2^{(d−1)N}φ(2^{d−1}·)`.
    pub fn level(&self, d: u32) -> SeparableSum {
        let product = |j: i32| Separable::new(1.0, vec![self.dilated_profile(j); self.dim]);
        let mut out = SeparableSum::single(product(if d == 0 { 0 } else { d as i32 - 1 }));
        if d >= 1 {
            let mut t = product(d as i32 - 2);
            t.coeff = -1.0;
            out.push(t);
        }
        out
    }

    /// `∫φ_0`.
    pub fn mass(&self) -> f64 {
        self.profile.integral().powi(self.dim as i32)
    }

    /// `max_{|γ| ≤ Γ} |∫x^γ φ|` by exact integration.
    pub fn moment_defect(&self) -> f64 {
        let phi = self.level(1);
        let mut worst: f64 = 0.0;
        let mut gamma = vec![0usize; self.dim];
        loop {
            if gamma.iter().sum::<usize>() <= self.gamma {
                let v: f64 = phi
                    .terms
                    .iter()
                    .map(|t| t.coeff * t.factors.iter().zip(&gamma).map(|(f, &g)| f.moment(g)).product::<f64>())
                    .sum();
                worst = worst.max(v.abs());
            }
            if !advance(&mut gamma, &vec![self.gamma + 1; self.dim]) {
                break;
            }
        }
        worst
    }

    fn check(&self, s: f64) -> Result<()> {
        let required = s.floor() as i64;
        if (self.gamma as i64) < required {
            return Err(Error::MomentDeficit { gamma: self.gamma, required });
        }
        Ok(())
    }
}

fn convolve(f: &SeparableSum, g: &SeparableSum) -> SeparableSum {
    let mut out = SeparableSum::zero(f.dim);
    for a in &f.terms {
        for b in &g.terms {
            let factors = a.factors.iter().zip(&b.factors).map(|(x, y)| x.convolve(y)).collect();
            out.push(Separable::new(a.coeff * b.coeff, factors));
        }
    }
    out
}

/// Per-axis knots that resolve the weight: its origin singularity (graded mesh),
/// the kink of the hybrid kind and tabulated radii.
fn weight_knots(w: &WeightModel, knots: &mut [Vec<f64>]) {
    let singular = w.origin_exponent().is_some_and(|a| a != 0.0);
    for k in knots.iter_mut() {
        let (Some(&lo), Some(&hi)) = (k.first(), k.last()) else { continue };
        let mut add = Vec::new();
        if singular && lo < 0.0 && hi > 0.0 || singular && (lo == 0.0 || hi == 0.0) {
            add.push(0.0);
            let reach = lo.abs().max(hi.abs());
            for j in 1..=40 {
                let t = reach * 2f64.powi(-j);
                add.push(t);
                add.push(-t);
            }
        }
        match &w.kind {
            WeightKind::Hybrid { .. } => add.extend([1.0, -1.0]),
            WeightKind::Tabulated { radii, .. } if w.dim == 1 => {
                add.extend(radii.iter().flat_map(|r| [*r, -*r]));
            }
            _ => {}
        }
        k.extend(add.into_iter().filter(|x| *x > lo && *x < hi));
        k.sort_by(f64::total_cmp);
        k.dedup();
    }
}

fn merged_knots(fns: &[&SeparableSum], dim: usize) -> Vec<Vec<f64>> {
    let mut knots = vec![Vec::new(); dim];
    for f in fns {
        for (l, k) in f.knots().into_iter().enumerate() {
            knots[l].extend(k);
        }
    }
    for k in &mut knots {
        k.sort_by(f64::total_cmp);
        k.dedup();
    }
    knots
}

fn max_degree(fns: &[&SeparableSum]) -> usize {
    fns.iter().flat_map(|f| f.terms.iter().flat_map(|t| t.factors.iter().map(|g| g.degree()))).max().unwrap_or(0)
}

/// `∫ G(f_1, …, f_k) w` over the merged knot grid of the `fns`, graded toward weight kinks.
fn weighted_integral<G: Fn(&[f64]) -> f64 + Sync>(
    fns: &[&SeparableSum],
    dim: usize,
    w: &WeightModel,
    nodes: usize,
    g: G,
) -> Result<f64> {
    let mut knots = merged_knots(fns, dim);
    if knots.iter().any(|k| k.len() < 2) {
        return Ok(0.0);
    }
    weight_knots(w, &mut knots);
    let cost: f64 = knots.iter().map(|k| ((k.len() - 1) * nodes) as f64).product::<f64>() * fns.len() as f64;
    if cost > QUADRATURE_BUDGET {
        return Err(Error::QuadratureBudgetExceeded(format!("{cost:.3e} evaluations for a weighted integral")));
    }
    Ok(integrate_tensor(&knots, nodes, fns, |v, x| {
        let gv = g(v);
        if gv == 0.0 {
            0.0
        } else {
            gv * w.evaluate(x)
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionNormReport {
    pub space: SpaceKind,
    pub depth: u32,
    /// `‖φ_d ∗ f‖_{L_p(w)}`, `d = 0..=depth`.
    pub blocks: Vec<f64>,
    pub norm: f64,
    /// `2^{Ds}‖φ_D ∗ f‖ / 2^{(D−1)s}‖φ_{D−1} ∗ f‖`, a heuristic for the discarded tail.
    pub tail_ratio: f64,
}

/// Truncated (`d ≤ depth`) B- or F-quasi-norm built from `φ_d ∗ f`.
pub fn convolution_norm(
    f: &SeparableSum,
    params: &SpaceParams,
    space: SpaceKind,
    moll: &MollifierSpec,
    depth: u32,
) -> Result<ConvolutionNormReport> {
    moll.check(params.s)?;
    if f.dim != moll.dim || f.dim != params.dim {
        return Err(Error::InvalidParams("dimension mismatch between function, mollifier and weight".into()));
    }
    let (p, q, s) = (params.p, params.q, params.s);
    let g: Vec<SeparableSum> = (0..=depth).into_par_iter().map(|d| convolve(f, &moll.level(d))).collect();
    let nodes_for = |fns: &[&SeparableSum]| ((max_degree(fns) as f64 * p.max(1.0) / 2.0).ceil() as usize + 4).min(64);
    let blocks: Vec<f64> = g
        .par_iter()
        .map(|gd| {
            let fns = [gd];
            let v = weighted_integral(&fns, f.dim, &params.weight, nodes_for(&fns), |v| v[0].abs().powf(p))?;
            Ok(v.max(0.0).powf(1.0 / p))
        })
        .collect::<Result<_>>()?;
    let scaled: Vec<f64> = blocks.iter().enumerate().map(|(d, b)| 2f64.powf(d as f64 * s) * b).collect();
    let norm = match space {
        SpaceKind::B => {
            if q.is_infinite() {
                scaled.iter().copied().fold(0.0, f64::max)
            } else {
                scaled.iter().map(|b| b.powf(q)).sum::<f64>().powf(1.0 / q)
            }
        }
        SpaceKind::F => {
            let fns: Vec<&SeparableSum> = g.iter().collect();
            let factors: Vec<f64> = (0..=depth).map(|d| 2f64.powf(d as f64 * s)).collect();
            let v = weighted_integral(&fns, f.dim, &params.weight, nodes_for(&fns), |v| {
                let inner = if q.is_infinite() {
                    v.iter().zip(&factors).map(|(x, c)| (c * x).abs()).fold(0.0, f64::max)
                } else {
                    v.iter().zip(&factors).map(|(x, c)| (c * x).abs().powf(q)).sum::<f64>().powf(1.0 / q)
                };
                inner.powf(p)
            })?;
            v.max(0.0).powf(1.0 / p)
        }
    };
    let tail_ratio = if scaled.len() >= 2 && scaled[scaled.len() - 2] > 0.0 {
        scaled[scaled.len() - 1] / scaled[scaled.len() - 2]
    } else {
        0.0
    };
    Ok(ConvolutionNormReport { space, depth, blocks, norm, tail_ratio })
}

// ---------------------------------------------------------------------------
// certification

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    /// Smoothness `K`.
    pub k: usize,
    /// Moment count `L`.
    pub l: usize,
    /// Support enlargement `𝒅 ≥ 1`.
    pub dilation: f64,
    pub s: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub a: usize,
    pub b: usize,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBound {
    pub alpha: Vec<usize>,
    pub sup: f64,
    pub allowed: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub beta: Vec<usize>,
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub support_ok: bool,
    /// Smallest enlargement of `Q_{dτ}` containing the support.
    pub required_support_factor: f64,
    /// Largest jump of derivatives up to the required order, relative to their size.
    pub continuity_defect: f64,
    pub smooth_ok: bool,
    pub derivative_bounds: Vec<DerivativeBound>,
    pub moments: Vec<MomentCheck>,
    pub moments_ok: bool,
    /// Minimal `c` such that `g / c` meets the derivative bounds.
    pub constant: f64,
    /// Support, smoothness and moments hold; the bounds hold after dividing by `constant`.
    pub passes: bool,
}

const CERT_REL_TOL: f64 = 1e-9;

fn multi_indices(dim: usize, max: usize, strict: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let sum: usize = idx.iter().sum();
        if if strict { sum < max } else { sum <= max } {
            out.push(idx.clone());
        }
        if !advance(&mut idx, &vec![max + 1; dim]) {
            break;
        }
    }
    out
}

fn certify(
    g: &Separable,
    d: u32,
    tau: &[i64],
    enlarge: f64,
    smooth: usize,
    moments_below: usize,
    bound: impl Fn(usize) -> f64,
) -> Result<CertificationReport> {
    let dim = g.dim();
    if tau.len() != dim {
        return Err(Error::InvalidParams(format!("τ has {} entries, expected {dim}", tau.len())));
    }
    let cube = DyadicCube::new(d, tau.to_vec());
    let (center, side) = (cube.center(), cube.side());
    let supp = g.support();
    let required = supp.as_ref().map_or(0.0, |b| {
        b.iter().zip(&center).map(|(&(a, e), &c)| 2.0 * (a - c).abs().max((e - c).abs()) / side).fold(0.0, f64::max)
    });
    let support_ok = required <= enlarge;
    let mut defect: f64 = 0.0;
    let mut sups: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for f in &g.factors {
        let derivs: Vec<f64> = (0..=smooth).map(|k| f.derivative(k).sup_norm()).collect();
        let size = derivs.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        defect = defect.max(f.continuity_defect(smooth) / size);
        sups.push(derivs);
    }
    let smooth_ok = defect <= CERT_REL_TOL;
    let mut derivative_bounds = Vec::new();
    let mut constant: f64 = 0.0;
    for alpha in multi_indices(dim, smooth, false) {
        let sup = g.coeff.abs() * alpha.iter().enumerate().map(|(l, &a)| sups[l][a]).product::<f64>();
        let allowed = bound(alpha.iter().sum());
        let ratio = sup / allowed;
        constant = constant.max(ratio);
        derivative_bounds.push(DerivativeBound { alpha, sup, allowed, ratio });
    }
    let mut moments = Vec::new();
    if let Some(b) = &supp {
        for beta in multi_indices(dim, moments_below, true) {
            let value = g.coeff * g.factors.iter().zip(&beta).map(|(f, &k)| f.moment(k)).product::<f64>();
            let scale = g.coeff.abs()
                * g.factors
                    .iter()
                    .zip(&beta)
                    .zip(b)
                    .map(|((f, &k), &(lo, hi))| f.sup_norm() * (hi - lo) * lo.abs().max(hi.abs()).max(1.0).powi(k as i32))
                    .product::<f64>();
            moments.push(MomentCheck { ok: value.abs() <= CERT_REL_TOL * scale, beta, value });
        }
    }
    let moments_ok = moments.iter().all(|m| m.ok);
    Ok(CertificationReport {
        support_ok,
        required_support_factor: required,
        continuity_defect: defect,
        smooth_ok,
        derivative_bounds,
        moments,
        moments_ok,
        constant,
        passes: support_ok && smooth_ok && moments_ok && constant.is_finite(),
    })
}

/// `d = 0`: `1_K`-atom conditions; `d ≥ 1`: `(s,p)_{K,L}`-atom conditions on `𝒅Q_{dτ}`.
pub fn certify_atom(g: &Separable, spec: &AtomSpec, d: u32, tau: &[i64]) -> Result<CertificationReport> {
    if !(spec.dilation >= 1.0) || !(spec.p > 0.0) {
        return Err(Error::InvalidParams("atoms need 𝒅 ≥ 1 and p > 0".into()));
    }
    let n = g.dim() as f64;
    let df = d as f64;
    if d == 0 {
        certify(g, 0, tau, spec.dilation, spec.k, 0, |_| 1.0)
    } else {
        certify(g, d, tau, spec.dilation, spec.k, spec.l, |a| {
            2f64.powf(-df * (spec.s - n / spec.p) + df * a as f64)
        })
    }
}

/// Kernel conditions: support in `C·Q_{dτ}`, `|D^α k| ≤ 2^{dN+d|α|}` for `|α| ≤ A`,
/// moments below `B` for `d ≥ 1`.
pub fn certify_kernel(g: &Separable, spec: &KernelSpec, d: u32, tau: &[i64]) -> Result<CertificationReport> {
    if !(spec.c > 0.0) {
        return Err(Error::InvalidParams("kernels need C > 0".into()));
    }
    let n = g.dim() as f64;
    let df = d as f64;
    let moments = if d == 0 { 0 } else { spec.b };
    certify(g, d, tau, spec.c, spec.a, moments, |a| 2f64.powf(df * n + df * a as f64))
}

// ---------------------------------------------------------------------------
// equivalence experiment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub f: SeparableSum,
}

/// `f` itself, its translates `f(· − a)`, dilates `f(2^j ·)` and multiples `c·f`.
pub fn test_family(base: &SeparableSum, translates: &[Vec<f64>], dilations: &[u32], scalars: &[f64]) -> Vec<TestFunction> {
    let mut out = vec![TestFunction { id: "base".into(), f: base.clone() }];
    for a in translates {
        let mut f = base.clone();
        for t in &mut f.terms {
            *t = t.shift(a);
        }
        out.push(TestFunction { id: format!("translate{a:?}"), f });
    }
    for &j in dilations {
        let mut f = base.clone();
        let s = 2f64.powi(j as i32);
        for t in &mut f.terms {
            t.factors = t.factors.iter().map(|g| g.affine_arg(s, 0.0)).collect();
        }
        out.push(TestFunction { id: format!("dilate[{j}]"), f });
    }
    for &c in scalars {
        out.push(TestFunction { id: format!("scale[{c}]"), f: base.scaled(c) });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub id: String,
    pub seq_norm: f64,
    pub conv_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceTable {
    pub space: SpaceKind,
    pub depth: u32,
    pub rows: Vec<EquivalenceRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub band: f64,
}

/// Sequence norm of the analysis coefficients against the mollifier norm, per test function.
pub fn equivalence_experiment(
    family: &[TestFunction],
    params: &SpaceParams,
    space: SpaceKind,
    system: &WaveletSystem,
    moll: &MollifierSpec,
    depth: u32,
) -> Result<EquivalenceTable> {
    let required = params.min_order(space);
    if system.n0 < required {
        return Err(Error::OrderTooSmall { order: system.n0, required });
    }
    let rows = family
        .iter()
        .map(|t| {
            let tree = analyze(&t.f, system, depth)?;
            let seq_norm = match space {
                SpaceKind::B => norm_b(&tree, params)?,
                SpaceKind::F => norm_f(&tree, params)?,
            };
            let conv_norm = convolution_norm(&t.f, params, space, moll, depth)?.norm;
            Ok(EquivalenceRow { id: t.id.clone(), seq_norm, conv_norm, ratio: seq_norm / conv_norm })
        })
        .collect::<Result<Vec<_>>>()?;
    let finite: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|r| r.is_finite()).collect();
    let max_ratio = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = finite.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EquivalenceTable { space, depth, rows, max_ratio, min_ratio, band: max_ratio / min_ratio })
}
