//! Sparse coefficient pyramids and the weighted sequence quasi-norms
//! `b^{s,w}_{pq}`, `f^{s,w}_{pq}` and their unscaled variants.
//!
//! Both families use `χ^{(p)}_{dτ} = 2^{dN/p} χ_{Q_{dτ}}` with the level factor
//! `2^{d(s−N/p)}`, so `b = f` whenever `p = q`. The unscaled variants drop the
//! level factor, i.e. they coincide with `s = N/p`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{Cube, SpaceParams, WeightModel};

/// `Q_{dτ} = ∏ [(τ_l − 1/2)/2^d, (τ_l + 1/2)/2^d]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub d: u32,
    pub tau: Vec<i64>,
}

impl DyadicCube {
    pub fn new(d: u32, tau: Vec<i64>) -> Self {
        Self { d, tau }
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-(self.d as i32))
    }

    pub fn center(&self) -> Vec<f64> {
        self.tau.iter().map(|&t| t as f64 * self.side()).collect()
    }

    pub fn geometry(&self) -> Cube {
        Cube::centered(&self.center(), self.side())
    }

    /// Half-open membership `[a, b)` per axis, so the cubes of one level tile ℝ^N.
    pub fn contains(&self, x: &[f64]) -> bool {
        let h = self.side();
        self.tau.iter().zip(x).all(|(&t, &xl)| {
            let a = (t as f64 - 0.5) * h;
            xl >= a && xl < a + h
        })
    }

    /// `𝒅Q`: same centre, side multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Cube {
        Cube::centered(&self.center(), factor * self.side())
    }
}

/// One stored coefficient, also the JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub i: usize,
    pub d: u32,
    pub tau: Vec<i64>,
    pub value: f64,
}

/// Layers keyed by `(i, d)`: `(0, 0)` is the scaling layer, `i ≥ 1` needs `d ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTree {
    pub dim: usize,
    layers: BTreeMap<(usize, u32), BTreeMap<Vec<i64>, f64>>,
}

impl CoefficientTree {
    pub fn new(dim: usize) -> Self {
        Self { dim, layers: BTreeMap::new() }
    }

    fn check(&self, i: usize, d: u32, tau: &[i64], value: f64) -> Result<()> {
        if tau.len() != self.dim {
            return Err(Error::InvalidParams(format!("τ has {} entries, expected {}", tau.len(), self.dim)));
        }
        if i >= 1 << self.dim {
            return Err(Error::InvalidParams(format!("type {i} out of range for N = {}", self.dim)));
        }
        if (i == 0) != (d == 0) {
            return Err(Error::InvalidParams(format!("type {i} cannot sit at level {d}")));
        }
        if !value.is_finite() {
            return Err(Error::InvalidParams(format!("non-finite coefficient at ({i}, {d}, {tau:?})")));
        }
        Ok(())
    }

    /// Stores `value`, replacing any previous entry; zeros are dropped.
    pub fn insert(&mut self, i: usize, d: u32, tau: Vec<i64>, value: f64) -> Result<()> {
        self.check(i, d, &tau, value)?;
        let layer = self.layers.entry((i, d)).or_default();
        if value == 0.0 {
            layer.remove(&tau);
        } else {
            layer.insert(tau, value);
        }
        if layer.is_empty() {
            self.layers.remove(&(i, d));
        }
        Ok(())
    }

    pub fn add(&mut self, i: usize, d: u32, tau: Vec<i64>, value: f64) -> Result<()> {
        let v = self.get(i, d, &tau) + value;
        self.insert(i, d, tau, v)
    }

    pub fn get(&self, i: usize, d: u32, tau: &[i64]) -> f64 {
        self.layers.get(&(i, d)).and_then(|l| l.get(tau)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.layers.values().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Largest level present.
    pub fn depth(&self) -> u32 {
        self.layers.keys().map(|k| k.1).max().unwrap_or(0)
    }

    pub fn layer(&self, i: usize, d: u32) -> impl Iterator<Item = (&Vec<i64>, f64)> {
        self.layers.get(&(i, d)).into_iter().flat_map(|l| l.iter().map(|(t, v)| (t, *v)))
    }

    pub fn layer_keys(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.layers.keys().copied()
    }

    /// All entries in `(i, d, τ)` order.
    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.layers.iter().flat_map(|(&(i, d), l)| {
            l.iter().map(move |(tau, &value)| Entry { i, d, tau: tau.clone(), value })
        })
    }

    pub fn map_values(&self, f: impl Fn(usize, u32, f64) -> f64) -> Self {
        let mut out = Self::new(self.dim);
        for ((i, d), l) in &self.layers {
            for (tau, &v) in l {
                let nv = f(*i, *d, v);
                if nv != 0.0 {
                    out.layers.entry((*i, *d)).or_default().insert(tau.clone(), nv);
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map_values(|_, _, v| c * v)
    }

    /// Keeps entries with `|value| > threshold`.
    pub fn pruned(&self, threshold: f64) -> Self {
        self.map_values(|_, _, v| if v.abs() > threshold { v } else { 0.0 })
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.values().flat_map(|l| l.values()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in self.entries() {
            serde_json::to_writer(&mut out, &e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R, dim: usize) -> Result<Self> {
        let mut tree = Self::new(dim);
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidParams(format!("line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry =
                serde_json::from_str(&line).map_err(|e| Error::InvalidParams(format!("line {}: {e}", n + 1)))?;
            tree.add(e.i, e.d, e.tau, e.value)?;
        }
        Ok(tree)
    }
}

fn check_params(params: &SpaceParams, tree: &CoefficientTree) -> Result<()> {
    if !(params.p > 0.0) {
        return Err(Error::InvalidParams(format!("p must be positive, got {}", params.p)));
    }
    if !(params.q > 0.0) {
        return Err(Error::InvalidParams(format!("q must be positive, got {}", params.q)));
    }
    if params.weight.dim != tree.dim && !tree.is_empty() {
        return Err(Error::InvalidParams(format!("weight on ℝ^{} for a tree on ℝ^{}", params.weight.dim, tree.dim)));
    }
    Ok(())
}

fn cube_masses(w: &WeightModel, cubes: &[DyadicCube]) -> Result<Vec<f64>> {
    cubes.par_iter().map(|c| w.cube_mass(&c.geometry())).collect()
}

/// `(Σ_τ |λ_τ|^p 2^{dN} w(Q_{dτ}))^{1/p}`, the weighted `L_p` norm of `Σ|λ_τ|χ^{(p)}_{dτ}`.
fn layer_lp(tree: &CoefficientTree, i: usize, d: u32, w: &WeightModel, p: f64) -> Result<f64> {
    let (taus, vals): (Vec<DyadicCube>, Vec<f64>) =
        tree.layer(i, d).map(|(t, v)| (DyadicCube::new(d, t.clone()), v.abs())).unzip();
    if p.is_infinite() {
        return Ok(vals.iter().fold(0.0, |m: f64, v| m.max(*v)));
    }
    let masses = cube_masses(w, &taus)?;
    let scale = 2f64.powf(d as f64 * tree.dim as f64);
    let sum: f64 = vals.iter().zip(&masses).map(|(v, m)| v.powf(p) * scale * m).sum();
    Ok(sum.powf(1.0 / p))
}

fn lq(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `‖λ‖_{b^{s,w}_{pq}}`.
pub fn norm_b(tree: &CoefficientTree, params: &SpaceParams) -> Result<f64> {
    check_params(params, tree)?;
    if params.p.is_infinite() {
        return Err(Error::InvalidParams("b-spaces need p < ∞".into()));
    }
    let (p, n) = (params.p, tree.dim as f64);
    let head = layer_lp(tree, 0, 0, &params.weight, p)?;
    let mut blocks = Vec::new();
    for (i, d) in tree.layer_keys().filter(|k| k.1 >= 1) {
        let factor = 2f64.powf(d as f64 * (params.s - n / p));
        blocks.push(factor * layer_lp(tree, i, d, &params.weight, p)?);
    }
    Ok(head + lq(blocks.into_iter(), params.q))
}

/// `‖𝛌‖_{𝒃^w_{pq}}`.
pub fn norm_bold_b(tree: &CoefficientTree, params: &SpaceParams) -> Result<f64> {
    norm_b(tree, &params.with_s(tree.dim as f64 / params.p))
}

/// `‖𝛌‖_{𝒇^w_{pq}}`.
pub fn norm_bold_f(tree: &CoefficientTree, params: &SpaceParams) -> Result<f64> {
    let s = if params.p.is_infinite() { 0.0 } else { tree.dim as f64 / params.p };
    norm_f(tree, &params.with_s(s))
}

/// `‖λ‖_{f^{s,w}_{pq}}`: the level-0 block plus the weighted `L_p` norm of the pointwise
/// `ℓ_q` sum of `2^{d(s−N/p)} |λ_{idτ}| χ^{(p)}_{dτ}` over `d ≥ 1`.
///
/// Boundaries of all cubes up to level `D` lie on the grid `2^{−(D+1)} ℤ`, and `Q_{dτ}` is
/// the union of the aligned boxes `∏ {2τ_l − 1, 2τ_l}` of level `d + 1`. The integrand is
/// constant on aligned boxes without finer entries, which a tree walk exploits.
pub fn norm_f(tree: &CoefficientTree, params: &SpaceParams) -> Result<f64> {
    check_params(params, tree)?;
    let (p, q, n) = (params.p, params.q, tree.dim as f64);
    if p.is_infinite() && !q.is_infinite() {
        return Err(Error::InvalidParams("f-spaces with p = ∞ need q = ∞".into()));
    }
    let head = layer_lp(tree, 0, 0, &params.weight, p)?;
    // contribution of each entry to its aligned boxes: a^q (or a for q = ∞)
    let mut own: HashMap<(u32, Vec<i64>), f64> = HashMap::new();
    let mut has_children: HashSet<(u32, Vec<i64>)> = HashSet::new();
    let mut top = u32::MAX;
    for e in tree.entries().filter(|e| e.d >= 1) {
        let level_factor = if p.is_infinite() {
            2f64.powf(e.d as f64 * params.s)
        } else {
            2f64.powf(e.d as f64 * (params.s - n / p) + e.d as f64 * n / p)
        };
        let a = level_factor * e.value.abs();
        let contrib = if q.is_infinite() { a } else { a.powf(q) };
        let k = e.d + 1;
        top = top.min(k);
        let mut corner = vec![0usize; tree.dim];
        loop {
            let j: Vec<i64> = e.tau.iter().zip(&corner).map(|(&t, &c)| 2 * t - 1 + c as i64).collect();
            let slot = own.entry((k, j.clone())).or_insert(0.0);
            *slot = if q.is_infinite() { slot.max(contrib) } else { *slot + contrib };
            // mark ancestors
            let mut anc = j;
            let mut level = k;
            while level > 1 {
                anc = anc.iter().map(|v| v.div_euclid(2)).collect();
                level -= 1;
                if !has_children.insert((level, anc.clone())) {
                    break;
                }
            }
            if !crate::tensor::advance(&mut corner, &vec![2; tree.dim]) {
                break;
            }
        }
    }
    if own.is_empty() {
        return Ok(head);
    }
    // roots: aligned boxes of level `top` that carry entries or descendants
    let mut roots: Vec<Vec<i64>> = own
        .keys()
        .chain(has_children.iter())
        .filter(|(l, _)| *l == top)
        .map(|(_, j)| j.clone())
        .collect();
    roots.sort();
    roots.dedup();
    let walker = Walker { own: &own, has_children: &has_children, w: &params.weight, p, q, dim: tree.dim };
    let parts: Vec<Result<f64>> = roots.par_iter().map(|j| walker.visit(top, j.clone(), 0.0)).collect();
    let mut body: f64 = 0.0;
    for part in parts {
        let v = part?;
        body = if p.is_infinite() { body.max(v) } else { body + v };
    }
    let body = if p.is_infinite() { body } else { body.powf(1.0 / p) };
    Ok(head + body)
}

struct Walker<'a> {
    own: &'a HashMap<(u32, Vec<i64>), f64>,
    has_children: &'a HashSet<(u32, Vec<i64>)>,
    w: &'a WeightModel,
    p: f64,
    q: f64,
    dim: usize,
}

impl Walker<'_> {
    /// Integral of `F^p w` over the aligned box `(k, j)`, where `acc` aggregates the
    /// contributions of coarser cubes containing it (`ess sup F` when `p = ∞`).
    fn visit(&self, k: u32, j: Vec<i64>, acc: f64) -> Result<f64> {
        let own = self.own.get(&(k, j.clone())).copied().unwrap_or(0.0);
        let acc = if self.q.is_infinite() { acc.max(own) } else { acc + own };
        if self.has_children.contains(&(k, j.clone())) {
            let mut total: f64 = 0.0;
            let mut corner = vec![0usize; self.dim];
            loop {
                let child: Vec<i64> = j.iter().zip(&corner).map(|(&v, &c)| 2 * v + c as i64).collect();
                let v = self.visit(k + 1, child, acc)?;
                total = if self.p.is_infinite() { total.max(v) } else { total + v };
                if !crate::tensor::advance(&mut corner, &vec![2; self.dim]) {
                    break;
                }
            }
            return Ok(total);
        }
        if acc == 0.0 {
            return Ok(0.0);
        }
        let f = if self.q.is_infinite() { acc } else { acc.powf(1.0 / self.q) };
        if self.p.is_infinite() {
            return Ok(f);
        }
        let h = 2f64.powi(-(k as i32));
        let cube = Cube::new(j.iter().map(|&v| v as f64 * h).collect(), h);
        Ok(f.powf(self.p) * self.w.cube_mass(&cube)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleDirection {
    ToBold,
    FromBold,
}

/// `𝛌_{idτ} = 2^{d𝛔} λ_{idτ}` with `𝛔 = s − N/p` (b-mode) or `𝛔 = s` (f-mode); level 0 untouched.
///
/// In f-mode the unscaled norm of the image equals the f-norm built with the literal
/// `2^{ds} χ^{(p)}` factor, which is `2^{dN/p}` larger per level than [`norm_f`].
pub fn rescale(
    tree: &CoefficientTree,
    params: &SpaceParams,
    space: crate::weights::SpaceKind,
    direction: RescaleDirection,
) -> CoefficientTree {
    let sigma = match space {
        crate::weights::SpaceKind::B => params.s - tree.dim as f64 / params.p,
        crate::weights::SpaceKind::F => params.s,
    };
    let sign = match direction {
        RescaleDirection::ToBold => 1.0,
        RescaleDirection::FromBold => -1.0,
    };
    tree.map_values(|_, d, v| if d == 0 { v } else { 2f64.powf(sign * d as f64 * sigma) * v })
}
