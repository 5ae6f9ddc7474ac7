//! Weight models, Muckenhoupt quotients over finite cube families, `𝐫_0`,
//! the σ-parameters and the minimal system order.
//!
//! Every model is radial: `w(x) = c · b(|x|)^e` with a base profile `b`. The
//! exponent `e` lets the same machinery handle `w^{1−p′}` and dual weights.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Constant,
    /// `|x|^α`.
    Power { alpha: f64 },
    /// `|x|^α` for `|x| ≤ 1`, `exp(rate·(|x| − 1))` outside.
    Hybrid { alpha: f64, rate: f64 },
    /// Radial profile, linear interpolation, constant beyond the ends.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub kind: WeightKind,
    pub dim: usize,
    pub scale: f64,
    pub exponent: f64,
}

/// Axis-parallel cube `∏ [lower_l, lower_l + side]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lower: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(lower: Vec<f64>, side: f64) -> Self {
        Self { lower, side }
    }

    pub fn centered(center: &[f64], side: f64) -> Self {
        Self { lower: center.iter().map(|c| c - side / 2.0).collect(), side }
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower.iter().map(|l| l + self.side).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.lower.len() as i32)
    }

    fn distance_range(&self) -> (f64, f64) {
        let (mut near, mut far) = (0.0, 0.0);
        for &l in &self.lower {
            let h = l + self.side;
            let n = if l > 0.0 {
                l
            } else if h < 0.0 {
                -h
            } else {
                0.0
            };
            near += n * n;
            far += l.abs().max(h.abs()).powi(2);
        }
        (near.sqrt(), far.sqrt())
    }
}

impl WeightModel {
    pub fn constant(c: f64, dim: usize) -> Self {
        Self { kind: WeightKind::Constant, dim, scale: c, exponent: 1.0 }
    }

    pub fn power(alpha: f64, dim: usize) -> Self {
        Self { kind: WeightKind::Power { alpha }, dim, scale: 1.0, exponent: 1.0 }
    }

    pub fn hybrid(alpha: f64, dim: usize) -> Self {
        Self { kind: WeightKind::Hybrid { alpha, rate: 1.0 }, dim, scale: 1.0, exponent: 1.0 }
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if radii.len() != values.len() || radii.is_empty() {
            return Err(Error::InvalidWeightSpec("table needs matching, nonempty columns".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidWeightSpec("table radii must be nonnegative and increasing".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidWeightSpec("table values must be positive".into()));
        }
        Ok(Self { kind: WeightKind::Tabulated { radii, values }, dim, scale: 1.0, exponent: 1.0 })
    }

    /// Parses `constant:c=1`, `power:alpha=0.5`, `hybrid:alpha=0.5[,rate=1]` or `table:file=path`.
    /// Any kind accepts an extra `c=` multiplier.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let bad = |m: &str| Error::InvalidWeightSpec(format!("{spec}: {m}"));
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut params = std::collections::BTreeMap::new();
        for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str, default: Option<f64>| -> Result<f64> {
            match params.get(k) {
                Some(v) => v.parse::<f64>().map_err(|_| bad(&format!("{k} is not a number"))),
                None => default.ok_or_else(|| bad(&format!("missing {k}"))),
            }
        };
        let mut model = match kind.trim() {
            "constant" => Self::constant(1.0, dim),
            "power" => Self::power(num("alpha", None)?, dim),
            "hybrid" => {
                let mut m = Self::hybrid(num("alpha", None)?, dim);
                m.kind = WeightKind::Hybrid { alpha: num("alpha", None)?, rate: num("rate", Some(1.0))? };
                m
            }
            "table" => {
                let file = params.get("file").ok_or_else(|| bad("missing file"))?;
                Self::from_table_file(Path::new(file), dim)?
            }
            other => return Err(bad(&format!("unknown kind {other:?}"))),
        };
        let c = num("c", Some(1.0))?;
        if !(c > 0.0) || !c.is_finite() {
            return Err(bad("c must be positive"));
        }
        model.scale = c;
        for key in params.keys() {
            let known: &[&str] = match kind.trim() {
                "constant" => &["c"],
                "power" => &["alpha", "c"],
                "hybrid" => &["alpha", "rate", "c"],
                _ => &["file", "c"],
            };
            if !known.contains(&key.as_str()) {
                return Err(bad(&format!("unknown parameter {key}")));
            }
        }
        if dim == 0 {
            return Err(bad("dimension must be positive"));
        }
        Ok(model)
    }

    /// Two columns `radius value`, separated by commas or whitespace; `#` starts a comment.
    pub fn from_table_file(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidWeightSpec(format!("{}: {e}", path.display())))?;
        let (mut radii, mut values) = (Vec::new(), Vec::new());
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidWeightSpec(format!("bad number {s:?}")));
            if cols.len() != 2 {
                return Err(Error::InvalidWeightSpec(format!("expected two columns in {line:?}")));
            }
            radii.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::tabulated(radii, values, dim)
    }

    /// `c^e' · b^{e·e'}`, i.e. `w^{e'}`.
    pub fn powf(&self, e: f64) -> Self {
        Self { kind: self.kind.clone(), dim: self.dim, scale: self.scale.powf(e), exponent: self.exponent * e }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { scale: self.scale * c, ..self.clone() }
    }

    fn unscaled(&self) -> Self {
        Self { scale: 1.0, ..self.clone() }
    }

    /// `b(r)`.
    fn base(&self, r: f64) -> f64 {
        match &self.kind {
            WeightKind::Constant => 1.0,
            WeightKind::Power { alpha } => r.powf(*alpha),
            WeightKind::Hybrid { alpha, rate } => {
                if r <= 1.0 {
                    r.powf(*alpha)
                } else {
                    (rate * (r - 1.0)).exp()
                }
            }
            WeightKind::Tabulated { radii, values } => interpolate(radii, values, r),
        }
    }

    /// `w` as a function of `|x|`.
    pub fn radial(&self, r: f64) -> f64 {
        let b = self.base(r);
        self.scale * if self.exponent == 1.0 { b } else { b.powf(self.exponent) }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.radial(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Power-type singular exponent at the origin (`None` when bounded near 0).
    pub(crate) fn origin_exponent(&self) -> Option<f64> {
        match &self.kind {
            WeightKind::Power { alpha } | WeightKind::Hybrid { alpha, .. } => Some(alpha * self.exponent),
            _ => None,
        }
    }

    /// `α > −N` for power-type kinds.
    pub fn is_locally_integrable(&self) -> bool {
        self.origin_exponent().map_or(true, |a| a > -(self.dim as f64))
    }

    /// `w(Q) = ∫_Q w`.
    pub fn cube_mass(&self, q: &Cube) -> Result<f64> {
        if q.lower.len() != self.dim {
            return Err(Error::InvalidParams(format!("cube of dimension {} for a weight on ℝ^{}", q.lower.len(), self.dim)));
        }
        let m = if let WeightKind::Constant = self.kind {
            q.volume()
        } else if self.dim == 1 && !matches!(self.kind, WeightKind::Tabulated { .. }) {
            self.mass_1d(q.lower[0], q.lower[0] + q.side)?
        } else {
            self.mass_nd(&q.lower, &q.upper())?
        };
        Ok(self.scale * m)
    }

    fn non_integrable(&self, lo: f64, hi: f64) -> Error {
        Error::NonIntegrable(format!("{:?} with exponent {} near the origin on [{lo}, {hi}]", self.kind, self.exponent))
    }

    /// Closed forms for power and hybrid kinds on an interval (unscaled).
    fn mass_1d(&self, lo: f64, hi: f64) -> Result<f64> {
        match &self.kind {
            WeightKind::Power { alpha } => power_integral(lo, hi, alpha * self.exponent).ok_or_else(|| self.non_integrable(lo, hi)),
            WeightKind::Hybrid { alpha, rate } => {
                let a = alpha * self.exponent;
                let k = rate * self.exponent;
                let (il, ih) = (lo.max(-1.0), hi.min(1.0));
                let mut total = 0.0;
                if il < ih {
                    total += power_integral(il, ih, a).ok_or_else(|| self.non_integrable(lo, hi))?;
                }
                if hi > 1.0 {
                    total += exp_integral(lo.max(1.0), hi, k);
                }
                if lo < -1.0 {
                    total += exp_integral(1.0f64.max(-hi), -lo, k);
                }
                Ok(total)
            }
            _ => unreachable!("handled by the caller"),
        }
    }

    fn mass_nd(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let n = self.dim as f64;
        let unit = self.unscaled();
        let profile = |r: f64| unit.radial(r);
        let kinks = match &self.kind {
            WeightKind::Hybrid { .. } => vec![1.0],
            WeightKind::Tabulated { radii, .. } => radii.clone(),
            _ => Vec::new(),
        };
        let quad = RadialIntegrator { radial: &profile, kinks };
        let contains_origin = lo.iter().zip(hi).all(|(l, h)| *l <= 0.0 && *h >= 0.0);
        let Some(a) = self.origin_exponent().filter(|_| contains_origin) else {
            return quad.integrate(lo, hi);
        };
        if a <= -n {
            return Err(self.non_integrable(lo[0], hi[0]));
        }
        let far = lo.iter().zip(hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt();
        if matches!(self.kind, WeightKind::Power { .. }) || far <= 1.0 {
            return self_similar(&quad, lo, hi, n + a);
        }
        // hybrid: the power core sits inside [−ε, ε]^N ⊂ unit ball
        let eps = 0.5 / n.sqrt();
        let cuts: Vec<Vec<f64>> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| {
                let mut c = vec![l];
                c.extend([-eps, eps].into_iter().filter(|&v| v > l && v < h));
                c.push(h);
                c
            })
            .collect();
        let mut total = 0.0;
        for_each_subbox(&cuts, |blo, bhi| {
            let inner = blo.iter().zip(bhi).all(|(l, h)| *l <= 0.0 && *h >= 0.0);
            total += if inner { self_similar(&quad, blo, bhi, n + a)? } else { quad.integrate(blo, bhi)? };
            Ok(())
        })?;
        Ok(total)
    }

    /// `ess inf_Q w`, from the radial profile at the extreme distances (and at `r = 1`
    /// or the table nodes where the profile may turn).
    pub fn ess_inf(&self, q: &Cube) -> f64 {
        let (near, far) = q.distance_range();
        let mut candidates = vec![near, far];
        match &self.kind {
            WeightKind::Hybrid { .. } if near < 1.0 && far > 1.0 => candidates.push(1.0),
            WeightKind::Tabulated { radii, .. } => candidates.extend(radii.iter().filter(|r| **r > near && **r < far)),
            _ => {}
        }
        candidates.into_iter().map(|r| self.radial(r)).fold(f64::INFINITY, f64::min)
    }
}

fn interpolate(radii: &[f64], values: &[f64], r: f64) -> f64 {
    if r <= radii[0] {
        return values[0];
    }
    let last = radii.len() - 1;
    if r >= radii[last] {
        return values[last];
    }
    let i = radii.partition_point(|&x| x <= r) - 1;
    let t = (r - radii[i]) / (radii[i + 1] - radii[i]);
    values[i] + t * (values[i + 1] - values[i])
}

/// `∫_lo^hi |x|^a dx`, `None` when divergent.
fn power_integral(lo: f64, hi: f64, a: f64) -> Option<f64> {
    if lo <= 0.0 && hi >= 0.0 {
        if a <= -1.0 {
            return None;
        }
        return Some(((-lo).powf(a + 1.0) + hi.powf(a + 1.0)) / (a + 1.0));
    }
    let (u0, u1) = if lo > 0.0 { (lo, hi) } else { (-hi, -lo) };
    // u0^{a+1}((u1/u0)^{a+1} − 1)/(a+1) without cancellation
    let growth = ((u1 - u0) / u0).ln_1p();
    Some(if a == -1.0 {
        growth
    } else {
        u0.powf(a + 1.0) * ((a + 1.0) * growth).exp_m1() / (a + 1.0)
    })
}

/// `∫_{u0}^{u1} exp(k(u − 1)) du` for `1 ≤ u0 ≤ u1`.
fn exp_integral(u0: f64, u1: f64, k: f64) -> f64 {
    if u1 <= u0 {
        return 0.0;
    }
    if k == 0.0 {
        return u1 - u0;
    }
    (k * (u0 - 1.0)).exp() * (k * (u1 - u0)).exp_m1() / k
}

const GAUSS_NODES: usize = 8;
const ADAPTIVE_RTOL: f64 = 1e-10;
const ADAPTIVE_MAX_DEPTH: usize = 50;
const ADAPTIVE_BUDGET: usize = 20_000_000;

/// Iterated adaptive Gauss quadrature of a radial profile over a box.
///
/// Each axis is split where the profile may lose smoothness: at 0 and where the
/// sphere `|x| = ρ` of every kink radius `ρ` crosses the remaining line.
pub(crate) struct RadialIntegrator<'a> {
    pub radial: &'a dyn Fn(f64) -> f64,
    pub kinks: Vec<f64>,
}

impl RadialIntegrator<'_> {
    pub fn integrate(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let mut budget = ADAPTIVE_BUDGET;
        self.axis(lo, hi, 0, 0.0, ADAPTIVE_RTOL, &mut budget)
    }

    fn axis(&self, lo: &[f64], hi: &[f64], axis: usize, sumsq: f64, rtol: f64, budget: &mut usize) -> Result<f64> {
        let (a, b) = (lo[axis], hi[axis]);
        let mut cuts = vec![a, b];
        if a < 0.0 && b > 0.0 {
            cuts.push(0.0);
        }
        for &rho in &self.kinks {
            let rest = rho * rho - sumsq;
            if rest > 0.0 {
                let t = rest.sqrt();
                cuts.extend([-t, t].into_iter().filter(|&v| v > a && v < b));
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let last = axis + 1 == lo.len();
        let mut g = |x: f64, budget: &mut usize| -> Result<f64> {
            let s2 = sumsq + x * x;
            if last {
                Ok((self.radial)(s2.sqrt()))
            } else {
                // inner integrals an order of magnitude tighter than the outer one
                self.axis(lo, hi, axis + 1, s2, rtol * 0.1, budget)
            }
        };
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += adaptive_1d(&mut g, w[0], w[1], rtol, budget)?;
        }
        Ok(total)
    }
}

fn gauss_1d(g: &mut dyn FnMut(f64, &mut usize) -> Result<f64>, a: f64, b: f64, budget: &mut usize) -> Result<f64> {
    let (x, w) = quadrature::gauss_legendre(GAUSS_NODES);
    if *budget < GAUSS_NODES {
        return Err(Error::QuadratureBudgetExceeded(format!("iterated rule on [{a}, {b}]")));
    }
    *budget -= GAUSS_NODES;
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        total += wi * g(c + h * xi, budget)?;
    }
    Ok(total * h)
}

fn adaptive_1d(g: &mut dyn FnMut(f64, &mut usize) -> Result<f64>, a: f64, b: f64, rtol: f64, budget: &mut usize) -> Result<f64> {
    let coarse = gauss_1d(g, a, b, budget)?;
    adaptive_1d_rec(g, a, b, coarse, rtol * coarse.abs(), 0, budget)
}

fn adaptive_1d_rec(
    g: &mut dyn FnMut(f64, &mut usize) -> Result<f64>,
    a: f64,
    b: f64,
    coarse: f64,
    tol: f64,
    depth: usize,
    budget: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = gauss_1d(g, a, m, budget)?;
    let right = gauss_1d(g, m, b, budget)?;
    let fine = left + right;
    if (fine - coarse).abs() <= tol.max(1e-15 * fine.abs()) || depth >= ADAPTIVE_MAX_DEPTH {
        return Ok(fine);
    }
    Ok(adaptive_1d_rec(g, a, m, left, tol / 2.0, depth + 1, budget)?
        + adaptive_1d_rec(g, m, b, right, tol / 2.0, depth + 1, budget)?)
}

fn for_each_subbox(cuts: &[Vec<f64>], mut visit: impl FnMut(&[f64], &[f64]) -> Result<()>) -> Result<()> {
    let sizes: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
    let mut idx = vec![0usize; cuts.len()];
    loop {
        let lo: Vec<f64> = idx.iter().enumerate().map(|(l, &i)| cuts[l][i]).collect();
        let hi: Vec<f64> = idx.iter().enumerate().map(|(l, &i)| cuts[l][i + 1]).collect();
        if lo.iter().zip(&hi).all(|(a, b)| b > a) {
            visit(&lo, &hi)?;
        }
        if !crate::tensor::advance(&mut idx, &sizes) {
            return Ok(());
        }
    }
}

/// For `f` homogeneous of degree `a` and a box `B ∋ 0`: `∫_B = ∫_{B∖B/2} / (1 − 2^{−(N+a)})`.
fn self_similar(quad: &RadialIntegrator, lo: &[f64], hi: &[f64], homogeneity: f64) -> Result<f64> {
    let cuts: Vec<Vec<f64>> = lo.iter().zip(hi).map(|(&l, &h)| vec![l, l / 2.0, h / 2.0, h]).collect();
    let mut ring = 0.0;
    let sizes = vec![3usize; lo.len()];
    let mut idx = vec![0usize; lo.len()];
    loop {
        if idx.iter().any(|&i| i != 1) {
            let blo: Vec<f64> = idx.iter().enumerate().map(|(l, &i)| cuts[l][i]).collect();
            let bhi: Vec<f64> = idx.iter().enumerate().map(|(l, &i)| cuts[l][i + 1]).collect();
            if blo.iter().zip(&bhi).all(|(a, b)| b > a) {
                ring += quad.integrate(&blo, &bhi)?;
            }
        }
        if !crate::tensor::advance(&mut idx, &sizes) {
            break;
        }
    }
    Ok(ring / (1.0 - 2f64.powf(-homogeneity)))
}

/// The Muckenhoupt quotient of one cube: `avg(w)·avg(w^{−1/(p−1)})^{p−1}` for `p > 1`,
/// `avg(w)/ess inf w` for `p = 1`. `+∞` when a factor diverges.
pub fn cube_quotient(w: &WeightModel, p: f64, q: &Cube) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("Muckenhoupt quotients need p ≥ 1, got {p}")));
    }
    // the quotient is invariant under w ↦ c·w, so drop c for exactness
    let w = w.unscaled();
    let vol = q.volume();
    let avg = match w.cube_mass(q) {
        Ok(m) => m / vol,
        Err(Error::NonIntegrable(_)) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    if p == 1.0 {
        let inf = w.ess_inf(q);
        return Ok(if inf > 0.0 { avg / inf } else { f64::INFINITY });
    }
    let dual = w.powf(-1.0 / (p - 1.0));
    match dual.cube_mass(q) {
        Ok(m) => Ok(avg * (m / vol).powf(p - 1.0)),
        Err(Error::NonIntegrable(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Finite cube family refined in stages.
///
/// Stage `s = 1..=stages` holds the cubes of side `2^{−j}`, `j ≤ min(bits·s, max_level)`,
/// with corners on the lattice `2^{−bits·s} ℤ^N`, inside `[−box_radius, box_radius]^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    pub box_radius: f64,
    pub stage_bits: u32,
    pub stages: u32,
    pub max_level: u32,
    /// Largest side exponent `K` used when enlarging to cubes of side `2^1..2^K`.
    pub global_levels: u32,
}

impl CubeFamily {
    pub fn default_for(dim: usize) -> Self {
        match dim {
            1 => Self { box_radius: 8.0, stage_bits: 4, stages: 3, max_level: 12, global_levels: 5 },
            2 => Self { box_radius: 2.0, stage_bits: 1, stages: 3, max_level: 3, global_levels: 4 },
            _ => Self { box_radius: 1.0, stage_bits: 1, stages: 3, max_level: 3, global_levels: 3 },
        }
    }

    fn granularity_exp(&self, stage: u32) -> u32 {
        self.stage_bits * stage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Divergent,
    Undecided,
}

/// Relative change below which an estimate counts as stabilized.
pub const STABLE_CHANGE: f64 = 0.02;
/// Growth factor from which an estimate counts as divergent.
pub const DIVERGENT_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u32,
    /// Lattice spacing (local) or largest side (global).
    pub resolution: f64,
    pub cubes: usize,
    /// Cubes with a divergent factor; they are excluded from `constant`.
    pub infinite_cubes: usize,
    pub constant: f64,
    pub argmax: Option<Cube>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApEstimate {
    pub p: f64,
    pub constant: f64,
    pub argmax_cube: Option<Cube>,
    pub refinement_trace: Vec<StageRecord>,
    pub verdict: Verdict,
}

fn classify(trace: &[StageRecord]) -> Verdict {
    let Some(last) = trace.last() else {
        return Verdict::Undecided;
    };
    if last.infinite_cubes > 0 || !last.constant.is_finite() {
        return Verdict::Divergent;
    }
    if trace.len() < 2 {
        return Verdict::Undecided;
    }
    let prev = trace[trace.len() - 2].constant;
    if last.constant >= DIVERGENT_GROWTH * prev {
        Verdict::Divergent
    } else if (last.constant - prev).abs() < STABLE_CHANGE * prev {
        Verdict::Stable
    } else {
        Verdict::Undecided
    }
}

/// `(stage, quotient, cube)` maximizer with deterministic tie-breaking by enumeration index.
#[derive(Clone)]
struct Best {
    q: f64,
    idx: usize,
    infinite: usize,
    count: usize,
}

impl Best {
    fn empty() -> Self {
        Self { q: f64::NEG_INFINITY, idx: usize::MAX, infinite: 0, count: 0 }
    }

    fn merge(mut self, o: &Best) -> Self {
        if o.q > self.q || (o.q == self.q && o.idx < self.idx) {
            self.q = o.q;
            self.idx = o.idx;
        }
        self.infinite += o.infinite;
        self.count += o.count;
        self
    }
}

/// Evaluates `quotient` on a list of `(group, cube)` and returns per-group maxima.
fn grouped_maxima(
    cubes: &[(usize, Cube)],
    groups: usize,
    quotient: &(dyn Fn(&Cube) -> Result<f64> + Sync),
) -> Result<Vec<Best>> {
    let results: Vec<Result<(usize, usize, f64)>> = cubes
        .par_iter()
        .enumerate()
        .map(|(i, (g, c))| quotient(c).map(|q| (*g, i, q)))
        .collect();
    let mut best = vec![Best::empty(); groups];
    for r in results {
        let (g, i, q) = r?;
        let b = &mut best[g];
        b.count += 1;
        if q.is_infinite() {
            b.infinite += 1;
        } else if q > b.q || (q == b.q && i < b.idx) {
            b.q = q;
            b.idx = i;
        }
    }
    Ok(best)
}

/// All cubes of the finest stage, tagged with the coarsest stage containing them (0-based).
fn local_cubes(dim: usize, fam: &CubeFamily) -> Vec<(usize, Cube)> {
    let fine_exp = fam.granularity_exp(fam.stages);
    let g = 2f64.powi(-(fine_exp as i32));
    let r = fam.box_radius;
    let max_j = fam.max_level.min(fine_exp);
    let mut out = Vec::new();
    for j in 0..=max_j {
        let side = 2f64.powi(-(j as i32));
        if side > 2.0 * r {
            continue;
        }
        // corners k·g with −r ≤ k·g and k·g + side ≤ r
        let kmin = (-r / g).ceil() as i64;
        let kmax = ((r - side) / g).floor() as i64;
        if kmax < kmin {
            continue;
        }
        let count = (kmax - kmin + 1) as usize;
        let stage_of_side = (j.div_ceil(fam.stage_bits)).max(1);
        let mut idx = vec![0usize; dim];
        let sizes = vec![count; dim];
        loop {
            let ks: Vec<i64> = idx.iter().map(|&i| kmin + i as i64).collect();
            // corner k·g lies on the stage-s lattice iff 2^{bits(S−s)} divides k
            let stage_of_corner = ks
                .iter()
                .map(|&k| {
                    let tz = if k == 0 { fine_exp } else { k.trailing_zeros().min(fine_exp) };
                    fam.stages - tz / fam.stage_bits
                })
                .max()
                .unwrap_or(1)
                .max(1);
            let stage = stage_of_side.max(stage_of_corner);
            out.push(((stage - 1) as usize, Cube::new(ks.iter().map(|&k| k as f64 * g).collect(), side)));
            if !crate::tensor::advance(&mut idx, &sizes) {
                break;
            }
        }
    }
    out
}

fn cumulative_trace(best: Vec<Best>, cubes: &[(usize, Cube)], resolution: impl Fn(u32) -> f64) -> Vec<StageRecord> {
    let mut acc = Best::empty();
    best.iter()
        .enumerate()
        .map(|(s, b)| {
            acc = acc.clone().merge(b);
            StageRecord {
                stage: s as u32 + 1,
                resolution: resolution(s as u32 + 1),
                cubes: acc.count,
                infinite_cubes: acc.infinite,
                constant: if acc.q.is_finite() { acc.q } else { f64::INFINITY },
                argmax: cubes.get(acc.idx).map(|c| c.1.clone()),
            }
        })
        .collect()
}

fn check_p(w: &WeightModel, p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParams(format!("Muckenhoupt classes need 1 ≤ p < ∞, got {p}")));
    }
    if w.dim == 0 {
        return Err(Error::InvalidParams("weight dimension must be positive".into()));
    }
    Ok(())
}

/// Lower-bound estimate of the local constant (cubes with `|Q| ≤ 1`).
pub fn ap_local_constant(w: &WeightModel, p: f64, fam: &CubeFamily) -> Result<ApEstimate> {
    check_p(w, p)?;
    let cubes = local_cubes(w.dim, fam);
    let best = grouped_maxima(&cubes, fam.stages as usize, &|c| cube_quotient(w, p, c))?;
    let trace = cumulative_trace(best, &cubes, |s| 2f64.powi(-(fam.granularity_exp(s) as i32)));
    Ok(finish(p, trace))
}

fn finish(p: f64, trace: Vec<StageRecord>) -> ApEstimate {
    let verdict = classify(&trace);
    let last = trace.last().cloned();
    ApEstimate {
        p,
        constant: last.as_ref().map_or(f64::NAN, |l| l.constant),
        argmax_cube: last.and_then(|l| l.argmax),
        refinement_trace: trace,
        verdict,
    }
}

/// Same quotient over cubes of all sizes: the local family, then sides `2^1..2^K` with
/// corners on `(side/4)ℤ^N` inside `[−R_k, R_k]^N`, `R_k = max(R, 2^k)`.
pub fn ap_global_constant(w: &WeightModel, p: f64, fam: &CubeFamily) -> Result<ApEstimate> {
    let local = ap_local_constant(w, p, fam)?;
    let base = local.refinement_trace.last().cloned().expect("local family is nonempty");
    let mut cubes: Vec<(usize, Cube)> = Vec::new();
    for k in 1..=fam.global_levels {
        let side = 2f64.powi(k as i32);
        let radius = fam.box_radius.max(side);
        let step = side / 4.0;
        let kmin = (-radius / step).ceil() as i64;
        let kmax = ((radius - side) / step).floor() as i64;
        let count = (kmax - kmin + 1).max(0) as usize;
        if count == 0 {
            continue;
        }
        let mut idx = vec![0usize; w.dim];
        let sizes = vec![count; w.dim];
        loop {
            let lower = idx.iter().map(|&i| (kmin + i as i64) as f64 * step).collect();
            cubes.push(((k - 1) as usize, Cube::new(lower, side)));
            if !crate::tensor::advance(&mut idx, &sizes) {
                break;
            }
        }
    }
    let best = grouped_maxima(&cubes, fam.global_levels as usize, &|c| cube_quotient(w, p, c))?;
    let mut acc = Best { q: base.constant, idx: usize::MAX, infinite: base.infinite_cubes, count: base.cubes };
    let mut trace = vec![StageRecord { stage: 0, resolution: 1.0, ..base.clone() }];
    let mut argmax = base.argmax.clone();
    for (k, b) in best.iter().enumerate() {
        let before = acc.q;
        acc = acc.merge(b);
        if acc.q > before {
            argmax = cubes.get(acc.idx).map(|c| c.1.clone());
        }
        trace.push(StageRecord {
            stage: k as u32 + 1,
            resolution: 2f64.powi(k as i32 + 1),
            cubes: acc.count,
            infinite_cubes: acc.infinite,
            constant: acc.q,
            argmax: argmax.clone(),
        });
    }
    Ok(finish(p, trace))
}

/// Whether `w ∈ 𝒜_p^loc` according to the family (anything not divergent counts as bounded).
pub fn locally_bounded(w: &WeightModel, p: f64, fam: &CubeFamily) -> Result<bool> {
    Ok(ap_local_constant(w, p, fam)?.verdict != Verdict::Divergent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Estimate {
    pub r0: f64,
    /// `(p, bounded)` for every classified exponent, in evaluation order.
    pub classified: Vec<(f64, bool)>,
    /// `max(1, 1 + α/N)` for power weights.
    pub analytic: Option<f64>,
}

/// Bisection tolerance on `r`.
pub const R0_TOL: f64 = 1e-3;

/// `𝐫_0 = inf{r ≥ 1 : w ∈ 𝒜_r^loc}`: classify the grid, then bisect between the last
/// divergent and the first bounded exponent.
pub fn r0_estimate(w: &WeightModel, p_grid: &[f64], fam: &CubeFamily) -> Result<R0Estimate> {
    let mut grid: Vec<f64> = p_grid.to_vec();
    if grid.is_empty() || grid.iter().any(|p| !(*p >= 1.0) || !p.is_finite()) {
        return Err(Error::InvalidParams("p grid must be nonempty with entries in [1, ∞)".into()));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut classified = Vec::new();
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    for &p in &grid {
        let b = locally_bounded(w, p, fam)?;
        classified.push((p, b));
        if b {
            hi = Some(p);
            break;
        }
        lo = Some(p);
    }
    let analytic = match w.kind {
        WeightKind::Power { alpha } => Some((1.0 + alpha * w.exponent / w.dim as f64).max(1.0)),
        _ => None,
    };
    let r0 = match (lo, hi) {
        (_, None) => f64::INFINITY,
        (None, Some(h)) => h.max(1.0),
        (Some(mut l), Some(mut h)) => {
            while h - l > R0_TOL {
                let mid = 0.5 * (l + h);
                let b = locally_bounded(w, mid, fam)?;
                classified.push((mid, b));
                if b {
                    h = mid;
                } else {
                    l = mid;
                }
            }
            0.5 * (l + h)
        }
    };
    Ok(R0Estimate { r0, classified, analytic })
}

/// `(σ_p, σ_q, σ_pq)`.
pub fn sigmas(r0: f64, p: f64, q: f64, dim: usize) -> (f64, f64, f64) {
    let n = dim as f64;
    let sp = n * (r0 / p.min(r0) - 1.0) + n * (r0 - 1.0);
    let sq = n / q.min(1.0) - n;
    (sp, sq, sp.max(sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    B,
    F,
}

/// Smallest `n_0 ≥ max{0, [s]+1, [N(𝐫_0−1)/p − s]+1, [σ − s]} + 1`, `σ = σ_p` (B) or `σ_pq` (F).
pub fn min_order(s: f64, p: f64, q: f64, dim: usize, r0: f64, space: SpaceKind) -> usize {
    let (sp, _, spq) = sigmas(r0, p, q, dim);
    let sigma = match space {
        SpaceKind::B => sp,
        SpaceKind::F => spq,
    };
    let n = dim as f64;
    let m = [0.0, s.floor() + 1.0, (n * (r0 - 1.0) / p - s).floor() + 1.0, (sigma - s).floor()]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    (m + 1.0) as usize
}

/// `w^{−p′/p} = w^{−1/(p−1)}`.
pub fn dual_weight(w: &WeightModel, p: f64) -> Result<WeightModel> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParams(format!("dual weights need 1 < p < ∞, got {p}")));
    }
    Ok(w.powf(-1.0 / (p - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub s: f64,
    pub p: f64,
    /// `f64::INFINITY` for `q = ∞`.
    pub q: f64,
    pub dim: usize,
    pub weight: WeightModel,
    pub r0: f64,
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub sigma_pq: f64,
}

impl SpaceParams {
    pub fn new(s: f64, p: f64, q: f64, weight: WeightModel, r0: f64) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidParams(format!("p must lie in (0, ∞), got {p}")));
        }
        if !(q > 0.0) {
            return Err(Error::InvalidParams(format!("q must lie in (0, ∞], got {q}")));
        }
        if !s.is_finite() || !(r0 >= 1.0) {
            return Err(Error::InvalidParams(format!("need finite s and r0 ≥ 1, got s = {s}, r0 = {r0}")));
        }
        let dim = weight.dim;
        let (sigma_p, sigma_q, sigma_pq) = sigmas(r0, p, q, dim);
        Ok(Self { s, p, q, dim, weight, r0, sigma_p, sigma_q, sigma_pq })
    }

    /// Unweighted parameters with `𝐫_0 = 1`.
    pub fn unweighted(s: f64, p: f64, q: f64, dim: usize) -> Result<Self> {
        Self::new(s, p, q, WeightModel::constant(1.0, dim), 1.0)
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, ..self.clone() }
    }

    pub fn min_order(&self, space: SpaceKind) -> usize {
        min_order(self.s, self.p, self.q, self.dim, self.r0, space)
    }
}
