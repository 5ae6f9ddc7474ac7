//! Separable functions on ℝ^N: products of one-dimensional piecewise polynomials.

use serde::{Deserialize, Serialize};

use crate::bspline::PiecewisePolynomial;
use crate::poly;
use crate::quadrature;

/// `coeff · ∏_l f_l(x_l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separable {
    pub coeff: f64,
    pub factors: Vec<PiecewisePolynomial>,
}

impl Separable {
    pub fn new(coeff: f64, factors: Vec<PiecewisePolynomial>) -> Self {
        Self { coeff, factors }
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.factors.iter().zip(x).fold(self.coeff, |acc, (f, &xl)| {
            if acc == 0.0 {
                0.0
            } else {
                acc * f.evaluate(xl)
            }
        })
    }

    pub fn inner_product(&self, other: &Self) -> f64 {
        let mut acc = self.coeff * other.coeff;
        for (f, g) in self.factors.iter().zip(&other.factors) {
            if acc == 0.0 {
                return 0.0;
            }
            acc *= f.inner_product(g);
        }
        acc
    }

    /// Per-axis support box, `None` if any factor vanishes.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        if self.coeff == 0.0 {
            return None;
        }
        self.factors.iter().map(|f| f.support()).collect()
    }

    /// `g(x) = f(x − a)`.
    pub fn shift(&self, a: &[f64]) -> Self {
        Self {
            coeff: self.coeff,
            factors: self.factors.iter().zip(a).map(|(f, &al)| f.shift(al)).collect(),
        }
    }
}

/// Finite sum of separable terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableSum {
    pub dim: usize,
    pub terms: Vec<Separable>,
}

impl SeparableSum {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn single(term: Separable) -> Self {
        Self { dim: term.dim(), terms: vec![term] }
    }

    pub fn from_1d(f: PiecewisePolynomial) -> Self {
        Self::single(Separable::new(1.0, vec![f]))
    }

    pub fn push(&mut self, term: Separable) {
        debug_assert_eq!(term.dim(), self.dim);
        if term.coeff != 0.0 {
            self.terms.push(term);
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= c;
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.evaluate(x)).sum()
    }

    pub fn pair(&self, g: &Separable) -> f64 {
        self.terms.iter().map(|t| t.inner_product(g)).sum()
    }

    pub fn inner_product(&self, other: &Self) -> f64 {
        self.terms.iter().map(|t| other.pair(t)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.support().is_none())
    }

    /// Bounding box of all term supports.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        let mut out: Option<Vec<(f64, f64)>> = None;
        for s in self.terms.iter().filter_map(|t| t.support()) {
            out = Some(match out {
                None => s,
                Some(b) => b.iter().zip(&s).map(|(x, y)| (x.0.min(y.0), x.1.max(y.1))).collect(),
            });
        }
        out
    }

    /// Collapses a one-dimensional sum into a single piecewise polynomial.
    pub fn to_piecewise_1d(&self) -> Option<PiecewisePolynomial> {
        if self.dim != 1 {
            return None;
        }
        let terms: Vec<(f64, &PiecewisePolynomial)> =
            self.terms.iter().map(|t| (t.coeff, &t.factors[0])).collect();
        Some(PiecewisePolynomial::linear_combination(&terms))
    }

    /// Per-axis union of all knots.
    pub fn knots(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.dim];
        for t in &self.terms {
            for (l, f) in t.factors.iter().enumerate() {
                out[l].extend_from_slice(f.breakpoints());
            }
        }
        for k in &mut out {
            k.sort_by(f64::total_cmp);
            k.dedup();
        }
        out
    }

    /// `∫ g(f(x), x) dx` by tensor Gauss rules on the product grid of all knots
    /// of `self` and `extra`; exact whenever `g` is a polynomial of degree at
    /// most `2·nodes − 1` per axis within each cell. `f = self − Σ extra`.
    pub fn integrate_on_grid<G: Fn(f64, &[f64]) -> f64 + Sync>(
        &self,
        extra: &[&SeparableSum],
        nodes: usize,
        g: G,
    ) -> f64 {
        let mut knots = self.knots();
        for e in extra {
            for (l, k) in e.knots().into_iter().enumerate() {
                knots[l].extend(k);
            }
        }
        let mut fns = vec![self];
        fns.extend_from_slice(extra);
        integrate_tensor(&knots, nodes, &fns, |v, x| g(v[0] - v[1..].iter().sum::<f64>(), x))
    }

    /// Values on the tensor grid `points[0] × … × points[N−1]` (first axis fastest, matching [`advance`]).
    /// Each term only touches the grid block inside its support.
    pub fn sample_grid(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let sizes: Vec<usize> = points.iter().map(|p| p.len()).collect();
        let mut out = vec![0.0; sizes.iter().product()];
        if out.is_empty() {
            return out;
        }
        let mut strides = vec![1usize; self.dim];
        for l in 1..self.dim {
            strides[l] = strides[l - 1] * sizes[l - 1];
        }
        for t in &self.terms {
            let Some(supp) = t.support() else { continue };
            let mut ranges = Vec::with_capacity(self.dim);
            let mut vals = Vec::with_capacity(self.dim);
            for l in 0..self.dim {
                let a = points[l].partition_point(|&x| x < supp[l].0);
                let b = points[l].partition_point(|&x| x <= supp[l].1);
                ranges.push(a);
                vals.push(points[l][a..b].iter().map(|&x| t.factors[l].evaluate(x)).collect::<Vec<_>>());
            }
            if vals.iter().any(|v| v.is_empty()) {
                continue;
            }
            let lens: Vec<usize> = vals.iter().map(|v| v.len()).collect();
            let mut idx = vec![0usize; self.dim];
            loop {
                let mut v = t.coeff;
                let mut pos = 0;
                for l in 0..self.dim {
                    v *= vals[l][idx[l]];
                    pos += (ranges[l] + idx[l]) * strides[l];
                }
                out[pos] += v;
                if !advance(&mut idx, &lens) {
                    break;
                }
            }
        }
        out
    }

    /// `‖self − other‖_{L2}` evaluated pointwise on the merged grid, which avoids
    /// the cancellation of expanding the square into pairings.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        let deg = self
            .terms
            .iter()
            .chain(&other.terms)
            .flat_map(|t| t.factors.iter().map(|f| f.degree()))
            .max()
            .unwrap_or(0);
        let nodes = (deg + 1).clamp(1, 64);
        if self.terms.is_empty() && other.terms.is_empty() {
            return 0.0;
        }
        let base = if self.terms.is_empty() { Self::zero(other.dim) } else { self.clone() };
        base.integrate_on_grid(&[other], nodes, |v, _| v * v).max(0.0).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_distance(&Self::zero(self.dim))
    }
}

/// Gauss nodes and weights of every cell of a sorted knot vector.
pub fn gauss_points(knots: &[f64], nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = quadrature::gauss_legendre(nodes);
    let mut rule: Vec<(f64, f64)> = gx.iter().copied().zip(gw.iter().copied()).collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pts = Vec::with_capacity(knots.len().saturating_sub(1) * nodes);
    let mut wts = Vec::with_capacity(pts.capacity());
    for c in knots.windows(2) {
        let (m, h) = (0.5 * (c[0] + c[1]), 0.5 * (c[1] - c[0]));
        for &(x, w) in &rule {
            pts.push(m + h * x);
            wts.push(h * w);
        }
    }
    (pts, wts)
}

/// `∫ g(f_1(x), …, f_k(x), x) dx` by tensor Gauss rules on the product of the given
/// per-axis knots (sorted and deduplicated here). Work is done in slabs along the first
/// axis, in parallel, and summed in slab order.
pub fn integrate_tensor<G: Fn(&[f64], &[f64]) -> f64 + Sync>(
    knots: &[Vec<f64>],
    nodes: usize,
    fns: &[&SeparableSum],
    g: G,
) -> f64 {
    use rayon::prelude::*;
    let dim = knots.len();
    let mut knots = knots.to_vec();
    for k in &mut knots {
        k.sort_by(f64::total_cmp);
        k.dedup();
    }
    if dim == 0 || knots.iter().any(|k| k.len() < 2) {
        return 0.0;
    }
    let grids: Vec<(Vec<f64>, Vec<f64>)> = knots.iter().map(|k| gauss_points(k, nodes)).collect();
    let slabs: Vec<f64> = knots[0]
        .par_windows(2)
        .enumerate()
        .map(|(c, _)| {
            let mut points: Vec<Vec<f64>> = grids.iter().map(|g| g.0.clone()).collect();
            let mut weights: Vec<Vec<f64>> = grids.iter().map(|g| g.1.clone()).collect();
            points[0] = grids[0].0[c * nodes..(c + 1) * nodes].to_vec();
            weights[0] = grids[0].1[c * nodes..(c + 1) * nodes].to_vec();
            let samples: Vec<Vec<f64>> = fns.iter().map(|f| f.sample_grid(&points)).collect();
            let sizes: Vec<usize> = points.iter().map(|p| p.len()).collect();
            let mut idx = vec![0usize; dim];
            let mut x = vec![0.0; dim];
            let mut vals = vec![0.0; fns.len()];
            let mut total = 0.0;
            let mut pos = 0;
            loop {
                let mut w = 1.0;
                for l in 0..dim {
                    x[l] = points[l][idx[l]];
                    w *= weights[l][idx[l]];
                }
                for (v, s) in vals.iter_mut().zip(&samples) {
                    *v = s[pos];
                }
                total += w * g(&vals, &x);
                pos += 1;
                if !advance(&mut idx, &sizes) {
                    break;
                }
            }
            total
        })
        .collect();
    slabs.iter().sum()
}

/// Odometer increment over a multi-index; false once it wraps.
pub(crate) fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for l in 0..idx.len() {
        idx[l] += 1;
        if idx[l] < sizes[l] {
            return true;
        }
        idx[l] = 0;
    }
    false
}

/// Local coefficient form of an axis factor restricted to a cell (used by certification).
pub(crate) fn piece_on(f: &PiecewisePolynomial, i: usize) -> (&[f64], f64) {
    let b = f.breakpoints();
    (&f.pieces()[i], b[i + 1] - b[i])
}

#[allow(dead_code)]
pub(crate) fn piece_sup(f: &PiecewisePolynomial, i: usize) -> f64 {
    let (c, h) = piece_on(f, i);
    poly::max_abs(c, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::bspline;
    use approx::assert_relative_eq;

    #[test]
    fn separable_pairing_factorizes() {
        let b1 = bspline(1);
        let b2 = bspline(2);
        let f = Separable::new(2.0, vec![b1.clone(), b2.clone()]);
        let g = Separable::new(0.5, vec![b1.shift(1.0), b2.clone()]);
        let want = b1.inner_product(&b1.shift(1.0)) * b2.inner_product(&b2);
        assert_relative_eq!(f.inner_product(&g), want, epsilon = 1e-15);
    }

    #[test]
    fn grid_distance_matches_pairings() {
        let b2 = bspline(2);
        let f = SeparableSum::single(Separable::new(1.0, vec![b2.clone(), b2.shift(0.5)]));
        let g = SeparableSum::single(Separable::new(-0.5, vec![b2.shift(1.0), b2.clone()]));
        let d2 = f.inner_product(&f) - 2.0 * f.inner_product(&g) + g.inner_product(&g);
        assert_relative_eq!(f.l2_distance(&g).powi(2), d2, epsilon = 1e-12);
        assert_eq!(f.l2_distance(&f), 0.0);
    }
}
