//! Exact piecewise polynomials and cardinal B-splines.
//!
//! A [`PiecewisePolynomial`] stores, for each knot interval `[t_i, t_{i+1})`,
//! the monomial coefficients of the piece in the local variable `x − t_i`.
//! Every function the library builds (B-splines, localized generators,
//! truncated orthonormal generators, convolutions) lives in this form, which
//! makes products, moments and L2 pairings exact up to rounding.
//!
//! Fourier transforms use `f̂(ω) = ∫ f(x) e^{−ixω} dx`; the `(2π)^{−1/2}`
//! factor is dropped everywhere.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;
use crate::quadrature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise")]
pub struct PiecewisePolynomial {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
    degree: usize,
}

#[derive(Deserialize)]
struct RawPiecewise {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
    #[allow(dead_code)]
    degree: Option<usize>,
}

impl TryFrom<RawPiecewise> for PiecewisePolynomial {
    type Error = Error;
    fn try_from(raw: RawPiecewise) -> Result<Self> {
        PiecewisePolynomial::new(raw.breakpoints, raw.pieces)
    }
}

impl Default for PiecewisePolynomial {
    fn default() -> Self {
        Self::zero()
    }
}

impl PiecewisePolynomial {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.is_empty() && pieces.is_empty() {
            return Ok(Self::zero());
        }
        if breakpoints.len() != pieces.len() + 1 {
            return Err(Error::InvalidParams(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || pieces.iter().flatten().any(|c| !c.is_finite())
        {
            return Err(Error::InvalidParams("non-finite knot or coefficient".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("breakpoints must be strictly increasing".into()));
        }
        Ok(Self::from_raw(breakpoints, pieces))
    }

    fn from_raw(breakpoints: Vec<f64>, mut pieces: Vec<Vec<f64>>) -> Self {
        let degree = pieces.iter().map(|p| p.len().max(1) - 1).max().unwrap_or(0);
        for p in &mut pieces {
            p.resize(degree + 1, 0.0);
        }
        Self { breakpoints, pieces, degree }
    }

    /// The zero function (no knots).
    pub fn zero() -> Self {
        Self { breakpoints: Vec::new(), pieces: Vec::new(), degree: 0 }
    }

    /// Sum of local pieces `(a, b, coefficients in x − a)` over the merged knot set.
    pub fn from_parts(parts: &[(f64, f64, Vec<f64>)]) -> Self {
        let mut knots: Vec<f64> = parts
            .iter()
            .filter(|(a, b, _)| a < b)
            .flat_map(|(a, b, _)| [*a, *b])
            .collect();
        if knots.is_empty() {
            return Self::zero();
        }
        sort_dedup(&mut knots);
        let deg = parts.iter().map(|p| p.2.len()).max().unwrap_or(1).max(1) - 1;
        let mut pieces = vec![vec![0.0; deg + 1]; knots.len() - 1];
        for (a, b, c) in parts.iter().filter(|(a, b, _)| a < b) {
            let mut i = knots.partition_point(|&t| t < *a);
            while i + 1 < knots.len() && knots[i] < *b {
                let shifted = poly::taylor_shift(c, knots[i] - a);
                poly::add_into(&mut pieces[i], &shifted, 1.0);
                i += 1;
            }
        }
        Self::from_raw(knots, pieces)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().flatten().all(|&c| c == 0.0)
    }

    /// Closed support interval `[first knot, last knot]`, `None` for the zero function.
    pub fn support(&self) -> Option<(f64, f64)> {
        Some((*self.breakpoints.first()?, *self.breakpoints.last()?))
    }

    /// Value at `x`; intervals are half-open so the last knot evaluates to 0.
    pub fn evaluate(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some(i) => poly::eval(&self.pieces[i], x - self.breakpoints[i]),
            None => 0.0,
        }
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let (a, b) = self.support()?;
        if !(x >= a && x < b) {
            return None;
        }
        Some(self.breakpoints.partition_point(|&t| t <= x) - 1)
    }

    /// k-th derivative; orders above the degree give the zero function on the same knots.
    pub fn derivative(&self, k: usize) -> Self {
        let mut pieces = self.pieces.clone();
        for _ in 0..k {
            for p in &mut pieces {
                *p = poly::derivative(p);
            }
        }
        Self::from_raw(self.breakpoints.clone(), pieces)
    }

    /// `g(x) = f(scale·x − shift)`.
    pub fn affine_arg(&self, scale: f64, shift: f64) -> Self {
        assert!(scale > 0.0, "affine_arg needs a positive scale");
        let breakpoints = self.breakpoints.iter().map(|&t| (t + shift) / scale).collect();
        let pieces = self.pieces.iter().map(|p| poly::scale_arg(p, scale)).collect();
        Self::from_raw(breakpoints, pieces)
    }

    /// `g(x) = f(x − a)`.
    pub fn shift(&self, a: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.iter().map(|&t| t + a).collect(),
            pieces: self.pieces.clone(),
            degree: self.degree,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|p| p.iter().map(|&v| v * c).collect()).collect(),
            degree: self.degree,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    /// `∑ c_i f_i` on the merged knot set.
    pub fn linear_combination(terms: &[(f64, &Self)]) -> Self {
        let parts: Vec<(f64, f64, Vec<f64>)> = terms
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .flat_map(|(c, f)| {
                f.pieces.iter().enumerate().map(move |(i, p)| {
                    (f.breakpoints[i], f.breakpoints[i + 1], p.iter().map(|&v| v * c).collect())
                })
            })
            .collect();
        Self::from_parts(&parts)
    }

    /// Pointwise product on the merged refinement.
    pub fn multiply(&self, other: &Self) -> Self {
        let mut parts = Vec::new();
        self.for_each_overlap(other, |l, r, p, q| parts.push((l, r, poly::mul(&p, &q))));
        Self::from_parts(&parts)
    }

    /// Walks the common refinement of two supports, handing each overlap
    /// interval `[l, r]` with both pieces re-centred at `l`.
    fn for_each_overlap<F: FnMut(f64, f64, Vec<f64>, Vec<f64>)>(&self, other: &Self, mut f: F) {
        let (bp, bq) = (&self.breakpoints, &other.breakpoints);
        if bp.is_empty() || bq.is_empty() {
            return;
        }
        let (mut i, mut j) = (0, 0);
        while i + 1 < bp.len() && j + 1 < bq.len() {
            let l = bp[i].max(bq[j]);
            let r = bp[i + 1].min(bq[j + 1]);
            if l < r {
                let p = poly::taylor_shift(&self.pieces[i], l - bp[i]);
                let q = poly::taylor_shift(&other.pieces[j], l - bq[j]);
                f(l, r, p, q);
            }
            if bp[i + 1] <= bq[j + 1] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if a > b {
            return -self.integrate(b, a);
        }
        let mut acc = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let (l, r) = (self.breakpoints[i].max(a), self.breakpoints[i + 1].min(b));
            if l < r {
                let off = l - self.breakpoints[i];
                let anti = poly::antiderivative(p);
                acc += poly::eval(&anti, r - self.breakpoints[i]) - poly::eval(&anti, off);
            }
        }
        acc
    }

    /// `∫_ℝ f`.
    pub fn integral(&self) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| poly::integral(p, self.breakpoints[i + 1] - self.breakpoints[i]))
            .sum()
    }

    /// Exact L2 pairing `∫ f g`.
    pub fn inner_product(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        self.for_each_overlap(other, |l, r, p, q| acc += poly::integral(&poly::mul(&p, &q), r - l));
        acc
    }

    /// `∫ (x − c)^k f(x) dx`.
    pub fn moment_about(&self, k: usize, c: f64) -> f64 {
        let mut acc = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let a = self.breakpoints[i];
            // (x − c)^k = (u + (a − c))^k in the local variable u
            let mut mono = vec![0.0; k + 1];
            mono[k] = 1.0;
            let shifted = poly::taylor_shift(&mono, a - c);
            acc += poly::integral(&poly::mul(p, &shifted), self.breakpoints[i + 1] - a);
        }
        acc
    }

    pub fn moment(&self, k: usize) -> f64 {
        self.moment_about(k, 0.0)
    }

    /// Exact `sup |f|` from per-piece extrema.
    pub fn sup_norm(&self) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| poly::max_abs(p, self.breakpoints[i + 1] - self.breakpoints[i]))
            .fold(0.0, f64::max)
    }

    /// Certified upper bound of `sup |f|` from absolute coefficient sums.
    pub fn sup_bound(&self) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| poly::abs_bound(p, self.breakpoints[i + 1] - self.breakpoints[i]))
            .fold(0.0, f64::max)
    }

    /// Largest jump of the derivatives of order `0..=order` across any knot,
    /// counting the outer knots (where the function meets zero).
    pub fn continuity_defect(&self, order: usize) -> f64 {
        if self.pieces.is_empty() {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        let mut left = vec![0.0; self.degree + 1];
        for (i, p) in self.pieces.iter().enumerate() {
            let h = self.breakpoints[i] - if i == 0 { self.breakpoints[0] } else { self.breakpoints[i - 1] };
            let left_at = if i == 0 { vec![0.0; p.len()] } else { poly::taylor_shift(&left, h) };
            worst = worst.max(derivative_jump(&left_at, p, order));
            left = p.clone();
        }
        let last = self.pieces.len() - 1;
        let h = self.breakpoints[last + 1] - self.breakpoints[last];
        let end = poly::taylor_shift(&left, h);
        worst.max(derivative_jump(&end, &vec![0.0; end.len()], order))
    }

    /// Drops leading and trailing pieces whose coefficients are all within `tol`
    /// of zero (relative to the largest coefficient).
    pub fn trimmed(&self, rel_tol: f64) -> Self {
        let scale = self.pieces.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
        let is_null = |p: &Vec<f64>| p.iter().all(|c| c.abs() <= rel_tol * scale);
        let first = self.pieces.iter().position(|p| !is_null(p));
        let Some(first) = first else {
            return Self::zero();
        };
        let last = self.pieces.iter().rposition(|p| !is_null(p)).unwrap_or(first);
        Self {
            breakpoints: self.breakpoints[first..=last + 1].to_vec(),
            pieces: self.pieces[first..=last].to_vec(),
            degree: self.degree,
        }
    }

    /// Exact convolution `(f ∗ g)(x) = ∫ f(y) g(x − y) dy`.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut parts = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let (a, h1) = (self.breakpoints[i], self.breakpoints[i + 1] - self.breakpoints[i]);
            for (j, q) in other.pieces.iter().enumerate() {
                let (b, h2) = (other.breakpoints[j], other.breakpoints[j + 1] - other.breakpoints[j]);
                for (z0, z1, c) in convolve_pieces(p, h1, q, h2) {
                    parts.push((a + b + z0, a + b + z1, c));
                }
            }
        }
        Self::from_parts(&parts)
    }

    /// `f̂(ω) = ∫ f(x) e^{−ixω} dx` by per-piece Gauss quadrature.
    pub fn fourier_transform(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, p) in self.pieces.iter().enumerate() {
            let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
            let osc = (omega.abs() * (b - a)).ceil() as usize;
            let n = (self.degree / 2 + 12 + osc).min(64);
            let re = quadrature::integrate(|x| poly::eval(p, x - a) * (omega * x).cos(), a, b, n);
            let im = quadrature::integrate(|x| -poly::eval(p, x - a) * (omega * x).sin(), a, b, n);
            acc += Complex64::new(re, im);
        }
        acc
    }

    /// `count` equispaced samples `(x, f(x))` across the support.
    pub fn samples(&self, count: usize) -> Vec<(f64, f64)> {
        let Some((a, b)) = self.support() else {
            return Vec::new();
        };
        let count = count.max(2);
        (0..count)
            .map(|i| {
                let x = a + (b - a) * i as f64 / (count - 1) as f64;
                (x, self.evaluate(x))
            })
            .collect()
    }
}

fn derivative_jump(left: &[f64], right: &[f64], order: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let mut fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact *= k as f64;
        }
        let l = left.get(k).copied().unwrap_or(0.0);
        let r = right.get(k).copied().unwrap_or(0.0);
        worst = worst.max(((l - r) * fact).abs());
    }
    worst
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

/// Convolution of two polynomial pieces `p` on `[0, h1]` and `q` on `[0, h2]`,
/// returned as up to three pieces `(z0, z1, coefficients in z − z0)` over `[0, h1 + h2]`.
fn convolve_pieces(p: &[f64], h1: f64, q: &[f64], h2: f64) -> Vec<(f64, f64, Vec<f64>)> {
    // integrate over the narrower piece: its steep coefficients then only meet
    // arguments inside its own cell
    if h1 > h2 {
        return convolve_pieces(q, h2, p, h1);
    }
    // c(z) = Σ_j q_j Σ_m C(j,m) (−1)^m z^{j−m} [A_m(U) − A_m(L)],  A_m = ∫ p(t) t^m dt,
    // assembled directly in the local variable u = z − z0 of each regime
    let dq = q.len();
    let anti: Vec<Vec<f64>> = (0..dq)
        .map(|m| {
            let mut tm = vec![0.0; m + 1];
            tm[m] = 1.0;
            poly::antiderivative(&poly::mul(p, &tm))
        })
        .collect();
    let bound = |m: usize, b: Bound, z0: f64| -> Vec<f64> {
        match b {
            Bound::Zero => vec![0.0],
            Bound::Const(c) => vec![poly::eval(&anti[m], c)],
            Bound::Z => poly::taylor_shift(&anti[m], z0),
            Bound::ZMinus(c) => poly::taylor_shift(&anti[m], z0 - c),
        }
    };
    let regime = |lo: Bound, hi: Bound, z0: f64| -> Vec<f64> {
        let mut out = vec![0.0];
        for (j, &qj) in q.iter().enumerate() {
            if qj == 0.0 {
                continue;
            }
            for m in 0..=j {
                let mut diff = bound(m, hi, z0);
                poly::add_into(&mut diff, &bound(m, lo, z0), -1.0);
                let mut zpow = vec![0.0; j - m + 1];
                zpow[j - m] = 1.0;
                let zpow = poly::taylor_shift(&zpow, z0);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                poly::add_into(&mut out, &poly::mul(&zpow, &diff), qj * poly::binomial(j, m) * sign);
            }
        }
        out
    };
    let mut out = Vec::new();
    let mut push = |z0: f64, z1: f64, lo: Bound, hi: Bound| {
        if z1 > z0 {
            out.push((z0, z1, regime(lo, hi, z0)));
        }
    };
    push(0.0, h1, Bound::Zero, Bound::Z);
    push(h1, h2, Bound::Zero, Bound::Const(h1));
    push(h2, h1 + h2, Bound::ZMinus(h2), Bound::Const(h1));
    out
}

#[derive(Clone, Copy)]
enum Bound {
    Zero,
    Const(f64),
    Z,
    ZMinus(f64),
}

/// Orders up to this use exact integer arithmetic for the B-spline pieces.
const EXACT_ORDER_LIMIT: usize = 30;

/// Cardinal B-spline `B_n = B_{n−1} ∗ χ_{[0,1)}`, supported on `[0, n+1]`.
pub fn bspline(n: usize) -> PiecewisePolynomial {
    let pieces = if n <= EXACT_ORDER_LIMIT { exact_pieces(n) } else { recurrence_pieces(n) };
    let breakpoints = (0..=n + 1).map(|j| j as f64).collect();
    PiecewisePolynomial::from_raw(breakpoints, pieces)
}

/// Pieces from the truncated-power form
/// `B_n(j + u) = (1/n!) Σ_{i ≤ j} (−1)^i C(n+1, i) (j − i + u)^n`.
/// Integer sums are formed with wrapping i128 arithmetic, which is exact because
/// the final values fit even when intermediate terms do not.
fn exact_pieces(n: usize) -> Vec<Vec<f64>> {
    let binom = |a: usize, b: usize| -> i128 {
        let mut acc: i128 = 1;
        for i in 0..b {
            acc = acc * (a - i) as i128 / (i + 1) as i128;
        }
        acc
    };
    let factorial: f64 = (1..=n).map(|i| i as f64).product();
    (0..=n)
        .map(|j| {
            (0..=n)
                .map(|k| {
                    let mut s: i128 = 0;
                    for i in 0..=j {
                        let base = (j - i) as i128;
                        let mut pw: i128 = 1;
                        for _ in 0..(n - k) {
                            pw = pw.wrapping_mul(base);
                        }
                        let term = binom(n + 1, i).wrapping_mul(pw);
                        s = if i % 2 == 0 { s.wrapping_add(term) } else { s.wrapping_sub(term) };
                    }
                    binom(n, k).wrapping_mul(s) as f64 / factorial
                })
                .collect()
        })
        .collect()
}

fn recurrence_pieces(n: usize) -> Vec<Vec<f64>> {
    let mut pieces = vec![vec![1.0]];
    for order in 1..=n {
        let mut cumulative = Vec::with_capacity(order + 1);
        let mut c = 0.0;
        for p in &pieces {
            let mut anti = poly::antiderivative(p);
            anti[0] += c;
            c = poly::eval(&anti, 1.0);
            cumulative.push(anti);
        }
        let mut next = Vec::with_capacity(order + 1);
        for m in 0..=order {
            let upper = cumulative.get(m).cloned().unwrap_or_else(|| vec![c]);
            let mut piece = upper;
            if m > 0 {
                poly::add_into(&mut piece, &cumulative[m - 1], -1.0);
            }
            piece.resize(order + 1, 0.0);
            next.push(piece);
        }
        pieces = next;
    }
    pieces
}

/// `Σ_ℓ c_ℓ B_n(2^level · x − ℓ)` with `ℓ = first + index`, assembled cell by cell.
pub fn bspline_series(n: usize, level: i32, first: i64, coeffs: &[f64]) -> PiecewisePolynomial {
    if coeffs.is_empty() {
        return PiecewisePolynomial::zero();
    }
    let base = bspline(n);
    let scale = 2f64.powi(level);
    let local: Vec<Vec<f64>> = base.pieces.iter().map(|p| poly::scale_arg(p, scale)).collect();
    let cells = coeffs.len() + n;
    let mut pieces = vec![vec![0.0; n + 1]; cells];
    for (idx, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (r, lp) in local.iter().enumerate() {
            poly::add_into(&mut pieces[idx + r], lp, c);
        }
    }
    let breakpoints = (0..=cells).map(|k| (first + k as i64) as f64 / scale).collect();
    PiecewisePolynomial::from_raw(breakpoints, pieces)
}

/// `|B̂_n(ω)| = |sin(ω/2)/(ω/2)|^{n+1}`.
pub fn fourier_magnitude(n: usize, omega: f64) -> f64 {
    sinc(omega / 2.0).abs().powi(n as i32 + 1)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}
