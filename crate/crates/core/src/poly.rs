//! Dense univariate polynomials stored as coefficient slices `c[k]` of `u^k`.
//!
//! These helpers operate on the local (left-knot centred) pieces of
//! [`PiecewisePolynomial`](crate::bspline::PiecewisePolynomial).

/// Horner evaluation.
pub fn eval(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck)
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Coefficients of `p(v + delta)` as a polynomial in `v`.
pub fn taylor_shift(c: &[f64], delta: f64) -> Vec<f64> {
    if delta == 0.0 {
        return c.to_vec();
    }
    // repeated synthetic division
    let mut out = c.to_vec();
    let n = out.len();
    for i in 0..n {
        for j in (i..n.saturating_sub(1)).rev() {
            out[j] += delta * out[j + 1];
        }
    }
    out
}

/// Coefficients of `p(a·u)`.
pub fn scale_arg(c: &[f64], a: f64) -> Vec<f64> {
    let mut f = 1.0;
    c.iter()
        .map(|&ck| {
            let v = ck * f;
            f *= a;
            v
        })
        .collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

pub fn add_into(acc: &mut Vec<f64>, c: &[f64], scale: f64) {
    if acc.len() < c.len() {
        acc.resize(c.len(), 0.0);
    }
    for (a, &ck) in acc.iter_mut().zip(c) {
        *a += scale * ck;
    }
}

pub fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &ck)| k as f64 * ck)
        .collect()
}

/// Antiderivative vanishing at `u = 0`.
pub fn antiderivative(c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(0.0);
    out.extend(c.iter().enumerate().map(|(k, &ck)| ck / (k + 1) as f64));
    out
}

/// `∫_0^h p(u) du`.
pub fn integral(c: &[f64], h: f64) -> f64 {
    eval(&antiderivative(c), h)
}

/// Effective degree (index of last nonzero coefficient), `None` for the zero polynomial.
pub fn degree(c: &[f64]) -> Option<usize> {
    c.iter().rposition(|&x| x != 0.0)
}

/// All real roots of `p` in `[a, b]`, sorted.
///
/// Roots of the derivative split `[a, b]` into monotone stretches, each of
/// which holds at most one root; those are found by bisection. Exact for the
/// low degrees used here, up to rounding.
pub fn real_roots(c: &[f64], a: f64, b: f64) -> Vec<f64> {
    let Some(deg) = degree(c) else {
        return Vec::new();
    };
    let c = &c[..=deg];
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        let r = -c[0] / c[1];
        return if r >= a && r <= b { vec![r] } else { Vec::new() };
    }
    let mut marks = vec![a];
    marks.extend(real_roots(&derivative(c), a, b));
    marks.push(b);
    let mut roots: Vec<f64> = Vec::new();
    for w in marks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (flo, fhi) = (eval(c, lo), eval(c, hi));
        if flo == 0.0 {
            push_root(&mut roots, lo);
            continue;
        }
        if fhi == 0.0 {
            push_root(&mut roots, hi);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        let (mut l, mut h) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (l + h);
            if mid <= l || mid >= h {
                break;
            }
            let fm = eval(c, mid);
            if fm == 0.0 {
                l = mid;
                h = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                l = mid;
            } else {
                h = mid;
            }
        }
        push_root(&mut roots, 0.5 * (l + h));
    }
    roots
}

fn push_root(roots: &mut Vec<f64>, r: f64) {
    if roots.last().map_or(true, |&last| r > last) {
        roots.push(r);
    }
}

/// Exact maximum of `|p|` over `[0, h]` (endpoints and interior critical points).
pub fn max_abs(c: &[f64], h: f64) -> f64 {
    let mut m = eval(c, 0.0).abs().max(eval(c, h).abs());
    for r in real_roots(&derivative(c), 0.0, h) {
        m = m.max(eval(c, r).abs());
    }
    m
}

/// Cheap certified upper bound of `|p|` over `[0, h]` for `h ≥ 0`.
pub fn abs_bound(c: &[f64], h: f64) -> f64 {
    let mut f = 1.0;
    let mut acc = 0.0;
    for &ck in c {
        acc += ck.abs() * f;
        f *= h;
    }
    acc
}

/// Finite Laurent polynomial `Σ_t c[t − first] z^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laurent {
    pub first: i64,
    pub coeffs: Vec<f64>,
}

impl Laurent {
    pub fn one() -> Self {
        Self { first: 0, coeffs: vec![1.0] }
    }

    pub fn new(first: i64, coeffs: Vec<f64>) -> Self {
        Self { first, coeffs }
    }

    /// `Σ_{l<depth} ratio^l z^{step·l}`.
    pub fn geometric(ratio: f64, step: i64, depth: usize) -> Self {
        let len = (depth.max(1) - 1) * step.unsigned_abs() as usize + 1;
        let mut coeffs = vec![0.0; len];
        let mut p = 1.0;
        for l in 0..depth {
            let idx = if step >= 0 { l * step as usize } else { len - 1 - l * step.unsigned_abs() as usize };
            coeffs[idx] = p;
            p *= ratio;
        }
        let first = if step >= 0 { 0 } else { -((len - 1) as i64) };
        Self { first, coeffs }
    }

    pub fn last(&self) -> i64 {
        self.first + self.coeffs.len() as i64 - 1
    }

    pub fn coeff(&self, t: i64) -> f64 {
        let i = t - self.first;
        if i < 0 {
            return 0.0;
        }
        self.coeffs.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self { first: self.first + other.first, coeffs: mul(&self.coeffs, &other.coeffs) }
    }

    /// Substitutes `z ↦ z^k` for `k ≥ 1`.
    pub fn dilate(&self, k: i64) -> Self {
        assert!(k >= 1);
        let mut coeffs = vec![0.0; (self.coeffs.len().max(1) - 1) * k as usize + 1];
        for (i, &c) in self.coeffs.iter().enumerate() {
            coeffs[i * k as usize] = c;
        }
        Self { first: self.first * k, coeffs }
    }

    pub fn shifted(&self, by: i64) -> Self {
        Self { first: self.first + by, coeffs: self.coeffs.clone() }
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.coeffs.iter().enumerate().map(move |(i, &c)| (self.first + i as i64, c))
    }
}
