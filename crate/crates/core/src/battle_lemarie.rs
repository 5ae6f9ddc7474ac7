//! Orthonormal Battle–Lemarié generators `φ_{n,k}` and `ψ_{n,k,s}` as truncated
//! series of B-spline shifts with a certified sup-norm tail.
//!
//! `φ̂ = β_n e^{−iωk} B̂_n / 𝐀_n(ω)` expands `1/(1 + r e^{iω})` geometrically.
//! `ψ` is the localized `Ψ` (a finite comb on `B_n(2·)`) pushed through
//! `1/(𝐀_n(−ω)𝒜_n(ω))`, i.e. 2n geometric factors in `e^{∓iω}`.

use serde::{Deserialize, Serialize};

use crate::bspline::{bspline_series, PiecewisePolynomial};
use crate::error::{Error, Result};
use crate::euler_frobenius::SplineOrderTables;
use crate::poly::{self, Laurent};

/// Cap on the total number of geometric terms across all factors.
pub const TERM_CAP: usize = 100_000;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Coefficients on the lattice `B_n(2^level x − ℓ)`, `ℓ = first + index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineLattice {
    pub degree: usize,
    pub level: i32,
    pub first: i64,
    pub coeffs: Vec<f64>,
}

impl SplineLattice {
    pub fn from_laurent(degree: usize, level: i32, c: &Laurent) -> Self {
        Self { degree, level, first: c.first, coeffs: c.coeffs.clone() }
    }

    pub fn to_piecewise(&self) -> PiecewisePolynomial {
        bspline_series(self.degree, self.level, self.first, &self.coeffs)
    }

    pub fn coeff_at(&self, l: i64) -> f64 {
        usize::try_from(l - self.first).ok().and_then(|i| self.coeffs.get(i)).copied().unwrap_or(0.0)
    }
}

/// One truncated factor `Σ_{l<depth} ratio^l z^{step·l}` (z = lattice shift by one unit of `x`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesFactor {
    pub ratio: f64,
    pub step: i64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGenerator {
    pub base: PiecewisePolynomial,
    pub lattice: SplineLattice,
    pub order: usize,
    pub k: i64,
    pub s: Option<i64>,
    pub factors: Vec<SeriesFactor>,
    /// Sup-norm bound of the discarded remainder.
    pub tail_bound: f64,
}

impl TruncatedGenerator {
    pub fn depths(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.depth).collect()
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.base.evaluate(x)
    }
}

/// Per-factor depths so that `K · (∏ 1/(1−|q|) − ∏ (1−|q|^L)/(1−|q|)) ≤ tol`.
///
/// Uses `1 − ∏(1 − x_f) ≤ Σ x_f` and splits the budget evenly over the factors.
fn choose_depths(ratios: &[f64], k: f64, tol: f64) -> Result<Vec<usize>> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let c: f64 = ratios.iter().map(|q| 1.0 / (1.0 - q.abs())).product();
    let f = ratios.len().max(1) as f64;
    let target = tol / (k * c * f);
    let mut depths = Vec::with_capacity(ratios.len());
    for &q in ratios {
        let q = q.abs();
        let l = if q == 0.0 || target >= 1.0 {
            1
        } else {
            let l = (target.ln() / q.ln()).ceil();
            if !l.is_finite() || l > TERM_CAP as f64 {
                return Err(Error::ToleranceUnreachable { tol, terms: usize::MAX, cap: TERM_CAP });
            }
            (l as usize).max(1)
        };
        depths.push(l);
    }
    let terms: usize = depths.iter().sum();
    if terms > TERM_CAP {
        return Err(Error::ToleranceUnreachable { tol, terms, cap: TERM_CAP });
    }
    Ok(depths)
}

/// Product of truncated factors and its certified ℓ1 tail.
fn expand(factors: &[SeriesFactor]) -> (Laurent, f64) {
    let mut acc = Laurent::one();
    let mut full = 1.0;
    let mut kept = 1.0;
    for f in factors {
        acc = acc.mul(&Laurent::geometric(f.ratio, f.step, f.depth));
        let q = f.ratio.abs();
        full /= 1.0 - q;
        kept *= (1.0 - q.powi(f.depth as i32)) / (1.0 - q);
    }
    (acc, (full - kept).max(0.0))
}

/// `φ_{n,k} = β_n Σ_t a_t B_n(x − k + t)` with `Σ a_t e^{itω} = ∏ 1/(1 + r_j e^{iω})`.
pub fn scaling_phi(tables: &SplineOrderTables, k: i64, tol: f64) -> Result<TruncatedGenerator> {
    let n = tables.order;
    let ratios: Vec<f64> = tables.roots.iter().map(|r| -r).collect();
    let depths = choose_depths(&ratios, tables.beta, tol)?;
    // shift by t moves the lattice index ℓ = k − t, hence step −1
    let factors: Vec<SeriesFactor> = ratios
        .iter()
        .zip(&depths)
        .map(|(&ratio, &depth)| SeriesFactor { ratio, step: -1, depth })
        .collect();
    let (series, tail) = expand(&factors);
    let mut coeffs = series.shifted(k);
    coeffs.coeffs.iter_mut().for_each(|c| *c *= tables.beta);
    let lattice = SplineLattice::from_laurent(n, 0, &coeffs);
    Ok(TruncatedGenerator {
        base: lattice.to_piecewise(),
        lattice,
        order: n,
        k,
        s: None,
        factors,
        tail_bound: tables.beta * tail,
    })
}

/// Coefficients of the compactly supported `Ψ_{n,k,s}` on `B_n(2x − ℓ)`:
/// `γ_{n,k} Σ_j λ_j/(2(−1)^j) Σ_ν (−1)^ν C(n+1,ν)` at `ℓ = 2s ∓ j − n + ν`.
pub fn psi_comb(tables: &SplineOrderTables, k: i64, s: i64) -> Laurent {
    let n = tables.order;
    let mut cos = vec![0.0; 2 * n + 1];
    for (j, &l) in tables.lambda.iter().enumerate() {
        let v = if j % 2 == 0 { l } else { -l };
        if j == 0 {
            cos[n] += v;
        } else {
            cos[n + j] += 0.5 * v;
            cos[n - j] += 0.5 * v;
        }
    }
    let binom: Vec<f64> = (0..=n + 1)
        .map(|nu| if nu % 2 == 0 { 1.0 } else { -1.0 } * poly::binomial(n + 1, nu))
        .collect();
    let mut comb = Laurent::new(-(n as i64), cos).mul(&Laurent::new(-(n as i64), binom));
    let g = tables.gamma(k);
    comb.coeffs.iter_mut().for_each(|c| *c *= g);
    comb.shifted(2 * s)
}

/// Factors of `1/(𝐀_n(−ω)𝒜_n(ω))` in `x`-shift units: `−r_j` moving right and `r_j²` moving left.
fn wavelet_ratios(tables: &SplineOrderTables) -> Vec<(f64, i64)> {
    tables.roots.iter().flat_map(|&r| [(-r, 1), (r * r, -1)]).collect()
}

/// `ψ_{n,k,s} = Σ_t e_t Ψ_{n,k,s}(x − t)` on the half-integer lattice.
pub fn wavelet_psi(tables: &SplineOrderTables, k: i64, s: i64, tol: f64) -> Result<TruncatedGenerator> {
    let n = tables.order;
    let comb = psi_comb(tables, k, s);
    let pairs = wavelet_ratios(tables);
    let ratios: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let depths = choose_depths(&ratios, comb.l1(), tol)?;
    let factors: Vec<SeriesFactor> = pairs
        .iter()
        .zip(&depths)
        .map(|(&(ratio, step), &depth)| SeriesFactor { ratio, step, depth })
        .collect();
    let (series, tail) = expand(&factors);
    // x-shift t is lattice shift 2t at level 1
    let coeffs = comb.mul(&series.dilate(2));
    let lattice = SplineLattice::from_laurent(n, 1, &coeffs);
    Ok(TruncatedGenerator {
        base: lattice.to_piecewise(),
        lattice,
        order: n,
        k,
        s: Some(s),
        factors,
        tail_bound: comb.l1() * tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitCheckReport {
    pub order: usize,
    pub k: i64,
    pub s: i64,
    /// Sup-norm of the difference between the two constructions.
    pub deviation: f64,
    pub tail_bound: f64,
}

/// Rebuilds `ψ_1` or `ψ_2` from closed-form expressions (explicit comb on `B_{n,s}(2·)`
/// and nested geometric sums) and compares with [`wavelet_psi`].
pub fn psi_explicit_check(tables: &SplineOrderTables, k: i64, s: i64, tol: f64) -> Result<ExplicitCheckReport> {
    let n = tables.order;
    // entries (offset c, weight) of B_{n,s}(2x − 2Σm + 2Σl + c)
    let comb: Vec<(i64, f64)> = match n {
        1 => {
            let rho = tables.rho[0];
            vec![(2, -1.0), (1, rho + 2.0), (0, -2.0 * (rho + 1.0)), (-1, rho + 2.0), (-2, -1.0)]
        }
        2 => {
            let (l0, l1) = (tables.lambda[0], tables.lambda[1]);
            let a = l1 / 2.0 + 3.0;
            let b = l0 + 1.5 * l1 + 3.0;
            let c = 3.0 * l0 + 2.0 * l1 + 1.0;
            vec![(4, 1.0), (3, -a), (2, b), (1, -c), (0, c), (-1, -b), (-2, a), (-3, -1.0)]
        }
        _ => return Err(Error::InvalidParams(format!("closed forms exist for n ∈ {{1, 2}}, got {n}"))),
    };
    let reference = wavelet_psi(tables, k, s, tol)?;
    let depth = |j: usize, which: usize| reference.factors[2 * j + which].depth;
    let gamma = tables.gamma(k);
    // ℓ = 2s + 2Σm − 2Σl − c
    let mut terms: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    let mut visit = |shift: i64, w: f64| {
        for &(c, v) in &comb {
            *terms.entry(2 * s + 2 * shift - c).or_insert(0.0) += gamma * w * v;
        }
    };
    let r = &tables.roots;
    if n == 1 {
        for m in 0..depth(0, 0) {
            for l in 0..depth(0, 1) {
                visit(m as i64 - l as i64, (-r[0]).powi(m as i32) * r[0].powi(2 * l as i32));
            }
        }
    } else {
        for m1 in 0..depth(0, 0) {
            for m2 in 0..depth(1, 0) {
                for l1 in 0..depth(0, 1) {
                    for l2 in 0..depth(1, 1) {
                        let w = (-r[0]).powi(m1 as i32)
                            * (-r[1]).powi(m2 as i32)
                            * r[0].powi(2 * l1 as i32)
                            * r[1].powi(2 * l2 as i32);
                        visit((m1 + m2) as i64 - (l1 + l2) as i64, w);
                    }
                }
            }
        }
    }
    let first = *terms.keys().next().unwrap_or(&0);
    let last = *terms.keys().last().unwrap_or(&0);
    let coeffs: Vec<f64> = (first..=last).map(|l| terms.get(&l).copied().unwrap_or(0.0)).collect();
    let explicit = bspline_series(n, 1, first, &coeffs);
    Ok(ExplicitCheckReport {
        order: n,
        k,
        s,
        deviation: explicit.sub(&reference.base).sup_norm(),
        tail_bound: reference.tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::bspline;
    use crate::euler_frobenius::order_tables;
    use approx::assert_relative_eq;

    #[test]
    fn phi_leading_terms() {
        let t = order_tables(1).unwrap();
        let phi = scaling_phi(&t, 0, 1e-10).unwrap();
        // β B_1(x) − β r B_1(x + 1) + …
        assert_relative_eq!(phi.lattice.coeff_at(0), t.beta, epsilon = 1e-15);
        assert_relative_eq!(phi.lattice.coeff_at(-1), -t.beta * t.roots[0], epsilon = 1e-15);
        assert!(phi.tail_bound <= 1e-10);
    }

    #[test]
    fn phi_is_orthonormal() {
        for n in 1..=3 {
            let t = order_tables(n).unwrap();
            let phi = scaling_phi(&t, 0, 1e-10).unwrap().base;
            for tau in 0..=3 {
                let g = phi.inner_product(&phi.shift(tau as f64));
                let want = if tau == 0 { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "n={n} τ={tau}: {g}");
            }
        }
    }

    #[test]
    fn psi_is_orthonormal_and_orthogonal_to_phi() {
        for n in 1..=3 {
            let t = order_tables(n).unwrap();
            let phi = scaling_phi(&t, 0, 1e-10).unwrap().base;
            let psi = wavelet_psi(&t, 0, 0, 1e-10).unwrap().base;
            for tau in -3i32..=3 {
                let g = psi.inner_product(&psi.shift(tau as f64));
                let want = if tau == 0 { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "n={n} τ={tau}: {g}");
                let c = psi.inner_product(&phi.shift(tau as f64));
                assert!(c.abs() < 1e-8, "n={n} τ={tau}: cross {c}");
            }
        }
    }

    #[test]
    fn psi_comb_support() {
        let t = order_tables(1).unwrap();
        let c = psi_comb(&t, 0, 0);
        assert_eq!((c.first, c.last()), (-2, 2));
        let b = bspline(1);
        assert_eq!(b.support(), Some((0.0, 2.0)));
    }

    #[test]
    fn closed_forms_agree() {
        for n in 1..=2 {
            let t = order_tables(n).unwrap();
            let rep = psi_explicit_check(&t, 0, 0, 1e-10).unwrap();
            assert!(rep.deviation <= 2e-10, "n={n}: {}", rep.deviation);
        }
        let t = order_tables(3).unwrap();
        assert!(psi_explicit_check(&t, 0, 0, 1e-10).is_err());
    }

    #[test]
    fn unreachable_tolerance() {
        assert!(matches!(choose_depths(&[0.99999], 1.0, 1e-12), Err(Error::ToleranceUnreachable { .. })));
        let t = order_tables(2).unwrap();
        assert!(matches!(scaling_phi(&t, 0, 0.0), Err(Error::InvalidParams(_))));
    }
}
