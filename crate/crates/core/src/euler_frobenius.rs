//! The autocorrelation symbol of `B_n`, its root factorization, and the
//! scaling and wavelet masks of the orthonormalized spline system.
//!
//! `ℙ_n(ω) = Σ_m |B̂_n(ω + 2πm)|² = Σ_{|j|≤n} B_{2n+1}(n+1+j) e^{ijω}` and
//! `ℙ_n(ω) = β_n^{−2} ∏_j (1 + r_j² + 2 r_j cos ω)` where `−r_j` are the roots of
//! `Q(z) = Σ_{j=0}^{2n} B_{2n+1}(j+1) z^j` inside the unit disk.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bspline::bspline;
use crate::error::{Error, Result};
use crate::poly;

/// Largest order with reliable double-precision root separation.
pub const MAX_ORDER: usize = 12;

/// `c_0 + Σ_{j≥1} c_j cos(jω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub cos: Vec<f64>,
}

impl TrigPolynomial {
    pub fn value(&self, omega: f64) -> f64 {
        self.cos
            .iter()
            .enumerate()
            .map(|(j, &c)| if j == 0 { c } else { c * (j as f64 * omega).cos() })
            .sum()
    }

    /// Minimum over an equispaced grid of `[0, 2π)`.
    pub fn grid_min(&self, points: usize) -> f64 {
        (0..points)
            .map(|i| self.value(2.0 * std::f64::consts::PI * i as f64 / points as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineOrderTables {
    pub order: usize,
    /// `r_1 > … > r_n`, all in `(0, 1)`.
    pub roots: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    /// `λ_0..λ_n` with `∏_j(1 + r_j² − 2r_j cos θ) = (∏ r_j) Σ_j (−1)^j λ_j cos(jθ)`.
    pub lambda: Vec<f64>,
}

impl SplineOrderTables {
    pub fn root_product(&self) -> f64 {
        self.roots.iter().product()
    }

    /// `𝐀_n(ω) = ∏ (1 + r_j e^{iω})`.
    pub fn a_poly(&self, omega: f64) -> Complex64 {
        let e = Complex64::from_polar(1.0, omega);
        self.roots.iter().fold(Complex64::new(1.0, 0.0), |acc, &r| acc * (1.0 + r * e))
    }

    /// `γ_{n,k} = (∏ r_j) β_n 2^{−n} (−1)^{n+1+k}`.
    pub fn gamma(&self, k: i64) -> f64 {
        let sign = if (self.order as i64 + 1 + k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        self.root_product() * self.beta * 0.5f64.powi(self.order as i32) * sign
    }
}

/// Integer samples `B_{2n+1}(j)`, `j = 0..=2n+2`.
fn odd_spline_samples(n: usize) -> Vec<f64> {
    let b = bspline(2 * n + 1);
    (0..=2 * n + 2).map(|j| b.evaluate(j as f64)).collect()
}

/// `ℙ_n` as a cosine polynomial.
pub fn symbol(n: usize) -> TrigPolynomial {
    let s = odd_spline_samples(n);
    let cos = (0..=n)
        .map(|j| if j == 0 { s[n + 1] } else { 2.0 * s[n + 1 + j] })
        .collect();
    TrigPolynomial { cos }
}

/// Roots and derived constants for order `n`.
pub fn order_tables(n: usize) -> Result<SplineOrderTables> {
    if n == 0 {
        return Err(Error::InvalidParams("order tables need n ≥ 1".into()));
    }
    if n > MAX_ORDER {
        return Err(Error::OrderTooLarge(n));
    }
    let s = odd_spline_samples(n);
    // Q(z)/z^n = c_0 + Σ_{j≥1} c_j (z^j + z^{−j}) with c_j = B_{2n+1}(n+1+j);
    // in u = z + 1/z this is R(u) = c_0 + Σ c_j V_j(u), V_0 = 2, V_1 = u, V_{j+1} = u V_j − V_{j−1}.
    let mut v_prev = vec![2.0];
    let mut v_cur = vec![0.0, 1.0];
    let mut r_poly = vec![s[n + 1]];
    for j in 1..=n {
        poly::add_into(&mut r_poly, &v_cur, s[n + 1 + j]);
        let mut next = poly::mul(&[0.0, 1.0], &v_cur);
        poly::add_into(&mut next, &v_prev, -1.0);
        v_prev = std::mem::replace(&mut v_cur, next);
    }
    let us = real_rooted_roots(&r_poly)?;
    let mut roots = Vec::with_capacity(n);
    for u in us {
        if u > -2.0 + 1e-9 {
            return Err(Error::RootFindingFailed(format!(
                "u = {u} gives roots off the negative real axis"
            )));
        }
        let rho = -u;
        // inside-disk root of z² − u z + 1, written without cancellation
        let r = 1.0 / (0.5 * rho + (0.25 * rho * rho - 1.0).max(0.0).sqrt());
        roots.push(r);
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    let rho: Vec<f64> = roots.iter().map(|r| r + 1.0 / r).collect();
    let alpha = rho.iter().map(|p| (p + 2.0) / 4.0).collect();
    let beta = roots.iter().map(|r| 1.0 + r).product();
    let lambda = cosine_lambda(&rho);
    Ok(SplineOrderTables { order: n, roots, rho, alpha, beta, lambda })
}

/// λ_j from `∏_j (ρ_j − 2cos θ) = Σ_j (−1)^j λ_j cos(jθ)`.
fn cosine_lambda(rho: &[f64]) -> Vec<f64> {
    let mut a = vec![1.0];
    for &p in rho {
        let mut next = vec![0.0; a.len() + 1];
        for (j, &aj) in a.iter().enumerate() {
            next[j] += p * aj;
            // −2 cos θ · cos(jθ) = −cos((j+1)θ) − cos((j−1)θ)
            if j == 0 {
                next[1] -= 2.0 * aj;
            } else {
                next[j + 1] -= aj;
                next[j - 1] -= aj;
            }
        }
        a = next;
    }
    a.iter()
        .enumerate()
        .map(|(j, &aj)| if j % 2 == 0 { aj } else { -aj })
        .collect()
}

/// Laguerre iteration with deflation for a polynomial known to have only real
/// roots, followed by Newton polishing on the undeflated polynomial.
fn real_rooted_roots(c: &[f64]) -> Result<Vec<f64>> {
    let deg = poly::degree(c).ok_or_else(|| Error::RootFindingFailed("zero polynomial".into()))?;
    let mut work: Vec<f64> = c[..=deg].to_vec();
    let mut roots = Vec::with_capacity(deg);
    while poly::degree(&work).unwrap_or(0) >= 1 {
        let m = poly::degree(&work).unwrap();
        let mut x = -2.0;
        let mut converged = false;
        for _ in 0..500 {
            let (p, dp, ddp) = eval_with_derivatives(&work[..=m], x);
            if p == 0.0 {
                converged = true;
                break;
            }
            let g = dp / p;
            let h = g * g - ddp / p;
            let disc = (m as f64 - 1.0) * (m as f64 * h - g * g);
            if disc < -1e-9 * (g * g).max(h.abs()) * (m * m) as f64 {
                return Err(Error::RootFindingFailed(format!(
                    "complex root pair near u = {x} (discriminant {disc:e})"
                )));
            }
            let sq = disc.max(0.0).sqrt();
            let denom = if g >= 0.0 { g + sq } else { g - sq };
            let step = if denom == 0.0 { 1.0 } else { m as f64 / denom };
            x -= step;
            // polishing below takes care of the last digits
            if step.abs() <= 1e-12 * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::RootFindingFailed("Laguerre iteration did not converge".into()));
        }
        // polish on the full polynomial
        for _ in 0..20 {
            let (p, dp, _) = eval_with_derivatives(c, x);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs() {
                break;
            }
        }
        roots.push(x);
        // synthetic division by (u − x)
        let mut q = vec![0.0; m];
        let mut carry = work[m];
        for k in (0..m).rev() {
            q[k] = carry;
            carry = work[k] + carry * x;
        }
        work = q;
    }
    Ok(roots)
}

fn eval_with_derivatives(c: &[f64], x: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for &ck in c.iter().rev() {
        ddp = ddp * x + 2.0 * dp;
        dp = dp * x + p;
        p = p * x + ck;
    }
    (p, dp, ddp)
}

/// `|𝒜_n(±θ)|² = ∏_j(1 + r_j² − 2r_j cos θ)` as a cosine polynomial in θ.
pub fn modulus_sq_script_a(tables: &SplineOrderTables) -> TrigPolynomial {
    let scale = tables.root_product();
    let cos = tables
        .lambda
        .iter()
        .enumerate()
        .map(|(j, &l)| scale * if j % 2 == 0 { l } else { -l })
        .collect();
    TrigPolynomial { cos }
}

/// `m_{n,k}(ω) = e^{−i(n+1)ω/2} cos(ω/2)^{n+1} 𝐀_n(ω)/𝐀_n(2ω) e^{−iωk}`.
pub fn scaling_mask(tables: &SplineOrderTables, k: i64, omega: f64) -> Complex64 {
    let n = tables.order as f64;
    let phase = Complex64::from_polar(1.0, -(n + 1.0) * omega / 2.0 - omega * k as f64);
    let c = (omega / 2.0).cos().powi(tables.order as i32 + 1);
    phase * c * tables.a_poly(omega) / tables.a_poly(2.0 * omega)
}

/// `M_{n,k,s}(ω) = e^{−iω} conj(m_{n,k}(ω+π)) e^{−2iωs}`.
pub fn wavelet_mask(tables: &SplineOrderTables, k: i64, s: i64, omega: f64) -> Complex64 {
    let m = scaling_mask(tables, k, omega + std::f64::consts::PI).conj();
    Complex64::from_polar(1.0, -omega - 2.0 * omega * s as f64) * m
}
