//! Compactly supported generators `Φ`, `Ψ`, their normalized versions, and
//! tensor-product systems on ℝ^N.
//!
//! `Φ̂ = φ̂ 𝐀_n(ω) = β_n B̂_{n,k}` and `Ψ̂ = ψ̂ 𝐀_n(−ω)𝒜_n(ω)|𝒜_m(±ω)|^{2𝕜}`, so
//! `Φ = Σ α′_κ φ(· + κ)` and `Ψ = Σ α″_κ ψ(· − κ)`.

use serde::{Deserialize, Serialize};

use crate::battle_lemarie::{psi_comb, SplineLattice};
use crate::bspline::{bspline, PiecewisePolynomial};
use crate::error::{Error, Result};
use crate::euler_frobenius::{order_tables, SplineOrderTables};
use crate::poly::Laurent;
use crate::tensor::Separable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCoefficients {
    /// `α′_κ`, `κ = 0..=n`, with `Φ = Σ α′_κ φ(· + κ)`.
    pub alpha_prime: Vec<f64>,
    /// Index of the first entry of `alpha_dblprime` (`−n − m𝕜`).
    pub dblprime_first: i64,
    /// `α″_κ`, `|κ| ≤ n + m𝕜`, with `Ψ = Σ α″_κ ψ(· − κ)`.
    pub alpha_dblprime: Vec<f64>,
    pub lambda_prime: f64,
    pub lambda_dblprime: f64,
}

/// `|𝒜_m(±ω)|² = ∏(1 − r_j(m)² e^{iω})(1 − r_j(m)² e^{−iω})` as a comb in `x`-shifts.
fn script_a_modulus_comb(tables_m: &SplineOrderTables) -> Laurent {
    tables_m.roots.iter().fold(Laurent::one(), |acc, &r| {
        let q = r * r;
        acc.mul(&Laurent::new(-1, vec![-q, 1.0])).mul(&Laurent::new(0, vec![1.0, -q]))
    })
}

fn check_kk(kk: u8, tables_m: Option<&SplineOrderTables>) -> Result<Option<&SplineOrderTables>> {
    match (kk, tables_m) {
        (0, _) => Ok(None),
        (1, Some(t)) => Ok(Some(t)),
        (1, None) => Err(Error::InvalidParams("𝕜 = 1 needs the order-m tables".into())),
        _ => Err(Error::InvalidParams(format!("𝕜 must be 0 or 1, got {kk}"))),
    }
}

pub fn localization_coefficients(
    tables_n: &SplineOrderTables,
    tables_m: Option<&SplineOrderTables>,
    kk: u8,
) -> Result<LocalizationCoefficients> {
    let tm = check_kk(kk, tables_m)?;
    let alpha_prime = tables_n
        .roots
        .iter()
        .fold(Laurent::one(), |acc, &r| acc.mul(&Laurent::new(0, vec![1.0, r])));
    // coefficients of e^{−iκω}: 𝐀_n(−ω) has κ ≥ 0, 𝒜_n(ω) has κ ≤ 0
    let mut dbl = tables_n.roots.iter().fold(Laurent::one(), |acc, &r| {
        acc.mul(&Laurent::new(0, vec![1.0, r])).mul(&Laurent::new(-1, vec![-r * r, 1.0]))
    });
    if let Some(t) = tm {
        dbl = dbl.mul(&script_a_modulus_comb(t));
    }
    let mut lambda_dblprime: f64 = tables_n.roots.iter().map(|r| (1.0 + r) * (1.0 - r * r)).product();
    if let Some(t) = tm {
        let f: f64 = t.roots.iter().map(|r| 1.0 - r * r).product();
        lambda_dblprime *= f * f;
    }
    Ok(LocalizationCoefficients {
        lambda_prime: tables_n.roots.iter().map(|r| 1.0 + r).product(),
        alpha_prime: alpha_prime.coeffs,
        dblprime_first: dbl.first,
        alpha_dblprime: dbl.coeffs,
        lambda_dblprime,
    })
}

/// `Φ_{n,k} = β_n B_n(· − k)`, supported on `[k, k+n+1]`.
pub fn localized_phi(tables: &SplineOrderTables, k: i64) -> PiecewisePolynomial {
    bspline(tables.order).shift(k as f64).scale(tables.beta)
}

/// Lattice coefficients of `Ψ_{n,m(𝕜);k,s}` on `B_n(2x − ℓ)`.
pub fn localized_psi_lattice(
    tables_n: &SplineOrderTables,
    tables_m: Option<&SplineOrderTables>,
    kk: u8,
    k: i64,
    s: i64,
) -> Result<SplineLattice> {
    let tm = check_kk(kk, tables_m)?;
    let mut comb = psi_comb(tables_n, k, s);
    if let Some(t) = tm {
        comb = comb.mul(&script_a_modulus_comb(t).dilate(2));
    }
    Ok(SplineLattice::from_laurent(tables_n.order, 1, &comb))
}

/// `Ψ_{n,m(𝕜);k,s}`, supported on `[s − n − m𝕜, s + n + 1 + m𝕜]`.
pub fn localized_psi(
    tables_n: &SplineOrderTables,
    tables_m: Option<&SplineOrderTables>,
    kk: u8,
    k: i64,
    s: i64,
) -> Result<PiecewisePolynomial> {
    Ok(localized_psi_lattice(tables_n, tables_m, kk, k, s)?.to_piecewise())
}

/// Autocorrelation `a_τ = ⟨g, g(· − τ)⟩` for `τ ≥ 0` until supports separate.
pub fn autocorrelation(g: &PiecewisePolynomial) -> Vec<f64> {
    let Some((a, b)) = g.support() else {
        return Vec::new();
    };
    let reach = (b - a).ceil() as i64;
    (0..=reach).map(|tau| g.inner_product(&g.shift(tau as f64))).collect()
}

/// Riesz bounds of the integer translates: extrema of `Σ_τ a_τ e^{iτω}` on a 4096-grid.
pub fn riesz_bounds(g: &PiecewisePolynomial) -> Result<(f64, f64)> {
    let a = autocorrelation(g);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..4096 {
        let w = 2.0 * std::f64::consts::PI * i as f64 / 4096.0;
        let v: f64 = a
            .iter()
            .enumerate()
            .map(|(t, &c)| if t == 0 { c } else { 2.0 * c * (t as f64 * w).cos() })
            .sum();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo > 1e-12) {
        return Err(Error::DegenerateFrame(lo));
    }
    Ok((lo, hi))
}

/// One axis of a tensor system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub n: usize,
    pub m: usize,
    pub kk: u8,
    pub k: i64,
    pub s: i64,
    /// Use the half-shifted spline `B_n(x + 1/2)`.
    #[serde(default)]
    pub half_shift: bool,
}

impl AxisSpec {
    pub fn new(n: usize, m: usize, kk: u8, k: i64, s: i64) -> Self {
        Self { n, m, kk, k, s, half_shift: false }
    }

    /// Offsets of `h` in the Gram box of the axis generator (`Ψ̃` if `wavelet`).
    pub fn gram_reach(&self, wavelet: bool) -> i64 {
        if wavelet {
            (2 * self.n + 2 * self.m * self.kk as usize) as i64
        } else {
            self.n as i64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisGenerators {
    pub spec: AxisSpec,
    pub coefficients: LocalizationCoefficients,
    /// `Φ̃ = Φ/Λ′`.
    pub phi: PiecewisePolynomial,
    /// `Ψ̃ = Ψ/Λ″`.
    pub psi: PiecewisePolynomial,
}

impl AxisGenerators {
    pub fn build(spec: AxisSpec) -> Result<Self> {
        if spec.kk > 1 {
            return Err(Error::InvalidParams(format!("𝕜 must be 0 or 1, got {}", spec.kk)));
        }
        let tn = order_tables(spec.n)?;
        let tm = if spec.kk == 1 { Some(order_tables(spec.m)?) } else { None };
        let coefficients = localization_coefficients(&tn, tm.as_ref(), spec.kk)?;
        let mut phi = localized_phi(&tn, spec.k).scale(1.0 / coefficients.lambda_prime);
        let mut psi =
            localized_psi(&tn, tm.as_ref(), spec.kk, spec.k, spec.s)?.scale(1.0 / coefficients.lambda_dblprime);
        if spec.half_shift {
            phi = phi.shift(-0.5);
            psi = psi.shift(-0.5);
        }
        Ok(Self { spec, coefficients, phi, psi })
    }

    pub fn generator(&self, wavelet: bool) -> &PiecewisePolynomial {
        if wavelet {
            &self.psi
        } else {
            &self.phi
        }
    }
}

/// Tensor-product system: pattern `i` carries `Ψ̃` on axis `l` iff bit `l` of `i` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSystem {
    pub dim: usize,
    pub axes: Vec<AxisGenerators>,
    /// `n_0 = min n_l`.
    pub n0: usize,
}

pub const MAX_DIM: usize = 3;

pub fn tensor_system(specs: &[AxisSpec]) -> Result<WaveletSystem> {
    if specs.is_empty() || specs.len() > MAX_DIM {
        return Err(Error::InvalidParams(format!("dimension must be 1..={MAX_DIM}, got {}", specs.len())));
    }
    let axes = specs.iter().map(|s| AxisGenerators::build(*s)).collect::<Result<Vec<_>>>()?;
    let n0 = specs.iter().map(|s| s.n).min().unwrap_or(0);
    Ok(WaveletSystem { dim: specs.len(), axes, n0 })
}

impl WaveletSystem {
    /// Same spec on every axis.
    pub fn isotropic(spec: AxisSpec, dim: usize) -> Result<Self> {
        tensor_system(&vec![spec; dim])
    }

    pub fn wavelet_types(&self) -> usize {
        (1 << self.dim) - 1
    }

    pub fn is_wavelet_axis(i: usize, l: usize) -> bool {
        (i >> l) & 1 == 1
    }

    /// `Ψ_i(x) = ∏_l (Φ̃ or Ψ̃)(x_l)`.
    pub fn pattern(&self, i: usize) -> Separable {
        Separable::new(
            1.0,
            self.axes
                .iter()
                .enumerate()
                .map(|(l, a)| a.generator(Self::is_wavelet_axis(i, l)).clone())
                .collect(),
        )
    }

    /// `Ψ_{idτ}(x) = 2^{dN/2} Ψ_i(2^d x − τ)`.
    pub fn member(&self, index: &DyadicIndex) -> Result<Separable> {
        index.validate(self.dim)?;
        let scale = 2f64.powi(index.d as i32);
        let factors = self
            .axes
            .iter()
            .enumerate()
            .map(|(l, a)| a.generator(Self::is_wavelet_axis(index.i, l)).affine_arg(scale, index.tau[l] as f64))
            .collect();
        Ok(Separable::new(2f64.powf(index.d as f64 * self.dim as f64 / 2.0), factors))
    }

    /// `λ_h = ⟨Ψ_i(· − h), Ψ_i⟩` over the Gram box of pattern `i`.
    pub fn gram_table(&self, i: usize) -> Result<Vec<(Vec<i64>, f64)>> {
        if i > self.wavelet_types() {
            return Err(Error::InvalidParams(format!("type {i} out of range")));
        }
        let per_axis: Vec<Vec<(i64, f64)>> = self
            .axes
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let w = Self::is_wavelet_axis(i, l);
                let g = a.generator(w);
                let reach = a.spec.gram_reach(w);
                (-reach..=reach).map(|h| (h, g.shift(h as f64).inner_product(g))).collect()
            })
            .collect();
        let mut out = Vec::new();
        let sizes: Vec<usize> = per_axis.iter().map(|v| v.len()).collect();
        let mut idx = vec![0usize; self.dim];
        loop {
            let h = idx.iter().enumerate().map(|(l, &j)| per_axis[l][j].0).collect();
            let v = idx.iter().enumerate().map(|(l, &j)| per_axis[l][j].1).product();
            out.push((h, v));
            if !crate::tensor::advance(&mut idx, &sizes) {
                break;
            }
        }
        Ok(out)
    }

    pub fn gram_sum(&self, i: usize) -> Result<f64> {
        Ok(self.gram_table(i)?.iter().map(|(_, v)| v).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub i: usize,
    pub d: u32,
    pub tau: Vec<i64>,
}

impl DyadicIndex {
    pub fn new(i: usize, d: u32, tau: Vec<i64>) -> Self {
        Self { i, d, tau }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.tau.len() != dim {
            return Err(Error::InvalidParams(format!("translation has {} entries, expected {dim}", self.tau.len())));
        }
        if self.i >= 1 << dim {
            return Err(Error::InvalidParams(format!("type {} out of range for N = {dim}", self.i)));
        }
        if self.i == 0 && self.d != 0 {
            return Err(Error::InvalidParams("the scaling layer lives at level 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battle_lemarie::{scaling_phi, wavelet_psi};
    use approx::assert_relative_eq;

    #[test]
    fn first_order_coefficients() {
        let t = order_tables(1).unwrap();
        let r = t.roots[0];
        let c = localization_coefficients(&t, None, 0).unwrap();
        assert_eq!(c.alpha_prime, vec![1.0, r]);
        assert_relative_eq!(c.lambda_prime, 3.0 - 3f64.sqrt(), epsilon = 1e-14);
        // (1 + r e^{−iω})(1 − r² e^{iω}) in powers e^{−iκω}, κ = −1..1
        assert_eq!(c.dblprime_first, -1);
        let want = [-r * r, 1.0 - r * r * r, r];
        for (g, w) in c.alpha_dblprime.iter().zip(want) {
            assert_relative_eq!(*g, w, epsilon = 1e-15);
        }
        assert_relative_eq!(c.alpha_dblprime.iter().sum::<f64>(), c.lambda_dblprime, epsilon = 1e-14);
    }

    #[test]
    fn lambda_dblprime_with_kk() {
        let t2 = order_tables(2).unwrap();
        let t3 = order_tables(3).unwrap();
        let c0 = localization_coefficients(&t2, None, 0).unwrap();
        let c1 = localization_coefficients(&t2, Some(&t3), 1).unwrap();
        let f: f64 = t3.roots.iter().map(|r| 1.0 - r * r).product();
        assert_relative_eq!(c1.lambda_dblprime, c0.lambda_dblprime * f * f, epsilon = 1e-14);
        assert_relative_eq!(c1.alpha_dblprime.iter().sum::<f64>(), c1.lambda_dblprime, epsilon = 1e-13);
        assert_eq!(c1.dblprime_first, -5);
    }

    #[test]
    fn localization_identities_in_time_domain() {
        for n in 1..=3 {
            let t = order_tables(n).unwrap();
            let c = localization_coefficients(&t, None, 0).unwrap();
            let phi = scaling_phi(&t, 0, 1e-12).unwrap();
            let terms: Vec<(f64, PiecewisePolynomial)> =
                c.alpha_prime.iter().enumerate().map(|(k, &a)| (a, phi.base.shift(-(k as f64)))).collect();
            let refs: Vec<(f64, &PiecewisePolynomial)> = terms.iter().map(|(a, f)| (*a, f)).collect();
            let dev = PiecewisePolynomial::linear_combination(&refs).sub(&localized_phi(&t, 0)).sup_norm();
            assert!(dev < 1e-10, "n={n}: Φ deviation {dev}");

            let psi = wavelet_psi(&t, 0, 0, 1e-12).unwrap();
            let terms: Vec<(f64, PiecewisePolynomial)> = c
                .alpha_dblprime
                .iter()
                .enumerate()
                .map(|(j, &a)| (a, psi.base.shift((c.dblprime_first + j as i64) as f64)))
                .collect();
            let refs: Vec<(f64, &PiecewisePolynomial)> = terms.iter().map(|(a, f)| (*a, f)).collect();
            let big = localized_psi(&t, None, 0, 0, 0).unwrap();
            let dev = PiecewisePolynomial::linear_combination(&refs).sub(&big).sup_norm();
            assert!(dev < 1e-10, "n={n}: Ψ deviation {dev}");
        }
    }

    #[test]
    fn supports() {
        let t1 = order_tables(1).unwrap();
        assert_eq!(localized_phi(&t1, 0).support(), Some((0.0, 2.0)));
        assert_relative_eq!(localized_phi(&t1, 0).evaluate(1.0), 3.0 - 3f64.sqrt(), epsilon = 1e-14);
        for n in 1..=3 {
            let t = order_tables(n).unwrap();
            for m in 1..=2 {
                let tm = order_tables(m).unwrap();
                let p = localized_psi(&t, Some(&tm), 1, 0, 2).unwrap();
                let (a, b) = p.trimmed(0.0).support().unwrap();
                assert_eq!((a, b), (2.0 - (n + m) as f64, 2.0 + (n + 1 + m) as f64));
            }
        }
    }

    #[test]
    fn riesz_of_phi_first_order() {
        let t = order_tables(1).unwrap();
        let (a, b) = riesz_bounds(&localized_phi(&t, 0)).unwrap();
        let b2 = t.beta * t.beta;
        assert_relative_eq!(a, b2 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(b, b2, epsilon = 1e-12);
        assert!(matches!(riesz_bounds(&PiecewisePolynomial::zero()), Err(Error::DegenerateFrame(_))));
    }

    #[test]
    fn gram_sums_are_one() {
        let sys = WaveletSystem::isotropic(AxisSpec::new(2, 1, 1, 0, 0), 2).unwrap();
        for i in 0..=3 {
            assert_relative_eq!(sys.gram_sum(i).unwrap(), 1.0, epsilon = 1e-10);
        }
        let one = WaveletSystem::isotropic(AxisSpec::new(1, 1, 0, 0, 0), 1).unwrap();
        let tab = one.gram_table(0).unwrap();
        assert_eq!(tab.iter().map(|(h, _)| h[0]).collect::<Vec<_>>(), vec![-1, 0, 1]);
    }

    #[test]
    fn member_scaling() {
        let sys = WaveletSystem::isotropic(AxisSpec::new(2, 1, 0, 0, 0), 2).unwrap();
        let a = sys.member(&DyadicIndex::new(3, 0, vec![0, 0])).unwrap();
        let b = sys.member(&DyadicIndex::new(3, 2, vec![1, -2])).unwrap();
        assert_relative_eq!(a.inner_product(&a), b.inner_product(&b), epsilon = 1e-12);
        assert!(sys.member(&DyadicIndex::new(0, 1, vec![0, 0])).is_err());
        assert_eq!(sys.n0, 2);
    }
}
