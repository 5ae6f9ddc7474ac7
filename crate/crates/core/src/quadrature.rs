//! Gauss–Legendre rules.

use std::sync::OnceLock;

const CACHED: usize = 64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=CACHED).map(compute_rule).collect());
    assert!(n >= 1 && n <= CACHED, "Gauss rule size {n} out of range");
    &rules[n]
}

fn compute_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Integrate `f` over `[a, b]` with an `n`-point rule.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(&xi, &wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials_up_to_2n_minus_1() {
        for n in 1..=20 {
            let deg = 2 * n - 1;
            let got = integrate(|x| x.powi(deg as i32) + 1.0, 0.0, 1.0, n);
            let want = 1.0 / (deg as f64 + 1.0) + 1.0;
            assert!((got - want).abs() < 1e-13, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 5, 17, 64] {
            let s: f64 = gauss_legendre(n).1.iter().sum();
            assert!((s - 2.0).abs() < 1e-13);
        }
    }
}
