use approx::assert_relative_eq;
use blwave_core::bspline::{bspline, bspline_series, fourier_magnitude, PiecewisePolynomial};
use proptest::prelude::*;

fn indicator() -> PiecewisePolynomial {
    PiecewisePolynomial::new(vec![0.0, 1.0], vec![vec![1.0]]).unwrap()
}

#[test]
fn known_values() {
    assert_eq!(bspline(0).evaluate(0.5), 1.0);
    assert_relative_eq!(bspline(1).evaluate(1.0), 1.0);
    assert_relative_eq!(bspline(2).evaluate(1.5), 0.75);
    assert_relative_eq!(bspline(3).evaluate(2.0), 2.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(bspline(3).evaluate(1.0), 1.0 / 6.0, epsilon = 1e-15);
}

#[test]
fn convolution_recurrence() {
    let mut b = indicator();
    for n in 1..=6 {
        b = b.convolve(&indicator());
        let d = b.sub(&bspline(n)).sup_norm();
        assert!(d < 1e-12, "n={n}: {d}");
    }
}

#[test]
fn differentiation_identity() {
    // B_n' = B_{n−1} − B_{n−1}(· − 1)
    for n in 1..=6 {
        let lhs = bspline(n).derivative(1);
        let rhs = bspline(n - 1).sub(&bspline(n - 1).shift(1.0));
        assert!(lhs.sub(&rhs).sup_norm() < 1e-12, "n={n}");
    }
}

#[test]
fn smoothness_at_knots() {
    for n in 1..=7 {
        let b = bspline(n);
        assert!(b.continuity_defect(n - 1) < 1e-9, "n={n}");
    }
}

#[test]
fn series_matches_sum_of_shifts() {
    let coeffs = [0.5, -1.0, 2.0, 0.25];
    let s = bspline_series(3, 1, -2, &coeffs);
    let b = bspline(3);
    for i in 0..200 {
        let x = -1.5 + 0.02 * i as f64;
        let direct: f64 = coeffs.iter().enumerate().map(|(l, c)| c * b.evaluate(2.0 * x - (l as f64 - 2.0))).sum();
        assert_relative_eq!(s.evaluate(x), direct, epsilon = 1e-12);
    }
}

#[test]
fn fourier_transform_modulus() {
    for n in 0..=5 {
        let b = bspline(n);
        for w in [0.0, 0.3, 1.0, 2.5, 7.0] {
            assert_relative_eq!(b.fourier_transform(w).norm(), fourier_magnitude(n, w), epsilon = 1e-11);
        }
    }
}

proptest! {
    #[test]
    fn partition_of_unity(n in 0usize..9, x in -3.0f64..3.0) {
        let b = bspline(n);
        let sum: f64 = (-12..12).map(|k| b.evaluate(x - k as f64)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_mass_and_symmetry(n in 0usize..10, t in 0.0f64..1.0) {
        let b = bspline(n);
        prop_assert!((b.integral() - 1.0).abs() < 1e-12);
        let c = (n as f64 + 1.0) / 2.0;
        let x = c * t;
        prop_assert!((b.evaluate(c - x) - b.evaluate(c + x)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_is_autocorrelation_sample(n in 0usize..5, tau in -6i32..6) {
        // ⟨B_n, B_n(· − τ)⟩ = B_{2n+1}(n + 1 + τ)
        let b = bspline(n);
        let lhs = b.inner_product(&b.shift(tau as f64));
        let rhs = bspline(2 * n + 1).evaluate(n as f64 + 1.0 + tau as f64);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
