use approx::assert_relative_eq;
use blwave_core::bspline::fourier_magnitude;
use blwave_core::euler_frobenius::{modulus_sq_script_a, order_tables, scaling_mask, symbol, wavelet_mask, MAX_ORDER};
use blwave_core::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

#[test]
fn first_roots() {
    assert_relative_eq!(order_tables(1).unwrap().roots[0], 2.0 - 3f64.sqrt(), epsilon = 1e-14);
    let t = order_tables(2).unwrap();
    assert_relative_eq!(t.roots[0], 0.43057535, epsilon = 1e-7);
    assert_relative_eq!(t.roots[1], 0.04309628, epsilon = 1e-7);
}

#[test]
fn roots_are_ordered_in_unit_interval() {
    for n in 1..=MAX_ORDER {
        let t = order_tables(n).unwrap();
        assert_eq!(t.roots.len(), n);
        assert!(t.roots.windows(2).all(|w| w[0] > w[1]));
        assert!(t.roots.iter().all(|r| *r > 0.0 && *r < 1.0));
    }
}

#[test]
fn order_limits() {
    assert!(matches!(order_tables(0), Err(Error::InvalidParams(_))));
    assert!(matches!(order_tables(MAX_ORDER + 1), Err(Error::OrderTooLarge(_))));
}

#[test]
fn symbol_is_periodized_bspline_spectrum() {
    // ℙ_n(ω) = Σ_k |B̂_n(ω + 2πk)|², summed directly
    for n in 1..=4 {
        let p = symbol(n);
        for i in 0..16 {
            let w = 0.1 + 0.37 * i as f64;
            let direct: f64 = (-4000..=4000).map(|k| fourier_magnitude(n, w + 2.0 * PI * k as f64).powi(2)).sum();
            assert_relative_eq!(p.value(w), direct, epsilon = 1e-9);
        }
        assert_relative_eq!(p.value(0.0), 1.0, epsilon = 1e-14);
        assert!(p.grid_min(1024) > 0.0);
    }
}

#[test]
fn lambda_cosine_expansion() {
    for n in 1..=5 {
        let t = order_tables(n).unwrap();
        for i in 0..32 {
            let th = 0.2 * i as f64;
            let prod: f64 = t.roots.iter().map(|r| 1.0 + r * r - 2.0 * r * th.cos()).product();
            let series: f64 = t
                .lambda
                .iter()
                .enumerate()
                .map(|(j, l)| if j % 2 == 0 { 1.0 } else { -1.0 } * l * (j as f64 * th).cos())
                .sum();
            assert_relative_eq!(prod, t.root_product() * series, epsilon = 1e-11, max_relative = 1e-11);
        }
    }
}

#[test]
fn script_a_modulus_matches_product() {
    for n in 1..=4 {
        let t = order_tables(n).unwrap();
        let a = modulus_sq_script_a(&t);
        for i in 0..20 {
            let w = 0.3 * i as f64;
            let direct: f64 = t.roots.iter().map(|r| 1.0 + r * r - 2.0 * r * w.cos()).product();
            assert_relative_eq!(a.value(w), direct, epsilon = 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn qmf_pair(n in 1usize..6, k in -3i64..3, s in -3i64..3, w in -10.0f64..10.0) {
        let t = order_tables(n).unwrap();
        let (m0, m1) = (scaling_mask(&t, k, w), scaling_mask(&t, k, w + PI));
        let (g0, g1) = (wavelet_mask(&t, k, s, w), wavelet_mask(&t, k, s, w + PI));
        prop_assert!((m0.norm_sqr() + m1.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!((g0.norm_sqr() + g1.norm_sqr() - 1.0).abs() < 1e-10);
        // the wavelet mask is orthogonal to the scaling mask
        prop_assert!((m0 * g0.conj() + m1 * g1.conj()).norm() < 1e-10);
    }
}
