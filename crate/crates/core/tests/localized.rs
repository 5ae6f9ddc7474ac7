use approx::assert_relative_eq;
use blwave_core::battle_lemarie::{scaling_phi, wavelet_psi};
use blwave_core::bspline::bspline;
use blwave_core::euler_frobenius::order_tables;
use blwave_core::localized::{
    localization_coefficients, localized_phi, localized_psi, riesz_bounds, tensor_system, AxisSpec, DyadicIndex,
    WaveletSystem,
};
use blwave_core::Error;
use proptest::prelude::*;

#[test]
fn phi_is_scaled_bspline() {
    for n in 1..=5 {
        let t = order_tables(n).unwrap();
        let phi = localized_phi(&t, 2);
        let want = bspline(n).shift(2.0).scale(t.beta);
        assert!(phi.sub(&want).sup_norm() < 1e-12 * t.beta);
        assert_eq!(phi.support(), Some((2.0, (n + 3) as f64)));
    }
}

#[test]
fn localizations_are_finite_combinations() {
    for n in 1..=3 {
        let t = order_tables(n).unwrap();
        let c = localization_coefficients(&t, None, 0).unwrap();
        let phi = scaling_phi(&t, 0, 1e-13).unwrap().base;
        let psi = wavelet_psi(&t, 0, 0, 1e-13).unwrap().base;
        let combo_phi = c.alpha_prime.iter().enumerate().fold(phi.scale(0.0), |acc, (kap, a)| {
            acc.add(&phi.shift(-(kap as f64)).scale(*a))
        });
        assert!(combo_phi.sub(&localized_phi(&t, 0)).sup_norm() < 1e-9, "n={n}");
        let combo_psi = c.alpha_dblprime.iter().enumerate().fold(psi.scale(0.0), |acc, (j, a)| {
            acc.add(&psi.shift((c.dblprime_first + j as i64) as f64).scale(*a))
        });
        let exact = localized_psi(&t, None, 0, 0, 0).unwrap();
        assert!(combo_psi.sub(&exact).sup_norm() < 1e-8 * exact.sup_norm(), "n={n}");
    }
}

#[test]
fn kk_requires_second_table() {
    let t = order_tables(2).unwrap();
    assert!(matches!(localized_psi(&t, None, 1, 0, 0), Err(Error::InvalidParams(_))));
    assert!(matches!(localized_psi(&t, Some(&t), 2, 0, 0), Err(Error::InvalidParams(_))));
}

#[test]
fn riesz_bounds_positive() {
    for n in 1..=4 {
        let t = order_tables(n).unwrap();
        let (lo, hi) = riesz_bounds(&localized_phi(&t, 0)).unwrap();
        assert!(lo > 0.0 && hi >= lo);
        let (lo, _) = riesz_bounds(&localized_psi(&t, Some(&t), 1, 0, 0).unwrap()).unwrap();
        assert!(lo > 0.0);
    }
}

#[test]
fn gram_sums_are_one() {
    let sys = tensor_system(&[AxisSpec::new(2, 1, 1, 0, 0), AxisSpec::new(3, 0, 0, 1, -1)]).unwrap();
    for i in 0..4 {
        assert_relative_eq!(sys.gram_sum(i).unwrap(), 1.0, epsilon = 1e-9);
    }
}

#[test]
fn member_dilation_and_translation() {
    let sys = WaveletSystem::isotropic(AxisSpec::new(2, 0, 0, 0, 0), 2).unwrap();
    let base = sys.member(&DyadicIndex::new(3, 0, vec![0, 0])).unwrap();
    let m = sys.member(&DyadicIndex::new(3, 2, vec![1, -2])).unwrap();
    for (x, y) in [(0.1, 0.2), (0.33, -0.41), (0.7, -0.9)] {
        let want = 4.0 * base.evaluate(&[4.0 * x - 1.0, 4.0 * y + 2.0]);
        assert_relative_eq!(m.evaluate(&[x, y]), want, epsilon = 1e-12);
    }
    // dilation preserves the L2 norm
    assert_relative_eq!(m.inner_product(&m), base.inner_product(&base), max_relative = 1e-12);
    assert!(sys.member(&DyadicIndex::new(4, 0, vec![0, 0])).is_err());
    assert!(sys.member(&DyadicIndex::new(1, 0, vec![0])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn psi_moments_vanish(n in 1usize..5, m in 1usize..4, kk in 0u8..2, k in -2i64..3, s in -2i64..3) {
        let tn = order_tables(n).unwrap();
        let tm = order_tables(m).unwrap();
        let psi = localized_psi(&tn, Some(&tm), kk, k, s).unwrap();
        let scale = psi.sup_norm();
        for j in 0..=n {
            prop_assert!(psi.moment_about(j, psi.support().unwrap().0).abs() < 1e-10 * scale.max(1.0));
        }
        // the first non-vanishing moment sits right after order n
        prop_assert!(psi.moment(n + 1).abs() > 1e-8);
    }

    #[test]
    fn psi_support_length(n in 1usize..5, m in 1usize..4, kk in 0u8..2, s in -3i64..3) {
        let tn = order_tables(n).unwrap();
        let tm = order_tables(m).unwrap();
        let (a, b) = localized_psi(&tn, Some(&tm), kk, 0, s).unwrap().support().unwrap();
        let mk = (m * kk as usize) as f64;
        prop_assert_eq!(b - a, 2.0 * n as f64 + 1.0 + 2.0 * mk);
    }
}
