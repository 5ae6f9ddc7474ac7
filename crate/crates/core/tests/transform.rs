use approx::assert_relative_eq;
use blwave_core::bspline::bspline;
use blwave_core::localized::{tensor_system, AxisSpec, DyadicIndex, WaveletSystem};
use blwave_core::selftest::random_span;
use blwave_core::tensor::{Separable, SeparableSum};
use blwave_core::transform::{
    analyze, analyze_sampled, certify_atom, certify_kernel, convolution_norm, equivalence_experiment,
    orthonormal_system, synthesize, test_family, AtomSpec, KernelSpec, MollifierSpec, SampledGrid, SynthesisMode,
};
use blwave_core::weights::{SpaceKind, SpaceParams, WeightModel};
use blwave_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn system(n: usize) -> WaveletSystem {
    tensor_system(&[AxisSpec::new(n, 0, 0, 0, 0)]).unwrap()
}

#[test]
fn analysis_is_linear() {
    let sys = system(2);
    let f = SeparableSum::from_1d(bspline(3).affine_arg(1.5, 0.5));
    let g = SeparableSum::from_1d(bspline(1).shift(-0.7));
    let (a, b) = (0.8, -2.25);
    let lhs = analyze(&f.scaled(a).plus(&g.scaled(b)), &sys, 4).unwrap();
    let (tf, tg) = (analyze(&f, &sys, 4).unwrap(), analyze(&g, &sys, 4).unwrap());
    for e in lhs.entries() {
        let want = a * tf.get(e.i, e.d, &e.tau) + b * tg.get(e.i, e.d, &e.tau);
        assert!((e.value - want).abs() <= 1e-12 * lhs.max_abs(), "{e:?}");
    }
}

#[test]
fn level_orthogonality() {
    let sys = tensor_system(&[AxisSpec::new(2, 0, 0, 0, 0), AxisSpec::new(3, 1, 1, 0, 0)]).unwrap();
    let mut f = SeparableSum::zero(2);
    for (tau, c) in [(vec![0, 0], 1.0), (vec![1, -1], -0.5), (vec![3, 2], 2.0)] {
        let mut m = sys.member(&DyadicIndex::new(2, 1, tau)).unwrap();
        m.coeff *= c;
        f.push(m);
    }
    let tree = analyze(&f, &sys, 3).unwrap();
    let scale = tree.max_abs();
    for key in tree.layer_keys() {
        let mx = tree.layer(key.0, key.1).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        if key != (2, 2) {
            assert!(mx <= 1e-10 * scale, "layer {key:?}: {mx}");
        }
    }
}

#[test]
fn dual_mode_reproduces_spans() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for sys in [
        system(1),
        tensor_system(&[AxisSpec::new(3, 2, 1, 1, 0)]).unwrap(),
        WaveletSystem::isotropic(AxisSpec::new(2, 0, 0, 0, 0), 2).unwrap(),
    ] {
        let f = random_span(&mut rng, &sys, 30).unwrap();
        let tree = analyze(&f, &sys, 2).unwrap();
        let g = synthesize(&tree, &sys, SynthesisMode::Dual).unwrap();
        assert!(g.l2_distance(&f) <= 1e-8 * f.l2_norm());
    }
}

#[test]
fn direct_mode_residual_is_finite() {
    // reported, not asserted to vanish
    let sys = system(2);
    let f = SeparableSum::single(sys.member(&DyadicIndex::new(0, 0, vec![0])).unwrap());
    let g = synthesize(&analyze(&f, &sys, 2).unwrap(), &sys, SynthesisMode::Direct).unwrap();
    let r = g.l2_distance(&f) / f.l2_norm();
    assert!(r.is_finite() && r < 1.0);
}

#[test]
fn parseval_surrogate() {
    let tol = 1e-10;
    let sys = orthonormal_system(2, 0, 0, tol, 1).unwrap();
    let mut f = SeparableSum::zero(1);
    for (i, d, t, c) in [(0, 0, 0, 1.0), (0, 0, 2, -0.5), (1, 0, 1, 0.75), (1, 1, -1, 0.3)] {
        let mut m = sys.member(&DyadicIndex::new(i, d, vec![t])).unwrap();
        m.coeff *= c;
        f.push(m);
    }
    let tree = analyze(&f, &sys, 2).unwrap();
    let energy: f64 = tree.entries().map(|e| e.value * e.value * if e.d == 0 { 1.0 } else { 2f64.powi(-(e.d as i32)) }).sum();
    let norm2 = f.l2_norm().powi(2);
    assert!((energy - norm2).abs() <= 10.0 * tol * norm2.max(1.0), "{energy} vs {norm2}");
    let g = synthesize(&tree, &sys, SynthesisMode::Direct).unwrap();
    assert!(g.l2_distance(&f) <= 10.0 * tol * f.l2_norm().max(1.0));
}

#[test]
fn dilation_covariance() {
    let sys = system(2);
    let b = bspline(3).shift(-1.0);
    let f = SeparableSum::from_1d(b.clone());
    let g = SeparableSum::from_1d(b.affine_arg(2.0, 0.0));
    let (tf, tg) = (analyze(&f, &sys, 3).unwrap(), analyze(&g, &sys, 4).unwrap());
    for e in tf.entries().filter(|e| e.d >= 1) {
        assert_relative_eq!(tg.get(e.i, e.d + 1, &e.tau), e.value, epsilon = 1e-12 * tf.max_abs());
    }
}

#[test]
fn sampled_analysis() {
    let axes = vec![(0..=40).map(|i| -1.0 + 0.1 * i as f64).collect::<Vec<_>>()];
    let values: Vec<f64> = axes[0].iter().map(|x| (1.0 - x.abs()).max(0.0)).collect();
    let grid = SampledGrid::new(axes, values).unwrap();
    let interp = grid.interpolant().unwrap();
    assert_relative_eq!(interp.evaluate(&[0.25]), 0.75, epsilon = 1e-14);
    let res = analyze_sampled(&grid, &system(2), 3).unwrap();
    let direct = analyze(&SeparableSum::from_1d(bspline(1).shift(-1.0)), &system(2), 3).unwrap();
    for e in direct.entries() {
        assert!((res.tree.get(e.i, e.d, &e.tau) - e.value).abs() <= 1e-12 + res.error_bound);
    }
    assert!(SampledGrid::new(vec![vec![0.0, 1.0]], vec![1.0]).is_err());
    assert!(SampledGrid::new(vec![vec![1.0, 0.0]], vec![1.0, 2.0]).is_err());
}

#[test]
fn mollifier_moments() {
    for gamma in [0, 2, 4] {
        let m = MollifierSpec::new(gamma, 1).unwrap();
        assert_relative_eq!(m.mass(), 1.0, epsilon = 1e-12);
        assert!(m.moment_defect() < 1e-10, "Γ={gamma}: {}", m.moment_defect());
    }
    assert!(MollifierSpec::new(13, 1).is_err());
    let f = SeparableSum::from_1d(bspline(2));
    let err = convolution_norm(&f, &SpaceParams::unweighted(3.5, 2.0, 2.0, 1).unwrap(), SpaceKind::B, &MollifierSpec::new(2, 1).unwrap(), 4);
    assert!(matches!(err, Err(Error::MomentDeficit { gamma: 2, required: 3 })));
}

#[test]
fn convolution_norm_converges_in_depth() {
    let f = SeparableSum::from_1d(bspline(2));
    let moll = MollifierSpec::new(2, 1).unwrap();
    let pr = SpaceParams::unweighted(1.0, 2.0, 2.0, 1).unwrap();
    let n6 = convolution_norm(&f, &pr, SpaceKind::B, &moll, 6).unwrap();
    let n8 = convolution_norm(&f, &pr, SpaceKind::B, &moll, 8).unwrap();
    assert!((n6.norm - n8.norm).abs() <= 0.02 * n8.norm);
    assert_eq!(n8.blocks.len(), 9);
    assert!(n8.tail_ratio < 1.0);
}

#[test]
fn equivalence_scalars_and_translates() {
    let sys = system(2);
    let moll = MollifierSpec::new(1, 1).unwrap();
    let pr = SpaceParams::unweighted(0.5, 2.0, 2.0, 1).unwrap();
    let fam = test_family(&SeparableSum::from_1d(bspline(2)), &[vec![1.0], vec![3.0]], &[], &[2.0, -0.5]);
    let table = equivalence_experiment(&fam, &pr, SpaceKind::F, &sys, &moll, 5).unwrap();
    let base = table.rows[0].ratio;
    for row in &table.rows {
        assert!((row.ratio - base).abs() <= 1e-8 * base, "{}: {} vs {base}", row.id, row.ratio);
    }
}

#[test]
fn equivalence_needs_enough_order() {
    let pr = SpaceParams::new(1.0, 2.0, 2.0, WeightModel::power(0.5, 1), 1.5).unwrap();
    let fam = test_family(&SeparableSum::from_1d(bspline(2)), &[], &[], &[]);
    let err = equivalence_experiment(&fam, &pr, SpaceKind::B, &system(1), &MollifierSpec::new(2, 1).unwrap(), 4);
    assert!(matches!(err, Err(Error::OrderTooSmall { order: 1, required: 3 })));
}

#[test]
fn certification_rejects_bad_atoms() {
    let sys = system(2);
    let atom = AtomSpec { k: 1, l: 1, dilation: 8.0, s: 1.0, p: 2.0 };
    let phi = sys.member(&DyadicIndex::new(0, 0, vec![0])).unwrap();
    let base = certify_atom(&phi, &atom, 0, &[0]).unwrap();
    assert!(base.passes);
    // a multiple is still an atom up to the reported constant
    let mut big = phi.clone();
    big.coeff *= 1e3;
    assert_relative_eq!(certify_atom(&big, &atom, 0, &[0]).unwrap().constant, 1e3 * base.constant, max_relative = 1e-12);
    // no vanishing moments at a positive level
    let narrow = Separable::new(0.01, vec![phi.factors[0].affine_arg(8.0, 0.0)]);
    let r = certify_atom(&narrow, &atom, 3, &[0]).unwrap();
    assert!(!r.moments_ok && !r.passes);
    // support outside the dilated cube
    let far = sys.member(&DyadicIndex::new(0, 0, vec![40])).unwrap();
    assert!(!certify_atom(&far, &atom, 0, &[0]).unwrap().support_ok);
    // too little smoothness for the requested derivatives
    let rough = AtomSpec { k: 3, ..atom };
    assert!(!certify_atom(&phi, &rough, 0, &[0]).unwrap().smooth_ok);
    let kernel = KernelSpec { a: 1, b: 1, c: 8.0 };
    assert!(certify_kernel(&phi, &kernel, 0, &[0]).unwrap().passes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn round_trip_random_spans(seed in 0u64..10_000, n in 1usize..4, count in 1usize..25) {
        let sys = system(n);
        let f = random_span(&mut ChaCha8Rng::seed_from_u64(seed), &sys, count).unwrap();
        prop_assume!(f.l2_norm() > 1e-6);
        let tree = analyze(&f, &sys, 2).unwrap();
        let g = synthesize(&tree, &sys, SynthesisMode::Dual).unwrap();
        prop_assert!(g.l2_distance(&f) <= 1e-8 * f.l2_norm());
    }
}
