use approx::assert_relative_eq;
use blwave_core::selftest::{cell_quadrature_norm, random_tree};
use blwave_core::seqspace::{
    norm_b, norm_bold_b, norm_bold_f, norm_f, rescale, CoefficientTree, DyadicCube, RescaleDirection,
};
use blwave_core::weights::{SpaceKind, SpaceParams, WeightModel};
use blwave_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree_from_seed(seed: u64, dim: usize, entries: usize) -> CoefficientTree {
    random_tree(&mut ChaCha8Rng::seed_from_u64(seed), dim, 3, entries)
}

fn params(s: f64, p: f64, q: f64, dim: usize, weighted: bool) -> SpaceParams {
    let w = if weighted { WeightModel::power(0.5, dim) } else { WeightModel::constant(1.0, dim) };
    SpaceParams::new(s, p, q, w, 1.5).unwrap()
}

#[test]
fn cube_geometry() {
    let q = DyadicCube::new(2, vec![1, -2]);
    assert_eq!(q.side(), 0.25);
    assert_eq!(q.center(), vec![0.25, -0.5]);
    assert!(q.contains(&[0.2, -0.5]));
    assert!(!q.contains(&[0.4, -0.5]));
    let g = q.dilated(3.0);
    assert_relative_eq!(g.side, 0.75);
    assert_relative_eq!(g.lower[0], 0.25 - 0.375);
}

#[test]
fn insert_validation() {
    let mut t = CoefficientTree::new(2);
    assert!(t.insert(0, 1, vec![0, 0], 1.0).is_err());
    assert!(t.insert(1, 0, vec![0, 0], 1.0).is_err());
    assert!(t.insert(4, 1, vec![0, 0], 1.0).is_err());
    assert!(t.insert(1, 1, vec![0], 1.0).is_err());
    assert!(t.insert(1, 1, vec![0, 0], f64::NAN).is_err());
    t.insert(3, 2, vec![1, 1], 0.5).unwrap();
    t.add(3, 2, vec![1, 1], -0.5).unwrap();
    assert!(t.is_empty());
}

#[test]
fn single_entry_norms() {
    // one level-1 entry, unweighted, N = 1: 2^{s−1/p} · |λ| · (2 · 1/2)^{1/p}
    let mut t = CoefficientTree::new(1);
    t.insert(1, 1, vec![0], 3.0).unwrap();
    let pr = params(1.0, 2.0, 1.0, 1, false);
    assert_relative_eq!(norm_b(&t, &pr).unwrap(), 3.0 * 2f64.powf(0.5), epsilon = 1e-14);
    assert_relative_eq!(norm_f(&t, &pr).unwrap(), 3.0 * 2f64.powf(0.5), epsilon = 1e-14);
    assert_relative_eq!(norm_bold_b(&t, &pr).unwrap(), 3.0, epsilon = 1e-14);
    assert_relative_eq!(norm_bold_f(&t, &pr).unwrap(), 3.0, epsilon = 1e-14);
}

#[test]
fn empty_tree_has_zero_norm() {
    let t = CoefficientTree::new(2);
    let pr = params(0.5, 1.0, 2.0, 2, true);
    assert_eq!(norm_b(&t, &pr).unwrap(), 0.0);
    assert_eq!(norm_f(&t, &pr).unwrap(), 0.0);
}

#[test]
fn nonintegrable_weight_is_reported() {
    let mut pr = params(0.0, 2.0, 2.0, 1, false);
    pr.weight = WeightModel::power(-1.2, 1);
    let mut near_origin = CoefficientTree::new(1);
    near_origin.insert(0, 0, vec![0], 1.0).unwrap();
    assert!(matches!(norm_b(&near_origin, &pr), Err(Error::NonIntegrable(_))));
}

#[test]
fn jsonl_round_trip() {
    let t = tree_from_seed(5, 2, 15);
    let mut buf = Vec::new();
    t.write_jsonl(&mut buf).unwrap();
    let back = CoefficientTree::read_jsonl(buf.as_slice(), 2).unwrap();
    assert_eq!(back, t);
    assert!(CoefficientTree::read_jsonl("{\"i\":0,\"d\":0,\"tau\":[1],\"value\":1}".as_bytes(), 2).is_err());
}

#[test]
fn rescale_matches_bold_b() {
    let t = tree_from_seed(9, 2, 20);
    let pr = params(1.3, 1.5, 0.7, 2, true);
    let bold = rescale(&t, &pr, SpaceKind::B, RescaleDirection::ToBold);
    assert_relative_eq!(norm_bold_b(&bold, &pr).unwrap(), norm_b(&t, &pr).unwrap(), max_relative = 1e-12);
    let back = rescale(&bold, &pr, SpaceKind::B, RescaleDirection::FromBold);
    for (a, b) in back.entries().zip(t.entries()) {
        assert_relative_eq!(a.value, b.value, max_relative = 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn homogeneity(seed in 0u64..1000, dim in 1usize..3, c in -5.0f64..5.0, p in 0.5f64..4.0, q in 0.5f64..4.0, s in -1.0f64..2.0) {
        let t = tree_from_seed(seed, dim, 12);
        let pr = params(s, p, q, dim, seed % 2 == 0);
        let tc = t.scaled(c);
        prop_assert!((norm_b(&tc, &pr).unwrap() - c.abs() * norm_b(&t, &pr).unwrap()).abs() <= 1e-10 * norm_b(&t, &pr).unwrap().max(1.0) * c.abs().max(1.0));
        prop_assert!((norm_f(&tc, &pr).unwrap() - c.abs() * norm_f(&t, &pr).unwrap()).abs() <= 1e-10 * norm_f(&t, &pr).unwrap().max(1.0) * c.abs().max(1.0));
    }

    #[test]
    fn monotone_in_entries(seed in 0u64..1000, dim in 1usize..3, p in 0.5f64..4.0, q in 0.5f64..4.0) {
        let t = tree_from_seed(seed, dim, 10);
        let pr = params(0.5, p, q, dim, false);
        let smaller = t.pruned(0.5);
        prop_assert!(norm_b(&smaller, &pr).unwrap() <= norm_b(&t, &pr).unwrap() * (1.0 + 1e-12));
        prop_assert!(norm_f(&smaller, &pr).unwrap() <= norm_f(&t, &pr).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn b_equals_f_when_p_equals_q(seed in 0u64..1000, dim in 1usize..3, p in 0.5f64..4.0, s in -1.0f64..2.0) {
        let t = tree_from_seed(seed, dim, 20);
        let pr = params(s, p, p, dim, seed % 3 == 0);
        let (b, f) = (norm_b(&t, &pr).unwrap(), norm_f(&t, &pr).unwrap());
        prop_assert!((b - f).abs() <= 1e-10 * b);
    }

    #[test]
    fn cell_oracle(seed in 0u64..1000, dim in 1usize..3, p in 0.5f64..4.0, q in 0.5f64..4.0, s in -1.0f64..2.0, inf in proptest::bool::ANY) {
        let t = tree_from_seed(seed, dim, 15);
        let q = if inf { f64::INFINITY } else { q };
        let pr = params(s, p, q, dim, seed % 2 == 1);
        let b = norm_b(&t, &pr).unwrap();
        let f = norm_f(&t, &pr).unwrap();
        prop_assert!((b - cell_quadrature_norm(&t, &pr, SpaceKind::B).unwrap()).abs() <= 1e-8 * b);
        prop_assert!((f - cell_quadrature_norm(&t, &pr, SpaceKind::F).unwrap()).abs() <= 1e-8 * f);
    }
}
