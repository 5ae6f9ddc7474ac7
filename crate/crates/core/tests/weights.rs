use approx::assert_relative_eq;
use blwave_core::weights::{
    ap_global_constant, ap_local_constant, dual_weight, min_order, r0_estimate, sigmas, Cube, CubeFamily, SpaceKind,
    SpaceParams, Verdict, WeightKind, WeightModel,
};
use blwave_core::Error;
use proptest::prelude::*;

#[test]
fn spec_strings() {
    assert_eq!(WeightModel::parse("constant:c=1", 1).unwrap(), WeightModel::constant(1.0, 1));
    assert_eq!(WeightModel::parse("power:alpha=0.5", 2).unwrap(), WeightModel::power(0.5, 2));
    let h = WeightModel::parse("hybrid:alpha=0.5,rate=2", 1).unwrap();
    assert_eq!(h.kind, WeightKind::Hybrid { alpha: 0.5, rate: 2.0 });
    assert_eq!(WeightModel::parse("power:alpha=1,c=3", 1).unwrap().scale, 3.0);
    for bad in ["power", "power:alpha=x", "gauss:a=1", "constant:c=-1", "power:alpha=1,beta=2", "table:"] {
        assert!(matches!(WeightModel::parse(bad, 1), Err(Error::InvalidWeightSpec(_))), "{bad}");
    }
}

#[test]
fn table_file() {
    let dir = std::env::temp_dir().join(format!("blwave-weights-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("w.txt");
    std::fs::write(&path, "# radius value\n0 1\n1, 3\n2 3\n").unwrap();
    let w = WeightModel::parse(&format!("table:file={}", path.display()), 1).unwrap();
    assert_relative_eq!(w.evaluate(&[0.5]), 2.0);
    assert_relative_eq!(w.evaluate(&[-5.0]), 3.0);
    // ∫_0^2 = ∫_0^1 (1 + 2x) + 2·... = 2 + 3
    assert_relative_eq!(w.cube_mass(&Cube::new(vec![0.0], 2.0)).unwrap(), 5.0, epsilon = 1e-10);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn non_integrable_power() {
    let w = WeightModel::power(-1.5, 1);
    assert!(!w.is_locally_integrable());
    assert!(matches!(w.cube_mass(&Cube::new(vec![-1.0], 2.0)), Err(Error::NonIntegrable(_))));
    // away from the origin the mass is finite
    assert!(w.cube_mass(&Cube::new(vec![1.0], 1.0)).unwrap() > 0.0);
}

#[test]
fn constant_weight_is_a1() {
    let w = WeightModel::constant(2.0, 1);
    let fam = CubeFamily::default_for(1);
    let est = ap_local_constant(&w, 2.0, &fam).unwrap();
    assert_eq!(est.verdict, Verdict::Stable);
    assert_relative_eq!(est.constant, 1.0, epsilon = 1e-9);
    assert_eq!(ap_global_constant(&w, 3.0, &fam).unwrap().verdict, Verdict::Stable);
}

#[test]
fn r0_of_linear_weight() {
    // |x| ∈ 𝒜_r exactly for r > 2
    let est = r0_estimate(&WeightModel::power(1.0, 1), &[1.0, 1.5, 2.0, 2.5, 3.0, 4.0], &CubeFamily::default_for(1)).unwrap();
    assert_eq!(est.analytic, Some(2.0));
    assert!((est.r0 - 2.0).abs() <= 0.1, "{}", est.r0);
}

#[test]
fn sigma_examples() {
    assert_relative_eq!(sigmas(1.0, 2.0, 0.5, 1).1, 1.0);
    assert_relative_eq!(sigmas(2.0, 1.0, 1.0, 1).0, 2.0);
    let (sp, sq, spq) = sigmas(1.5, 1.0, 0.25, 2);
    assert_relative_eq!(spq, sp.max(sq));
    assert_eq!(min_order(0.0, 2.0, 2.0, 1, 1.0, SpaceKind::B), 2);
    assert_eq!(min_order(0.0, 2.0, 2.0, 1, 1.0, SpaceKind::F), 2);
    assert_eq!(min_order(2.5, 2.0, 2.0, 1, 1.0, SpaceKind::B), 4);
    // σ_q dominates only for F
    assert!(min_order(0.0, 2.0, 0.1, 1, 1.0, SpaceKind::F) > min_order(0.0, 2.0, 0.1, 1, 1.0, SpaceKind::B));
}

#[test]
fn params_validation() {
    let w = WeightModel::constant(1.0, 1);
    assert!(SpaceParams::new(0.0, 0.0, 1.0, w.clone(), 1.0).is_err());
    assert!(SpaceParams::new(0.0, f64::INFINITY, 1.0, w.clone(), 1.0).is_err());
    assert!(SpaceParams::new(0.0, 1.0, -1.0, w.clone(), 1.0).is_err());
    assert!(SpaceParams::new(0.0, 1.0, 1.0, w.clone(), 0.5).is_err());
    assert!(SpaceParams::new(0.0, 1.0, f64::INFINITY, w, 1.0).is_ok());
}

proptest! {
    #[test]
    fn power_mass_closed_form(alpha in -0.9f64..3.0, a in -3.0f64..3.0, side in 0.01f64..4.0) {
        let w = WeightModel::power(alpha, 1);
        let prim = |x: f64| x.signum() * x.abs().powf(alpha + 1.0) / (alpha + 1.0);
        let want = prim(a + side) - prim(a);
        let got = w.cube_mass(&Cube::new(vec![a], side)).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn constant_mass_is_volume(c in 0.1f64..10.0, dim in 1usize..4, side in 0.1f64..3.0) {
        let w = WeightModel::constant(c, dim);
        let got = w.cube_mass(&Cube::new(vec![-0.3; dim], side)).unwrap();
        prop_assert!((got - c * side.powi(dim as i32)).abs() < 1e-10 * got);
    }

    #[test]
    fn dual_power_weight(alpha in -0.5f64..2.0, p in 1.1f64..5.0, x in 0.1f64..4.0) {
        let d = dual_weight(&WeightModel::power(alpha, 1), p).unwrap();
        prop_assert!((d.evaluate(&[x]) - x.powf(-alpha / (p - 1.0))).abs() < 1e-10 * x.powf(-alpha / (p - 1.0)));
    }
}
