//! Acceptance checks, shared by the `acceptance` integration test and `blwave selftest`.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::battle_lemarie::{psi_explicit_check, scaling_phi, wavelet_psi, DEFAULT_TOL};
use crate::bspline::bspline;
use crate::error::Result;
use crate::euler_frobenius::{order_tables, scaling_mask, symbol};
use crate::localized::{localized_phi, localized_psi, AxisSpec, DyadicIndex, WaveletSystem, tensor_system};
use crate::seqspace::{norm_b, norm_f, CoefficientTree, DyadicCube};
use crate::tensor::{advance, SeparableSum};
use crate::transform::{
    analyze, certify_atom, certify_kernel, equivalence_experiment, synthesize, test_family, AtomSpec, KernelSpec,
    MollifierSpec, SynthesisMode,
};
use crate::weights::{
    ap_global_constant, ap_local_constant, min_order, r0_estimate, Cube, CubeFamily, SpaceKind, SpaceParams, Verdict,
    WeightModel,
};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Set when the failure is a known, characterized disagreement with the stated target.
    pub known_deviation: Option<String>,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {}: {} [{:.2} s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )?;
        if let Some(k) = &self.known_deviation {
            write!(f, " (known deviation: {k})")?;
        }
        Ok(())
    }
}

pub const TITLES: [&str; 14] = [
    "symbol factorization",
    "beta consistency",
    "orthonormality",
    "QMF identity",
    "exact supports",
    "vanishing moments",
    "Gram sum-to-one",
    "explicit-formula agreement",
    "weight classifier",
    "minimal order",
    "sequence-norm oracle",
    "dual-mode reproduction",
    "equivalence band",
    "atom/kernel certification",
];

struct Outcome {
    passed: bool,
    detail: String,
    known_deviation: Option<String>,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail, known_deviation: None }
}

/// Runs criterion `id` (1..=14); computational errors count as failures.
pub fn run_criterion(id: u8) -> CriterionResult {
    let start = Instant::now();
    let res: Result<Outcome> = match id {
        1 => symbol_factorization(),
        2 => beta_consistency(),
        3 => orthonormality(),
        4 => qmf_identity(),
        5 => exact_supports(),
        6 => vanishing_moments(),
        7 => gram_sums(),
        8 => explicit_formulas(),
        9 => weight_classifier(),
        10 => minimal_order(),
        11 => sequence_norm_oracle(),
        12 => dual_reproduction(),
        13 => equivalence_band(),
        14 => certification(),
        _ => Ok(outcome(false, format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let Outcome { mut passed, mut detail, known_deviation } =
        res.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    let limit = match id {
        1 => Some(1.0),
        3 => Some(30.0),
        12 => Some(60.0),
        _ => None,
    };
    if let Some(limit) = limit {
        if seconds >= limit {
            passed = false;
            detail.push_str(&format!("; runtime {seconds:.1} s exceeds {limit} s"));
        }
    }
    let title = TITLES.get(id.wrapping_sub(1) as usize).copied().unwrap_or("unknown");
    CriterionResult { id, title, passed, detail, known_deviation, seconds }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=14).map(run_criterion).collect()
}

fn grid(points: usize, period: f64) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| period * i as f64 / points as f64)
}

fn symbol_factorization() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        let t = order_tables(n)?;
        let p = symbol(n);
        for w in grid(4096, 2.0 * std::f64::consts::PI) {
            let prod: f64 = t.roots.iter().map(|r| 1.0 + r * r + 2.0 * r * w.cos()).product();
            worst = worst.max((p.value(w) - prod / (t.beta * t.beta)).abs());
        }
    }
    let r1 = order_tables(1)?.roots[0];
    let dev = (r1 - (2.0 - 3f64.sqrt())).abs();
    Ok(outcome(worst <= 1e-10 && dev <= 1e-12, format!("max residual {worst:.2e}; |r_1(1) − (2−√3)| = {dev:.2e}")))
}

fn beta_consistency() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        let t = order_tables(n)?;
        let lhs: f64 = t.roots.iter().map(|r| 1.0 + r).product();
        let inner: f64 = t.roots.iter().zip(&t.rho).map(|(r, rho)| (rho + 2.0) / 4.0 * r).product();
        worst = worst.max((lhs - 2f64.powi(n as i32) * inner.sqrt()).abs());
    }
    Ok(outcome(worst <= 1e-10, format!("max |∏(1+r_j) − 2^n√(∏α_j r_j)| = {worst:.2e} for n ≤ 5")))
}

fn orthonormality() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for n in 1..=4 {
        let t = order_tables(n)?;
        let phi = scaling_phi(&t, 0, DEFAULT_TOL)?.base;
        let psi = wavelet_psi(&t, 0, 0, DEFAULT_TOL)?.base;
        for tau in -5i32..=5 {
            let delta = if tau == 0 { 1.0 } else { 0.0 };
            let shift = tau as f64;
            worst = worst.max((phi.inner_product(&phi.shift(shift)) - delta).abs());
            worst = worst.max((psi.inner_product(&psi.shift(shift)) - delta).abs());
            cross = cross.max(psi.inner_product(&phi.shift(shift)).abs());
        }
    }
    Ok(outcome(
        worst <= 1e-7 && cross <= 1e-7,
        format!("max Gram deviation {worst:.2e}, max cross pairing {cross:.2e} (n ≤ 4, |τ| ≤ 5)"),
    ))
}

fn qmf_identity() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        let t = order_tables(n)?;
        for w in grid(1024, 2.0 * std::f64::consts::PI) {
            let v = scaling_mask(&t, 0, w).norm_sqr() + scaling_mask(&t, 0, w + std::f64::consts::PI).norm_sqr();
            worst = worst.max((v - 1.0).abs());
        }
    }
    Ok(outcome(worst <= 1e-10, format!("max ||m(ω)|² + |m(ω+π)|² − 1| = {worst:.2e}")))
}

fn exact_supports() -> Result<Outcome> {
    let mut phi_bad = Vec::new();
    let mut psi_bad = Vec::new();
    let mut psi_alt_ok = true;
    let mut cases = 0;
    for n in 1..=4usize {
        let tn = order_tables(n)?;
        for k in [-1i64, 0, 2] {
            let got = localized_phi(&tn, k).support();
            if got != Some((k as f64, (k + n as i64 + 1) as f64)) {
                phi_bad.push(format!("n={n} k={k}: {}", interval(got)));
            }
        }
        for kk in 0..=1u8 {
            for m in if kk == 0 { 0..=0 } else { 1..=3 } {
                let tm = if kk == 1 { Some(order_tables(m)?) } else { None };
                for s in [-1i64, 0, 1] {
                    cases += 1;
                    let got = localized_psi(&tn, tm.as_ref(), kk, 0, s)?.support();
                    let mk = (m * kk as usize) as f64;
                    let (nf, sf) = (n as f64, s as f64);
                    let claimed = (sf - nf / 2.0 - mk, sf + 1.5 * nf + mk + 1.0);
                    let alternative = (sf - nf - mk, sf + nf + 1.0 + mk);
                    if got != Some(claimed) {
                        psi_bad.push(format!("n={n} m={m} 𝕜={kk} s={s}: {} vs {}", interval(got), interval(Some(claimed))));
                    }
                    psi_alt_ok &= got == Some(alternative);
                }
            }
        }
    }
    let passed = phi_bad.is_empty() && psi_bad.is_empty();
    let detail = format!(
        "Φ: {} mismatches; Ψ: {} of {cases} cases differ from [s−n/2−m𝕜, s+3n/2+m𝕜+1]{}",
        phi_bad.len(),
        psi_bad.len(),
        psi_bad.first().map(|e| format!(", e.g. {e}")).unwrap_or_default()
    );
    let known = (phi_bad.is_empty() && !psi_bad.is_empty() && psi_alt_ok).then(|| {
        "every Ψ support equals [s−n−m𝕜, s+n+1+m𝕜] at the knot level; the stated interval has the \
         length 2n+1+2m𝕜 of the true one but is offset by n/2"
            .to_string()
    });
    Ok(Outcome { passed, detail, known_deviation: known })
}

fn interval(i: Option<(f64, f64)>) -> String {
    i.map_or_else(|| "∅".to_string(), |(a, b)| format!("[{a}, {b}]"))
}

fn vanishing_moments() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for n in 1..=4usize {
        let tn = order_tables(n)?;
        for kk in 0..=1u8 {
            for m in if kk == 0 { 0..=0 } else { 1..=3 } {
                let tm = if kk == 1 { Some(order_tables(m)?) } else { None };
                let psi = localized_psi(&tn, tm.as_ref(), kk, 0, 0)?;
                for k in 0..=n {
                    worst = worst.max(psi.moment(k).abs());
                }
            }
        }
    }
    Ok(outcome(worst <= 1e-12, format!("max |∫x^k Ψ| = {worst:.2e} (k ≤ n ≤ 4, 𝕜 ∈ {{0,1}}, m ≤ 3)")))
}

fn gram_sums() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for kk in 0..=1u8 {
        for n1 in 1..=3usize {
            let m = |n: usize| if kk == 1 { n } else { 0 };
            let sys = tensor_system(&[AxisSpec::new(n1, m(n1), kk, 0, 0)])?;
            for i in 0..=1 {
                worst = worst.max((sys.gram_sum(i)? - 1.0).abs());
                count += 1;
            }
            for n2 in 1..=3usize {
                let sys = tensor_system(&[AxisSpec::new(n1, m(n1), kk, 0, 0), AxisSpec::new(n2, m(n2), kk, 1, 0)])?;
                for i in 0..=3 {
                    worst = worst.max((sys.gram_sum(i)? - 1.0).abs());
                    count += 1;
                }
            }
        }
    }
    Ok(outcome(worst <= 1e-8, format!("max |Σλ_h − 1| = {worst:.2e} over {count} (system, type) pairs")))
}

fn explicit_formulas() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut passed = true;
    for n in 1..=2 {
        let t = order_tables(n)?;
        for (k, s) in [(0i64, 0i64), (1, 2)] {
            let r = psi_explicit_check(&t, k, s, DEFAULT_TOL)?;
            passed &= r.deviation <= 2.0 * DEFAULT_TOL;
            parts.push(format!("n={n} k={k} s={s}: {:.2e}", r.deviation));
        }
    }
    Ok(outcome(passed, format!("sup deviations {} (limit {:.0e})", parts.join(", "), 2.0 * DEFAULT_TOL)))
}

fn weight_classifier() -> Result<Outcome> {
    let fam = CubeFamily::default_for(1);
    let sqrt = ap_local_constant(&WeightModel::power(0.5, 1), 2.0, &fam)?;
    let tr = &sqrt.refinement_trace;
    let change = if tr.len() >= 2 {
        (tr[tr.len() - 1].constant - tr[tr.len() - 2].constant).abs() / tr[tr.len() - 2].constant
    } else {
        f64::INFINITY
    };
    let sqrt_ok = sqrt.verdict == Verdict::Stable && change < 0.02;

    let sing = ap_local_constant(&WeightModel::power(-2.0, 1), 2.0, &fam)?;
    let growth: Vec<f64> =
        sing.refinement_trace.windows(2).map(|w| w[1].constant / w[0].constant).collect();
    let sing_ok = sing.verdict == Verdict::Divergent && growth.iter().all(|g| *g >= 10.0);

    let hybrid = WeightModel::hybrid(0.5, 1);
    let hl = ap_local_constant(&hybrid, 2.0, &fam)?;
    let hg = ap_global_constant(&hybrid, 2.0, &fam)?;
    let hybrid_ok = hl.verdict == Verdict::Stable && hg.verdict == Verdict::Divergent;

    let r0 = r0_estimate(&WeightModel::power(0.5, 1), &[1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0], &fam)?;
    let r0_ok = (r0.r0 - 1.5).abs() <= 0.1;
    Ok(outcome(
        sqrt_ok && sing_ok && hybrid_ok && r0_ok,
        format!(
            "|x|^(1/2): {:?}, last change {:.2}%; |x|^(−2): {:?}, growth {:?}; hybrid: local {:?} ({:.3}), \
             global {:?} ({:.3e}); r0 = {:.4}",
            sqrt.verdict,
            100.0 * change,
            sing.verdict,
            growth.iter().map(|g| format!("×{g:.1}")).collect::<Vec<_>>(),
            hl.verdict,
            hl.constant,
            hg.verdict,
            hg.constant,
            r0.r0
        ),
    ))
}

fn minimal_order() -> Result<Outcome> {
    // (s, p, q, r0, space, expected), N = 1
    let cases = [
        (0.0, 2.0, 2.0, 1.0, SpaceKind::B, 2usize),
        (0.0, 2.0, 2.0, 1.0, SpaceKind::F, 2),
        (2.5, 2.0, 2.0, 1.0, SpaceKind::B, 4),
        (1.2, 1.0, 0.5, 3.0, SpaceKind::F, 3),
    ];
    let mut parts = Vec::new();
    let mut passed = true;
    for (s, p, q, r0, space, want) in cases {
        let got = min_order(s, p, q, 1, r0, space);
        // independent reading of the order inequality, by search
        let sigma_p = (r0 / f64::min(p, r0) - 1.0) + (r0 - 1.0);
        let sigma_q = 1.0 / f64::min(1.0, q) - 1.0;
        let sigma = if space == SpaceKind::B { sigma_p } else { sigma_p.max(sigma_q) };
        let bracket = [0.0, s.floor() + 1.0, ((r0 - 1.0) / p - s).floor() + 1.0, (sigma - s).floor()]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let searched = (0usize..).find(|&n| n as f64 >= bracket + 1.0).unwrap_or(usize::MAX);
        passed &= got == searched && got == want;
        parts.push(format!("{space:?} s={s} p={p} q={q} r0={r0}: {got} (search {searched})"));
    }
    Ok(outcome(passed, parts.join(", ")))
}

/// Naive quadrature of the defining integrals over every cell of the finest dyadic grid.
pub fn cell_quadrature_norm(tree: &CoefficientTree, params: &SpaceParams, space: SpaceKind) -> Result<f64> {
    let (p, q, s) = (params.p, params.q, params.s);
    let dim = tree.dim;
    let n = dim as f64;
    let entries: Vec<_> = tree.entries().collect();
    if entries.is_empty() {
        return Ok(0.0);
    }
    let depth = tree.depth();
    let h = 2f64.powi(-(depth as i32 + 1));
    let cubes: Vec<DyadicCube> = entries.iter().map(|e| DyadicCube::new(e.d, e.tau.clone())).collect();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for c in &cubes {
        let g = c.geometry();
        for l in 0..dim {
            lo[l] = lo[l].min((g.lower[l] / h).round() as i64);
            hi[l] = hi[l].max(((g.lower[l] + g.side) / h).round() as i64);
        }
    }
    let sizes: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a) as usize).collect();
    let level_blocks: Vec<(usize, u32)> = tree.layer_keys().filter(|k| k.1 >= 1).collect();
    let mut head = 0.0;
    let mut blocks = vec![0.0; level_blocks.len()];
    let mut body = 0.0;
    let mut idx = vec![0usize; dim];
    loop {
        let lower: Vec<f64> = idx.iter().zip(&lo).map(|(&k, &a)| (a + k as i64) as f64 * h).collect();
        let center: Vec<f64> = lower.iter().map(|x| x + 0.5 * h).collect();
        let mut level0 = 0.0;
        let mut per_block = vec![0.0; level_blocks.len()];
        let mut pointwise = 0.0;
        for (e, c) in entries.iter().zip(&cubes) {
            if !c.contains(&center) {
                continue;
            }
            let chi = 2f64.powf(e.d as f64 * n / p);
            let a = e.value.abs() * chi;
            if e.d == 0 {
                level0 += a;
            } else {
                let b = level_blocks.iter().position(|k| *k == (e.i, e.d)).unwrap_or(0);
                per_block[b] += a;
                let scaled = 2f64.powf(e.d as f64 * (s - n / p)) * a;
                pointwise = if q.is_infinite() { f64::max(pointwise, scaled) } else { pointwise + scaled.powf(q) };
            }
        }
        if level0 > 0.0 || per_block.iter().any(|v| *v > 0.0) {
            let mass = params.weight.cube_mass(&Cube::new(lower, h))?;
            head += level0.powf(p) * mass;
            for (acc, v) in blocks.iter_mut().zip(&per_block) {
                *acc += v.powf(p) * mass;
            }
            let f_point = if q.is_infinite() { pointwise } else { pointwise.powf(1.0 / q) };
            body += f_point.powf(p) * mass;
        }
        if !advance(&mut idx, &sizes) {
            break;
        }
    }
    let head = head.powf(1.0 / p);
    Ok(match space {
        SpaceKind::B => {
            let scaled = level_blocks
                .iter()
                .zip(&blocks)
                .map(|((_, d), v)| 2f64.powf(*d as f64 * (s - n / p)) * v.powf(1.0 / p));
            let tail = if q.is_infinite() {
                scaled.fold(0.0, f64::max)
            } else {
                scaled.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
            };
            head + tail
        }
        SpaceKind::F => head + body.powf(1.0 / p),
    })
}

/// Sparse tree with `entries` random values, levels `≤ depth`, translations near the origin.
pub fn random_tree(rng: &mut impl Rng, dim: usize, depth: u32, entries: usize) -> CoefficientTree {
    let mut tree = CoefficientTree::new(dim);
    while tree.len() < entries {
        let d = rng.gen_range(0..=depth);
        let i = if d == 0 { 0 } else { rng.gen_range(1..1usize << dim) };
        let reach = 2i64 << d;
        let tau = (0..dim).map(|_| rng.gen_range(-reach..=reach)).collect();
        let v: f64 = rng.gen_range(-1.0..1.0);
        tree.insert(i, d, tau, v).expect("valid random entry");
    }
    tree
}

fn sequence_norm_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_oracle: f64 = 0.0;
    let mut worst_bf: f64 = 0.0;
    let ps = [0.7, 1.0, 2.0, 3.0];
    let qs = [0.5, 1.0, 2.0, f64::INFINITY];
    for trial in 0..20 {
        let dim = 1 + trial % 2;
        let depth = if dim == 1 { 4 } else { 3 };
        let entries = rng.gen_range(1..=20);
        let tree = random_tree(&mut rng, dim, depth, entries);
        let weight = if trial % 4 < 2 { WeightModel::power(0.5, dim) } else { WeightModel::constant(1.0, dim) };
        let p = ps[rng.gen_range(0..ps.len())];
        let q = qs[rng.gen_range(0..qs.len())];
        let s = rng.gen_range(-1.0..2.0);
        let params = SpaceParams::new(s, p, q, weight, 1.5)?;
        for space in [SpaceKind::B, SpaceKind::F] {
            let fast = match space {
                SpaceKind::B => norm_b(&tree, &params)?,
                SpaceKind::F => norm_f(&tree, &params)?,
            };
            let slow = cell_quadrature_norm(&tree, &params, space)?;
            worst_oracle = worst_oracle.max((fast - slow).abs() / slow.max(f64::MIN_POSITIVE));
        }
        let pq = SpaceParams::new(s, p, p, params.weight.clone(), 1.5)?;
        let (b, f) = (norm_b(&tree, &pq)?, norm_f(&tree, &pq)?);
        worst_bf = worst_bf.max((b - f).abs() / b);
    }
    Ok(outcome(
        worst_oracle <= 1e-8 && worst_bf <= 1e-10,
        format!("max relative oracle gap {worst_oracle:.2e}; max |b − f|/b at p = q {worst_bf:.2e} (20 trees)"),
    ))
}

/// Random combination of `count` members, levels `≤ 2`, near the origin.
pub fn random_span(rng: &mut impl Rng, system: &WaveletSystem, count: usize) -> Result<SeparableSum> {
    let dim = system.dim;
    let mut f = SeparableSum::zero(dim);
    for _ in 0..count {
        let i = rng.gen_range(0..=system.wavelet_types());
        let d = if i == 0 { 0 } else { rng.gen_range(0..=1u32) };
        let tau = (0..dim).map(|_| rng.gen_range(-3i64..=3)).collect();
        let mut m = system.member(&DyadicIndex::new(i, d, tau))?;
        m.coeff *= rng.gen_range(-1.0..1.0);
        f.push(m);
    }
    Ok(f)
}

fn dual_reproduction() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let systems = [
        tensor_system(&[AxisSpec::new(2, 0, 0, 0, 0)])?,
        tensor_system(&[AxisSpec::new(1, 2, 1, 0, 0)])?,
        tensor_system(&[AxisSpec::new(3, 0, 0, 1, -1)])?,
        tensor_system(&[AxisSpec::new(2, 0, 0, 0, 0), AxisSpec::new(3, 0, 0, 0, 0)])?,
        tensor_system(&[AxisSpec::new(1, 1, 1, 0, 0), AxisSpec::new(2, 1, 1, 0, 1)])?,
    ];
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for sys in &systems {
        for count in [1usize, 12, 50] {
            let f = random_span(&mut rng, sys, count)?;
            let tree = analyze(&f, sys, 2)?;
            let g = synthesize(&tree, sys, SynthesisMode::Dual)?;
            worst = worst.max(g.l2_distance(&f) / f.l2_norm());
            runs += 1;
        }
    }
    Ok(outcome(worst <= 1e-8, format!("max relative L2 residual {worst:.2e} over {runs} spans (N ≤ 2, ≤ 50 members)")))
}

fn equivalence_band() -> Result<Outcome> {
    let params = SpaceParams::new(1.0, 2.0, 2.0, WeightModel::power(0.5, 1), 1.5)?;
    let order = params.min_order(SpaceKind::B);
    let system = tensor_system(&[AxisSpec::new(order, 0, 0, 0, 0)])?;
    let moll = MollifierSpec::new(2, 1)?;
    let family = test_family(&SeparableSum::from_1d(bspline(2)), &[], &[1, 2, 3, 4], &[]);
    let table = equivalence_experiment(&family, &params, SpaceKind::B, &system, &moll, 8)?;
    Ok(outcome(
        table.band <= 10.0,
        format!(
            "order {order}; ratios {:?}; max/min = {:.3}",
            table.rows.iter().map(|r| format!("{:.3}", r.ratio)).collect::<Vec<_>>(),
            table.band
        ),
    ))
}

fn certification() -> Result<Outcome> {
    let mut failures = Vec::new();
    let mut worst_constant: f64 = 0.0;
    let (s, p) = (1.0, 2.0);
    for specs in [
        vec![AxisSpec::new(2, 0, 0, 0, 0)],
        vec![AxisSpec::new(3, 2, 1, 0, 0)],
        vec![AxisSpec::new(2, 0, 0, 0, 0), AxisSpec::new(3, 0, 0, 0, 0)],
    ] {
        let sys = tensor_system(&specs)?;
        let dim = sys.dim;
        let n = dim as f64;
        let order = sys.n0 - 1;
        // support radius of the generators, in units of the level-0 lattice
        let radius = sys
            .axes
            .iter()
            .flat_map(|a| [a.phi.support(), a.psi.support()])
            .flatten()
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max);
        let enlarge = 4.0 * radius + 2.0;
        let atom = AtomSpec { k: order, l: order, dilation: enlarge, s, p };
        let kernel = KernelSpec { a: order, b: order, c: enlarge };
        let mut check = |label: String, r: crate::transform::CertificationReport| {
            worst_constant = worst_constant.max(r.constant);
            if !r.passes {
                failures.push(label);
            }
        };
        for tau in [-1i64, 0, 2] {
            let t = vec![tau; dim];
            let phi = sys.member(&DyadicIndex::new(0, 0, t.clone()))?;
            check(format!("Φ atom N={dim} τ={tau}"), certify_atom(&phi, &atom, 0, &t)?);
            check(format!("Φ kernel N={dim} τ={tau}"), certify_kernel(&phi, &kernel, 0, &t)?);
            for d in 1..=3u32 {
                for i in 1..=sys.wavelet_types() {
                    let psi = sys.member(&DyadicIndex::new(i, d - 1, t.clone()))?;
                    let mut a = psi.clone();
                    a.coeff *= 2f64.powf(-(d as f64) * (s + n / 2.0 - n / p));
                    // Ψ_{i(d−1)τ} sits at τ/2^{d−1}, the centre of Q_{d,2τ}
                    let t2: Vec<i64> = t.iter().map(|v| 2 * v).collect();
                    check(format!("Ψ atom N={dim} i={i} d={d} τ={tau}"), certify_atom(&a, &atom, d, &t2)?);
                    if tau == 0 {
                        let mut k = psi;
                        k.coeff *= 2f64.powf(d as f64 * n / 2.0);
                        check(format!("Ψ kernel N={dim} i={i} d={d}"), certify_kernel(&k, &kernel, d, &t)?);
                    }
                }
            }
        }
    }
    Ok(outcome(
        failures.is_empty(),
        format!(
            "{} failing certificates{}; largest derivative constant {worst_constant:.3}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    ))
}
