use std::io::{BufReader, Write};
use std::path::Path;
use std::process::ExitCode;

use blwave_core::battle_lemarie::{scaling_phi, wavelet_psi, DEFAULT_TOL};
use blwave_core::bspline::bspline;
use blwave_core::euler_frobenius::order_tables;
use blwave_core::localized::{localization_coefficients, localized_phi, localized_psi, tensor_system, AxisSpec, DyadicIndex, WaveletSystem};
use blwave_core::selftest;
use blwave_core::seqspace::{norm_b, norm_bold_b, norm_bold_f, norm_f, CoefficientTree};
use blwave_core::tensor::{Separable, SeparableSum};
use blwave_core::transform::{
    analyze, analyze_sampled, certify_atom, certify_kernel, equivalence_experiment, synthesize, test_family, AtomSpec,
    KernelSpec, MollifierSpec, SynthesisMode, DEFAULT_DEPTH,
};
use blwave_core::weights::{
    ap_global_constant, ap_local_constant, r0_estimate, CubeFamily, SpaceKind, SpaceParams, WeightKind, WeightModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::io::{parse_list, read_grid_csv, write_json, write_with};
use crate::{
    AnalyzeArgs, CertifyArgs, Command, EquivArgs, Failure, GenArgs, GenKind, LocalizeArgs, ModeArg, NormArgs,
    SpaceArg, SpaceArgs, SynthesizeArgs, SystemArgs, TreeFormat, WeightsArgs,
};

type Res = Result<ExitCode, Failure>;

fn invalid(m: impl Into<String>) -> Failure {
    Failure::Validation(m.into())
}

pub fn dispatch(cmd: &Command, cfg: &RunConfig, out: Option<&Path>) -> Res {
    match cmd {
        Command::Roots { order } => roots(*order, out),
        Command::Gen(a) => gen(a, cfg, out),
        Command::Localize(a) => localize(a, out),
        Command::Gram(a) => gram(a, cfg, out),
        Command::Weights(a) => weights(a, cfg, out),
        Command::Norm(a) => norm(a, cfg, out),
        Command::Analyze(a) => analyze_cmd(a, cfg, out),
        Command::Synthesize(a) => synthesize_cmd(a, cfg, out),
        Command::Certify(a) => certify(a, cfg, out),
        Command::Equiv(a) => equiv(a, cfg, out),
        Command::Selftest { only } => selftest_cmd(only, out),
    }
}

fn roots(order: usize, out: Option<&Path>) -> Res {
    let t = order_tables(order)?;
    write_json(
        &json!({"order": order, "roots": t.roots, "rho": t.rho, "alpha": t.alpha, "beta": t.beta, "lambda": t.lambda}),
        out,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn gen(a: &GenArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let tol = a.tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) || a.points < 2 {
        return Err(invalid("need 0 < tol < 1 and at least 2 points"));
    }
    let t = order_tables(a.order)?;
    let g = match a.kind {
        GenKind::Phi => scaling_phi(&t, a.k, tol)?,
        GenKind::Psi => wavelet_psi(&t, a.k, a.s, tol)?,
    };
    let (lo, hi) = g.base.support().unwrap_or((0.0, 0.0));
    let report = json!({
        "kind": if a.kind == GenKind::Phi { "phi" } else { "psi" },
        "order": a.order, "k": a.k, "s": g.s, "tol": tol,
        "tail_bound": g.tail_bound, "support": [lo, hi], "series_depths": g.depths(),
    });
    let write_csv = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "x,value")?;
        for i in 0..a.points {
            let x = lo + (hi - lo) * i as f64 / (a.points - 1) as f64;
            writeln!(w, "{x},{}", g.base.evaluate(x))?;
        }
        Ok(())
    };
    match out {
        Some(p) => {
            write_with(Some(p), write_csv)?;
            write_json(&report, Some(&p.with_extension("json")))?;
            eprintln!("wrote {} and its JSON sidecar", p.display());
        }
        None => write_with(None, write_csv)?,
    }
    eprintln!("tail bound {:.3e} on [{lo}, {hi}]", g.tail_bound);
    Ok(ExitCode::SUCCESS)
}

fn localize(a: &LocalizeArgs, out: Option<&Path>) -> Res {
    if a.kk > 1 || (a.kk == 1 && a.m == 0) {
        return Err(invalid("kk must be 0 or 1, and kk = 1 needs --m ≥ 1"));
    }
    let tn = order_tables(a.order)?;
    let tm = if a.kk == 1 { Some(order_tables(a.m)?) } else { None };
    let c = localization_coefficients(&tn, tm.as_ref(), a.kk)?;
    let phi = localized_phi(&tn, a.k);
    let psi = localized_psi(&tn, tm.as_ref(), a.kk, a.k, a.s)?;
    let sup = |g: &blwave_core::bspline::PiecewisePolynomial| g.support().map(|(x, y)| vec![x, y]);
    write_json(
        &json!({
            "order": a.order, "m": a.m, "kk": a.kk, "k": a.k, "s": a.s,
            "coefficients": c,
            "phi": {"support": sup(&phi)},
            "psi": {"support": sup(&psi)},
            "support": sup(&psi),
        }),
        out,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn parse_axis(s: &str) -> Result<AxisSpec, Failure> {
    let v: Vec<i64> = parse_list(s, "axis")?;
    if v.len() != 5 || v[0] < 1 || v[1] < 0 || !(0..=1).contains(&v[2]) {
        return Err(invalid(format!("axis must be n,m,kk,k,s with n ≥ 1, m ≥ 0, kk ∈ {{0,1}}; got {s:?}")));
    }
    Ok(AxisSpec::new(v[0] as usize, v[1] as usize, v[2] as u8, v[3], v[4]))
}

fn axis_specs(a: &SystemArgs, cfg: &RunConfig, default_order: Option<usize>) -> Result<Vec<AxisSpec>, Failure> {
    let isotropic = a.order.is_some() || a.m.is_some() || a.kk.is_some() || a.k_shift.is_some() || a.s_shift.is_some();
    if !a.axes.is_empty() {
        if isotropic {
            return Err(invalid("--axis cannot be combined with --order/--m/--kk/--k-shift/--s-shift"));
        }
        return a.axes.iter().map(|s| parse_axis(s)).collect();
    }
    if !isotropic && !cfg.axes.is_empty() {
        return Ok(cfg.axes.clone());
    }
    let dim = a.dim.or(cfg.space().dim).unwrap_or(1);
    let n = a.order.or(default_order).ok_or_else(|| invalid("system order missing: use --order or --axis"))?;
    let kk = a.kk.unwrap_or(0);
    let m = a.m.unwrap_or(if kk == 1 { n } else { 0 });
    if kk > 1 || (kk == 1 && m == 0) {
        return Err(invalid("kk must be 0 or 1, and kk = 1 needs m ≥ 1"));
    }
    Ok(vec![AxisSpec::new(n, m, kk, a.k_shift.unwrap_or(0), a.s_shift.unwrap_or(0)); dim])
}

fn system(a: &SystemArgs, cfg: &RunConfig, default_order: Option<usize>) -> Result<WaveletSystem, Failure> {
    let specs = axis_specs(a, cfg, default_order)?;
    if let Some(d) = a.dim {
        if d != specs.len() {
            return Err(invalid(format!("--dim {d} does not match {} axes", specs.len())));
        }
    }
    Ok(tensor_system(&specs)?)
}

fn gram(a: &SystemArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let sys = system(a, cfg, None)?;
    let mut types = Vec::new();
    for i in 0..=sys.wavelet_types() {
        let table = sys.gram_table(i)?;
        let sum: f64 = table.iter().map(|(_, v)| v).sum();
        types.push(json!({
            "type": i,
            "lambda": table.iter().map(|(h, v)| json!({"h": h, "value": v})).collect::<Vec<_>>(),
            "sum": sum,
        }));
    }
    let specs: Vec<_> = sys.axes.iter().map(|x| x.spec).collect();
    write_json(&json!({"dim": sys.dim, "axes": specs, "types": types}), out)?;
    Ok(ExitCode::SUCCESS)
}

fn weight_model(spec: Option<&String>, cfg: &RunConfig, dim: usize) -> Result<WeightModel, Failure> {
    let s = spec.or(cfg.weight.as_ref()).map(String::as_str).unwrap_or("constant:c=1");
    Ok(WeightModel::parse(s, dim)?)
}

fn weights(a: &WeightsArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let dim = a.dim.or(cfg.space().dim).unwrap_or(1);
    let w = weight_model(a.spec.as_ref(), cfg, dim)?;
    if !(a.p >= 1.0) || !a.p.is_finite() {
        return Err(invalid(format!("p must lie in [1, ∞), got {}", a.p)));
    }
    let fam = CubeFamily::default_for(dim);
    let est = if a.global { ap_global_constant(&w, a.p, &fam)? } else { ap_local_constant(&w, a.p, &fam)? };
    let mut report = serde_json::to_value(&est).map_err(|e| Failure::Compute(e.to_string()))?;
    report["class"] = json!(if a.global { "global" } else { "local" });
    if !a.r0_grid.is_empty() {
        report["r0"] = serde_json::to_value(r0_estimate(&w, &a.r0_grid, &fam)?).map_err(|e| Failure::Compute(e.to_string()))?;
    }
    eprintln!("{:?}: constant {:.6e}", est.verdict, est.constant);
    write_json(&report, out)?;
    Ok(ExitCode::SUCCESS)
}

/// r0 for the weight: closed form for constant and power-type weights, estimated otherwise.
fn derive_r0(w: &WeightModel) -> Result<f64, Failure> {
    let power = |alpha: f64| -> Result<f64, Failure> {
        let a = alpha * w.exponent;
        if a <= -(w.dim as f64) {
            return Err(invalid(format!("|x|^{a} is not locally integrable in dimension {}", w.dim)));
        }
        Ok((1.0 + a / w.dim as f64).max(1.0))
    };
    match w.kind {
        WeightKind::Constant => Ok(1.0),
        WeightKind::Power { alpha } | WeightKind::Hybrid { alpha, .. } => power(alpha),
        WeightKind::Tabulated { .. } => {
            let grid: Vec<f64> = (0..=12).map(|j| 1.0 + 0.25 * j as f64).collect();
            let r0 = r0_estimate(w, &grid, &CubeFamily::default_for(w.dim))?.r0;
            if r0.is_finite() {
                Ok(r0)
            } else {
                Err(invalid("weight is in no local class up to r = 4; pass --r0"))
            }
        }
    }
}

fn space_params(a: &SpaceArgs, cfg: &RunConfig, dim: usize) -> Result<(SpaceParams, SpaceKind), Failure> {
    let sc = cfg.space();
    let kind = match (a.space, sc.kind.as_deref()) {
        (Some(SpaceArg::F), _) | (None, Some("f")) => SpaceKind::F,
        _ => SpaceKind::B,
    };
    let w = weight_model(a.weight.as_ref(), cfg, dim)?;
    let r0 = match a.r0.or(sc.r0) {
        Some(r) => r,
        None => derive_r0(&w)?,
    };
    let params = SpaceParams::new(
        a.s.or(sc.s).unwrap_or(0.0),
        a.p.or(sc.p).unwrap_or(2.0),
        a.q.or(sc.q).unwrap_or(2.0),
        w,
        r0,
    )?;
    Ok((params, kind))
}

fn read_tree(input: Option<&Path>, dim: usize) -> Result<CoefficientTree, Failure> {
    match input {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))?;
            Ok(CoefficientTree::read_jsonl(BufReader::new(f), dim)?)
        }
        None => Ok(CoefficientTree::read_jsonl(std::io::stdin().lock(), dim)?),
    }
}

fn norm(a: &NormArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let dim = a.dim.or(cfg.space().dim).unwrap_or(1);
    let (params, kind) = space_params(&a.space, cfg, dim)?;
    let tree = read_tree(a.input.as_deref().or(cfg.input.as_deref()), dim)?;
    let value = match (kind, a.bold) {
        (SpaceKind::B, false) => norm_b(&tree, &params)?,
        (SpaceKind::F, false) => norm_f(&tree, &params)?,
        (SpaceKind::B, true) => norm_bold_b(&tree, &params)?,
        (SpaceKind::F, true) => norm_bold_f(&tree, &params)?,
    };
    let q = if params.q.is_finite() { json!(params.q) } else { json!("inf") };
    write_json(
        &json!({
            "space": kind, "bold": a.bold, "s": params.s, "p": params.p, "q": q, "dim": dim,
            "r0": params.r0, "entries": tree.len(), "depth": tree.depth(), "norm": value,
        }),
        out,
    )?;
    Ok(ExitCode::SUCCESS)
}

/// `bspline:n=2[,dilate=j][,shift=a][,c=1]` as a tensor power over `dim` axes.
fn parse_function(spec: &str, dim: usize) -> Result<SeparableSum, Failure> {
    let bad = |m: &str| invalid(format!("function {spec:?}: {m}"));
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    if kind.trim() != "bspline" {
        return Err(bad("only bspline:n=… is supported"));
    }
    let (mut n, mut dilate, mut shift, mut c) = (None, 0i32, 0.0, 1.0);
    for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let num = || v.trim().parse::<f64>().map_err(|_| bad(&format!("{k} is not a number")));
        match k.trim() {
            "n" => n = Some(v.trim().parse::<usize>().map_err(|_| bad("n must be a natural number"))?),
            "dilate" => dilate = v.trim().parse::<i32>().map_err(|_| bad("dilate must be an integer"))?,
            "shift" => shift = num()?,
            "c" => c = num()?,
            other => return Err(bad(&format!("unknown parameter {other}"))),
        }
    }
    let n = n.ok_or_else(|| bad("missing n"))?;
    if n > 40 || dilate.abs() > 20 {
        return Err(bad("n ≤ 40 and |dilate| ≤ 20"));
    }
    let b = bspline(n).shift(shift).affine_arg(2f64.powi(dilate), 0.0);
    Ok(SeparableSum::single(Separable::new(c, vec![b; dim])))
}

fn write_tree(tree: &CoefficientTree, format: TreeFormat, out: Option<&Path>) -> Result<(), Failure> {
    write_with(out, |w| match format {
        TreeFormat::Jsonl => tree.write_jsonl(w),
        TreeFormat::Csv => {
            writeln!(w, "i,d,{},value", (0..tree.dim).map(|l| format!("tau{l}")).collect::<Vec<_>>().join(","))?;
            for e in tree.entries() {
                let tau: Vec<String> = e.tau.iter().map(|t| t.to_string()).collect();
                writeln!(w, "{},{},{},{}", e.i, e.d, tau.join(","), e.value)?;
            }
            Ok(())
        }
    })
}

fn analyze_cmd(a: &AnalyzeArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let sys = system(&a.system, cfg, Some(2))?;
    let depth = a.depth.or(cfg.depth).unwrap_or(DEFAULT_DEPTH);
    let samples = a.samples.as_deref().or(if a.function.is_none() { cfg.input.as_deref() } else { None });
    let (tree, bound) = match (&a.function, samples) {
        (Some(f), _) => (analyze(&parse_function(f, sys.dim)?, &sys, depth)?, 0.0),
        (None, Some(p)) => {
            let grid = read_grid_csv(p)?;
            if grid.dim() != sys.dim {
                return Err(invalid(format!("samples are {}-dimensional, system is {}-dimensional", grid.dim(), sys.dim)));
            }
            let r = analyze_sampled(&grid, &sys, depth)?;
            (r.tree, r.error_bound)
        }
        (None, None) => return Err(invalid("give --function or --samples")),
    };
    write_tree(&tree, a.format, out)?;
    eprintln!("{} coefficients up to level {depth}; sampling error bound {bound:.3e}", tree.len());
    Ok(ExitCode::SUCCESS)
}

fn synthesize_cmd(a: &SynthesizeArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let sys = system(&a.system, cfg, Some(2))?;
    let tree = read_tree(a.input.as_deref().or(cfg.input.as_deref()), sys.dim)?;
    let mode = if a.mode == ModeArg::Direct { SynthesisMode::Direct } else { SynthesisMode::Dual };
    let f = synthesize(&tree, &sys, mode)?;
    let points = a.points.unwrap_or(match sys.dim {
        1 => 1025,
        2 => 129,
        _ => 33,
    });
    if points < 2 {
        return Err(invalid("need at least 2 points per axis"));
    }
    let supp = f.support().unwrap_or_else(|| vec![(0.0, 1.0); sys.dim]);
    let axes: Vec<Vec<f64>> = supp
        .iter()
        .map(|&(lo, hi)| (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
        .collect();
    let values = f.sample_grid(&axes);
    write_with(out, |w| {
        let names = ["x", "y", "z"];
        writeln!(w, "{},value", names[..sys.dim].join(","))?;
        let sizes: Vec<usize> = axes.iter().map(|v| v.len()).collect();
        let mut idx = vec![0usize; sys.dim];
        for v in &values {
            let coords: Vec<String> = idx.iter().enumerate().map(|(l, &j)| axes[l][j].to_string()).collect();
            writeln!(w, "{},{v}", coords.join(","))?;
            for l in 0..sys.dim {
                idx[l] += 1;
                if idx[l] < sizes[l] {
                    break;
                }
                idx[l] = 0;
            }
        }
        Ok(())
    })?;
    eprintln!("{} terms, L2 norm {:.6e}", f.terms.len(), f.l2_norm());
    Ok(ExitCode::SUCCESS)
}

fn certify(a: &CertifyArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let sys = system(&a.system, cfg, Some(2))?;
    let dim = sys.dim;
    let n = dim as f64;
    let tau = if a.tau.is_empty() { vec![0; dim] } else { a.tau.clone() };
    if tau.len() != dim {
        return Err(invalid(format!("--tau needs {dim} components")));
    }
    let order = a.conditions.unwrap_or(sys.n0 - 1);
    let radius = sys
        .axes
        .iter()
        .flat_map(|x| [x.phi.support(), x.psi.support()])
        .flatten()
        .map(|(lo, hi)| lo.abs().max(hi.abs()))
        .fold(0.0, f64::max);
    let enlarge = a.dilation.unwrap_or(4.0 * radius + 2.0 + 2.0 * tau.iter().map(|t| t.abs()).max().unwrap_or(0) as f64);
    let atom_spec = AtomSpec { k: order, l: order, dilation: enlarge, s: a.s, p: a.p };
    let kernel_spec = KernelSpec { a: order, b: order, c: enlarge };
    let (atom, atom_tau, kernel, d) = match a.kind {
        GenKind::Phi => {
            let g = sys.member(&DyadicIndex::new(0, 0, tau.clone()))?;
            (g.clone(), tau.clone(), g, 0)
        }
        GenKind::Psi => {
            if a.d == 0 || a.i == 0 || a.i > sys.wavelet_types() {
                return Err(invalid(format!("psi needs d ≥ 1 and 1 ≤ i ≤ {}", sys.wavelet_types())));
            }
            let psi = sys.member(&DyadicIndex::new(a.i, a.d - 1, tau.clone()))?;
            let df = a.d as f64;
            let mut at = psi.clone();
            at.coeff *= 2f64.powf(-df * (a.s + n / 2.0 - n / a.p));
            let mut k = psi;
            k.coeff *= 2f64.powf(df * n / 2.0);
            (at, tau.iter().map(|t| 2 * t).collect(), k, a.d)
        }
    };
    let ra = certify_atom(&atom, &atom_spec, d, &atom_tau)?;
    let rk = certify_kernel(&kernel, &kernel_spec, d, &atom_tau)?;
    let passes = ra.passes && rk.passes;
    write_json(&json!({"atom_spec": atom_spec, "kernel_spec": kernel_spec, "atom": ra, "kernel": rk, "passes": passes}), out)?;
    eprintln!("atom {}, kernel {}", verdict(ra.passes), verdict(rk.passes));
    Ok(ExitCode::SUCCESS)
}

fn verdict(b: bool) -> &'static str {
    if b {
        "passes"
    } else {
        "fails"
    }
}

fn equiv(a: &EquivArgs, cfg: &RunConfig, out: Option<&Path>) -> Res {
    let dim = a.system.dim.or(cfg.space().dim).unwrap_or(1);
    let (params, kind) = space_params(&a.space, cfg, dim)?;
    let sys = system(&a.system, cfg, Some(params.min_order(kind)))?;
    if sys.dim != dim {
        return Err(invalid(format!("system has {} axes, space dimension is {dim}", sys.dim)));
    }
    let depth = a.depth.or(cfg.depth).unwrap_or(DEFAULT_DEPTH);
    let moll = MollifierSpec::new(a.gamma, dim)?;
    let base = SeparableSum::single(Separable::new(1.0, vec![bspline(a.base_order); dim]));
    let mut translates: Vec<Vec<f64>> = a.translates.iter().map(|t| parse_list(t, "translate")).collect::<Result<_, _>>()?;
    if translates.iter().any(|t| t.len() != dim) {
        return Err(invalid(format!("translates need {dim} components")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.or(cfg.seed).unwrap_or(0));
    for _ in 0..a.random_translates {
        translates.push((0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect());
    }
    let dilates = if a.dilates.is_empty() && translates.is_empty() && a.scalars.is_empty() {
        vec![1, 2, 3, 4]
    } else {
        a.dilates.clone()
    };
    let family = test_family(&base, &translates, &dilates, &a.scalars);
    let table = equivalence_experiment(&family, &params, kind, &sys, &moll, depth)?;
    for r in &table.rows {
        eprintln!("{:<24} seq {:.6e}  conv {:.6e}  ratio {:.6}", r.id, r.seq_norm, r.conv_norm, r.ratio);
    }
    eprintln!("band {:.4}", table.band);
    write_json(&table, out)?;
    Ok(ExitCode::SUCCESS)
}

fn selftest_cmd(only: &[u8], out: Option<&Path>) -> Res {
    if let Some(bad) = only.iter().find(|i| !(1..=14).contains(*i)) {
        return Err(invalid(format!("no criterion {bad}")));
    }
    let ids: Vec<u8> = if only.is_empty() { (1..=14).collect() } else { only.to_vec() };
    let results: Vec<_> = ids
        .into_iter()
        .map(|id| {
            let r = selftest::run_criterion(id);
            eprintln!("{r}");
            r
        })
        .collect();
    let all = results.iter().all(|r| r.passed);
    write_json(&json!({"passed": all, "criteria": results}), out)?;
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
