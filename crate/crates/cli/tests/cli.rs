use std::path::PathBuf;
use std::process::{Command, Output};

fn blwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blwave")).args(args).env_remove("BLWAVE_THREADS").output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("blwave-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn roots_order_one() {
    let v = json(&blwave(&["roots", "--order", "1"]));
    let r = v["roots"][0].as_f64().unwrap();
    assert!((r - 0.2679492).abs() < 1e-7);
    assert!((v["beta"].as_f64().unwrap() - (1.0 + r)).abs() < 1e-12);
}

#[test]
fn localize_reports_knot_supports() {
    let v = json(&blwave(&["localize", "--order", "1", "--kk", "0", "--s", "0"]));
    assert_eq!(v["phi"]["support"], serde_json::json!([0.0, 2.0]));
    assert_eq!(v["support"], serde_json::json!([-1.0, 2.0]));
    let v = json(&blwave(&["localize", "--order", "2", "--m", "1", "--kk", "1", "--s", "1"]));
    assert_eq!(v["support"], serde_json::json!([-2.0, 5.0]));
}

#[test]
fn gram_sums() {
    let v = json(&blwave(&["gram", "--axis", "2,0,0,0,0", "--axis", "1,1,1,0,-1"]));
    let types = v["types"].as_array().unwrap();
    assert_eq!(types.len(), 4);
    for t in types {
        assert!((t["sum"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn validation_errors_exit_2() {
    for args in [
        vec!["roots", "--order", "0"],
        vec!["roots", "--order", "99"],
        vec!["weights", "--spec", "gauss:a=1", "--p", "2"],
        vec!["norm", "--input", "/nonexistent/tree.jsonl"],
        vec!["norm", "--p", "-1", "--input", "/dev/null"],
        vec!["gram", "--axis", "1,2"],
        vec!["localize", "--order", "2", "--kk", "1"],
        vec!["selftest", "--only", "15"],
        vec!["equiv", "--s", "1", "--weight", "power:alpha=0.5", "--order", "1"],
        vec!["frobnicate"],
    ] {
        let out = blwave(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn bad_thread_count() {
    let out = Command::new(env!("CARGO_BIN_EXE_blwave"))
        .args(["roots", "--order", "1"])
        .env("BLWAVE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_blwave"))
        .args(["roots", "--order", "1"])
        .env("BLWAVE_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn analyze_norm_synthesize_pipeline() {
    let dir = scratch("pipeline");
    let tree = dir.join("t.jsonl");
    let out = blwave(&["analyze", "--order", "2", "--function", "bspline:n=2,shift=-1", "--depth", "4", "--out", tree.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b = json(&blwave(&["norm", "--input", tree.to_str().unwrap(), "--space", "b", "--s", "0.5", "--p", "2", "--q", "2"]));
    let f = json(&blwave(&["norm", "--input", tree.to_str().unwrap(), "--space", "f", "--s", "0.5", "--p", "2", "--q", "2"]));
    let (nb, nf) = (b["norm"].as_f64().unwrap(), f["norm"].as_f64().unwrap());
    assert!(nb > 0.0 && (nb - nf).abs() <= 1e-10 * nb);

    let csv = dir.join("s.csv");
    let out = blwave(&["synthesize", "--order", "2", "--input", tree.to_str().unwrap(), "--points", "101", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,value"));
    // B_2(x + 1) lies in the span, so dual synthesis reproduces it pointwise
    let b2 = |x: f64| {
        let t = x + 1.0;
        match t {
            t if (0.0..1.0).contains(&t) => t * t / 2.0,
            t if (1.0..2.0).contains(&t) => (-2.0 * t * t + 6.0 * t - 3.0) / 2.0,
            t if (2.0..3.0).contains(&t) => (3.0 - t) * (3.0 - t) / 2.0,
            _ => 0.0,
        }
    };
    let mut rows = 0;
    for l in lines {
        let (x, v) = l.split_once(',').unwrap();
        let (x, v) = (x.parse::<f64>().unwrap(), v.parse::<f64>().unwrap());
        assert!((v - b2(x)).abs() < 1e-8, "x = {x}: {v} vs {}", b2(x));
        rows += 1;
    }
    assert_eq!(rows, 101);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sampled_analysis_from_csv() {
    let dir = scratch("samples");
    let grid = dir.join("g.csv");
    let mut text = String::from("x,value\n");
    for i in 0..=20 {
        let x = i as f64 * 0.1;
        text.push_str(&format!("{x},{}\n", (1.0 - (x - 1.0).abs()).max(0.0)));
    }
    std::fs::write(&grid, text).unwrap();
    let out = blwave(&["analyze", "--order", "1", "--samples", grid.to_str().unwrap(), "--depth", "3", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.starts_with("i,d,tau0,value\n"));
    assert!(s.lines().count() > 2);
    std::fs::write(&grid, "x,value\n0,1\n0,2\n").unwrap();
    assert_eq!(blwave(&["analyze", "--order", "1", "--samples", grid.to_str().unwrap()]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn gen_writes_csv_and_sidecar() {
    let dir = scratch("gen");
    let csv = dir.join("psi.csv");
    let out = blwave(&["gen", "--kind", "psi", "--order", "1", "--tol", "1e-8", "--points", "64", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 65);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("psi.json")).unwrap()).unwrap();
    assert!(side["tail_bound"].as_f64().unwrap() <= 1e-8);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn certify_normalized_members() {
    let v = json(&blwave(&["certify", "--order", "2", "--kind", "phi", "--tau", "3"]));
    assert_eq!(v["passes"], true);
    let v = json(&blwave(&["certify", "--axis", "2,0,0,0,0", "--axis", "3,0,0,0,0", "--kind", "psi", "--i", "3", "--d", "2", "--tau", "0,1"]));
    assert_eq!(v["atom"]["moments_ok"], true);
    assert_eq!(v["passes"], true);
}

#[test]
fn weights_report() {
    let v = json(&blwave(&["weights", "--spec", "hybrid:alpha=0.5", "--p", "2", "--global"]));
    assert_eq!(v["verdict"], "divergent");
    let v = json(&blwave(&["weights", "--spec", "power:alpha=0.5", "--p", "2", "--local"]));
    assert_eq!(v["verdict"], "stable");
    assert!(v["refinement_trace"].as_array().unwrap().len() >= 2);
}

#[test]
fn config_file_and_reproducibility() {
    let dir = scratch("config");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "command = \"equiv\"\nweight = \"power:alpha=0.5\"\ndepth = 6\nseed = 3\n\n[space]\nkind = \"b\"\ns = 1.0\np = 2.0\nq = 2.0\nr0 = 1.5\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.join(name);
        let o = blwave(&["--config", cfg.to_str().unwrap(), "equiv", "--random-translates", "2", "--dilates", "1,2", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a, b);
    let table: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(table["depth"], 6);
    assert_eq!(table["rows"].as_array().unwrap().len(), 5);
    assert!(table["band"].as_f64().unwrap() <= 10.0);
    // the file names its command
    assert_eq!(blwave(&["--config", cfg.to_str().unwrap(), "gram", "--order", "1"]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn selftest_subset() {
    let out = blwave(&["selftest", "--only", "1,2,4"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["criteria"].as_array().unwrap().len(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).lines().all(|l| l.starts_with("PASS")));
}
