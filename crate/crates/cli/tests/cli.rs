use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fedsl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = fedsl(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Column `name` of a metrics CSV as floats.
fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["run", "--seed", "3", "--set", "T=20", "--out", s(out)]);
    }
    for file in ["metrics.csv", "report.json", "config.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let csv = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "round,loss,accuracy,mean_sparsity,uplink_bytes,downlink_bytes,comm_latency_s,cumulative_latency_s"
    );
    assert_eq!(csv.lines().count(), 21);

    let c = dir.path().join("c");
    ok(&["run", "--seed", "4", "--set", "T=20", "--out", s(&c)]);
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn seed_is_mandatory() {
    let err = fails(&["run"]);
    assert!(err.contains("--seed"), "{err}");
    let err = fails(&["sweep-prune"]);
    assert!(err.contains("--seed"), "{err}");
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "K = 5\nlearning_rate = 0.1\n").unwrap();
    let err = fails(&["run", "--seed", "0", "--config", s(&cfg)]);
    assert!(err.contains("learning_rate"), "{err}");

    fs::write(&cfg, "layer_dims = 4,8,3\nL_c = 2\n").unwrap();
    let err = fails(&["run", "--seed", "0", "--config", s(&cfg)]);
    assert!(err.contains("L_c"), "{err}");

    let err = fails(&["run", "--seed", "0", "--set", "rho_f=1.5"]);
    assert!(err.contains("rho_f"), "{err}");
    let err = fails(&["run", "--seed", "0", "--set", "q"]);
    assert!(err.contains("KEY=VALUE"), "{err}");
    let err = fails(&["run", "--seed", "0", "--config", s(&dir.path().join("missing.txt"))]);
    assert!(err.contains("missing.txt"), "{err}");
}

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.txt");
    let a = dir.path().join("file");
    let b = dir.path().join("builtin");
    ok(&["run", "--seed", "0", "--config", cfg, "--set", "T=5", "--out", s(&a)]);
    ok(&["run", "--seed", "0", "--set", "T=5", "--out", s(&b)]);
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn prune_sweep_writes_one_csv_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep-prune", "--seed", "1", "--set", "T=4", "--out", s(dir.path())]);
    for v in ["0", "0.35", "0.5", "0.7"] {
        let path = dir.path().join(format!("rho_f_{v}.csv"));
        assert_eq!(column(&path, "round").len(), 4, "{v}");
    }
    let zero = column(&dir.path().join("rho_f_0.csv"), "mean_sparsity");
    assert!(zero.iter().all(|&x| x == 0.0));
    let heavy = column(&dir.path().join("rho_f_0.7.csv"), "mean_sparsity");
    assert!(heavy[3] >= 0.7);
}

#[test]
fn dropout_sweep_latency_decreases_with_rate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sweep-dropout", "--seed", "2", "--set", "T=6", "--set", "batch=128", "--out", s(dir.path()),
    ]);
    let lat: Vec<Vec<f64>> = ["0", "0.3", "0.5", "0.7"]
        .iter()
        .map(|v| column(&dir.path().join(format!("p_{v}.csv")), "comm_latency_s"))
        .collect();
    for t in 0..6 {
        for w in lat.windows(2) {
            assert!(w[1][t] < w[0][t], "round {}: {:?}", t + 1, lat.iter().map(|c| c[t]).collect::<Vec<_>>());
        }
    }
}

#[test]
fn every_sweep_is_reachable() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        ("sweep-quant", &["q_0.csv", "q_4.csv", "q_8.csv"]),
        ("sweep-agg", &["I_1.csv", "I_5.csv", "I_10.csv"]),
        ("sweep-split", &["L_c_1.csv", "L_c_2.csv", "L_c_3.csv"]),
        ("sweep-clients", &["K_2.csv", "K_5.csv", "K_10.csv"]),
    ];
    for (cmd, files) in cases {
        let out = dir.path().join(cmd);
        ok(&[cmd, "--seed", "0", "--set", "T=2", "--out", s(&out)]);
        for f in files {
            assert!(out.join(f).exists(), "{cmd}: {f}");
        }
    }
    let out = dir.path().join("values");
    ok(&["sweep-clients", "--seed", "0", "--set", "T=2", "--values", "1,3", "--out", s(&out)]);
    assert!(out.join("K_1.csv").exists() && out.join("K_3.csv").exists());
    let err = fails(&["sweep-split", "--seed", "0", "--values", "4", "--out", s(&out)]);
    assert!(err.contains("L_c"), "{err}");
}

const BOUND_BASE: &str = "beta = 2\neta = 0.1\nK = 5\nT = 300\nL = 4\nL_c = 2\nrho_f = 0.35\ntheta = 2.3\n";

fn bound_rhs(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("rhs "))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn bound_with_zero_constants_is_the_gap_term() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.txt");
    let text = "beta = 2\neta = 0.1\nK = 5\nI = 5\nT = 300\nL = 4\nL_c = 2\nrho_f = 0\ntheta = 2.3\n\
                sigma_sq = 0,0,0,0\nG_sq = 0,0,0,0\nW_sq = 0,0,0,0\nJ_sq = 0,0,0,0\n";
    fs::write(&path, text).unwrap();
    let out = ok(&["bound", s(&path)]);
    assert_eq!(bound_rhs(&out), 2.0 * 2.3 / (0.1 * 300.0));
    assert!(out.contains("n/a (no gradient ranges)"));
}

#[test]
fn bound_orders_intervals_and_bit_widths() {
    let dir = tempfile::tempdir().unwrap();
    let consts = "sigma_sq = 0.5,0.5,0.5,0.5\nG_sq = 1,1,0.5,0.5\nW_sq = 4,4,2,1\n";
    let ranges = "grad_min = 0,0,0,0\ngrad_max = 0.2,0.2,0.1,0.1\ngrad_dim = 512,1024,256,80\n";
    let rhs = |name: &str, extra: &str| {
        let path = dir.path().join(name);
        fs::write(&path, format!("{BOUND_BASE}{consts}{extra}")).unwrap();
        bound_rhs(&ok(&["bound", s(&path)]))
    };
    let by_interval: Vec<f64> = [1, 5, 10]
        .iter()
        .map(|i| rhs(&format!("i{i}.txt"), &format!("I = {i}\nq = 8\n{ranges}")))
        .collect();
    assert!(by_interval[0] < by_interval[1] && by_interval[1] < by_interval[2], "{by_interval:?}");
    let q4 = rhs("q4.txt", &format!("I = 5\nq = 4\n{ranges}"));
    let q8 = rhs("q8.txt", &format!("I = 5\nq = 8\n{ranges}"));
    assert!(q8 < q4);

    let shipped = ok(&["bound", concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bound.txt")]);
    let signs: Vec<&str> = shipped.lines().skip(2).map(|l| l.split_whitespace().last().unwrap()).collect();
    assert_eq!(signs, ["+", "+", "+", "-"]);
}

#[test]
fn bound_rejects_large_step_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(
        &path,
        format!("{}I = 5\nsigma_sq = 0,0,0,0\nG_sq = 0,0,0,0\nW_sq = 0,0,0,0\nJ_sq = 0,0,0,0\n", BOUND_BASE.replace("eta = 0.1", "eta = 0.3")),
    )
    .unwrap();
    let err = fails(&["bound", s(&path)]);
    assert!(err.contains("step size hypothesis"), "{err}");
}

#[test]
fn snapshot_feeds_the_deviation_check() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["run", "--seed", "0", "--set", "T=15", "--snapshot", "--out", s(&run)]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["lemma2"]["checks"], 75);
    assert_eq!(report["lemma2"]["violations"], 0);

    let cfg = run.join("config.txt");
    let snap = run.join("snapshot.bin");
    let full = dir.path().join("full.json");
    let line = ok(&["check-lemma2", "--config", s(&cfg), "--snapshot", s(&snap), "--out", s(&full)]);
    assert!(line.contains("0 violations"), "{line}");
    let parsed: serde_json::Value = serde_json::from_slice(&fs::read(&full).unwrap()).unwrap();
    assert_eq!(parsed["entries"].as_array().unwrap().len(), 75);
    // Read back at f32 precision, so close to but not exactly the in-run value.
    let (a, b) = (parsed["max_ratio"].as_f64().unwrap(), report["lemma2"]["max_ratio"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-4 * b);

    let stdout = ok(&["check-lemma2", "--config", s(&cfg), "--snapshot", s(&snap), "--scale", "1e-6"]);
    let tiny: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(tiny["violations"].as_u64().unwrap() > 0);

    let err = fails(&["check-lemma2", "--config", s(&cfg), "--snapshot", s(&cfg)]);
    assert!(err.contains("snapshot"), "{err}");
    let err = fails(&["check-lemma2", "--config", s(&cfg), "--snapshot", s(&snap), "--scale", "0"]);
    assert!(err.contains("--scale"), "{err}");
}
