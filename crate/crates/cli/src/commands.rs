use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fedsl::analysis::{lemma2_check, BoundFile, Lemma2Params, Lemma2Report};
use fedsl::compression::SparsitySchedule;
use fedsl::engine::{write_csv, ExperimentConfig, RoundMetrics, RunArtifacts, RunOutput, Simulation};
use serde_json::json;

use crate::options::{ExperimentArgs, SweepArgs};

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    ExperimentConfig::parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Config after file, `--set` overrides and `--seed`, plus the output
/// directory.
fn resolve(args: &ExperimentArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{o}`"))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.seed = args.seed;
    cfg.validate()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    Ok((cfg, out))
}

fn lemma2_params(cfg: &ExperimentConfig) -> Result<Lemma2Params> {
    Ok(Lemma2Params {
        eta: cfg.eta,
        agg_interval: cfg.agg_interval,
        schedule: SparsitySchedule::new(cfg.rho_f, cfg.rounds)?,
    })
}

fn write_metrics(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write_csv(metrics, &mut w)?;
    w.flush()?;
    Ok(())
}

fn final_summary(metrics: &[RoundMetrics]) -> serde_json::Value {
    let Some(last) = metrics.last() else {
        return serde_json::Value::Null;
    };
    json!({
        "round": last.round,
        "loss": last.train_loss,
        "first_round_loss": metrics[0].train_loss,
        "accuracy": last.accuracy,
        "mean_sparsity": last.mean_sparsity(),
        "target_sparsity": last.target_sparsity,
        "total_uplink_bytes": metrics.iter().map(RoundMetrics::total_uplink_bytes).sum::<u64>(),
        "total_downlink_bytes": metrics.iter().map(RoundMetrics::total_downlink_bytes).sum::<u64>(),
        "cumulative_latency_s": last.cumulative_latency_s,
    })
}

fn lemma2_summary(r: &Lemma2Report) -> serde_json::Value {
    json!({
        "scale": r.scale,
        "checks": r.checks,
        "violations": r.violations,
        "max_ratio": r.max_ratio,
        "max_ratio_round": r.max_ratio_round,
        "max_ratio_client": r.max_ratio_client,
        "final_constants": r.final_constants,
    })
}

pub fn run(args: &ExperimentArgs, snapshot: bool) -> Result<()> {
    let (cfg, out) = resolve(args)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut sim = Simulation::new(&cfg)?;
    if snapshot {
        sim.record_artifacts();
    }
    let distances = sim.distances_km().to_vec();
    let RunOutput { metrics, artifacts } = sim.run()?;

    write_metrics(&out.join("metrics.csv"), &metrics)?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    let lemma2 = match &artifacts {
        Some(a) => {
            fs::write(out.join("snapshot.bin"), a.encode()?)?;
            lemma2_summary(&lemma2_check(a, &lemma2_params(&cfg)?, 1.0)?)
        }
        None => serde_json::Value::Null,
    };
    let report = json!({
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "client_distances_km": distances,
        "final": final_summary(&metrics),
        "lemma2": lemma2,
    });
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;

    let last = metrics.last().expect("at least one round");
    println!(
        "round {}: loss {:.4}, accuracy {:.4}, mean sparsity {:.4}, cumulative latency {:.6} s",
        last.round,
        last.train_loss,
        last.accuracy,
        last.mean_sparsity(),
        last.cumulative_latency_s
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run_sweep(args: &SweepArgs, key: &str, values: &[String]) -> Result<()> {
    let (base, out) = resolve(&args.experiment)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    println!("{key:>8} {:>10} {:>10} {:>10} {:>14}", "loss", "accuracy", "sparsity", "latency_s");
    for v in values {
        let mut cfg = base.clone();
        cfg.set(key, v)?;
        cfg.validate().with_context(|| format!("{key} = {v}"))?;
        let metrics = Simulation::new(&cfg)?.run()?.metrics;
        write_metrics(&out.join(format!("{key}_{v}.csv")), &metrics)?;
        let last = metrics.last().expect("at least one round");
        println!(
            "{v:>8} {:>10.4} {:>10.4} {:>10.4} {:>14.6}",
            last.train_loss,
            last.accuracy,
            last.mean_sparsity(),
            last.cumulative_latency_s
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn sweep(args: &SweepArgs, key: &str, defaults: &[&str]) -> Result<()> {
    let values = match &args.values {
        Some(v) => v.clone(),
        None => defaults.iter().map(|s| s.to_string()).collect(),
    };
    run_sweep(args, key, &values)
}

pub fn sweep_split(args: &SweepArgs) -> Result<()> {
    let values = match &args.values {
        Some(v) => v.clone(),
        None => {
            let (cfg, _) = resolve(&args.experiment)?;
            (1..cfg.model.num_layers()).map(|s| s.to_string()).collect()
        }
    };
    run_sweep(args, "L_c", &values)
}

fn sign(d: f64) -> char {
    if d > 0.0 {
        '+'
    } else if d < 0.0 {
        '-'
    } else {
        '0'
    }
}

pub fn bound(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = BoundFile::parse(&text).with_context(|| format!("invalid bound file {}", path.display()))?;
    let s = file.sensitivity()?;
    println!("rhs {}", s.rhs);
    println!("{:<6} {:>6} {:>14} sign", "knob", "step", "delta");
    let rows = [
        ("I", "+1", Some(s.d_interval), ""),
        ("rho_f", "+0.01", Some(s.d_rho_f), ""),
        ("L_c", "+1", s.d_split, "n/a (L_c + 1 = L)"),
        ("q", "+1", s.d_bits, "n/a (no gradient ranges)"),
    ];
    for (knob, step, delta, missing) in rows {
        match delta {
            Some(d) => println!("{knob:<6} {step:>6} {d:>14.6e} {}", sign(d)),
            None => println!("{knob:<6} {step:>6} {missing}"),
        }
    }
    Ok(())
}

pub fn check_lemma2(config: &Path, snapshot: &Path, scale: f64, out: Option<&Path>) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        bail!("--scale must be positive, got {scale}");
    }
    let cfg = load_config(config)?;
    let bytes = fs::read(snapshot).with_context(|| format!("reading snapshot {}", snapshot.display()))?;
    let split = cfg.model.split;
    let artifacts = RunArtifacts::decode(&bytes, cfg.clients, split, cfg.model.num_layers() - split)
        .with_context(|| format!("decoding snapshot {}", snapshot.display()))?;
    let report = lemma2_check(&artifacts, &lemma2_params(&cfg)?, scale)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "{} checks, {} violations, max ratio {:.6e} (round {}, client {})",
                report.checks, report.violations, report.max_ratio, report.max_ratio_round, report.max_ratio_client
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}
