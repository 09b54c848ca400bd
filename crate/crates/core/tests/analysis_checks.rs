use fedsl::analysis::{lemma2_check, theorem1_rhs, BoundFile, BoundParams, EmpiricalConstants, Lemma2Params};
use fedsl::compression::SparsitySchedule;
use fedsl::engine::{ExperimentConfig, RunArtifacts, Simulation};
use fedsl::Rng;

/// Term-by-term evaluation with every coefficient written out separately.
fn rhs_oracle(p: &BoundParams) -> f64 {
    let (b, e, k) = (p.beta, p.eta, p.clients as f64);
    let i1 = p.agg_interval as f64 + 1.0;
    let mut total = 2.0 * p.theta / (e * p.rounds as f64);
    for l in 0..p.layers {
        total += b * e / k * p.sigma_sq[l];
        total += p.g_sq[l] / e;
        total += 4.0 * (4.0 * b * b + 1.0) / e * p.w_sq[l];
    }
    for l in 0..p.split {
        total += b * e / k * p.sigma_sq[l];
        total += (4.0 * b * b + 1.0) * (8.0 * e * e * i1 * i1 + 1.0) / e * p.g_sq[l];
        total += p.rho_f * (4.0 * k * b * b + k + b) / (k * e) * p.w_sq[l];
        total += 4.0 / e * p.j_sq[l];
    }
    total
}

#[test]
fn bound_matches_term_by_term_oracle() {
    let mut rng = Rng::new(5);
    for _ in 0..200 {
        let beta = rng.uniform_range(0.1, 5.0);
        let layers = 2 + rng.below(5);
        let mut arr = || (0..layers).map(|_| rng.uniform_range(0.0, 3.0)).collect::<Vec<_>>();
        let (sigma_sq, g_sq, w_sq, j_sq) = (arr(), arr(), arr(), arr());
        let p = BoundParams {
            beta,
            eta: rng.uniform_range(0.01, 1.0) / (2.0 * beta),
            clients: 1 + rng.below(10),
            agg_interval: 1 + rng.below(10) as u32,
            rounds: 1 + rng.below(500) as u32,
            layers,
            split: 1 + rng.below(layers - 1),
            rho_f: rng.uniform_range(0.0, 0.9),
            theta: rng.uniform_range(0.0, 5.0),
            sigma_sq,
            g_sq,
            w_sq,
            j_sq,
        };
        let got = theorem1_rhs(&p).unwrap();
        let want = rhs_oracle(&p);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

const BOUND_FILE: &str = "
beta = 2
eta = 0.1
K = 5
I = 5
T = 300
L = 4
L_c = 2
rho_f = 0.35
theta = 2.3
sigma_sq = 0.5, 0.5, 0.5, 0.5
G_sq = 1.0, 1.0, 0.5, 0.5
W_sq = 4.0, 4.0, 2.0, 1.0
q = 8
grad_min = 0, 0, 0, 0
grad_max = 0.2, 0.2, 0.1, 0.1
grad_dim = 512, 1024, 256, 80
";

#[test]
fn bound_file_orderings() {
    let file = BoundFile::parse(BOUND_FILE).unwrap();
    let with_interval = |i: u32| {
        let mut p = file.params.clone();
        p.agg_interval = i;
        theorem1_rhs(&p).unwrap()
    };
    assert!(with_interval(1) < with_interval(5) && with_interval(5) < with_interval(10));
    assert!(file.rhs_with_bits(8).unwrap().unwrap() < file.rhs_with_bits(4).unwrap().unwrap());
    let s = file.sensitivity().unwrap();
    assert!(s.d_interval > 0.0 && s.d_rho_f > 0.0 && s.d_split.unwrap() > 0.0 && s.d_bits.unwrap() < 0.0);
}

fn run_with_snapshots(cfg: &ExperimentConfig) -> RunArtifacts {
    let mut sim = Simulation::new(cfg).unwrap();
    sim.record_artifacts();
    sim.run().unwrap().artifacts.unwrap()
}

fn params_for(cfg: &ExperimentConfig) -> Lemma2Params {
    Lemma2Params {
        eta: cfg.eta,
        agg_interval: cfg.agg_interval,
        schedule: SparsitySchedule::new(cfg.rho_f, cfg.rounds).unwrap(),
    }
}

#[test]
fn single_client_every_round_is_trivially_within_bound() {
    let mut cfg = ExperimentConfig::default();
    cfg.clients = 1;
    cfg.agg_interval = 1;
    cfg.rho_f = 0.0;
    cfg.rounds = 30;
    let artifacts = run_with_snapshots(&cfg);
    let report = lemma2_check(&artifacts, &params_for(&cfg), 1.0).unwrap();
    assert_eq!(report.violations, 0);
    // A lone client is its own mean.
    assert!(report.entries.iter().all(|e| e.lhs == 0.0));
}

#[test]
fn checker_flags_constants_below_measured_deviation() {
    let mut cfg = ExperimentConfig::default();
    cfg.rounds = 60;
    let artifacts = run_with_snapshots(&cfg);
    let params = params_for(&cfg);
    let full = lemma2_check(&artifacts, &params, 1.0).unwrap();
    assert_eq!(full.violations, 0);
    assert!(full.max_ratio > 0.0);

    let shrunk = lemma2_check(&artifacts, &params, full.max_ratio / 2.0).unwrap();
    assert!(shrunk.violations > 0);
    assert!((shrunk.max_ratio - 2.0).abs() < 1e-9);

    let constants = EmpiricalConstants::running(&artifacts).unwrap();
    assert_eq!(constants.len(), 60);
    for w in constants.windows(2) {
        assert!(w[0].g_sq.iter().zip(&w[1].g_sq).all(|(a, b)| a <= b));
        assert!(w[0].w_sq.iter().zip(&w[1].w_sq).all(|(a, b)| a <= b));
    }
}

#[test]
fn lemma2_needs_artifacts() {
    let cfg = ExperimentConfig::default();
    assert!(lemma2_check(&RunArtifacts::default(), &params_for(&cfg), 1.0).is_err());
}
