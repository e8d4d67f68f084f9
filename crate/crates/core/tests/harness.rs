use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slhvb::batched_bandits::BseOptions;
use slhvb::environment::EnvConfig;
use slhvb::grids::GridKind;
use slhvb::harness::scenarios::{
    offline_sim_synthetic, offline_table, slope_check, worst_case_demo, OfflineSimParams, SlopeParams,
    WorstCaseParams,
};
use slhvb::harness::{
    run_episode, run_replications, run_scenario, summary_table, ExperimentConfig, HarnessError, PolicySpec,
    ScenarioOptions, SCENARIOS,
};

fn config(policy: PolicySpec) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(EnvConfig::new(300, 10, 2, 60), policy);
    c.base_seed = 99;
    c
}

fn hybrid() -> PolicySpec {
    PolicySpec::Hybrid {
        rho: None,
        bse: BseOptions::default(),
    }
}

#[test]
fn oracle_has_zero_loss() {
    let out = run_episode(&config(PolicySpec::Oracle), 0).unwrap();
    assert_eq!(out.summary.mean_loss, 0.0);
    assert!(out.logs.iter().all(|l| l.loss == 0.0));
}

#[test]
fn episodes_are_deterministic() {
    let c = config(hybrid());
    // per-episode CI is NaN, so compare renderings
    let a = format!("{:?}", run_episode(&c, 3).unwrap());
    assert_eq!(a, format!("{:?}", run_episode(&c, 3).unwrap()));
    assert_ne!(run_episode(&c, 3).unwrap().summary.seed, run_episode(&c, 4).unwrap().summary.seed);
}

#[test]
fn uniform_random_matches_monte_carlo_oracle() {
    // k=10, w=1: after the first round 20 arms are live
    let mut c = ExperimentConfig::new(EnvConfig::new(100, 10, 1, 200), PolicySpec::UniformRandom);
    c.replications = 20;
    c.base_seed = 5;
    let r = run_replications(&c, 1).unwrap();
    let losses = r.loss_values();
    let m = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / m;
    let se = (losses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let sets = 100_000;
    let mut acc = 0.0;
    for _ in 0..sets {
        let xs: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let max = xs.iter().cloned().fold(0.0, f64::max);
        acc += max - xs.iter().sum::<f64>() / 20.0;
    }
    let oracle = acc / sets as f64;
    assert!((mean - oracle).abs() < 3.0 * se, "sim {mean} vs oracle {oracle} (se {se})");
}

#[test]
fn parallelism_does_not_change_output() {
    let mut c = config(hybrid());
    c.replications = 12;
    let a = summary_table(&run_replications(&c, 1).unwrap()).to_csv().unwrap();
    let b = summary_table(&run_replications(&c, 8).unwrap()).to_csv().unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_replication_report_is_the_episode() {
    let c = config(hybrid());
    let r = run_replications(&c, 2).unwrap();
    let e = run_episode(&c, 0).unwrap();
    assert_eq!(format!("{:?}", r.episodes), format!("{:?}", vec![e.clone()]));
    assert_eq!(r.mean_loss, e.summary.mean_loss);
    assert!(r.loss_ci_halfwidth.is_nan());
}

#[test]
fn ci_shrinks_with_replications() {
    let mut c = ExperimentConfig::new(EnvConfig::new(100, 5, 1, 30), PolicySpec::UniformRandom);
    c.replications = 25;
    let small = run_replications(&c, 1).unwrap().loss_ci_halfwidth;
    c.replications = 100;
    let large = run_replications(&c, 1).unwrap().loss_ci_halfwidth;
    let ratio = small / large;
    assert!((1.5..2.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn config_round_trip() {
    let mut c = config(PolicySpec::InducedBse {
        level: 2,
        grid: GridKind::Minimax,
        k_prime: Some(4),
        bse: BseOptions::default(),
    });
    c.burn_in = Some(3);
    c.output_path = Some("out.csv".into());
    let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
    assert_eq!(back, c);
    assert_eq!(ExperimentConfig::from_json(&back.to_json()).unwrap(), back);
    let rb = config(PolicySpec::RandomizedBse {
        rbse: Default::default(),
        predictor_noise_sigma: Some(0.05),
    });
    assert_eq!(ExperimentConfig::from_json(&rb.to_json()).unwrap(), rb);
}

#[test]
fn minimal_json_config_parses() {
    let c = ExperimentConfig::from_json(r#"{"env":{"n":100,"k":5,"w":2,"horizon":10},"policy":{"kind":"oracle"}}"#)
        .unwrap();
    assert_eq!(c.replications, 1);
    assert_eq!(c.burn_in(), 2);
    c.validate().unwrap();
}

#[test]
fn validation_names_the_field() {
    let mut c = config(hybrid());
    c.env.n = 0;
    match c.validate() {
        Err(HarnessError::Config { field, .. }) => assert_eq!(field, "env.n"),
        other => panic!("{other:?}"),
    }
    let mut c = config(hybrid());
    c.replications = 0;
    assert!(matches!(c.validate(), Err(HarnessError::Config { field, .. }) if field == "replications"));
}

#[test]
fn scenario_registry() {
    assert_eq!(
        SCENARIOS,
        ["offline-sim-synthetic", "cold-vs-warm", "slope-check", "worst-case-demo", "did-demo"]
    );
    let err = run_scenario("nope", &ScenarioOptions::default()).unwrap_err();
    assert!(matches!(err, HarnessError::UnknownScenario(_)));
}

#[test]
fn offline_sim_schema() {
    let p = OfflineSimParams {
        ks: vec![20],
        ns: vec![512],
        levels: vec![1, 2],
        horizon: 30,
        replications: 2,
        ..OfflineSimParams::default()
    };
    let rows = offline_sim_synthetic(&p, 1).unwrap();
    let csv = offline_table(&rows).to_csv().unwrap();
    assert!(csv.starts_with("k,n,level,mean_pct_of_oracle,ci\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn slope_check_reports_theory() {
    let p = SlopeParams {
        ns: vec![1024, 4096, 16384],
        replications: 2,
        horizon: 20,
        ..SlopeParams::default()
    };
    let r = slope_check(&p, 1).unwrap();
    assert_eq!(r.theoretical_exponent, -0.4);
    assert!(r.fitted_exponent.is_finite());
}

#[test]
fn worst_case_loss_does_not_vanish() {
    let p = WorstCaseParams {
        ns: vec![64, 4096],
        horizon: 40,
        replications: 2,
        ..WorstCaseParams::default()
    };
    for row in worst_case_demo(&p, 1).unwrap() {
        assert!(row.max_loss > 0.2, "{row:?}");
    }
}

#[test]
fn did_demo_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ScenarioOptions {
        out_dir: dir.path().to_path_buf(),
        ..ScenarioOptions::default()
    };
    let files = run_scenario("did-demo", &opts).unwrap();
    assert_eq!(files.len(), 2);
    let fit = std::fs::read_to_string(&files[0]).unwrap();
    assert!(fit.starts_with("coef,estimate,se,t_stat,p_value,ci_lo,ci_hi\n"));
}

#[test]
fn external_loss_below_bound() {
    // uniform prior: C1 = 1
    let (n, k) = (10_000u64, 100usize);
    let mut c = ExperimentConfig::new(EnvConfig::new(n, k, 3, 20), PolicySpec::Oracle);
    c.replications = 100;
    let r = run_replications(&c, 4).unwrap();
    let ext: f64 = r
        .episodes
        .iter()
        .map(|e| e.logs[3..].iter().map(|l| l.external_component).sum::<f64>() / (e.logs.len() - 3) as f64)
        .sum::<f64>()
        / r.episodes.len() as f64;
    let rho = (k as f64).ln() / (n as f64).ln();
    let bound = 2.0 * 3.0 * rho * (n as f64).ln() / k as f64;
    assert!(ext < bound, "external {ext} vs bound {bound}");
}
