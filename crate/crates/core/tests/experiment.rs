use std::fs;
use std::path::Path;

use blockspin::experiment::{
    run_experiment, summarize_samples, sweep, sweep_cells, write_sweep_csv, ExperimentConfig,
    InitSpec, SweepSpec, SWEEP_CSV_HEADER,
};
use blockspin::glauber::FieldMode;
use blockspin::{classify_phase, cw_fixed_point, Error, Magnetization, Phase};

fn ordered(beta: f64, alpha: f64, init: InitSpec) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(800, 0.5, 0.25, beta, alpha);
    c.chains = 2;
    c.sweeps = 2000;
    c.burnin = 500;
    c.thin = 5;
    c.graph_seed = 11;
    c.base_seed = 100;
    c.init = init;
    c.field_mode = FieldMode::Cached;
    c
}

#[test]
fn equal_sweeps_and_burnin_flag_insufficient_samples() {
    let mut c = ExperimentConfig::new(20, 0.5, 0.5, 1.0, 0.5);
    c.chains = 3;
    c.sweeps = 50;
    c.burnin = 50;
    let out = run_experiment(&c).unwrap();
    assert!(out.summary.insufficient_samples);
    assert!(out.traces.iter().all(|t| t.is_empty()));
    assert!(out.summary.chains.iter().all(|s| s.insufficient_samples));
}

#[test]
fn aligned_point() {
    let out = run_experiment(&ordered(3.0, 1.0, InitSpec::Symmetric)).unwrap();
    let s = &out.summary;
    assert_eq!(s.diagnosis.phase, Phase::AlignedTwoPoint);
    let z = cw_fixed_point(1.75);
    assert_eq!(s.diagnosis.z_star, z);
    assert!(s.pooled.assignment_fractions.iter().sum::<f64>() >= 0.9);
    assert!(s.pooled.mode_distance < 0.05, "{:?}", s.pooled);
    assert_eq!(s.pooled.correlation_sign, 1);
    for c in &s.chains {
        assert!((c.assignment_fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.positive_product_fraction >= 0.95);
    }
}

#[test]
fn anti_aligned_point() {
    let out = run_experiment(&ordered(3.0, -1.0, InitSpec::Antisymmetric)).unwrap();
    let s = &out.summary;
    assert_eq!(s.diagnosis.phase, Phase::AntiAlignedTwoPoint);
    assert_eq!(s.diagnosis.z_star, cw_fixed_point(1.75));
    assert!(s.pooled.mode_distance < 0.05, "{:?}", s.pooled);
    assert_eq!(s.pooled.correlation_sign, -1);
    assert!(s.chains.iter().all(|c| c.correlation_sign == -1));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut c = ExperimentConfig::new(60, 0.5, 0.25, 2.5, 0.6);
        c.chains = 3;
        c.sweeps = 300;
        c.burnin = 100;
        c.thin = 2;
        c.base_seed = 42;
        c.graph_seed = 9;
        c.out_dir = Some(tmp.path().join(name));
        run_experiment(&c).unwrap();
        files(&tmp.path().join(name))
    };
    let a = run("a");
    let b = run("b");
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    for want in ["chain_0.csv", "chain_2.json", "config.json", "graph.json", "metadata.json", "summary.json"] {
        assert!(names.contains(&want), "{names:?}");
    }
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        // metadata holds the timestamp; config records its own out_dir
        if x.0 == "metadata.json" || x.0 == "config.json" {
            continue;
        }
        assert_eq!(x.1, y.1, "{}", x.0);
    }
    let csv = String::from_utf8(a.iter().find(|f| f.0 == "chain_1.csv").unwrap().1.clone()).unwrap();
    assert!(csv.starts_with("sweep,m1,m2\n102,"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn chain_seeds_follow_base_seed() {
    let mut c = ExperimentConfig::new(10, 0.5, 0.5, 1.0, 0.0);
    c.chains = 4;
    c.base_seed = 7;
    c.sweeps = 20;
    c.burnin = 0;
    let out = run_experiment(&c).unwrap();
    let seeds: Vec<u64> = out.traces.iter().map(|t| t.seed).collect();
    assert_eq!(seeds, vec![7, 8, 9, 10]);
}

#[test]
fn config_validation_and_json() {
    let c = ExperimentConfig::new(30, 0.5, 0.25, 2.0, 1.0);
    let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    let minimal = r#"{"n": 10, "p": 0.5, "q": 0.5, "beta": 1.0, "alpha": 0.0,
        "chains": 2, "sweeps": 10, "burnin": 2, "base_seed": 1, "graph_seed": 2}"#;
    let m = ExperimentConfig::from_json(minimal).unwrap();
    assert_eq!((m.thin, m.directed, m.init), (1, true, InitSpec::Random));
    assert!(matches!(
        ExperimentConfig::from_json(r#"{"n": 10, "bogus": 1}"#),
        Err(Error::Format(_))
    ));

    let mut bad = c.clone();
    bad.n = 31;
    assert!(matches!(run_experiment(&bad), Err(Error::InvalidArgument(_))));
    let mut bad = c.clone();
    bad.chains = 0;
    assert!(bad.validate().is_err());
    let mut bad = c.clone();
    bad.alpha = 5.0;
    assert!(bad.validate().is_err());
    let mut bad = c.clone();
    bad.graph_file = Some("/nonexistent/graph.json".into());
    assert!(matches!(run_experiment(&bad), Err(Error::Io(_))));
}

#[test]
fn summary_of_hand_samples() {
    let d = classify_phase(3.0, 0.0).unwrap();
    let z = d.z_star;
    let samples = [
        Magnetization::new(z, z),
        Magnetization::new(z, -z),
        Magnetization::new(-z, z),
        Magnetization::new(-z, -z),
    ];
    let s = summarize_samples(&samples, &d, 0, 0);
    assert_eq!(s.assignment_fractions, vec![0.25; 4]);
    assert!(s.mode_distance < 1e-15);
    assert_eq!(s.positive_product_fraction, 0.5);
    assert_eq!(s.correlation_sign, 0);
    assert!((s.mean_abs_m1 - z).abs() < 1e-15);
}

#[test]
fn sweep_grid_handling() {
    let mut base = ExperimentConfig::new(20, 0.5, 0.25, 1.0, 0.0);
    base.chains = 2;
    base.sweeps = 40;
    base.burnin = 10;
    let empty = SweepSpec { base: base.clone(), betas: vec![], alpha_as: vec![0.1] };
    assert!(matches!(sweep(&empty), Err(Error::InvalidArgument(_))));
    let nan = SweepSpec { base: base.clone(), betas: vec![f64::NAN], alpha_as: vec![0.1] };
    assert!(sweep(&nan).is_err());

    // one cell reduces to a single experiment with alpha = alpha_a / a
    let one = SweepSpec { base: base.clone(), betas: vec![2.5], alpha_as: vec![0.4] };
    let rows = sweep(&one).unwrap();
    assert_eq!(rows.len(), 1);
    let mut cfg = base.clone();
    cfg.beta = 2.5;
    cfg.alpha = 0.8;
    let single = run_experiment(&cfg).unwrap().summary.pooled;
    assert_eq!(rows[0].alpha, 0.8);
    assert_eq!(rows[0].mean_abs_m1, single.mean_abs_m1);
    assert_eq!(rows[0].mean_abs_m2, single.mean_abs_m2);
    assert_eq!(rows[0].phase, "AlignedTwoPoint");

    let grid = SweepSpec { base, betas: vec![1.0, 2.0], alpha_as: vec![-0.5, 0.0, 0.5] };
    let cells = sweep_cells(&grid).unwrap();
    assert_eq!(cells.len(), 6);
    let seeds: std::collections::BTreeSet<u64> = cells.iter().map(|c| c.base_seed).collect();
    assert_eq!(seeds.len(), 6);
    let rows = sweep(&grid).unwrap();
    assert_eq!(rows, sweep(&grid).unwrap());
    let mut out = Vec::new();
    write_sweep_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), SWEEP_CSV_HEADER);
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn sweep_crosses_the_critical_line() {
    let mut base = ordered(1.0, 0.0, InitSpec::Symmetric);
    base.sweeps = 1500;
    let spec = SweepSpec { base, betas: vec![1.0, 1.4, 2.6], alpha_as: vec![0.4] };
    let rows = sweep(&spec).unwrap();
    assert_eq!(rows[0].phase, "Paramagnetic");
    assert_eq!(rows[2].phase, "AlignedTwoPoint");
    assert!(rows[0].mean_abs_m1 < 0.1, "{:?}", rows[0]);
    assert!(rows[2].mean_abs_m1 > 0.5, "{:?}", rows[2]);
}
