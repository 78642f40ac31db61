use std::fs;
use std::process::Command;

use mnl_mdp::harness::{
    aggregate, read_records, run_sweep, summarize, write_records, write_summary, Algo, ConfigOverrides, InstanceKind,
    RunConfig, CSV_HEADER,
};

fn small(algo: Algo) -> RunConfig {
    let mut cfg = RunConfig::defaults_for(algo);
    cfg.horizons = vec![4];
    cfg.episodes = 120;
    cfg.tau = 20;
    cfg.seeds = vec![0, 1];
    cfg
}

fn csv_bytes(cfg: &RunConfig) -> Vec<u8> {
    let sweep = run_sweep(cfg).unwrap();
    assert!(sweep.failures.is_empty(), "{:?}", sweep.failures);
    let mut buf = Vec::new();
    write_records(&mut buf, &sweep.records).unwrap();
    buf
}

#[test]
fn runs_are_byte_identical() {
    for algo in [Algo::Livarot, Algo::UcrlMnlOl, Algo::Oracle] {
        let cfg = small(algo);
        assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg), "{algo}");
    }
}

#[test]
fn cumulative_regret_is_exact_running_sum() {
    for algo in [Algo::Livarot, Algo::UcrlMnlOl] {
        let records = run_sweep(&small(algo)).unwrap().records;
        assert_eq!(records.len(), 2 * 120);
        for run in records.chunks(120) {
            assert_eq!(run[0].episode, 1);
            assert_eq!(run[0].cum_regret, run[0].instant_regret);
            for w in run.windows(2) {
                assert_eq!(w[1].episode, w[0].episode + 1);
                assert_eq!(w[1].cum_regret - w[0].cum_regret, w[1].instant_regret);
            }
        }
    }
}

#[test]
fn oracle_regret_is_centered_and_noisy() {
    let mut cfg = RunConfig::defaults_for(Algo::Oracle);
    cfg.horizons = vec![5];
    cfg.episodes = 100;
    cfg.seeds = (0..40).collect();
    let records = run_sweep(&cfg).unwrap().records;
    assert!(records.iter().any(|r| r.instant_regret < 0.0));
    let finals: Vec<f64> = records.iter().filter(|r| r.episode == 100).map(|r| r.cum_regret).collect();
    assert_eq!(finals.len(), 40);
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn csv_roundtrip_and_aggregation() {
    let cfg = small(Algo::UcrlMnlOl);
    let bytes = csv_bytes(&cfg);
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    fs::write(&path, &bytes).unwrap();
    let records = read_records(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(records, run_sweep(&cfg).unwrap().records);

    let rows = aggregate(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 120);
    let last = rows.last().unwrap();
    let finals: Vec<f64> = records.iter().filter(|r| r.episode == 120).map(|r| r.cum_regret).collect();
    assert_eq!(last.count, 2);
    assert!((last.mean - (finals[0] + finals[1]) / 2.0).abs() < 1e-12);
    assert!((last.std - (finals[0] - finals[1]).abs() / 2f64.sqrt()).abs() < 1e-12);

    let summary = summarize(&records);
    assert_eq!(summary.len(), 1);
    let spath = dir.path().join("summary.csv");
    write_summary(&spath, &summary).unwrap();
    assert!(fs::read_to_string(&spath).unwrap().starts_with("algo,H,n,"));
}

#[test]
fn json_overrides_replace_defaults() {
    let o = ConfigOverrides::from_json(r#"{"algo":"ucrl-mnl-ol","H":[3,6],"T":50,"seeds":"2..4","instance":"random"}"#)
        .unwrap();
    let cfg = o.resolve(Algo::Livarot).unwrap();
    assert_eq!(cfg.algo, Algo::UcrlMnlOl);
    assert_eq!(cfg.instance, InstanceKind::Random);
    assert_eq!(cfg.horizons, vec![3, 6]);
    assert_eq!(cfg.episodes, 50);
    assert_eq!(cfg.seeds, vec![2, 3, 4]);
    assert_eq!(cfg.eta_omd, 10.0);
    assert!(ConfigOverrides::from_json(r#"{"unknown":1}"#).is_err());
}

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_livarot-bench"))
}

#[test]
fn cli_writes_csv_and_reports_exit_codes() {
    let out = bench()
        .args(["--algo", "oracle", "--H", "3", "--T", "5", "--seeds", "0..1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 1 + 2 * 5);

    let bad = bench().args(["--algo", "livarot", "--T", "10", "--tau", "50"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let bad = bench().args(["--delta", "2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn cli_reads_json_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("out.csv");
    fs::write(
        &cfg,
        format!(r#"{{"algo":"oracle","H":[3],"T":4,"seeds":[5],"out":{:?}}}"#, out.to_str().unwrap()),
    )
    .unwrap();
    let status = bench().arg("--config").arg(&cfg).status().unwrap();
    assert!(status.success());
    let records = read_records(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.seed == 5 && r.horizon == 3 && r.algo == Algo::Oracle));
}
