use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_hyperhit");

const BASE: &str = r#"
experiment = "orbit"
lattice = "modular"
seed = 11
samples = 6

[grid]
m_max = 1000
"#;

fn golden() -> Vec<(String, String)> {
    include_str!("golden/headers.txt")
        .lines()
        .map(|l| {
            let (k, v) = l.split_once(": ").unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

/// Overrides that make each experiment runnable and quick.
fn overrides(experiment: &str) -> Vec<&'static str> {
    match experiment {
        "hits" => vec!["target.kind=cusp", "target.eta=0.8"],
        "ah" => vec!["target.kind=cusp", "target.eta=1.0", "target.scale=0.5", "window=[2, 64]"],
        "met" => vec!["target.kind=cusp", "target.height=1.5", "grid.m_max=64"],
        "qi" => vec!["target.kind=cusp", "target.eta=1.0", "target.scale=0.5", "window=[1, 100]"],
        "measure" => vec!["target.kind=ball", "target.radius=0.2", "target.radius_exponent=0.5"],
        _ => vec![],
    }
}

fn hyperhit(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("HYPERHIT_OUTPUT_DIR").output().unwrap()
}

fn run(dir: &Path, experiment: &str, extra: &[&str]) -> Output {
    std::fs::write(dir.join("base.toml"), BASE).unwrap();
    let exp = format!("experiment={experiment}");
    let mut args = vec!["run", "base.toml", "--set", exp.as_str()];
    for o in overrides(experiment).into_iter().chain(extra.iter().copied()) {
        args.extend(["--set", o]);
    }
    hyperhit(dir, &args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn every_experiment_writes_its_golden_header() {
    let dir = tempfile::tempdir().unwrap();
    for (experiment, header) in golden() {
        let out = format!("{experiment}.csv");
        let o = run(dir.path(), &experiment, &[&format!("output.path=\"{out}\"")]);
        assert!(o.status.success(), "{experiment}: {}", stderr(&o));
        let data = std::fs::read_to_string(dir.path().join(&out)).unwrap();
        assert_eq!(data.lines().next().unwrap(), header, "{experiment}");

        let columns = hyperhit(dir.path(), &["columns", &experiment]);
        assert_eq!(String::from_utf8_lossy(&columns.stdout).trim(), header);

        let aggregate: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(aggregate["experiment"], experiment.as_str());
        let meta: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{out}.meta.json"))).unwrap())
                .unwrap();
        assert_eq!(meta["aggregate"], aggregate);
        assert_eq!(meta["rows"].as_u64().unwrap() as usize, data.lines().count() - 1);
        assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn data_rows_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    for experiment in ["hits", "loglaw", "met"] {
        let files: Vec<String> = ["1", "4", "16"]
            .iter()
            .map(|w| {
                let out = format!("{experiment}-{w}.jsonl");
                let o = run(
                    dir.path(),
                    experiment,
                    &[&format!("workers={w}"), &format!("output.path=\"{out}\""), "output.format=jsonl"],
                );
                assert!(o.status.success(), "{}", stderr(&o));
                std::fs::read_to_string(dir.path().join(out)).unwrap()
            })
            .collect();
        assert_eq!(files[0], files[1], "{experiment}");
        assert_eq!(files[0], files[2], "{experiment}");
    }
}

#[test]
fn repeated_runs_are_byte_identical_and_share_a_default_path() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let go = || {
        std::fs::write(dir.path().join("base.toml"), BASE).unwrap();
        Command::new(BIN)
            .args(["run", "base.toml", "--set", "experiment=sample"])
            .current_dir(dir.path())
            .env("HYPERHIT_OUTPUT_DIR", &out_dir)
            .output()
            .unwrap()
    };
    let first = go();
    assert!(first.status.success(), "{}", stderr(&first));
    let files: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
    let data = files.iter().find(|p| p.extension().is_some_and(|e| e == "csv")).unwrap().clone();
    assert!(data.file_name().unwrap().to_str().unwrap().starts_with("sample-"));
    let before = std::fs::read(&data).unwrap();
    assert!(go().status.success());
    assert_eq!(std::fs::read(&data).unwrap(), before);
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 2);
}

#[test]
fn loglaw_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "loglaw", &["output.path=\"l.csv\""]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = std::fs::read_to_string(dir.path().join("l.csv")).unwrap();
    assert_eq!(data.lines().count(), 7);
    let aggregate: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(aggregate["median_cusp_ratio"].is_f64());
    assert!(aggregate["median_ball_ratio"].is_f64());
}

#[test]
fn null_target_mean_ergodic_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "sample", &["experiment=met", "target.kind=empty", "grid.m_max=16"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("μ(f) > 0"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "experiment = \"orbit\"\nlattice = \"modular\"\n").unwrap();
    let o = hyperhit(dir.path(), &["run", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
    assert_eq!(run(dir.path(), "hits", &["samples=0"]).status.code(), Some(2));
    assert_eq!(hyperhit(dir.path(), &["run", "missing.toml"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "orbit", &["grid.unknown=1"]).status.code(), Some(2));
}

fn validate(dir: &Path, sets: &[&str]) -> Output {
    std::fs::write(dir.join("base.toml"), BASE).unwrap();
    let mut args = vec!["validate", "base.toml"];
    for s in sets {
        args.extend(["--set", s]);
    }
    hyperhit(dir, &args)
}

#[test]
fn validate_reports_regime_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let clean = validate(dir.path(), &[]);
    assert!(clean.status.success());
    assert_eq!(stderr(&clean), "");

    let steep = validate(dir.path(), &["experiment=hits", "target.kind=ball", "target.eta=1.5"]);
    assert!(steep.status.success());
    let text = stderr(&steep);
    assert!(text.contains("warning:") && text.contains("misses B_m entirely"), "{text}");
    assert!(text.contains("needs it unbounded"), "{text}");

    let critical = stderr(&validate(dir.path(), &["experiment=hits", "target.kind=cusp", "target.eta=1.0"]));
    assert!(critical.contains("needs it unbounded") && !critical.contains("misses"), "{critical}");

    let plane = stderr(&validate(
        dir.path(),
        &["experiment=hits", "flow.kind=unipotent", "target.kind=cusp", "target.eta=0.5"],
    ));
    assert!(plane.contains("n = 2") && plane.contains("stronger"), "{plane}");
    assert_eq!(plane.lines().count(), 1, "{plane}");

    let space = stderr(&validate(
        dir.path(),
        &["lattice=picard", "experiment=hits", "flow.kind=unipotent", "target.kind=cusp", "target.eta=0.5"],
    ));
    assert_eq!(space, "");

    let broken = validate(dir.path(), &["experiment=ah", "target.kind=whole"]);
    assert_eq!(broken.status.code(), Some(2));
    assert!(stderr(&broken).contains("error:"));
}
