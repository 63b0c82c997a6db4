use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cagecoopt"))
        .args(args)
        .env("CAGECOOPT_OUTPUT_ROOT", root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tasks_lists_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["tasks"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for t in ["catch", "vpush", "upush"] {
        assert!(s.lines().any(|l| l.starts_with(t)), "{s}");
    }
    let o = cli(dir.path(), &["tasks", "vpush", "--format", "json"]);
    let spec: cagecoopt_core::tasks::TaskSpec = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(spec, cagecoopt_core::tasks::TaskSpec::vpush());
    assert!(!cli(dir.path(), &["tasks", "scoop"]).status.success());
}

#[test]
fn mee_from_task_and_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &["mee", "--task", "vpush", "--d", "3.14159", "--budget", "300", "--save-scene", "s.json", "--out", "r.json", "--witness", "w.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("mee="));
    let r: cagecoopt::formats::MeeResultFile = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r.result.status, cagecoopt_core::MeeStatus::NotCaged);
    let w = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(w.lines().count(), r.result.witness_path.len() + 1);

    let scene = dir.path().join("s.json");
    let o = cli(dir.path(), &["mee", scene.to_str().unwrap(), "--oracle", "--resolution", "0.02,0.02,10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("status=not_caged"));
}

#[test]
fn errors_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!cli(dir.path(), &["mee", "missing.json"]).status.success());
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_seeds = 0\n").unwrap();
    let o = cli(dir.path(), &["codesign", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_seeds"));
    assert!(!cli(dir.path(), &["optimize", "--optimizer", "sgd", "--policy", "p.json"]).status.success());
}

#[test]
fn train_optimize_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let o = cli(root, &["train", "--smoke", "--task", "catch", "--steps", "512", "--out", "pol"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let policy = root.join("pol/policy.json");
    assert!(root.join("pol/training_log.csv").exists());

    for opt in ["mtbo", "bo", "ga"] {
        let out = format!("opt_{opt}");
        let o = cli(
            root,
            &["optimize", "--smoke", "--optimizer", opt, "--n-bo", "1", "--policy", policy.to_str().unwrap(), "--out", &out],
        );
        assert!(o.status.success(), "{opt}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = fs::read_to_string(root.join(&out).join("run.csv")).unwrap();
        assert!(csv.starts_with("iteration,seed,f,f_suc,f_mee,d0,d1,d2,d3,d4\n"));
        assert!(root.join(&out).join("run.json").exists());
    }

    let o = cli(
        root,
        &["sweep", "--policy", policy.to_str().unwrap(), "--d", "0.3,0.2,0.3,1.57,1.57", "--sigmas", "0,1", "--rollouts", "2"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
    let o = cli(root, &["sweep", "--policy", policy.to_str().unwrap(), "--d", "0.3"]);
    assert!(!o.status.success());

    let o = cli(root, &["codesign", "--smoke", "--n-seeds", "1", "--out", "cd"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = root.join("cd/report.json");
    let first = fs::read(&report).unwrap();
    let o = cli(root, &["report", report.to_str().unwrap(), "--out", "re"]);
    assert!(o.status.success());
    assert_eq!(fs::read(root.join("re/report.json")).unwrap(), first);
    assert_eq!(fs::read(root.join("re/summary.md")).unwrap(), fs::read(root.join("cd/summary.md")).unwrap());
}

#[test]
fn print_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["codesign", "--smoke", "--w", "0.8", "--print-config"]);
    assert!(o.status.success());
    let p = dir.path().join("c.toml");
    fs::write(&p, &o.stdout).unwrap();
    let c = cagecoopt::ExperimentConfig::load(&p).unwrap();
    assert_eq!(c.score.w, 0.8);
    assert_eq!(c.ppo.total_steps, cagecoopt::ExperimentConfig::smoke().ppo.total_steps);
}
