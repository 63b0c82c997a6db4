//! Report emission: JSON, CSV tables and a Markdown summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::experiment::{ExperimentReport, SweepRow};
use crate::formats::{self, FormatError};

pub fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sigma", "success_rate", "ci_halfwidth"]).expect("in-memory");
    for r in rows {
        w.serialize((r.sigma, r.success_rate, r.ci_halfwidth)).expect("in-memory");
    }
    w.into_inner().expect("in-memory")
}

fn fmt_d(d: &[f64]) -> String {
    let parts: Vec<String> = d.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn markdown(report: &ExperimentReport) -> String {
    let c = &report.config;
    let mut s = String::new();
    let _ = writeln!(s, "# Co-design report: {}\n", c.task_spec.as_ref().map_or(&c.task, |t| &t.name));
    let status = if report.complete { "complete" } else { "PARTIAL (see failures below)" };
    let _ = writeln!(s, "- status: {status}");
    let _ = writeln!(s, "- optimizer: {}", c.optimizer.name());
    let _ = writeln!(s, "- master seed: {}, replicas: {}", c.seed, c.n_seeds);
    let _ = writeln!(s, "- morphology: {}", report.morphology_names.join(", "));
    let _ = writeln!(s, "- environment steps: {}", report.total_env_steps);
    let _ = writeln!(s, "- version: {}\n", report.version);
    if let Some(q) = &report.q {
        let _ = writeln!(
            s,
            "Q = {:.3} ± {:.3} (σ = {}, {} rollouts per shape and morphology)\n",
            q.q_mu, q.q_sigma, q.sigma, q.n_rollouts
        );
    }
    s.push_str("| seed | best d | final score | rollouts | Q | status |\n|---|---|---|---|---|---|\n");
    for r in &report.seeds {
        let score = r.run.as_ref().and_then(|run| run.iterations.last()).map(|i| format!("{:.4}", i.best_score));
        let rollouts = r.run.as_ref().map(|run| run.total_rollouts.to_string());
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.index,
            r.best_d.as_deref().map(fmt_d).unwrap_or_else(|| "-".into()),
            score.unwrap_or_else(|| "-".into()),
            rollouts.unwrap_or_else(|| "-".into()),
            r.q.map(|q| format!("{q:.3}")).unwrap_or_else(|| "-".into()),
            r.failure.as_deref().map_or("ok", |_| "failed"),
        );
    }
    if report.seeds.iter().any(|r| !r.sweep.is_empty()) {
        s.push_str("\n## Disturbance sweep\n\n| seed | σ | success | ±95% |\n|---|---|---|---|\n");
        for r in &report.seeds {
            for row in &r.sweep {
                let _ = writeln!(s, "| {} | {} | {:.3} | {:.3} |", r.index, row.sigma, row.success_rate, row.ci_halfwidth);
            }
        }
    }
    let failures: Vec<_> = report.seeds.iter().filter_map(|r| r.failure.as_ref().map(|f| (r.index, f))).collect();
    if !failures.is_empty() {
        s.push_str("\n## Failures\n\n");
        for (i, f) in failures {
            let _ = writeln!(s, "- seed {i}: {f}");
        }
    }
    s
}

/// Writes `report.json`, `evaluations.csv`, per-seed `training_log_<i>.csv`
/// and `sweep_<i>.csv`, and `summary.md`. Returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let mut out = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<(), FormatError> {
        let p = dir.join(name);
        formats::write_atomic(&p, bytes)?;
        out.push(p);
        Ok(())
    };
    put("report.json".into(), formats::to_json_string(report).as_bytes())?;
    let runs: Vec<_> = report.seeds.iter().filter_map(|s| s.run.as_ref()).collect();
    put("evaluations.csv".into(), &formats::evaluations_csv(&runs))?;
    for s in &report.seeds {
        put(format!("training_log_{}.csv", s.index), &formats::training_log_csv(&s.training_log))?;
        put(format!("sweep_{}.csv", s.index), &sweep_csv(&s.sweep))?;
    }
    put("summary.md".into(), markdown(report).as_bytes())?;
    Ok(out)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport, FormatError> {
    formats::read_versioned(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use cagecoopt_core::tasks::TaskSpec;

    #[test]
    fn empty_report_writes_valid_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let r = ExperimentReport::empty(cfg.clone(), &cfg.spec().unwrap());
        let files = emit_report(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), r);
        let csv = std::fs::read_to_string(dir.path().join("evaluations.csv")).unwrap();
        assert_eq!(csv, "iteration,seed,f,f_suc,f_mee\n");
        assert!(markdown(&r).contains("status: complete"));
        let _ = TaskSpec::vpush();
    }
}
