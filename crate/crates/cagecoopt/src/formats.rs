//! On-disk formats: scene and result JSON, witness and log CSVs, checkpoints.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cagecoopt_core::morph::OptimizerRun;
use cagecoopt_core::policy::{LogRow, PPOConfig, PolicyParams, RewardWeights};
use cagecoopt_core::tasks::TaskSpec;
use cagecoopt_core::{ConfigSE2, MeeQuery, MeeResult, WorldState};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version written to every JSON file this crate produces.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: io::Error },
    #[error("{path}: {err}")]
    Json { path: PathBuf, err: serde_json::Error },
    #[error("{path}: {err}")]
    Csv { path: PathBuf, err: csv::Error },
    #[error("{path}: {msg}")]
    Toml { path: PathBuf, msg: String },
    #[error("{path}: schema_version {found} is not supported (expected {SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |err| FormatError::Io { path: path.to_path_buf(), err }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> FormatError + '_ {
    move |err| FormatError::Csv { path: path.to_path_buf(), err }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_atomic(path, to_json_string(value).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|err| FormatError::Json { path: path.to_path_buf(), err })
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// Reads a versioned JSON file, rejecting unknown schema versions.
pub fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let probe: VersionProbe = read_json(path)?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(FormatError::Schema { path: path.to_path_buf(), found: probe.schema_version });
    }
    read_json(path)
}

/// A frozen scene for escape-energy queries, optionally with the world
/// state it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub schema_version: u32,
    pub query: MeeQuery,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldState>,
}

impl SceneFile {
    pub fn new(query: MeeQuery, world: Option<WorldState>) -> Self {
        Self { schema_version: SCHEMA_VERSION, query, world }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeeMethod {
    Planner,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeeResultFile {
    pub schema_version: u32,
    pub method: MeeMethod,
    /// Planner sample budget; 0 for the oracle.
    pub budget: usize,
    pub seed: u64,
    pub result: MeeResult,
}

pub fn write_witness_csv(path: &Path, witness: &[ConfigSE2]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "x", "y", "theta"]).map_err(csv_err(path))?;
    for (i, q) in witness.iter().enumerate() {
        w.serialize((i, q.x, q.y, q.theta)).map_err(csv_err(path))?;
    }
    write_atomic(path, &finish(w))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory CSV writer")
}

pub fn training_log_csv(rows: &[LogRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "mean_success", "mean_reward", "mean_mee"]).expect("in-memory");
    for r in rows {
        w.serialize((r.step, r.mean_success, r.mean_reward, r.mean_mee)).expect("in-memory");
    }
    finish(w)
}

pub fn write_training_log(path: &Path, rows: &[LogRow]) -> Result<(), FormatError> {
    write_atomic(path, &training_log_csv(rows))
}

pub fn read_training_log(path: &Path) -> Result<Vec<LogRow>, FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize::<(usize, f64, f64, f64)>()
        .map(|row| {
            row.map(|(step, mean_success, mean_reward, mean_mee)| LogRow { step, mean_success, mean_reward, mean_mee })
                .map_err(csv_err(path))
        })
        .collect()
}

/// A trained policy together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub schema_version: u32,
    pub task: TaskSpec,
    pub ppo: PPOConfig,
    pub weights: RewardWeights,
    pub sigma: f64,
    pub seed: u64,
    pub params: PolicyParams,
    pub log: Vec<LogRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub schema_version: u32,
    pub task: String,
    pub morphology_names: Vec<String>,
    pub run: OptimizerRun,
}

/// One row per evaluation; `d` spans as many columns as the longest design.
pub fn evaluations_csv(runs: &[&OptimizerRun]) -> Vec<u8> {
    let dim = runs.iter().flat_map(|r| r.evaluations.iter().map(|e| e.d.len())).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["iteration", "seed", "f", "f_suc", "f_mee"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|i| format!("d{i}")));
    w.write_record(&header).expect("in-memory");
    for run in runs {
        for e in &run.evaluations {
            let mut rec = vec![
                e.iteration.to_string(),
                run.seed.to_string(),
                e.f.to_string(),
                e.f_suc.to_string(),
                e.f_mee.to_string(),
            ];
            rec.extend((0..dim).map(|i| e.d.get(i).map(f64::to_string).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory");
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cagecoopt_core::cage::{EnergyModel, MeeStatus};
    use cagecoopt_core::ShapeGeom;

    fn scene() -> SceneFile {
        let q = MeeQuery::new(
            ShapeGeom::circle(0.04).unwrap(),
            ConfigSE2::new(0.0, 0.05, 0.0),
            vec![(ShapeGeom::rectangle(0.3, 0.01).unwrap(), ConfigSE2::new(0.0, 0.0, 0.0))],
            EnergyModel::Gravity { mass: 1.0, g: 9.81 },
        );
        SceneFile::new(q, None)
    }

    #[test]
    fn scene_round_trips_and_checks_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene.json");
        let s = scene();
        write_json(&p, &s).unwrap();
        assert_eq!(read_versioned::<SceneFile>(&p).unwrap(), s);
        let mut bad = serde_json::to_value(&s).unwrap();
        bad["schema_version"] = 99.into();
        fs::write(&p, bad.to_string()).unwrap();
        assert!(matches!(read_versioned::<SceneFile>(&p), Err(FormatError::Schema { found: 99, .. })));
    }

    #[test]
    fn training_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        let rows = vec![
            LogRow { step: 1024, mean_success: 0.25, mean_reward: 1.5, mean_mee: 0.125 },
            LogRow { step: 2048, mean_success: 0.5, mean_reward: -0.1, mean_mee: 0.0 },
        ];
        write_training_log(&p, &rows).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("step,mean_success,mean_reward,mean_mee\n"));
        assert_eq!(read_training_log(&p).unwrap(), rows);
    }

    #[test]
    fn witness_csv_has_one_row_per_pose() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        let path = [ConfigSE2::new(0.0, 0.0, 0.0), ConfigSE2::new(0.5, 1.0, 0.25)];
        write_witness_csv(&p, &path).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "index,x,y,theta\n0,0.0,0.0,0.0\n1,0.5,1.0,0.25\n");
        let r = MeeResult { mee: 0.0, status: MeeStatus::NotCaged, witness_path: path.to_vec(), samples_used: 3 };
        let f = MeeResultFile { schema_version: SCHEMA_VERSION, method: MeeMethod::Planner, budget: 10, seed: 0, result: r };
        let back: MeeResultFile = serde_json::from_str(&to_json_string(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn empty_evaluation_table_has_only_the_header() {
        assert_eq!(String::from_utf8(evaluations_csv(&[])).unwrap(), "iteration,seed,f,f_suc,f_mee\n");
    }
}
