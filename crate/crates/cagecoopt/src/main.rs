use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cagecoopt::experiment::{optimize_or_resume, sweep_disturbance, train_or_resume};
use cagecoopt::formats::{self, MeeMethod, MeeResultFile, PolicyCheckpoint, SceneFile, SCHEMA_VERSION};
use cagecoopt::report::{emit_report, markdown, read_report, sweep_csv};
use cagecoopt::{resolve_output, run_codesign, ExperimentConfig, OUTPUT_ROOT_ENV};
use cagecoopt_core::cage::{estimate_mee, grid_mee_oracle, GridResolution};
use cagecoopt_core::morph::OptimizerKind;
use cagecoopt_core::rng::rng_from_seed;
use cagecoopt_core::tasks::{mee_scene, reset, TaskSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cagecoopt", version, about = "Caging-guided morphology and control co-optimization")]
struct Cli {
    /// Root for relative output paths.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the task catalog or print one task's config block.
    Tasks {
        name: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Toml)]
        format: Format,
    },
    /// Minimum escape energy of a scene.
    Mee(MeeArgs),
    /// Train a universal policy.
    Train {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Optimize the morphology with a trained policy.
    Optimize {
        #[command(flatten)]
        exp: ExpArgs,
        /// Policy checkpoint written by `train`.
        #[arg(long)]
        policy: PathBuf,
    },
    /// Train, optimize, and evaluate for every replica seed, then write a report.
    Codesign {
        #[command(flatten)]
        exp: ExpArgs,
        /// Print the resolved config as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Success rate of one morphology across disturbance levels.
    Sweep {
        #[arg(long)]
        policy: PathBuf,
        /// Morphology, comma separated, in physical units.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        d: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2")]
        sigmas: Vec<f64>,
        /// Episodes per shape and σ.
        #[arg(long, default_value_t = 50)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the JSON, CSV and Markdown outputs of a saved report.
    Report {
        /// A `report.json`.
        input: PathBuf,
        /// Directory for the outputs; defaults to the input's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Toml,
    Json,
}

#[derive(Args)]
struct MeeArgs {
    /// Scene JSON file.
    #[arg(required_unless_present = "task")]
    scene: Option<PathBuf>,
    /// Build the scene from a task reset instead of a file.
    #[arg(long, conflicts_with = "scene", requires = "d")]
    task: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    d: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    h: usize,
    /// Save the scene built from `--task`.
    #[arg(long)]
    save_scene: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the grid oracle instead of the sampling planner.
    #[arg(long)]
    oracle: bool,
    /// Oracle cell size: dx,dy in meters and dθ in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.01,5")]
    resolution: Vec<f64>,
    /// MeeResult JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Witness path CSV output.
    #[arg(long)]
    witness: Option<PathBuf>,
}

/// Config file plus overrides for its most used fields.
#[derive(Args)]
struct ExpArgs {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the tiny smoke-test budgets.
    #[arg(long, conflicts_with = "config")]
    smoke: bool,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<Opt>,
    /// PPO environment steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Optimizer iterations after the initial design.
    #[arg(long)]
    n_bo: Option<usize>,
    /// Rollouts per design evaluation.
    #[arg(long)]
    n_rollouts: Option<usize>,
    /// Weight of the success rate in the score.
    #[arg(long)]
    w: Option<f64>,
    /// Disturbance σ during training.
    #[arg(long)]
    train_sigma: Option<f64>,
    /// Train without the escape-energy reward term.
    #[arg(long)]
    no_mee: bool,
    /// Output directory (relative to the output root).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opt {
    Mtbo,
    Bo,
    Ga,
}

impl ExpArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, self.smoke) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, true) => ExperimentConfig::smoke(),
            (None, false) => ExperimentConfig::default(),
        };
        if let Some(t) = &self.task {
            c.task = t.clone();
            c.task_spec = None;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.n_seeds {
            c.n_seeds = v;
        }
        if let Some(v) = self.optimizer {
            c.optimizer = match v {
                Opt::Mtbo => OptimizerKind::Mtbo,
                Opt::Bo => OptimizerKind::Bo,
                Opt::Ga => OptimizerKind::Ga,
            };
        }
        if let Some(v) = self.steps {
            c.ppo.total_steps = v;
        }
        if let Some(v) = self.n_bo {
            c.bo.iterations = v;
        }
        if let Some(v) = self.n_rollouts {
            c.score.n_rollouts = v;
        }
        if let Some(v) = self.w {
            c.score.w = v;
        }
        if let Some(v) = self.train_sigma {
            c.train_sigma = v;
        }
        if self.no_mee {
            c.use_mee_reward = false;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.to_string_lossy().into_owned();
        }
        c.validate()?;
        Ok(c)
    }
}

fn task_text(spec: &TaskSpec) -> String {
    let dims: Vec<String> = spec
        .morphology_names
        .iter()
        .zip(&spec.morphology_bounds)
        .map(|(n, (lo, hi))| format!("{n} ∈ [{lo:.3}, {hi:.3}]"))
        .collect();
    let shapes: Vec<&str> = spec.shapes.iter().map(|s| s.name.as_str()).collect();
    format!(
        "{}: D = {{{}}}, H = {{{}}}, {} steps, mee_reference {:.3} J",
        spec.name,
        dims.join(", "),
        shapes.join(", "),
        spec.episode_length,
        spec.mee_reference
    )
}

fn cmd_tasks(name: Option<&str>, format: Format) -> Result<()> {
    let specs = match name {
        Some(n) => vec![TaskSpec::by_name(n).with_context(|| format!("unknown task {n:?}"))?],
        None => TaskSpec::catalog(),
    };
    match (name, format) {
        (None, _) | (Some(_), Format::Text) => specs.iter().for_each(|s| println!("{}", task_text(s))),
        (Some(_), Format::Toml) => print!("{}", toml::to_string(&specs[0])?),
        (Some(_), Format::Json) => print!("{}", formats::to_json_string(&specs[0])),
    }
    Ok(())
}

fn cmd_mee(a: &MeeArgs, root: Option<&Path>) -> Result<()> {
    let scene = match (&a.scene, &a.task) {
        (Some(p), _) => formats::read_versioned::<SceneFile>(p)?,
        (None, Some(t)) => {
            let spec = TaskSpec::by_name(t).with_context(|| format!("unknown task {t:?}"))?;
            let d = a.d.as_deref().unwrap_or_default();
            let state = reset(&spec, d, a.h, &mut rng_from_seed(a.seed))?;
            let scene = SceneFile::new(mee_scene(&spec, &state)?, Some(state));
            if let Some(p) = &a.save_scene {
                formats::write_json(&resolve_output(root, p), &scene)?;
            }
            scene
        }
        (None, None) => bail!("give a scene file or --task"),
    };
    let (method, budget, result) = if a.oracle {
        let [dx, dy, dt] = a.resolution[..] else {
            bail!("--resolution takes three values: dx,dy,dθ(degrees)");
        };
        let res = GridResolution::new(dx, dy, dt.to_radians());
        (MeeMethod::Oracle, 0, grid_mee_oracle(&scene.query, res)?)
    } else {
        (MeeMethod::Planner, a.budget, estimate_mee(&scene.query, a.budget, &mut rng_from_seed(a.seed))?)
    };
    println!(
        "mee={} status={} samples={}",
        result.mee,
        serde_json::to_value(result.status)?.as_str().unwrap_or("?"),
        result.samples_used
    );
    if let Some(p) = &a.witness {
        formats::write_witness_csv(&resolve_output(root, p), &result.witness_path)?;
    }
    if let Some(p) = &a.out {
        let file = MeeResultFile { schema_version: SCHEMA_VERSION, method, budget, seed: a.seed, result };
        formats::write_json(&resolve_output(root, p), &file)?;
    }
    Ok(())
}

fn cmd_train(exp: &ExpArgs, root: Option<&Path>) -> Result<()> {
    let cfg = exp.resolve()?;
    let spec = cfg.spec()?;
    let dir = resolve_output(root, Path::new(&cfg.output_dir));
    let ckpt = train_or_resume(&cfg, &spec, cfg.seed, &dir)?;
    let last = ckpt.log.last();
    println!(
        "trained {} for {} steps; final mean_success {:.3}; checkpoint {}",
        spec.name,
        last.map_or(0, |r| r.step),
        last.map_or(0.0, |r| r.mean_success),
        dir.join("policy.json").display()
    );
    Ok(())
}

fn load_policy(path: &Path) -> Result<PolicyCheckpoint> {
    formats::read_versioned(path).with_context(|| format!("reading policy checkpoint {}", path.display()))
}

fn cmd_optimize(exp: &ExpArgs, policy: &Path, root: Option<&Path>) -> Result<()> {
    let mut cfg = exp.resolve()?;
    let ckpt = load_policy(policy)?;
    cfg.task_spec = Some(ckpt.task.clone());
    let dir = resolve_output(root, Path::new(&cfg.output_dir));
    let run = optimize_or_resume(&cfg, &ckpt.task, &ckpt.params, cfg.seed, &dir)?;
    formats::write_atomic(&dir.join("run.csv"), &formats::evaluations_csv(&[&run]))?;
    println!(
        "{}: best d = {:?} after {} evaluations ({} rollouts); {}",
        cfg.optimizer.name(),
        run.best_d,
        run.evaluations.len(),
        run.total_rollouts,
        dir.join("run.json").display()
    );
    Ok(())
}

fn cmd_codesign(exp: &ExpArgs, print_config: bool, root: Option<&Path>) -> Result<bool> {
    let cfg = exp.resolve()?;
    if print_config {
        print!("{}", cfg.to_toml());
        return Ok(true);
    }
    let dir = resolve_output(root, Path::new(&cfg.output_dir));
    let report = run_codesign(&cfg, &dir)?;
    emit_report(&report, &dir)?;
    print!("{}", markdown(&report));
    Ok(report.complete)
}

fn cmd_sweep(policy: &Path, d: &[f64], sigmas: &[f64], rollouts: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let ckpt = load_policy(policy)?;
    if d.len() != ckpt.task.morphology_bounds.len() {
        bail!("--d needs {} values ({})", ckpt.task.morphology_bounds.len(), ckpt.task.morphology_names.join(", "));
    }
    let (rows, _) = sweep_disturbance(&ckpt.task, &ckpt.params, d, sigmas, rollouts, seed)?;
    let csv = sweep_csv(&rows);
    match out {
        Some(p) => formats::write_atomic(p, &csv)?,
        None => print!("{}", String::from_utf8(csv)?),
    }
    Ok(())
}

fn cmd_report(input: &Path, out: Option<&Path>) -> Result<bool> {
    let report = read_report(input)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
    emit_report(&report, &dir)?;
    print!("{}", markdown(&report));
    Ok(report.complete)
}

fn run(cli: Cli) -> Result<bool> {
    let root = cli.output_root.as_deref();
    match &cli.cmd {
        Cmd::Tasks { name, format } => cmd_tasks(name.as_deref(), *format).map(|_| true),
        Cmd::Mee(a) => cmd_mee(a, root).map(|_| true),
        Cmd::Train { exp } => cmd_train(exp, root).map(|_| true),
        Cmd::Optimize { exp, policy } => cmd_optimize(exp, policy, root).map(|_| true),
        Cmd::Codesign { exp, print_config } => cmd_codesign(exp, *print_config, root),
        Cmd::Sweep { policy, d, sigmas, rollouts, seed, out } => {
            let out = out.as_deref().map(|p| resolve_output(root, p));
            cmd_sweep(policy, d, sigmas, *rollouts, *seed, out.as_deref()).map(|_| true)
        }
        Cmd::Report { input, out } => {
            let out = out.as_deref().map(|p| resolve_output(root, p));
            cmd_report(input, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: run finished with failures; see the report");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
