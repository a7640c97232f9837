//! Subcommand implementations behind the `strider` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use strider_core::canlink::CanConfig;
use strider_core::env::{build_envs, EnvConfig, TerrainChoice, TERM_NAMES};
use strider_core::learn::{Checkpoint, TrainConfig, Trainer};
use strider_core::model::{build_robot, count_links, default_robot_spec, ConfigurationId, RobotSpec};
use strider_core::sim2sim::{
    compare_reports, run_tracking_eval, CommandProfile, EvalSetup, SimVariant, TrackingReport, VariantId, CHANNELS,
};
use strider_core::Robot;

pub mod dump;

pub const CODE_VERSION: &str = concat!("strider ", env!("CARGO_PKG_VERSION"));
pub const METRICS_SCHEMA: &str = "metrics-v1";

/// One file describing a run; command-line flags override its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub num_envs: usize,
    pub iterations: usize,
    /// Robot description, relative to the config file. Built-in default
    /// when absent.
    pub robot: Option<PathBuf>,
    pub env: EnvConfig,
    pub train: TrainConfig,
    /// Bus assignment and codec ranges; derived from the robot when absent.
    pub can: Option<CanConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_envs: 256,
            iterations: 1500,
            robot: None,
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            can: None,
        }
    }
}

impl RunConfig {
    /// Reads `path`; relative robot paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(r) = &cfg.robot {
            if r.is_relative() {
                cfg.robot = Some(path.parent().unwrap_or(Path::new(".")).join(r));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate().map_err(anyhow::Error::msg)?;
        if self.num_envs == 0 {
            bail!("num_envs must be positive");
        }
        Ok(())
    }

    pub fn robot_spec(&self) -> Result<RobotSpec> {
        match &self.robot {
            Some(p) => Ok(RobotSpec::load(p)?),
            None => Ok(default_robot_spec()),
        }
    }
}

/// Options shared by the commands that build a simulation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub num_envs: Option<usize>,
    pub iterations: Option<usize>,
    pub robot: Option<PathBuf>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.num_envs {
            cfg.num_envs = n;
        }
        if let Some(i) = self.iterations {
            cfg.iterations = i;
        }
        if let Some(r) = &self.robot {
            cfg.robot = Some(r.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn counts_table() -> String {
    let mut out = String::new();
    for c in ConfigurationId::ALL {
        out.push_str(&format!("{c} {}\n", count_links(c)));
    }
    out
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the resolved config (robot description copied alongside) and
/// the provenance record into `out`.
fn write_run_description(out: &Path, cfg: &RunConfig, spec: &RobotSpec) -> Result<()> {
    let mut resolved = cfg.clone();
    resolved.robot = Some(PathBuf::from("robot.toml"));
    write_file(&out.join("robot.toml"), spec.to_toml())?;
    write_file(&out.join("config.toml"), toml::to_string(&resolved)?)?;
    let run = serde_json::json!({
        "code_version": CODE_VERSION,
        "seed": cfg.seed,
        "num_envs": cfg.num_envs,
        "iterations": cfg.iterations,
        "metrics_schema": METRICS_SCHEMA,
    });
    write_file(&out.join("run.json"), serde_json::to_string_pretty(&run)?)
}

pub fn metrics_header() -> String {
    let mut cols = vec![
        "iteration",
        "mean_reward",
        "mean_episode_length",
        "mean_step_reward",
        "episodes",
        "action_std",
        "approx_kl",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    cols.extend(TERM_NAMES.iter().map(|t| format!("term_{t}")));
    cols.join(",")
}

/// Trains from scratch and writes `metrics.csv`, `policy.ckpt` (plus
/// periodic `policy_NNNNN.ckpt`) and the run description into `out`.
pub fn train(ov: &Overrides, out: &Path, log: &mut dyn Write) -> Result<()> {
    let cfg = ov.resolve()?;
    let spec = cfg.robot_spec()?;
    let robot: Arc<Robot> = Arc::new(build_robot(&spec)?);
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_run_description(out, &cfg, &spec)?;

    let envs = build_envs(&cfg.env, robot, cfg.seed, cfg.num_envs)?;
    let mut trainer: Trainer<f32, _> = Trainer::new(envs, cfg.train.clone(), cfg.seed)?;
    let save = |t: &Trainer<f32, _>, name: &str| -> Result<()> {
        let mut ck = t.checkpoint();
        ck.meta.insert("seed".into(), cfg.seed.into());
        ck.meta.insert("code_version".into(), CODE_VERSION.into());
        ck.save(&out.join(name))?;
        Ok(())
    };

    let metrics_path = out.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path).with_context(|| format!("cannot write {}", metrics_path.display()))?;
    writeln!(metrics, "{}", metrics_header())?;
    let start = Instant::now();
    for _ in 0..cfg.iterations {
        let it = trainer.iteration + 1;
        let r = trainer.iterate().with_context(|| format!("training diverged at iteration {it}"))?;
        let ro = &r.rollout;
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            r.iteration, ro.mean_return, ro.mean_length, ro.mean_step_reward, ro.episodes, r.action_std, r.update.approx_kl
        );
        for v in &ro.term_means {
            row.push_str(&format!(",{v}"));
        }
        writeln!(metrics, "{row}")?;
        metrics.flush()?;
        writeln!(
            log,
            "it {:5}  return {:9.3}  len {:7.1}  step_r {:8.5}  std {:.3}  kl {:.4}  {:.1}s",
            r.iteration,
            ro.mean_return,
            ro.mean_length,
            ro.mean_step_reward,
            r.action_std,
            r.update.approx_kl,
            start.elapsed().as_secs_f64()
        )?;
        let every = cfg.train.checkpoint_every;
        if every > 0 && r.iteration % every == 0 {
            save(&trainer, &format!("policy_{:05}.ckpt", r.iteration))?;
            save(&trainer, "policy.ckpt")?;
        }
    }
    save(&trainer, "policy.ckpt")
}

pub fn load_profile(name: &str) -> Result<CommandProfile> {
    if let Some(p) = CommandProfile::by_name(name) {
        return Ok(p);
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!("unknown profile {name:?}: use \"default\", \"zero\" or a TOML profile file");
    }
    let text = fs::read_to_string(path).with_context(|| format!("cannot read profile {}", path.display()))?;
    let p: CommandProfile = toml::from_str(&text).with_context(|| format!("invalid profile {}", path.display()))?;
    p.validate()?;
    Ok(p)
}

pub struct EvalArgs {
    pub overrides: Overrides,
    pub checkpoint: PathBuf,
    /// Both variants plus the comparison when `None`.
    pub variant: Option<VariantId>,
    pub profile: String,
    pub terrain: Option<TerrainChoice>,
}

pub fn eval_setup(cfg: &RunConfig, terrain: Option<TerrainChoice>) -> Result<EvalSetup> {
    let robot = Arc::new(build_robot::<f64>(&cfg.robot_spec()?)?);
    let kind = terrain.unwrap_or(cfg.env.terrain.kind);
    let terrain = Arc::new(cfg.env.terrain.build::<f64>(kind, cfg.seed)?);
    Ok(EvalSetup {
        config: cfg.env.clone(),
        robot,
        terrain,
    })
}

/// Writes `tracking_{A,B}.csv`, `report_{A,B}.json` and, when both
/// variants run, `compare.json`.
pub fn eval(args: &EvalArgs, out: &Path, log: &mut dyn Write) -> Result<Vec<TrackingReport>> {
    let cfg = args.overrides.resolve()?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let profile = load_profile(&args.profile)?;
    let setup = eval_setup(&cfg, args.terrain)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let ids = match args.variant {
        Some(v) => vec![v],
        None => vec![VariantId::A, VariantId::B],
    };
    let mut reports = Vec::new();
    for id in ids {
        let variant = SimVariant::by_id(id, &cfg.env);
        let rep = run_tracking_eval(&ckpt, &setup, &variant, &profile, cfg.seed)?;
        write_file(&out.join(format!("tracking_{id}.csv")), rep.to_csv())?;
        write_file(&out.join(format!("report_{id}.json")), serde_json::to_string(&rep)?)?;
        let rm: Vec<String> = CHANNELS.iter().zip(rep.rmse).map(|(c, v)| format!("{c} {v:.4}")).collect();
        writeln!(log, "variant {id}: rmse {}  falls {}", rm.join("  "), rep.falls.len())?;
        reports.push(rep);
    }
    if let [a, b] = reports.as_slice() {
        compare_to(a, b, &out.join("compare.json"), log)?;
    }
    Ok(reports)
}

fn compare_to(a: &TrackingReport, b: &TrackingReport, path: &Path, log: &mut dyn Write) -> Result<()> {
    let c = compare_reports(a, b)?;
    let deg: Vec<String> = CHANNELS
        .iter()
        .zip(c.degradation_a_to_b)
        .map(|(ch, v)| format!("{ch} {:+.1}%", 100.0 * v))
        .collect();
    writeln!(log, "B vs A degradation: {}", deg.join("  "))?;
    write_file(path, serde_json::to_string_pretty(&c)?)
}

/// Compares two stored `report_*.json` files into `compare.json`.
pub fn compare(a: &Path, b: &Path, out: &Path, log: &mut dyn Write) -> Result<()> {
    let read = |p: &Path| -> Result<TrackingReport> {
        let text = fs::read_to_string(p).with_context(|| format!("cannot read report {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid report {}", p.display()))
    };
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    compare_to(&read(a)?, &read(b)?, &out.join("compare.json"), log)
}
