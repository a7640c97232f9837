//! Policy evaluation under two deliberately different simulator
//! configurations, and velocity-tracking reports.
//!
//! This is a cross-configuration check (step size, contact stiffness and
//! damping), not a cross-engine one.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::Terrain;
use crate::env::{Command, Env, EnvConfig, TerminationReason};
use crate::learn::Checkpoint;
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantId {
    A,
    B,
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantId::A => "A",
            VariantId::B => "B",
        })
    }
}

/// Overrides applied on top of an environment config. The policy period
/// is preserved: the decimation is recomputed from the new step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVariant {
    pub id: VariantId,
    pub dt: f64,
    pub stiffness_scale: f64,
    pub damping_scale: f64,
    pub friction: Option<f64>,
}

impl SimVariant {
    /// The training configuration as-is (dt taken from the config).
    pub fn a(config: &EnvConfig) -> Self {
        Self {
            id: VariantId::A,
            dt: config.sim.dt,
            stiffness_scale: 1.0,
            damping_scale: 1.0,
            friction: None,
        }
    }

    pub fn b() -> Self {
        Self {
            id: VariantId::B,
            dt: 0.002,
            stiffness_scale: 2.0,
            damping_scale: 0.5,
            friction: None,
        }
    }

    pub fn by_id(id: VariantId, config: &EnvConfig) -> Self {
        match id {
            VariantId::A => Self::a(config),
            VariantId::B => Self::b(),
        }
    }

    pub fn apply(&self, base: &EnvConfig) -> Result<EnvConfig, EvalError> {
        let policy_dt = base.sim.policy_dt();
        let ratio = policy_dt / self.dt;
        let decimation = ratio.round();
        if !(decimation >= 1.0) || (ratio - decimation).abs() > 1e-6 {
            return Err(EvalError::Variant(format!(
                "dt {} does not divide the policy period {policy_dt}",
                self.dt
            )));
        }
        let mut cfg = base.clone();
        cfg.sim.dt = self.dt;
        cfg.sim.decimation = decimation as usize;
        cfg.sim.contact.normal_stiffness *= self.stiffness_scale;
        cfg.sim.contact.normal_damping *= self.damping_scale;
        if let Some(mu) = self.friction {
            cfg.sim.contact.friction = Some(mu);
        }
        cfg.validate().map_err(|e| EvalError::Variant(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandProfile {
    pub name: String,
    pub segments: Vec<Segment>,
    pub duration: f64,
}

impl CommandProfile {
    /// Forward, lateral and rotational steps, 5 s each, both signs.
    pub fn default_profile() -> Self {
        let cmds = [
            Command::new(0.5, 0.0, 0.0),
            Command::new(-0.3, 0.0, 0.0),
            Command::new(0.0, 0.3, 0.0),
            Command::new(0.0, -0.3, 0.0),
            Command::new(0.0, 0.0, 0.6),
            Command::new(0.0, 0.0, -0.6),
        ];
        Self::steps("default", &cmds, 5.0)
    }

    /// Standing still for `duration` seconds.
    pub fn zero(duration: f64) -> Self {
        Self::steps("zero", &[Command::ZERO], duration)
    }

    pub fn constant(name: &str, command: Command, duration: f64) -> Self {
        Self::steps(name, &[command], duration)
    }

    /// Consecutive segments of equal length.
    pub fn steps(name: &str, commands: &[Command], seg_len: f64) -> Self {
        Self {
            name: name.to_string(),
            segments: commands
                .iter()
                .enumerate()
                .map(|(i, c)| Segment {
                    start: i as f64 * seg_len,
                    command: *c,
                })
                .collect(),
            duration: commands.len() as f64 * seg_len,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_profile()),
            "zero" => Some(Self::zero(20.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let ordered = self.segments.windows(2).all(|w| w[0].start < w[1].start);
        let first_ok = self.segments.first().is_some_and(|s| s.start == 0.0);
        let last_ok = self.segments.last().is_some_and(|s| s.start < self.duration);
        if !(ordered && first_ok && last_ok && self.duration.is_finite()) {
            return Err(EvalError::Profile(format!(
                "profile {:?}: segments must start at 0, be strictly ordered and end before the duration",
                self.name
            )));
        }
        Ok(())
    }

    pub fn command_at(&self, t: f64) -> Command {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start <= t)
            .map(|s| s.command)
            .unwrap_or(Command::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    pub time: f64,
    pub reason: TerminationReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    /// Commanded (vx, vy, wz).
    pub cmd: [f64; 3],
    /// Achieved (vx, vy, wz) in the base frame after low-pass filtering.
    pub act: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub variant: VariantId,
    pub profile: CommandProfile,
    pub seed: u64,
    pub filter_window: f64,
    pub samples: Vec<Sample>,
    pub rmse: [f64; 3],
    pub falls: Vec<FallEvent>,
}

pub const CSV_HEADER: &str = "time,cmd_vx,act_vx,cmd_vy,act_vy,cmd_wz,act_wz";
pub const CHANNELS: [&str; 3] = ["vx", "vy", "wz"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid variant: {0}")]
    Variant(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("reports were produced with different command profiles ({0:?} vs {1:?})")]
    ProfileMismatch(String, String),
    #[error("observation size {got} does not match the policy input {expected}")]
    PolicyShape { expected: usize, got: usize },
    #[error("malformed tracking CSV: {0}")]
    Csv(String),
}

impl TrackingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.time, s.cmd[0], s.act[0], s.cmd[1], s.act[1], s.cmd[2], s.act[2]
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<Sample>, EvalError> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(EvalError::Csv(format!("header must be {CSV_HEADER:?}")));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let v: Vec<f64> = line
                    .split(',')
                    .map(|f| f.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| EvalError::Csv(format!("row {}: {e}", i + 1)))?;
                if v.len() != 7 {
                    return Err(EvalError::Csv(format!("row {}: {} fields", i + 1, v.len())));
                }
                Ok(Sample {
                    time: v[0],
                    cmd: [v[1], v[3], v[5]],
                    act: [v[2], v[4], v[6]],
                })
            })
            .collect()
    }

    /// Summary without the time series.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variant": self.variant,
            "profile": self.profile.name,
            "seed": self.seed,
            "rmse": { "vx": self.rmse[0], "vy": self.rmse[1], "wz": self.rmse[2] },
            "falls": self.falls,
        })
    }
}

/// Root mean square of `cmd − act` per channel.
pub fn rmse(samples: &[Sample]) -> [f64; 3] {
    let mut out = [0.0; 3];
    if samples.is_empty() {
        return out;
    }
    for (c, o) in out.iter_mut().enumerate() {
        let ss: f64 = samples.iter().map(|s| (s.cmd[c] - s.act[c]).powi(2)).sum();
        *o = (ss / samples.len() as f64).sqrt();
    }
    out
}

/// Trailing moving average over `window` samples (shorter at the start).
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += x[i];
        if i >= w {
            acc -= x[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Everything an evaluation needs besides the policy.
#[derive(Clone)]
pub struct EvalSetup {
    pub config: EnvConfig,
    pub robot: Arc<RobotModel<f64>>,
    pub terrain: Arc<Terrain<f64>>,
}

fn eval_env(setup: &EvalSetup, variant: &SimVariant, horizon: f64, seed: u64) -> Result<Env<f64>, EvalError> {
    let mut cfg = variant.apply(&setup.config)?;
    cfg.termination.episode_length = horizon + 1.0;
    let mut env = Env::new(cfg, setup.robot.clone(), setup.terrain.clone(), seed, 0);
    env.set_randomization(false);
    env.reset_with_seed(seed);
    Ok(env)
}

fn achieved(env: &Env<f64>) -> [f64; 3] {
    let s = env.state();
    let v = s.base_lin_vel_local();
    [v.x, v.y, s.base_ang_vel.z]
}

/// Runs the deterministic policy through the profile. A fall is recorded
/// with its time and the robot is reset in place; the clock keeps running.
pub fn run_tracking_eval(
    ckpt: &Checkpoint,
    setup: &EvalSetup,
    variant: &SimVariant,
    profile: &CommandProfile,
    seed: u64,
) -> Result<TrackingReport, EvalError> {
    profile.validate()?;
    let mut env = eval_env(setup, variant, profile.duration, seed)?;
    let expected = ckpt.policy.obs_dim();
    if env.observation().len() != expected {
        return Err(EvalError::PolicyShape {
            expected,
            got: env.observation().len(),
        });
    }
    let dt = env.config.sim.policy_dt();
    let steps = (profile.duration / dt).round() as usize;
    let mut raw: [Vec<f64>; 3] = Default::default();
    let mut cmds = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps);
    let mut falls = Vec::new();
    for k in 0..steps {
        let t = k as f64 * dt;
        let cmd = profile.command_at(t);
        env.set_command(cmd);
        let action = ckpt.act(&env.observation());
        let r = env.step(&action);
        let v = achieved(&env);
        for c in 0..3 {
            raw[c].push(v[c]);
        }
        cmds.push([cmd.vx, cmd.vy, cmd.wz]);
        times.push((k + 1) as f64 * dt);
        if r.done {
            falls.push(FallEvent {
                time: (k + 1) as f64 * dt,
                reason: r.reason,
            });
            env.reset_with_seed(seed.wrapping_add(falls.len() as u64));
        }
    }
    let window = 0.5;
    let w = (window / dt).round() as usize;
    let filt: Vec<Vec<f64>> = raw.iter().map(|x| moving_average(x, w)).collect();
    let samples: Vec<Sample> = (0..steps)
        .map(|k| Sample {
            time: times[k],
            cmd: cmds[k],
            act: [filt[0][k], filt[1][k], filt[2][k]],
        })
        .collect();
    Ok(TrackingReport {
        variant: variant.id,
        profile: profile.clone(),
        seed,
        filter_window: window,
        rmse: rmse(&samples),
        samples,
        falls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub profile: String,
    pub rmse_a: [f64; 3],
    pub rmse_b: [f64; 3],
    /// |rmse_a − rmse_b|.
    pub delta: [f64; 3],
    /// delta relative to the better (smaller) of the two.
    pub relative: [f64; 3],
    /// (rmse_b − rmse_a) / rmse_a, negative when the second is better.
    pub degradation_a_to_b: [f64; 3],
    pub falls_a: usize,
    pub falls_b: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY.copysign(num)
    } else {
        num / den
    }
}

pub fn compare_reports(a: &TrackingReport, b: &TrackingReport) -> Result<Comparison, EvalError> {
    if a.profile != b.profile {
        return Err(EvalError::ProfileMismatch(a.profile.name.clone(), b.profile.name.clone()));
    }
    let mut cmp = Comparison {
        profile: a.profile.name.clone(),
        rmse_a: a.rmse,
        rmse_b: b.rmse,
        delta: [0.0; 3],
        relative: [0.0; 3],
        degradation_a_to_b: [0.0; 3],
        falls_a: a.falls.len(),
        falls_b: b.falls.len(),
    };
    for c in 0..3 {
        cmp.delta[c] = (a.rmse[c] - b.rmse[c]).abs();
        cmp.relative[c] = ratio(cmp.delta[c], a.rmse[c].min(b.rmse[c]));
        cmp.degradation_a_to_b[c] = ratio(b.rmse[c] - a.rmse[c], a.rmse[c]);
    }
    Ok(cmp)
}

/// Outcome of holding one command for a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRun {
    pub seed: u64,
    pub duration: f64,
    pub fell_at: Option<f64>,
    /// Base displacement in the horizontal plane at the end, m.
    pub distance: f64,
}

/// Drives the deterministic policy with a constant command until
/// `duration` or the first fall.
pub fn survival_run(
    ckpt: &Checkpoint,
    setup: &EvalSetup,
    command: Command,
    duration: f64,
    seed: u64,
) -> Result<SurvivalRun, EvalError> {
    let mut env = eval_env(setup, &SimVariant::a(&setup.config), duration, seed)?;
    let start = env.state().base_position;
    let dt = env.config.sim.policy_dt();
    let steps = (duration / dt).round() as usize;
    let mut fell_at = None;
    for k in 0..steps {
        env.set_command(command);
        let a = ckpt.act(&env.observation());
        if env.step(&a).done {
            fell_at = Some((k + 1) as f64 * dt);
            break;
        }
    }
    let d = env.state().base_position - start;
    Ok(SurvivalRun {
        seed,
        duration,
        fell_at,
        distance: d.x.hypot(d.y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, cmd: [f64; 3], act: [f64; 3]) -> Sample {
        Sample { time: t, cmd, act }
    }

    fn report(samples: Vec<Sample>) -> TrackingReport {
        TrackingReport {
            variant: VariantId::A,
            profile: CommandProfile::zero(1.0),
            seed: 0,
            filter_window: 0.5,
            rmse: rmse(&samples),
            samples,
            falls: vec![],
        }
    }

    #[test]
    fn hand_built_series_compare_by_hand() {
        // a: errors (0.1, 0.3) on vx → rmse sqrt(0.05); b: (0.2, 0.4) → sqrt(0.1)
        let a = report(vec![sample(0.0, [0.5, 0.0, 0.0], [0.4, 0.0, 0.0]), sample(1.0, [0.5, 0.0, 0.0], [0.2, 0.0, 0.0])]);
        let b = report(vec![sample(0.0, [0.5, 0.0, 0.0], [0.3, 0.0, 0.0]), sample(1.0, [0.5, 0.0, 0.0], [0.1, 0.0, 0.0])]);
        let c = compare_reports(&a, &b).unwrap();
        assert!((c.rmse_a[0] - 0.05f64.sqrt()).abs() < 1e-15);
        assert!((c.rmse_b[0] - 0.1f64.sqrt()).abs() < 1e-15);
        let d = 0.1f64.sqrt() - 0.05f64.sqrt();
        assert!((c.delta[0] - d).abs() < 1e-15);
        assert!((c.relative[0] - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert_eq!(c.delta[1], 0.0);
        assert_eq!(c.relative[2], 0.0);
        let back = compare_reports(&b, &a).unwrap();
        assert_eq!(back.delta, c.delta);
        assert_eq!(back.relative, c.relative);
        assert!((back.degradation_a_to_b[0] + d / 0.1f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn different_profiles_are_rejected() {
        let a = report(vec![]);
        let mut b = report(vec![]);
        b.profile = CommandProfile::default_profile();
        assert!(matches!(compare_reports(&a, &b), Err(EvalError::ProfileMismatch(..))));
    }

    #[test]
    fn csv_round_trips_and_rejects_bad_headers() {
        let r = report(vec![sample(0.02, [0.1, 0.2, 0.3], [0.1 / 3.0, -2e-17, 1e300])]);
        assert_eq!(TrackingReport::parse_csv(&r.to_csv()).unwrap(), r.samples);
        assert!(TrackingReport::parse_csv("time,vx\n1,2\n").is_err());
    }

    #[test]
    fn moving_average_is_trailing_and_exact() {
        assert_eq!(moving_average(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
        assert_eq!(moving_average(&[1.0, 1.0], 10), vec![1.0, 1.0]);
    }

    #[test]
    fn default_profile_covers_all_channels_in_order() {
        let p = CommandProfile::default_profile();
        p.validate().unwrap();
        assert_eq!(p.duration, 30.0);
        assert_eq!(p.command_at(2.0).vx, 0.5);
        assert_eq!(p.command_at(12.5).vy, 0.3);
        assert_eq!(p.command_at(29.9).wz, -0.6);
        let mut bad = p.clone();
        bad.segments.swap(0, 1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variant_b_keeps_the_policy_period() {
        let base = EnvConfig::default();
        let b = SimVariant::b().apply(&base).unwrap();
        assert_eq!(b.sim.decimation, 10);
        assert!((b.sim.policy_dt() - base.sim.policy_dt()).abs() < 1e-12);
        assert_eq!(b.sim.contact.normal_stiffness, 2.0 * base.sim.contact.normal_stiffness);
        let mut odd = SimVariant::b();
        odd.dt = 0.003;
        assert!(odd.apply(&base).is_err());
        assert_eq!(SimVariant::a(&base).apply(&base).unwrap(), base);
    }
}
