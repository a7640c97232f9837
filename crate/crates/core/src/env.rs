//! Locomotion training environment: observation layout, reward, termination,
//! velocity-command sampling and per-episode domain randomization.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuation::{pd_torque_into, LatencyBuffer, PdGains};
use crate::dynamics::{project_gravity, step, ContactParams, SimState, Terrain, TerrainError};
use crate::model::RobotModel;
use crate::scalar::Real;

pub const OBS_DIM: usize = 29;
pub const ACT_DIM: usize = 10;

/// Base velocity command: forward and lateral speed (m/s) in the base
/// heading frame, yaw rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl Command {
    pub const ZERO: Command = Command { vx: 0.0, vy: 0.0, wz: 0.0 };

    pub fn new(vx: f64, vy: f64, wz: f64) -> Self {
        Self { vx, vy, wz }
    }
}

/// Policy input. Flattened order: angular velocity (3), projected gravity
/// (3), command (3), joint positions relative to the default pose (10),
/// joint velocities (10).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T: Real> {
    pub base_ang_vel: Vector3<T>,
    pub projected_gravity: Vector3<T>,
    pub command: Command,
    pub q: Vec<T>,
    pub qd: Vec<T>,
}

impl<T: Real> Observation<T> {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(OBS_DIM);
        self.write(&mut out);
        out
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        out.extend(self.base_ang_vel.iter().map(|v| v.to_f64_lossy()));
        out.extend(self.projected_gravity.iter().map(|v| v.to_f64_lossy()));
        out.extend([self.command.vx, self.command.vy, self.command.wz]);
        out.extend(self.q.iter().map(|v| v.to_f64_lossy()));
        out.extend(self.qd.iter().map(|v| v.to_f64_lossy()));
    }
}

pub fn build_observation<T: Real>(state: &SimState<T>, command: Command, default_pose: &[T]) -> Observation<T> {
    Observation {
        base_ang_vel: state.base_ang_vel,
        projected_gravity: project_gravity(&state.base_orientation),
        command,
        q: state.q.iter().zip(default_pose).map(|(q, d)| *q - *d).collect(),
        qd: state.qd.clone(),
    }
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub decimation: usize,
    /// Joint target offset per unit action, rad.
    pub action_scale: f64,
    /// Overrides the per-motor gains of the robot description when set.
    pub kp: Option<f64>,
    pub kd: Option<f64>,
    pub contact: ContactParams<f64>,
    /// Uniform noise on the initial joint positions, rad.
    pub reset_joint_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            decimation: 4,
            action_scale: 0.5,
            kp: None,
            kd: None,
            contact: ContactParams::default(),
            reset_joint_noise: 0.05,
        }
    }
}

impl SimConfig {
    pub fn policy_dt(&self) -> f64 {
        self.dt * self.decimation as f64
    }
}

pub const TERM_NAMES: [&str; 11] = [
    "lin_vel_tracking",
    "ang_vel_tracking",
    "lin_vel_z",
    "ang_vel_xy",
    "orientation",
    "base_height",
    "torques",
    "joint_acc",
    "action_rate",
    "feet_air_time",
    "termination",
];
pub const NUM_TERMS: usize = TERM_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub lin_vel_tracking: f64,
    pub ang_vel_tracking: f64,
    pub lin_vel_z: f64,
    pub ang_vel_xy: f64,
    pub orientation: f64,
    pub base_height: f64,
    pub torques: f64,
    pub joint_acc: f64,
    pub action_rate: f64,
    pub feet_air_time: f64,
    pub termination: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lin_vel_tracking: 1.0,
            ang_vel_tracking: 0.5,
            lin_vel_z: -2.0,
            ang_vel_xy: -0.05,
            orientation: -1.0,
            base_height: -10.0,
            torques: -1.0e-5,
            joint_acc: -2.5e-7,
            action_rate: -0.01,
            feet_air_time: 1.0,
            termination: -10.0,
        }
    }
}

impl RewardWeights {
    pub fn as_array(&self) -> [f64; NUM_TERMS] {
        [
            self.lin_vel_tracking,
            self.ang_vel_tracking,
            self.lin_vel_z,
            self.ang_vel_xy,
            self.orientation,
            self.base_height,
            self.torques,
            self.joint_acc,
            self.action_rate,
            self.feet_air_time,
            self.termination,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub tracking_sigma: f64,
    /// Target base height above the terrain; the model's nominal height
    /// when unset.
    pub base_height_target: Option<f64>,
    /// Swing duration that earns zero air-time reward.
    pub feet_air_time_target: f64,
    /// Commands slower than this earn no air-time reward.
    pub air_time_min_command: f64,
    /// Clip the non-termination sum at zero.
    pub only_positive: bool,
    pub weights: RewardWeights,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tracking_sigma: 0.25,
            base_height_target: None,
            feet_air_time_target: 0.4,
            air_time_min_command: 0.1,
            only_positive: true,
            weights: RewardWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandRanges {
    pub vx: [f64; 2],
    pub vy: [f64; 2],
    pub wz: [f64; 2],
    /// Probability of an exactly-zero (standing) command.
    pub p_zero: f64,
    /// Seconds between command resamples within an episode.
    pub resample_time: f64,
}

impl Default for CommandRanges {
    fn default() -> Self {
        Self {
            vx: [-0.6, 1.0],
            vy: [-0.5, 0.5],
            wz: [-1.0, 1.0],
            p_zero: 0.1,
            resample_time: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationRanges {
    pub mass_scale: [f64; 2],
    pub inertia_scale: [f64; 2],
    /// Per-axis CoM shift bound, m.
    pub com_offset: f64,
    pub friction: [f64; 2],
    /// Command latency in policy ticks, inclusive.
    pub latency_steps: [usize; 2],
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            mass_scale: [0.9, 1.1],
            inertia_scale: [0.9, 1.1],
            com_offset: 0.01,
            friction: [0.5, 1.25],
            latency_steps: [0, 2],
        }
    }
}

impl RandomizationRanges {
    /// No randomization at all.
    pub fn identity(friction: f64) -> Self {
        Self {
            mass_scale: [1.0, 1.0],
            inertia_scale: [1.0, 1.0],
            com_offset: 0.0,
            friction: [friction, friction],
            latency_steps: [0, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    /// Minimum base height above the terrain under the base, m.
    pub min_base_height: f64,
    /// Fallen once `|projected_gravity.z|` drops below this.
    pub min_gravity_z: f64,
    pub episode_length: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            min_base_height: 0.4,
            min_gravity_z: 0.7,
            episode_length: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainChoice {
    Flat,
    Rough,
    Slope,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainConfig {
    pub kind: TerrainChoice,
    /// Nominal friction coefficient.
    pub friction: f64,
    /// Half peak-to-peak roughness, m.
    pub amplitude: f64,
    pub slope_deg: f64,
    /// Patch edge length and grid spacing for generated heightfields, m.
    pub size: f64,
    pub cell_size: f64,
    /// Header file of a stored heightfield (kind = "file").
    pub path: Option<PathBuf>,
    /// Share of training instances that get a rough patch instead of
    /// `kind`.
    pub rough_fraction: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            kind: TerrainChoice::Flat,
            friction: 1.0,
            amplitude: 0.03,
            slope_deg: 5.0,
            size: 40.0,
            cell_size: 0.1,
            path: None,
            rough_fraction: 0.0,
        }
    }
}

impl TerrainConfig {
    pub fn build<T: Real>(&self, kind: TerrainChoice, seed: u64) -> Result<Terrain<T>, TerrainError> {
        let mu = T::lit(self.friction);
        let (size, cell) = (T::lit(self.size), T::lit(self.cell_size));
        Ok(match kind {
            TerrainChoice::Flat => Terrain::flat(mu),
            TerrainChoice::Rough => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Terrain::rough(&mut rng, T::lit(self.amplitude), size, cell, mu)
            }
            TerrainChoice::Slope => Terrain::slope(T::lit(self.slope_deg.to_radians()), size, cell, mu),
            TerrainChoice::File => {
                let path = self
                    .path
                    .as_deref()
                    .ok_or_else(|| TerrainError::Invalid("terrain.kind = \"file\" needs terrain.path".into()))?;
                let t = Terrain::<f64>::load(path)?;
                Terrain {
                    kind: t.kind,
                    heights: t.heights.iter().map(|h| T::lit(*h)).collect(),
                    nx: t.nx,
                    ny: t.ny,
                    cell_size: T::lit(t.cell_size),
                    origin: (T::lit(t.origin.0), T::lit(t.origin.1)),
                    friction: T::lit(t.friction),
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub commands: CommandRanges,
    pub randomization: RandomizationRanges,
    pub termination: TerminationConfig,
    pub terrain: TerrainConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), ConfigError> {
    if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
        return Err(ConfigError::Invalid(format!("{name}: need finite lo <= hi, got {r:?}")));
    }
    Ok(())
}

impl EnvConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= 0.01) || s.decimation == 0 {
            return Err(ConfigError::Invalid("sim.dt must be in (0, 0.01] and decimation >= 1".into()));
        }
        if !(s.action_scale >= 0.0) {
            return Err(ConfigError::Invalid("sim.action_scale must be >= 0".into()));
        }
        s.contact.validate().map_err(ConfigError::Invalid)?;
        if !(self.reward.tracking_sigma > 0.0) {
            return Err(ConfigError::Invalid("reward.tracking_sigma must be > 0".into()));
        }
        let c = &self.commands;
        check_range("commands.vx", c.vx)?;
        check_range("commands.vy", c.vy)?;
        check_range("commands.wz", c.wz)?;
        if !(0.0..=1.0).contains(&c.p_zero) || !(c.resample_time > 0.0) {
            return Err(ConfigError::Invalid("commands.p_zero in [0, 1], resample_time > 0".into()));
        }
        let r = &self.randomization;
        check_range("randomization.mass_scale", r.mass_scale)?;
        check_range("randomization.inertia_scale", r.inertia_scale)?;
        check_range("randomization.friction", r.friction)?;
        if !(r.mass_scale[0] > 0.0 && r.inertia_scale[0] > 0.0 && r.friction[0] > 0.0) {
            return Err(ConfigError::Invalid("mass, inertia and friction ranges must be positive".into()));
        }
        if !(r.com_offset >= 0.0) || r.latency_steps[0] > r.latency_steps[1] {
            return Err(ConfigError::Invalid("randomization.com_offset / latency_steps".into()));
        }
        if !(self.termination.episode_length > 0.0) {
            return Err(ConfigError::Invalid("termination.episode_length must be > 0".into()));
        }
        if !(self.terrain.friction > 0.0) || !(0.0..=1.0).contains(&self.terrain.rough_fraction) {
            return Err(ConfigError::Invalid("terrain.friction > 0, rough_fraction in [0, 1]".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- commands

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] < r[1] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

pub fn sample_command<R: Rng>(rng: &mut R, ranges: &CommandRanges) -> Command {
    // draw everything unconditionally so the stream does not depend on the
    // zero branch
    let zero = rng.gen::<f64>() < ranges.p_zero;
    let cmd = Command::new(uniform(rng, ranges.vx), uniform(rng, ranges.vy), uniform(rng, ranges.wz));
    if zero {
        Command::ZERO
    } else {
        cmd
    }
}

// ---------------------------------------------------------------- randomization

/// One episode's draw of physical parameters.
#[derive(Debug, Clone)]
pub struct Randomized<T: Real> {
    pub robot: RobotModel<T>,
    pub friction: T,
    pub latency_steps: usize,
}

/// Returns a perturbed copy of `model`: per-link mass and inertia scales,
/// CoM offsets, a friction coefficient and a latency.
pub fn randomize<T: Real, R: Rng>(model: &RobotModel<T>, rng: &mut R, ranges: &RandomizationRanges) -> Randomized<T> {
    let mut robot = model.clone();
    let mut total = T::zero();
    for body in &mut robot.multibody.bodies {
        let ms = T::lit(uniform(rng, ranges.mass_scale));
        let is = T::lit(uniform(rng, ranges.inertia_scale));
        let c = ranges.com_offset;
        let dc = Vector3::new(
            T::lit(uniform(rng, [-c, c])),
            T::lit(uniform(rng, [-c, c])),
            T::lit(uniform(rng, [-c, c])),
        );
        body.mass *= ms;
        body.inertia_com *= is;
        body.com += dc;
        body.refresh_inertia();
        total += body.mass;
    }
    robot.total_mass = total;
    let friction = T::lit(uniform(rng, ranges.friction));
    let [lo, hi] = ranges.latency_steps;
    let latency_steps = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    Randomized {
        robot,
        friction,
        latency_steps,
    }
}

// ---------------------------------------------------------------- termination

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationReason {
    None,
    BaseHeight,
    Orientation,
    Timeout,
    NonFinite,
}

/// `ground` is the terrain height under the base.
pub fn check_termination<T: Real>(
    state: &SimState<T>,
    limits: &TerminationConfig,
    ground: f64,
) -> (bool, TerminationReason) {
    if !state.is_finite() {
        return (true, TerminationReason::NonFinite);
    }
    if state.base_position.z.to_f64_lossy() - ground < limits.min_base_height {
        return (true, TerminationReason::BaseHeight);
    }
    let gz = project_gravity(&state.base_orientation).z.to_f64_lossy();
    if gz.abs() < limits.min_gravity_z || gz > 0.0 {
        return (true, TerminationReason::Orientation);
    }
    // tolerate accumulated step rounding
    if state.time.to_f64_lossy() >= limits.episode_length - 1e-9 {
        return (true, TerminationReason::Timeout);
    }
    (false, TerminationReason::None)
}

// ---------------------------------------------------------------- reward

pub struct RewardInputs<'a, T: Real> {
    pub state: &'a SimState<T>,
    pub prev_state: &'a SimState<T>,
    pub command: Command,
    pub torques: &'a [T],
    pub actions: &'a [f64],
    pub prev_actions: &'a [f64],
    /// Policy period, s.
    pub dt: f64,
    /// Terrain height under the base.
    pub ground: f64,
    pub base_height_target: f64,
    /// Episode ended for a reason other than the time limit.
    pub terminated: bool,
}

/// Returns the scalar reward and every raw term in [`TERM_NAMES`] order.
/// The scalar is `dt·Σ wᵢ·termᵢ`; with `only_positive` the non-termination
/// part is clipped at zero before the termination term is added.
pub fn compute_reward<T: Real>(inp: &RewardInputs<'_, T>, cfg: &RewardConfig) -> (f64, [f64; NUM_TERMS]) {
    let s = inp.state;
    let f = |v: T| v.to_f64_lossy();
    let v_local = s.base_lin_vel_local();
    let w = s.base_ang_vel;
    let g = project_gravity(&s.base_orientation);
    let cmd = inp.command;

    let lin_err = (cmd.vx - f(v_local.x)).powi(2) + (cmd.vy - f(v_local.y)).powi(2);
    let ang_err = (cmd.wz - f(w.z)).powi(2);
    let height = f(s.base_position.z) - inp.ground - inp.base_height_target;
    let torques: f64 = inp.torques.iter().map(|t| f(*t).powi(2)).sum();
    let joint_acc: f64 = s
        .qd
        .iter()
        .zip(&inp.prev_state.qd)
        .map(|(a, b)| ((f(*a) - f(*b)) / inp.dt).powi(2))
        .sum();
    let action_rate: f64 = inp.actions.iter().zip(inp.prev_actions).map(|(a, b)| (a - b).powi(2)).sum();
    let mut air = 0.0;
    if (cmd.vx * cmd.vx + cmd.vy * cmd.vy).sqrt() > cfg.air_time_min_command {
        for (k, touching) in s.feet_contact.iter().enumerate() {
            let swing = f(inp.prev_state.feet_air_time[k]);
            if *touching && swing > 0.0 {
                air += swing + inp.dt - cfg.feet_air_time_target;
            }
        }
    }

    let terms = [
        (-lin_err / cfg.tracking_sigma).exp(),
        (-ang_err / cfg.tracking_sigma).exp(),
        f(lin_local_z(s)).powi(2),
        f(w.x).powi(2) + f(w.y).powi(2),
        f(g.x).powi(2) + f(g.y).powi(2),
        height * height,
        torques,
        joint_acc,
        action_rate,
        air,
        if inp.terminated { 1.0 } else { 0.0 },
    ];
    let weights = cfg.weights.as_array();
    let last = NUM_TERMS - 1;
    let mut total: f64 = (0..last).map(|i| weights[i] * terms[i]).sum::<f64>() * inp.dt;
    if cfg.only_positive {
        total = total.max(0.0);
    }
    total += weights[last] * terms[last] * inp.dt;
    (total, terms)
}

fn lin_local_z<T: Real>(s: &SimState<T>) -> T {
    s.base_lin_vel_local().z
}

// ---------------------------------------------------------------- environment

/// Per-instance random stream derived from `(seed, index)`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub reason: TerminationReason,
    pub terms: [f64; NUM_TERMS],
}

/// One simulated robot. The nominal model and the terrain are shared
/// read-only between instances.
pub struct Env<T: Real> {
    pub config: EnvConfig,
    nominal: Arc<RobotModel<T>>,
    terrain: Arc<Terrain<T>>,
    pub index: u64,
    rng: ChaCha8Rng,
    robot: RobotModel<T>,
    gains: PdGains<T>,
    contact: ContactParams<T>,
    latency: LatencyBuffer<T>,
    state: SimState<T>,
    command: Command,
    prev_actions: Vec<f64>,
    next_resample: f64,
    randomize: bool,
    tau: Vec<T>,
}

impl<T: Real> Env<T> {
    pub fn new(
        config: EnvConfig,
        nominal: Arc<RobotModel<T>>,
        terrain: Arc<Terrain<T>>,
        seed: u64,
        index: u64,
    ) -> Self {
        let n = nominal.num_joints();
        let gains = resolve_gains(&config.sim, &nominal);
        let robot = (*nominal).clone();
        let state = robot.standing_state();
        let latency = LatencyBuffer::new(0, nominal.default_pose.clone());
        let mut env = Self {
            contact: contact_params(&config.sim.contact, None),
            config,
            terrain,
            index,
            rng: instance_rng(seed, index),
            robot,
            gains,
            latency,
            state,
            command: Command::ZERO,
            prev_actions: vec![0.0; n],
            next_resample: 0.0,
            randomize: true,
            tau: vec![T::zero(); n],
            nominal,
        };
        env.reset();
        env
    }

    /// Disables domain randomization (nominal model, nominal friction, no
    /// latency) for evaluation.
    pub fn set_randomization(&mut self, on: bool) {
        self.randomize = on;
    }

    pub fn state(&self) -> &SimState<T> {
        &self.state
    }

    pub fn robot(&self) -> &RobotModel<T> {
        &self.robot
    }

    pub fn terrain(&self) -> &Terrain<T> {
        &self.terrain
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn latency_steps(&self) -> usize {
        self.latency.delay_steps()
    }

    pub fn friction(&self) -> T {
        self.contact.friction.unwrap_or(self.terrain.friction)
    }

    /// Fixes the command; automatic resampling stops until the next reset.
    pub fn set_command(&mut self, command: Command) {
        self.command = command;
        self.next_resample = f64::INFINITY;
    }

    pub fn observation(&self) -> Vec<f64> {
        build_observation(&self.state, self.command, &self.nominal.default_pose).to_vec()
    }

    pub fn ground_under_base(&self) -> f64 {
        let p = self.state.base_position;
        self.terrain.height(p.x, p.y).to_f64_lossy()
    }

    /// Restarts the instance's random stream from `(seed, index)` and resets.
    pub fn reset_with_seed(&mut self, seed: u64) -> Vec<f64> {
        self.rng = instance_rng(seed, self.index);
        self.reset()
    }

    /// New episode, continuing the random stream.
    pub fn reset(&mut self) -> Vec<f64> {
        let ranges = if self.randomize {
            self.config.randomization.clone()
        } else {
            RandomizationRanges::identity(self.terrain.friction.to_f64_lossy())
        };
        let draw = randomize(&self.nominal, &mut self.rng, &ranges);
        self.robot = draw.robot;
        self.contact = contact_params(&self.config.sim.contact, Some(draw.friction));
        self.latency.reset(draw.latency_steps);

        let mut s = self.robot.standing_state();
        let noise = self.config.sim.reset_joint_noise;
        for q in s.q.iter_mut() {
            *q += T::lit(uniform(&mut self.rng, [-noise, noise]));
        }
        let ground = self.terrain.height(T::zero(), T::zero());
        s.base_position.z += ground + T::lit(0.01);
        self.state = s;
        self.command = sample_command(&mut self.rng, &self.config.commands);
        self.next_resample = self.config.commands.resample_time;
        self.prev_actions.iter_mut().for_each(|a| *a = 0.0);
        self.observation()
    }

    /// Joint targets for an action in `[-1, 1]` (clamped), limited to the
    /// joint range.
    pub fn joint_targets(&self, action: &[f64]) -> Vec<T> {
        let scale = self.config.sim.action_scale;
        self.nominal
            .default_pose
            .iter()
            .zip(action)
            .zip(&self.nominal.position_limits)
            .map(|((d, a), (lo, hi))| (*d + T::lit(a.clamp(-1.0, 1.0) * scale)).clamp(*lo, *hi))
            .collect()
    }

    pub fn step(&mut self, action: &[f64]) -> StepResult {
        assert_eq!(action.len(), self.nominal.num_joints(), "action length");
        let action: Vec<f64> = action.iter().map(|a| if a.is_finite() { a.clamp(-1.0, 1.0) } else { 0.0 }).collect();
        let target = self.joint_targets(&action);
        let q_des = self.latency.push_pop(&target);
        let dt = T::lit(self.config.sim.dt);
        let prev = self.state.clone();

        let mut diverged = false;
        for _ in 0..self.config.sim.decimation {
            let s = &self.state;
            pd_torque_into(&self.gains, &q_des, &s.q, &s.qd, &self.robot.torque_limits, &mut self.tau);
            match step(&self.robot.multibody, s, &self.tau, &self.terrain, &self.contact, dt) {
                Ok(next) => self.state = next,
                Err(_) => {
                    diverged = true;
                    break;
                }
            }
        }

        let ground = self.ground_under_base();
        let (done, reason) = if diverged {
            (true, TerminationReason::NonFinite)
        } else {
            check_termination(&self.state, &self.config.termination, ground)
        };
        let policy_dt = self.config.sim.policy_dt();
        let (reward, terms) = if diverged {
            let mut terms = [0.0; NUM_TERMS];
            terms[NUM_TERMS - 1] = 1.0;
            (self.config.reward.weights.termination * policy_dt, terms)
        } else {
            let target_h = self
                .config
                .reward
                .base_height_target
                .unwrap_or_else(|| self.nominal.nominal_base_height.to_f64_lossy());
            compute_reward(
                &RewardInputs {
                    state: &self.state,
                    prev_state: &prev,
                    command: self.command,
                    torques: &self.tau,
                    actions: &action,
                    prev_actions: &self.prev_actions,
                    dt: policy_dt,
                    ground,
                    base_height_target: target_h,
                    terminated: done && reason != TerminationReason::Timeout,
                },
                &self.config.reward,
            )
        };
        self.prev_actions = action;

        if !done && self.state.time.to_f64_lossy() >= self.next_resample - 1e-9 {
            self.command = sample_command(&mut self.rng, &self.config.commands);
            self.next_resample += self.config.commands.resample_time;
        }
        StepResult {
            obs: if diverged { self.observation_or_zero() } else { self.observation() },
            reward,
            done,
            reason,
            terms,
        }
    }

    fn observation_or_zero(&self) -> Vec<f64> {
        let obs = self.observation();
        if obs.iter().all(|v| v.is_finite()) {
            obs
        } else {
            vec![0.0; OBS_DIM]
        }
    }
}

/// Training instances `0..n`; the first `round(n · rough_fraction)` share a
/// rough patch, the rest the configured terrain.
pub fn build_envs<T: Real>(
    config: &EnvConfig,
    robot: Arc<RobotModel<T>>,
    seed: u64,
    n: usize,
) -> Result<Vec<Env<T>>, TerrainError> {
    let main = Arc::new(config.terrain.build::<T>(config.terrain.kind, seed)?);
    let n_rough = (n as f64 * config.terrain.rough_fraction).round() as usize;
    let rough = if n_rough > 0 {
        Some(Arc::new(config.terrain.build::<T>(TerrainChoice::Rough, seed)?))
    } else {
        None
    };
    Ok((0..n)
        .map(|i| {
            let t = if i < n_rough { rough.clone().expect("built") } else { main.clone() };
            Env::new(config.clone(), robot.clone(), t, seed, i as u64)
        })
        .collect())
}

fn resolve_gains<T: Real>(sim: &SimConfig, robot: &RobotModel<T>) -> PdGains<T> {
    let mut g = robot.pd_gains.clone();
    if let Some(kp) = sim.kp {
        g.kp.iter_mut().for_each(|v| *v = T::lit(kp));
    }
    if let Some(kd) = sim.kd {
        g.kd.iter_mut().for_each(|v| *v = T::lit(kd));
    }
    g
}

fn contact_params<T: Real>(c: &ContactParams<f64>, friction: Option<T>) -> ContactParams<T> {
    ContactParams {
        normal_stiffness: T::lit(c.normal_stiffness),
        normal_damping: T::lit(c.normal_damping),
        friction_reg_vel: T::lit(c.friction_reg_vel),
        friction: friction.or(c.friction.map(T::lit)),
    }
}
