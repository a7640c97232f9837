use std::sync::Arc;

use sha2::{Digest, Sha256};
use strider_core::dynamics::Terrain;
use strider_core::env::{
    instance_rng, randomize, sample_command, CommandRanges, Env, EnvConfig, RandomizationRanges, TerminationReason,
    OBS_DIM,
};
use strider_core::model::{build_robot, default_robot_spec, RobotModel};

fn robot() -> Arc<RobotModel<f64>> {
    Arc::new(build_robot(&default_robot_spec()).unwrap())
}

fn env(cfg: EnvConfig, seed: u64, index: u64) -> Env<f64> {
    Env::new(cfg, robot(), Arc::new(Terrain::flat(1.0)), seed, index)
}

#[test]
fn zero_action_holds_default_pose_for_a_second() {
    for seed in 0..3 {
        let mut e = env(EnvConfig::default(), seed, 0);
        let steps = (1.0 / e.config.sim.policy_dt()).ceil() as usize;
        for k in 0..steps {
            let r = e.step(&[0.0; 10]);
            assert!(!r.done, "seed {seed}: terminated at tick {k} ({:?})", r.reason);
        }
        let s = e.state();
        let worst = s
            .q
            .iter()
            .zip(&e.robot().default_pose)
            .map(|(q, d)| (q - d).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.1, "joint drift {worst}");
        assert!(s.base_orientation.to_rotation_matrix()[(2, 2)] > 0.98);
    }
}

#[test]
fn reset_with_same_seed_is_identical() {
    let mut a = env(EnvConfig::default(), 5, 2);
    let mut b = env(EnvConfig::default(), 77, 2);
    let oa = a.reset_with_seed(11);
    a.step(&[0.3; 10]);
    let ob = b.reset_with_seed(11);
    assert_eq!(oa, ob);
    assert_eq!(a.reset_with_seed(11), ob);
}

#[test]
fn distinct_instances_draw_distinct_streams() {
    let a = env(EnvConfig::default(), 5, 0);
    let b = env(EnvConfig::default(), 5, 1);
    assert_ne!(a.observation(), b.observation());
}

fn episode_hash(seed: u64) -> String {
    let mut e = env(EnvConfig::default(), seed, 0);
    let mut h = Sha256::new();
    for k in 0..300 {
        let a: Vec<f64> = (0..10).map(|j| (0.13 * (k * 10 + j) as f64).sin() * 0.6).collect();
        let r = e.step(&a);
        for v in r.obs.iter().chain(std::iter::once(&r.reward)) {
            h.update(v.to_bits().to_le_bytes());
        }
        assert_eq!(r.obs.len(), OBS_DIM);
        assert!(r.obs.iter().all(|v| v.is_finite()));
        if r.done {
            h.update([r.reason as u8]);
            e.reset();
        }
    }
    format!("{:x}", h.finalize())
}

#[test]
fn episode_replays_bit_identically() {
    assert_eq!(episode_hash(3), episode_hash(3));
    assert_ne!(episode_hash(3), episode_hash(4));
}

#[test]
fn randomized_quantities_stay_in_range() {
    let r = robot();
    let ranges = RandomizationRanges::default();
    let mut rng = instance_rng(42, 0);
    for _ in 0..10_000 {
        let d = randomize(&r, &mut rng, &ranges);
        assert!(d.friction >= ranges.friction[0] && d.friction <= ranges.friction[1]);
        assert!(d.latency_steps >= ranges.latency_steps[0] && d.latency_steps <= ranges.latency_steps[1]);
        let mut total = 0.0;
        for (b, b0) in d.robot.multibody.bodies.iter().zip(&r.multibody.bodies) {
            let ratio = b.mass / b0.mass;
            assert!(ratio >= ranges.mass_scale[0] - 1e-12 && ratio <= ranges.mass_scale[1] + 1e-12);
            assert!((b.com - b0.com).amax() <= ranges.com_offset + 1e-12);
            assert!(b.inertia_com.symmetric_eigenvalues().min() > 0.0);
            assert!((b.inertia_com - b.inertia_com.transpose()).amax() < 1e-15);
            total += b.mass;
        }
        assert!((total - d.robot.total_mass).abs() < 1e-9);
    }
    // the nominal model is untouched
    assert_eq!(r.total_mass, 19.8);
}

#[test]
fn sampled_commands_stay_in_range() {
    let c = CommandRanges::default();
    let mut rng = instance_rng(7, 0);
    let mut zeros = 0;
    for _ in 0..10_000 {
        let s = sample_command(&mut rng, &c);
        assert!(s.vx >= c.vx[0] && s.vx <= c.vx[1]);
        assert!(s.vy >= c.vy[0] && s.vy <= c.vy[1]);
        assert!(s.wz >= c.wz[0] && s.wz <= c.wz[1]);
        if s.vx == 0.0 && s.vy == 0.0 && s.wz == 0.0 {
            zeros += 1;
        }
    }
    // p_zero = 0.1; 5 sigma band
    assert!((700..=1300).contains(&zeros), "{zeros}");
}

#[test]
fn falling_robot_terminates() {
    let mut e = env(EnvConfig::default(), 1, 0);
    let mut reason = TerminationReason::None;
    for _ in 0..500 {
        let r = e.step(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        if r.done {
            reason = r.reason;
            break;
        }
    }
    assert!(matches!(
        reason,
        TerminationReason::BaseHeight | TerminationReason::Orientation | TerminationReason::NonFinite
    ));
}
