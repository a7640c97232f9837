mod common;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use strider_core::actuation::{pd_torque, PdGains};
use strider_core::dynamics::{contact_forces, forward_dynamics, linear_momentum, mechanical_energy, step, ContactParams, SimState, Terrain};
use strider_core::model::{build_robot, default_robot_spec, RobotModel};

#[test]
fn articulated_body_matches_mass_matrix_on_random_samples() {
    let worst = aba_vs_crba_worst(1000, 7);
    assert!(worst < 1e-8, "relative error {worst}");
    println!("worst relative disagreement {worst:e}");
}

#[test]
fn single_pendulum_matches_analytic_acceleration() {
    let (l, m) = (0.7, 1.3);
    let mb = pendulum(l, m);
    for theta in [-2.5, -1.0, -0.2, 0.0, 0.4, 1.2, 3.0] {
        let mut s = SimState::new(&mb);
        s.q[0] = theta;
        let a = forward_dynamics(&mb, &s, &[0.0], &[]).unwrap();
        let expected = -(G / l) * f64::sin(theta);
        assert!((a.qdd[0] - expected).abs() < 1e-12, "θ={theta}: {} vs {expected}", a.qdd[0]);
    }
}

#[test]
fn double_pendulum_tracks_rk4_lagrangian_oracle() {
    let worst = double_pendulum_worst_error();
    assert!(worst < 1e-3, "max angle error {worst}");
    println!("double pendulum worst error {worst:e} rad");
}

#[test]
fn free_fall_matches_ballistic_drop() {
    let robot: RobotModel<f64> = build_robot(&default_robot_spec()).unwrap();
    let mb = &robot.multibody;
    let mut s = SimState::new(mb);
    s.base_position.z = 10.0;
    let terrain = Terrain::flat(1.0);
    let params = ContactParams::default();
    let tau = vec![0.0; 10];
    for _ in 0..5000 {
        s = step(mb, &s, &tau, &terrain, &params, 1e-4).unwrap();
    }
    let dz = s.base_position.z - 10.0;
    assert!((dz + 0.5 * G * 0.25).abs() < 1e-3, "dz = {dz}");
    assert!((dz + 1.22625).abs() < 1e-3);
}

#[test]
fn passive_chain_conserves_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mb = random_tree(&mut rng, false);
    while mb.num_joints() < 4 {
        mb = random_tree(&mut rng, false);
    }
    let mut s = random_state(&mut rng, &mb);
    for v in s.qd.iter_mut() {
        *v *= 0.3;
    }
    let terrain = Terrain::flat(1.0);
    let params = ContactParams::default();
    let tau = vec![0.0; mb.num_joints()];
    let e0 = mechanical_energy(&mb, &s);
    let ke0 = e0 - {
        let mut rest = s.clone();
        rest.qd.iter_mut().for_each(|v| *v = 0.0);
        mechanical_energy(&mb, &rest)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20_000 {
        s = step(&mb, &s, &tau, &terrain, &params, 1e-4).unwrap();
        worst = worst.max((mechanical_energy(&mb, &s) - e0).abs());
    }
    // relative to the energy that actually moves around the system
    let scale = ke0.abs().max(e0.abs());
    assert!(worst / scale < 0.01, "drift {worst} of {scale}");
}

#[test]
fn momentum_conserved_without_gravity() {
    let robot: RobotModel<f64> = build_robot(&default_robot_spec()).unwrap();
    let mb = robot.multibody.clone().with_gravity(Vector3::zeros());
    let mut s = robot.standing_state();
    s.base_position.z = 5.0;
    s.base_lin_vel = Vector3::new(0.3, -0.1, 0.2);
    s.base_ang_vel = Vector3::new(0.2, 0.1, -0.3);
    for (k, v) in s.qd.iter_mut().enumerate() {
        *v = 0.2 * ((k as f64) - 4.5) / 4.5;
    }
    let terrain = Terrain::flat(1.0);
    let params = ContactParams::default();
    let tau = vec![0.0; 10];
    let p0 = linear_momentum(&mb, &s);
    let mut worst: f64 = 0.0;
    // momentum depends on configuration, so the symplectic-Euler drift is
    // first order in dt; 2e-5 keeps it well below 1e-6 over the second
    for _ in 0..50_000 {
        s = step(&mb, &s, &tau, &terrain, &params, 2e-5).unwrap();
        worst = worst.max((linear_momentum(&mb, &s) - p0).norm());
    }
    assert!(worst < 1e-6, "momentum drift {worst}");
}

#[test]
fn step_is_bit_deterministic() {
    let robot: RobotModel<f64> = build_robot(&default_robot_spec()).unwrap();
    let terrain = Terrain::flat(1.0);
    let params = ContactParams::default();
    let run = || {
        let mut s = robot.standing_state();
        s.base_position.z += 0.05;
        s.base_ang_vel.x = 0.3;
        let gains = PdGains::uniform(10, 200.0, 3.0);
        for i in 0..400 {
            let target: Vec<f64> = robot
                .default_pose
                .iter()
                .enumerate()
                .map(|(k, q)| q + 0.1 * ((i as f64) * 0.05 + k as f64).sin())
                .collect();
            let tau = pd_torque(&gains, &target, &s.q, &s.qd, &robot.torque_limits);
            s = step(&robot.multibody, &s, &tau, &terrain, &params, 0.005).unwrap();
        }
        let mut bits = Vec::new();
        s.visit_bits(|b| bits.push(b));
        bits
    };
    assert_eq!(run(), run());
}

#[test]
fn contact_forces_respect_cone_and_sign() {
    let robot: RobotModel<f64> = build_robot(&default_robot_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let terrain = Terrain::rough(&mut rng, 0.03, 4.0, 0.1, 0.8);
    let params = ContactParams::default();
    for _ in 0..500 {
        let mut s = robot.standing_state();
        s.base_position.z += rng.gen_range(-0.05..0.02);
        s.base_lin_vel = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        s.base_ang_vel = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        for p in contact_forces(&robot.multibody, &s, &terrain, &params) {
            assert!(p.normal >= 0.0);
            assert!(p.tangential.norm() <= 0.8 * p.normal + 1e-9);
        }
    }
}

#[test]
fn standing_robot_contact_forces_balance_weight() {
    let (total, weight, both) = standing_contact_balance();
    assert!((total - weight).abs() / weight < 0.02, "contact {total} vs weight {weight}");
    assert!(both);
}
