//! Independent oracles shared by the dynamics tests and the acceptance
//! suite.
#![allow(dead_code)]

pub mod can;
pub mod learn;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strider_core::actuation::{pd_torque, PdGains};
use strider_core::dynamics::{
    contact_forces, forward_dynamics, forward_dynamics_crba, step, BaseKind, Body, ContactParams, Multibody, SimState,
    Terrain,
};
use strider_core::model::{build_robot, default_robot_spec, RobotModel};
use strider_core::spatial::Force;

pub const G: f64 = 9.81;

pub fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.2 {
            return v.normalize();
        }
    }
}

pub fn random_inertia(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
    a * a.transpose() + Matrix3::identity() * rng.gen_range(0.001..0.05)
}

pub fn random_tree(rng: &mut ChaCha8Rng, floating: bool) -> Multibody<f64> {
    let n = rng.gen_range(1..=12);
    let mut bodies = vec![Body::new(
        "b0",
        None,
        Vector3::zeros(),
        Vector3::zeros(),
        rng.gen_range(0.5..10.0),
        Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)),
        random_inertia(rng),
    )];
    for i in 1..=n {
        let parent = rng.gen_range(0..i);
        let mut b = Body::new(
            format!("b{i}"),
            Some(parent),
            Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
            unit(rng),
            rng.gen_range(0.1..3.0),
            Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)),
            random_inertia(rng),
        );
        b.armature = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.05) } else { 0.0 };
        bodies.push(b);
    }
    let base = if floating { BaseKind::Floating } else { BaseKind::Fixed };
    Multibody::new(base, bodies)
}

pub fn random_state(rng: &mut ChaCha8Rng, mb: &Multibody<f64>) -> SimState<f64> {
    let mut s = SimState::new(mb);
    s.base_position = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
    s.base_orientation = UnitQuaternion::from_euler_angles(
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-3.0..3.0),
    );
    s.base_lin_vel = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    s.base_ang_vel = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    for k in 0..mb.num_joints() {
        s.q[k] = rng.gen_range(-3.0..3.0);
        s.qd[k] = rng.gen_range(-5.0..5.0);
    }
    s
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn pendulum(length: f64, mass: f64) -> Multibody<f64> {
    let base = Body::new("anchor", None, Vector3::zeros(), Vector3::zeros(), 1.0, Vector3::zeros(), Matrix3::identity());
    let bob = Body::new(
        "bob",
        Some(0),
        Vector3::zeros(),
        Vector3::y(),
        mass,
        Vector3::new(0.0, 0.0, -length),
        Matrix3::zeros(),
    );
    Multibody::new(BaseKind::Fixed, vec![base, bob])
}

pub fn double_pendulum(l1: f64, l2: f64, m1: f64, m2: f64) -> Multibody<f64> {
    let base = Body::new("anchor", None, Vector3::zeros(), Vector3::zeros(), 1.0, Vector3::zeros(), Matrix3::identity());
    let a = Body::new("upper", Some(0), Vector3::zeros(), Vector3::y(), m1, Vector3::new(0.0, 0.0, -l1), Matrix3::zeros());
    let b = Body::new(
        "lower",
        Some(1),
        Vector3::new(0.0, 0.0, -l1),
        Vector3::y(),
        m2,
        Vector3::new(0.0, 0.0, -l2),
        Matrix3::zeros(),
    );
    Multibody::new(BaseKind::Fixed, vec![base, a, b])
}

/// Lagrangian equations of the planar point-mass double pendulum in
/// absolute angles (φ1, φ2) measured from the downward vertical.
pub fn lagrangian_rhs(y: [f64; 4], l1: f64, l2: f64, m1: f64, m2: f64) -> [f64; 4] {
    let [p1, p2, w1, w2] = y;
    let d = p1 - p2;
    let den = 2.0 * m1 + m2 - m2 * (2.0 * d).cos();
    let a1 = (-G * (2.0 * m1 + m2) * p1.sin()
        - m2 * G * (p1 - 2.0 * p2).sin()
        - 2.0 * d.sin() * m2 * (w2 * w2 * l2 + w1 * w1 * l1 * d.cos()))
        / (l1 * den);
    let a2 = (2.0 * d.sin() * (w1 * w1 * l1 * (m1 + m2) + G * (m1 + m2) * p1.cos() + w2 * w2 * l2 * m2 * d.cos()))
        / (l2 * den);
    [w1, w2, a1, a2]
}

pub fn rk4(y: [f64; 4], h: f64, f: impl Fn([f64; 4]) -> [f64; 4]) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    let k1 = f(y);
    let k2 = f(add(y, k1, h / 2.0));
    let k3 = f(add(y, k2, h / 2.0));
    let k4 = f(add(y, k3, h));
    let mut out = y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Worst relative disagreement between articulated-body and mass-matrix
/// accelerations over `samples` states (default robot and random trees).
pub fn aba_vs_crba_worst(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robot: RobotModel<f64> = build_robot(&default_robot_spec()).unwrap();
    let mut worst: f64 = 0.0;
    for sample in 0..samples {
        let mb = match sample % 3 {
            0 => robot.multibody.clone(),
            1 => random_tree(&mut rng, true),
            _ => random_tree(&mut rng, false),
        };
        let state = random_state(&mut rng, &mb);
        let tau: Vec<f64> = (0..mb.num_joints()).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let ext: Vec<Force<f64>> = (0..mb.bodies.len())
            .map(|_| Force::from_fn(|_, _| rng.gen_range(-10.0..10.0)))
            .collect();
        let a = forward_dynamics(&mb, &state, &tau, &ext).unwrap();
        let b = forward_dynamics_crba(&mb, &state, &tau, &ext).unwrap();
        let mut va: Vec<f64> = a.base.iter().copied().collect();
        va.extend(&a.qdd);
        let mut vb: Vec<f64> = b.base.iter().copied().collect();
        vb.extend(&b.qdd);
        worst = worst.max(rel_err(&va, &vb));
    }
    worst
}

/// Largest absolute-angle error (rad) over 1 s between the simulator at
/// dt = 1e-4 and an RK4 integration of the Lagrangian at dt = 1e-5.
pub fn double_pendulum_worst_error() -> f64 {
    let (l1, l2, m1, m2) = (0.5, 0.4, 1.0, 0.8);
    let mb = double_pendulum(l1, l2, m1, m2);
    let mut s = SimState::new(&mb);
    s.q = vec![0.6, -0.4];
    let mut y = [0.6, 0.2, 0.0, 0.0];
    let terrain = Terrain::flat(1.0);
    let params = ContactParams::default();
    let dt = 1e-4;
    let sub = 10;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        s = step(&mb, &s, &[0.0, 0.0], &terrain, &params, dt).unwrap();
        for _ in 0..sub {
            y = rk4(y, dt / sub as f64, |y| lagrangian_rhs(y, l1, l2, m1, m2));
        }
        let e1 = (s.q[0] - y[0]).abs();
        let e2 = (s.q[0] + s.q[1] - y[1]).abs();
        worst = worst.max(e1).max(e2);
    }
    worst
}

/// (total normal contact force, weight, both feet down) after 3 s of PD
/// standing at the default pose.
pub fn standing_contact_balance() -> (f64, f64, bool) {
    let robot: RobotModel<f64> = build_robot(&default_robot_spec()).unwrap();
    let terrain = Terrain::flat(1.0);
    let params = ContactParams::default();
    let gains = PdGains::uniform(10, 200.0, 3.0);
    let mut s = robot.standing_state();
    s.base_position.z += 0.01;
    for _ in 0..600 {
        let tau = pd_torque(&gains, &robot.default_pose, &s.q, &s.qd, &robot.torque_limits);
        s = step(&robot.multibody, &s, &tau, &terrain, &params, 0.005).unwrap();
    }
    let total: f64 = contact_forces(&robot.multibody, &s, &terrain, &params)
        .iter()
        .map(|p| p.normal)
        .sum();
    (total, robot.multibody.total_mass() * G, s.feet_contact.iter().all(|c| *c))
}
