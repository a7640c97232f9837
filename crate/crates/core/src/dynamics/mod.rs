//! Floating-base rigid-body simulation with penalty ground contact.

pub mod aba;
pub mod contact;
pub mod crba;
pub mod kinematics;
pub mod multibody;
pub mod terrain;

use nalgebra::{UnitQuaternion, Vector3, Vector6};

use crate::scalar::Real;
use crate::spatial::{ang, lin, Force, Motion};

pub use contact::{ContactParams, PointForce};
pub use kinematics::Kinematics;
pub use multibody::{BaseKind, Body, ContactGroup, Multibody};
pub use terrain::{Terrain, TerrainError, TerrainKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular inertia at {0}")]
    Singular(String),
    #[error("time step {0} outside (0, 0.01]")]
    TimeStep(f64),
    #[error("expected {expected} joint values, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Simulator state. Linear base velocity is in world coordinates, angular
/// base velocity in base coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T: Real> {
    pub base_position: Vector3<T>,
    pub base_orientation: UnitQuaternion<T>,
    pub base_lin_vel: Vector3<T>,
    pub base_ang_vel: Vector3<T>,
    pub q: Vec<T>,
    pub qd: Vec<T>,
    pub time: T,
    pub feet_contact: Vec<bool>,
    pub feet_air_time: Vec<T>,
}

impl<T: Real> SimState<T> {
    pub fn new(mb: &Multibody<T>) -> Self {
        let n = mb.num_joints();
        let feet = mb.contact_groups.len();
        Self {
            base_position: Vector3::zeros(),
            base_orientation: UnitQuaternion::identity(),
            base_lin_vel: Vector3::zeros(),
            base_ang_vel: Vector3::zeros(),
            q: vec![T::zero(); n],
            qd: vec![T::zero(); n],
            time: T::zero(),
            feet_contact: vec![false; feet],
            feet_air_time: vec![T::zero(); feet],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|v| v.is_finite())
            && self.base_orientation.coords.iter().all(|v| v.is_finite())
            && self.base_lin_vel.iter().all(|v| v.is_finite())
            && self.base_ang_vel.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.qd.iter().all(|v| v.is_finite())
            && self.time.is_finite()
            && self.feet_air_time.iter().all(|v| v.is_finite())
    }

    /// Base linear velocity in base coordinates.
    pub fn base_lin_vel_local(&self) -> Vector3<T> {
        self.base_orientation.inverse_transform_vector(&self.base_lin_vel)
    }

    /// Feeds every numeric field, bit-exact, to `sink` (for replay hashes).
    pub fn visit_bits(&self, mut sink: impl FnMut(u64)) {
        let mut put = |v: T| sink(v.to_f64_lossy().to_bits());
        self.base_position.iter().for_each(|v| put(*v));
        self.base_orientation.coords.iter().for_each(|v| put(*v));
        self.base_lin_vel.iter().for_each(|v| put(*v));
        self.base_ang_vel.iter().for_each(|v| put(*v));
        self.q.iter().for_each(|v| put(*v));
        self.qd.iter().for_each(|v| put(*v));
        put(self.time);
        self.feet_air_time.iter().for_each(|v| put(*v));
        self.feet_contact.iter().for_each(|c| sink(*c as u64));
    }
}

/// Base acceleration `(angular in base frame, linear in world frame)` and
/// joint accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct Accelerations<T: Real> {
    pub base: Vector6<T>,
    pub qdd: Vec<T>,
}

fn check_inputs<T: Real>(
    mb: &Multibody<T>,
    state: &SimState<T>,
    tau: &[T],
    ext: &[Force<T>],
) -> Result<(), DynamicsError> {
    let n = mb.num_joints();
    for len in [state.q.len(), state.qd.len(), tau.len()] {
        if len != n {
            return Err(DynamicsError::Shape { expected: n, got: len });
        }
    }
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::NonFinite("joint torques"));
    }
    if ext.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(DynamicsError::NonFinite("external forces"));
    }
    Ok(())
}

/// Converts a spatial base acceleration (body coordinates) to the
/// `(angular body, classical linear world)` convention.
fn base_accel_out<T: Real>(kin: &Kinematics<T>, mb: &Multibody<T>, a0: &Motion<T>) -> Vector6<T> {
    if mb.base == BaseKind::Fixed {
        return Vector6::zeros();
    }
    let v0 = &kin.vel[0];
    let classical = lin(a0) + ang(v0).cross(&lin(v0));
    let world = kin.rot[0] * classical;
    let w = ang(a0);
    Vector6::new(w.x, w.y, w.z, world.x, world.y, world.z)
}

/// Forward dynamics through the articulated-body recursion. `ext` holds one
/// wrench per body in body coordinates (may be empty).
pub fn forward_dynamics<T: Real>(
    mb: &Multibody<T>,
    state: &SimState<T>,
    tau: &[T],
    ext: &[Force<T>],
) -> Result<Accelerations<T>, DynamicsError> {
    check_inputs(mb, state, tau, ext)?;
    let kin = Kinematics::compute(mb, state);
    let (a0, qdd) = aba::articulated_body(mb, &kin, tau, ext)?;
    Ok(Accelerations {
        base: base_accel_out(&kin, mb, &a0),
        qdd,
    })
}

/// Same contract as [`forward_dynamics`], computed from the explicit mass
/// matrix.
pub fn forward_dynamics_crba<T: Real>(
    mb: &Multibody<T>,
    state: &SimState<T>,
    tau: &[T],
    ext: &[Force<T>],
) -> Result<Accelerations<T>, DynamicsError> {
    check_inputs(mb, state, tau, ext)?;
    let kin = Kinematics::compute(mb, state);
    let (a0, qdd) = crba::composite_rigid_body(mb, &kin, tau, ext)?;
    Ok(Accelerations {
        base: base_accel_out(&kin, mb, &a0),
        qdd,
    })
}

/// Gravity direction `Rᵀ·(0, 0, −1)` seen from the base.
pub fn project_gravity<T: Real>(base_orientation: &UnitQuaternion<T>) -> Vector3<T> {
    base_orientation.inverse_transform_vector(&Vector3::new(T::zero(), T::zero(), -T::one()))
}

pub fn contact_forces<T: Real>(
    mb: &Multibody<T>,
    state: &SimState<T>,
    terrain: &Terrain<T>,
    params: &ContactParams<T>,
) -> Vec<PointForce<T>> {
    let kin = Kinematics::compute(mb, state);
    contact::contact_forces(mb, &kin, terrain, params)
}

/// One semi-implicit Euler step: velocities from accelerations first, then
/// positions from the new velocities. Contact damping and friction enter
/// linearly implicitly so stiff contacts stay stable at millisecond steps.
pub fn step<T: Real>(
    mb: &Multibody<T>,
    state: &SimState<T>,
    tau: &[T],
    terrain: &Terrain<T>,
    params: &ContactParams<T>,
    dt: T,
) -> Result<SimState<T>, DynamicsError> {
    if !(dt > T::zero() && dt <= T::lit(0.01)) {
        return Err(DynamicsError::TimeStep(dt.to_f64_lossy()));
    }
    check_inputs(mb, state, tau, &[])?;
    let kin = Kinematics::compute(mb, state);
    let points = contact::contact_forces(mb, &kin, terrain, params);
    let ext = contact::body_wrenches(mb, &kin, &points);
    let mu = params.friction.unwrap_or(terrain.friction);
    let extra = contact::damping_inertias(mb, &kin, &points, params, mu, dt);
    let (a0, qdd) = aba::articulated_body_implicit(mb, &kin, tau, &ext, &extra)?;
    let base_acc = base_accel_out(&kin, mb, &a0);

    let mut next = state.clone();
    if mb.base == BaseKind::Floating {
        next.base_ang_vel += Vector3::new(base_acc[0], base_acc[1], base_acc[2]) * dt;
        next.base_lin_vel += Vector3::new(base_acc[3], base_acc[4], base_acc[5]) * dt;
        next.base_position += next.base_lin_vel * dt;
        let delta = UnitQuaternion::from_scaled_axis(next.base_ang_vel * dt);
        next.base_orientation =
            UnitQuaternion::new_normalize((state.base_orientation * delta).into_inner());
    }
    for k in 0..qdd.len() {
        next.qd[k] += qdd[k] * dt;
        next.q[k] += next.qd[k] * dt;
    }
    next.time += dt;

    for (g, _) in mb.contact_groups.iter().enumerate() {
        let touching = points.iter().any(|p| p.group == g && p.penetration > T::zero());
        next.feet_contact[g] = touching;
        next.feet_air_time[g] = if touching {
            T::zero()
        } else {
            state.feet_air_time[g] + dt
        };
    }

    if !next.is_finite() {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    Ok(next)
}

/// Kinetic plus gravitational potential energy.
pub fn mechanical_energy<T: Real>(mb: &Multibody<T>, state: &SimState<T>) -> T {
    let kin = Kinematics::compute(mb, state);
    let mut e = T::zero();
    for (i, body) in mb.bodies.iter().enumerate() {
        let v = &kin.vel[i];
        e += v.dot(&(body.spatial_inertia * v)) * T::lit(0.5);
        let c = kin.com_position(mb, i);
        e -= body.mass * mb.gravity.dot(&c);
        if i > 0 {
            e += body.armature * state.qd[i - 1] * state.qd[i - 1] * T::lit(0.5);
        }
    }
    e
}

/// Total linear momentum in world coordinates.
pub fn linear_momentum<T: Real>(mb: &Multibody<T>, state: &SimState<T>) -> Vector3<T> {
    let kin = Kinematics::compute(mb, state);
    mb.bodies
        .iter()
        .enumerate()
        .fold(Vector3::zeros(), |acc, (i, b)| acc + kin.point_velocity(i, &b.com) * b.mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use std::f64::consts::FRAC_PI_2;

    fn free_body() -> Multibody<f64> {
        let base = Body::new(
            "base",
            None,
            Vector3::zeros(),
            Vector3::zeros(),
            2.0,
            Vector3::new(0.01, 0.0, 0.02),
            Matrix3::from_diagonal(&Vector3::new(0.1, 0.2, 0.15)),
        );
        Multibody::new(BaseKind::Floating, vec![base])
    }

    #[test]
    fn free_fall_accelerates_at_g() {
        let mb = free_body();
        let mut state = SimState::new(&mb);
        state.base_orientation = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0);
        let acc = forward_dynamics(&mb, &state, &[], &[]).unwrap();
        assert!((acc.base[5] + 9.81).abs() < 1e-12);
        assert!(acc.base.fixed_rows::<5>(0).norm() < 1e-12);
    }

    #[test]
    fn gravity_off_at_rest_is_equilibrium() {
        let mb = free_body().with_gravity(Vector3::zeros());
        let state = SimState::new(&mb);
        let acc = forward_dynamics(&mb, &state, &[], &[]).unwrap();
        assert_eq!(acc.base, Vector6::zeros());
    }

    #[test]
    fn projected_gravity_examples() {
        let g = project_gravity(&UnitQuaternion::<f64>::identity());
        assert_eq!(g, Vector3::new(0.0, 0.0, -1.0));
        let pitched = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2);
        let g = project_gravity(&pitched);
        // Rᵀ(0,0,-1) with R = Ry(90°): rotation-matrix oracle
        let r = nalgebra::Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        let oracle = r.transpose() * Vector3::new(0.0, 0.0, -1.0);
        assert!((g - oracle).norm() < 1e-12);
        assert!((g - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mb = free_body();
        let mut state = SimState::new(&mb);
        let t = Terrain::flat(1.0);
        let p = ContactParams::default();
        assert!(matches!(step(&mb, &state, &[], &t, &p, 0.02), Err(DynamicsError::TimeStep(_))));
        state.base_lin_vel.x = f64::NAN;
        assert!(matches!(
            forward_dynamics(&mb, &state, &[], &[]),
            Err(DynamicsError::NonFinite(_))
        ));
    }
}
