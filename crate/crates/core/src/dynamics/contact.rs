//! Spring-damper ground contact with regularized Coulomb friction.

use nalgebra::{Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use super::kinematics::Kinematics;
use super::multibody::Multibody;
use super::terrain::Terrain;
use crate::scalar::Real;
use crate::spatial::{spatial, Force};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ContactParams<T: Real> {
    pub normal_stiffness: T,
    pub normal_damping: T,
    /// Tangential speed below which friction is scaled linearly.
    pub friction_reg_vel: T,
    /// Overrides the terrain friction coefficient when set.
    #[serde(default)]
    pub friction: Option<T>,
}

impl<T: Real> Default for ContactParams<T> {
    fn default() -> Self {
        Self {
            normal_stiffness: T::lit(2.0e4),
            normal_damping: T::lit(500.0),
            friction_reg_vel: T::lit(0.1),
            friction: None,
        }
    }
}

impl<T: Real> ContactParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.normal_stiffness > T::zero()) || !(self.normal_damping > T::zero()) {
            return Err("contact stiffness and damping must be positive".into());
        }
        if !(self.friction_reg_vel > T::zero()) {
            return Err("friction regularization velocity must be positive".into());
        }
        if let Some(mu) = self.friction {
            if !(mu > T::zero()) {
                return Err("friction coefficient must be positive".into());
            }
        }
        Ok(())
    }
}

/// Force at one contact point, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointForce<T: Real> {
    pub group: usize,
    pub body: usize,
    pub local: Vector3<T>,
    pub position: Vector3<T>,
    pub normal: T,
    pub tangential: Vector3<T>,
    pub force: Vector3<T>,
    pub penetration: T,
    /// Terrain normal at the point.
    pub direction: Vector3<T>,
    /// Tangential (slip) velocity.
    pub slip: Vector3<T>,
    /// Whether the normal spring-damper is active (not clipped at zero).
    pub pressing: bool,
}

/// Force for one point given its penetration depth, velocity and the
/// terrain normal.
pub fn point_force<T: Real>(
    params: &ContactParams<T>,
    mu: T,
    penetration: T,
    velocity: &Vector3<T>,
    normal: &Vector3<T>,
) -> (T, Vector3<T>) {
    if penetration <= T::zero() {
        return (T::zero(), Vector3::zeros());
    }
    let vn = velocity.dot(normal);
    let n = (params.normal_stiffness * penetration - params.normal_damping * vn).max(T::zero());
    let vt = velocity - normal * vn;
    let speed = vt.norm();
    let tangential = if speed >= params.friction_reg_vel {
        -vt * (mu * n / speed)
    } else {
        -vt * (mu * n / params.friction_reg_vel)
    };
    (n, tangential)
}

pub fn contact_forces<T: Real>(
    mb: &Multibody<T>,
    kin: &Kinematics<T>,
    terrain: &Terrain<T>,
    params: &ContactParams<T>,
) -> Vec<PointForce<T>> {
    let mu = params.friction.unwrap_or(terrain.friction);
    let mut out = Vec::new();
    for (g, group) in mb.contact_groups.iter().enumerate() {
        for local in &group.points {
            let p = kin.point_position(group.body, local);
            let ground = terrain.height(p.x, p.y);
            let normal = terrain.normal(p.x, p.y);
            let penetration = (ground - p.z) * normal.z;
            let (n, t, slip) = if penetration > T::zero() {
                let v = kin.point_velocity(group.body, local);
                let (n, t) = point_force(params, mu, penetration, &v, &normal);
                (n, t, v - normal * v.dot(&normal))
            } else {
                (T::zero(), Vector3::zeros(), Vector3::zeros())
            };
            out.push(PointForce {
                group: g,
                body: group.body,
                local: *local,
                position: p,
                normal: n,
                tangential: t,
                force: normal * n + t,
                penetration,
                direction: normal,
                slip,
                pressing: n > T::zero(),
            });
        }
    }
    out
}

/// Accumulates point forces into per-body wrenches in body coordinates.
pub fn body_wrenches<T: Real>(
    mb: &Multibody<T>,
    kin: &Kinematics<T>,
    points: &[PointForce<T>],
) -> Vec<Force<T>> {
    let mut out = vec![Force::zeros(); mb.bodies.len()];
    for pf in points {
        if pf.normal == T::zero() && pf.tangential == Vector3::zeros() {
            continue;
        }
        let f_local = kin.rot[pf.body].transpose() * pf.force;
        out[pf.body] += spatial(&pf.local.cross(&f_local), &f_local);
    }
    out
}

/// Per-body `dt·C` where `C` is the (lagged) damping matrix of the contact
/// normal damper and friction, for
/// [`super::aba::articulated_body_implicit`].
pub fn damping_inertias<T: Real>(
    mb: &Multibody<T>,
    kin: &Kinematics<T>,
    points: &[PointForce<T>],
    params: &ContactParams<T>,
    mu: T,
    dt: T,
) -> Vec<Matrix6<T>> {
    let mut out = vec![Matrix6::zeros(); mb.bodies.len()];
    let mut add = |body: usize, local: &Vector3<T>, dir_world: &Vector3<T>, c: T| {
        let u = kin.rot[body].transpose() * dir_world;
        let phi = spatial(&local.cross(&u), &u);
        out[body] += phi * phi.transpose() * (c * dt);
    };
    for p in points.iter().filter(|p| p.pressing) {
        add(p.body, &p.local, &p.direction, params.normal_damping);
        // isotropic in the tangent plane: with the lagged coefficient the
        // total friction becomes -c·v_next, which can brake a sliding foot
        // to rest but never reverse it within a step
        let c = mu * p.normal / p.slip.norm().max(params.friction_reg_vel);
        let helper = if p.direction.x.abs() < T::lit(0.9) { Vector3::x() } else { Vector3::y() };
        let t1 = p.direction.cross(&helper).normalize();
        let t2 = p.direction.cross(&t1);
        add(p.body, &p.local, &t1, c);
        add(p.body, &p.local, &t2, c);
    }
    out
}
