use nalgebra::{Matrix3, Vector3};

use super::multibody::{BaseKind, Multibody};
use super::SimState;
use crate::scalar::Real;
use crate::spatial::{ang, cross_motion, lin, spatial, Motion, Xform};

/// Per-body frames and velocities for one state. Shared by the contact
/// model and both forward-dynamics routes.
#[derive(Debug, Clone)]
pub struct Kinematics<T: Real> {
    /// Parent-to-body transforms (identity for the base).
    pub xforms: Vec<Xform<T>>,
    /// Body-to-world rotations.
    pub rot: Vec<Matrix3<T>>,
    /// Body frame origins in world coordinates.
    pub pos: Vec<Vector3<T>>,
    /// Spatial velocities in body coordinates.
    pub vel: Vec<Motion<T>>,
    /// Velocity-product accelerations `v ×ₘ vJ`.
    pub bias: Vec<Motion<T>>,
}

impl<T: Real> Kinematics<T> {
    pub fn compute(mb: &Multibody<T>, state: &SimState<T>) -> Self {
        let n = mb.bodies.len();
        let mut xforms = Vec::with_capacity(n);
        let mut rot = Vec::with_capacity(n);
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        let mut bias = Vec::with_capacity(n);

        let r0 = state.base_orientation.to_rotation_matrix().into_inner();
        xforms.push(Xform::identity());
        rot.push(r0);
        pos.push(state.base_position);
        let v0 = match mb.base {
            BaseKind::Fixed => Motion::zeros(),
            BaseKind::Floating => spatial(&state.base_ang_vel, &(r0.transpose() * state.base_lin_vel)),
        };
        vel.push(v0);
        bias.push(Motion::zeros());

        for i in 1..n {
            let body = &mb.bodies[i];
            let p = body.parent.expect("non-base body has a parent");
            let (q, qd) = (state.q[i - 1], state.qd[i - 1]);
            let x = body.joint_xform(q);
            let vj = spatial(&(body.axis * qd), &Vector3::zeros());
            let v = x.apply_motion(&vel[p]) + vj;
            bias.push(cross_motion(&v, &vj));
            rot.push(rot[p] * x.e.transpose());
            pos.push(pos[p] + rot[p] * x.r);
            vel.push(v);
            xforms.push(x);
        }
        Self {
            xforms,
            rot,
            pos,
            vel,
            bias,
        }
    }

    /// World position of a body-fixed point.
    #[inline]
    pub fn point_position(&self, body: usize, local: &Vector3<T>) -> Vector3<T> {
        self.pos[body] + self.rot[body] * local
    }

    /// World velocity of a body-fixed point.
    #[inline]
    pub fn point_velocity(&self, body: usize, local: &Vector3<T>) -> Vector3<T> {
        let v = &self.vel[body];
        self.rot[body] * (lin(v) + ang(v).cross(local))
    }

    /// World position of a body's centre of mass.
    pub fn com_position(&self, mb: &Multibody<T>, body: usize) -> Vector3<T> {
        self.point_position(body, &mb.bodies[body].com)
    }
}
