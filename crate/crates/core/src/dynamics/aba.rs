//! Articulated-body forward dynamics, O(n) in the number of bodies.

use nalgebra::{Matrix6, Vector6};

use super::kinematics::Kinematics;
use super::multibody::{BaseKind, Multibody};
use super::DynamicsError;
use crate::scalar::Real;
use crate::spatial::{cross_force, spatial, Force, Motion};

/// Returns the base spatial acceleration (body coordinates, zero for a
/// fixed base) and the joint accelerations.
///
/// `ext` holds one wrench per body in that body's coordinates; gravity is
/// added internally.
pub fn articulated_body<T: Real>(
    mb: &Multibody<T>,
    kin: &Kinematics<T>,
    tau: &[T],
    ext: &[Force<T>],
) -> Result<(Motion<T>, Vec<T>), DynamicsError> {
    articulated_body_implicit(mb, kin, tau, ext, &[])
}

/// As [`articulated_body`], with `extra[i]` added to body `i`'s inertia in
/// the recursion only. Passing `dt·∂(−f)/∂v` for velocity-dependent
/// external wrenches `f` turns them into a linearly implicit update.
pub fn articulated_body_implicit<T: Real>(
    mb: &Multibody<T>,
    kin: &Kinematics<T>,
    tau: &[T],
    ext: &[Force<T>],
    extra: &[Matrix6<T>],
) -> Result<(Motion<T>, Vec<T>), DynamicsError> {
    let n = mb.bodies.len();
    let mut ia: Vec<Matrix6<T>> = Vec::with_capacity(n);
    let mut pa: Vec<Force<T>> = Vec::with_capacity(n);

    for i in 0..n {
        let body = &mb.bodies[i];
        let inertia = body.spatial_inertia;
        let v = &kin.vel[i];
        let g_local = kin.rot[i].transpose() * mb.gravity;
        let gravity_force = inertia * spatial(&nalgebra::Vector3::zeros(), &g_local);
        let mut p = cross_force(v, &(inertia * v)) - gravity_force;
        if let Some(f) = ext.get(i) {
            p -= f;
        }
        ia.push(match extra.get(i) {
            Some(e) => inertia + e,
            None => inertia,
        });
        pa.push(p);
    }

    // inward pass
    let mut u_vec: Vec<Vector6<T>> = vec![Vector6::zeros(); n];
    let mut d_inv: Vec<T> = vec![T::zero(); n];
    let mut u_scalar: Vec<T> = vec![T::zero(); n];
    for i in (1..n).rev() {
        let body = &mb.bodies[i];
        let s = spatial(&body.axis, &nalgebra::Vector3::zeros());
        let u = ia[i] * s;
        let d = s.dot(&u) + body.armature;
        if d <= T::zero() {
            return Err(DynamicsError::Singular(body.name.clone()));
        }
        let dinv = T::one() / d;
        let us = tau[i - 1] - s.dot(&pa[i]);
        let ia_proj = ia[i] - u * u.transpose() * dinv;
        let pa_proj = pa[i] + ia_proj * kin.bias[i] + u * (us * dinv);
        u_vec[i] = u;
        d_inv[i] = dinv;
        u_scalar[i] = us;

        let parent = body.parent.expect("parent");
        let x = kin.xforms[i].motion_matrix();
        let xt = x.transpose();
        ia[parent] += xt * ia_proj * x;
        pa[parent] += kin.xforms[i].transpose_apply_force(&pa_proj);
    }

    let a0 = match mb.base {
        BaseKind::Fixed => Motion::zeros(),
        BaseKind::Floating => {
            let chol = ia[0]
                .cholesky()
                .ok_or_else(|| DynamicsError::Singular(mb.bodies[0].name.clone()))?;
            -chol.solve(&pa[0])
        }
    };

    // outward pass
    let mut acc: Vec<Motion<T>> = Vec::with_capacity(n);
    acc.push(a0);
    let mut qdd = vec![T::zero(); n - 1];
    for i in 1..n {
        let body = &mb.bodies[i];
        let parent = body.parent.expect("parent");
        let s = spatial(&body.axis, &nalgebra::Vector3::zeros());
        let a_prime = kin.xforms[i].apply_motion(&acc[parent]) + kin.bias[i];
        let qddi = (u_scalar[i] - u_vec[i].dot(&a_prime)) * d_inv[i];
        qdd[i - 1] = qddi;
        acc.push(a_prime + s * qddi);
    }
    Ok((a0, qdd))
}
