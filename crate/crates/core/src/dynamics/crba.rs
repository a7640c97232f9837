//! Composite-rigid-body mass matrix plus recursive Newton-Euler bias forces.
//! Solving `M a = τ - C` is a second, independent route to the same
//! accelerations the articulated-body recursion produces.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use super::kinematics::Kinematics;
use super::multibody::{BaseKind, Multibody};
use super::DynamicsError;
use crate::scalar::Real;
use crate::spatial::{cross_force, spatial, Force, Motion};

fn base_offset<T: Real>(mb: &Multibody<T>) -> usize {
    match mb.base {
        BaseKind::Fixed => 0,
        BaseKind::Floating => 6,
    }
}

/// Joint-space (plus floating base) mass matrix, including armature.
pub fn mass_matrix<T: Real>(mb: &Multibody<T>, kin: &Kinematics<T>) -> DMatrix<T> {
    let n = mb.bodies.len();
    let off = base_offset(mb);
    let dofs = mb.num_dofs();
    let mut m = DMatrix::zeros(dofs, dofs);
    let mut ic: Vec<Matrix6<T>> = mb.bodies.iter().map(|b| b.spatial_inertia).collect();

    for i in (1..n).rev() {
        let parent = mb.bodies[i].parent.expect("parent");
        let x = kin.xforms[i].motion_matrix();
        let contrib = x.transpose() * ic[i] * x;
        ic[parent] += contrib;
    }

    for i in 1..n {
        let body = &mb.bodies[i];
        let s = spatial(&body.axis, &nalgebra::Vector3::zeros());
        let row = off + i - 1;
        let mut f: Force<T> = ic[i] * s;
        m[(row, row)] = s.dot(&f) + body.armature;
        let mut j = i;
        while let Some(p) = mb.bodies[j].parent {
            f = kin.xforms[j].transpose_apply_force(&f);
            j = p;
            if j == 0 {
                break;
            }
            let sj = spatial(&mb.bodies[j].axis, &nalgebra::Vector3::zeros());
            let col = off + j - 1;
            let v = sj.dot(&f);
            m[(row, col)] = v;
            m[(col, row)] = v;
        }
        if off == 6 {
            for k in 0..6 {
                m[(k, row)] = f[k];
                m[(row, k)] = f[k];
            }
        }
    }
    if off == 6 {
        for r in 0..6 {
            for c in 0..6 {
                m[(r, c)] = ic[0][(r, c)];
            }
        }
    }
    m
}

/// Generalized bias force `C(q, q̇)` including gravity and external wrenches.
pub fn bias_forces<T: Real>(mb: &Multibody<T>, kin: &Kinematics<T>, ext: &[Force<T>]) -> DVector<T> {
    let n = mb.bodies.len();
    let off = base_offset(mb);
    let mut acc: Vec<Motion<T>> = Vec::with_capacity(n);
    let mut f: Vec<Force<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let inertia = mb.bodies[i].spatial_inertia;
        let a = if i == 0 {
            Motion::zeros()
        } else {
            let p = mb.bodies[i].parent.expect("parent");
            kin.xforms[i].apply_motion(&acc[p]) + kin.bias[i]
        };
        let v = &kin.vel[i];
        let g_local = kin.rot[i].transpose() * mb.gravity;
        let mut fi = inertia * a + cross_force(v, &(inertia * v))
            - inertia * spatial(&nalgebra::Vector3::zeros(), &g_local);
        if let Some(e) = ext.get(i) {
            fi -= e;
        }
        acc.push(a);
        f.push(fi);
    }
    let mut c = DVector::zeros(mb.num_dofs());
    for i in (1..n).rev() {
        let s = spatial(&mb.bodies[i].axis, &nalgebra::Vector3::zeros());
        c[off + i - 1] = s.dot(&f[i]);
        let p = mb.bodies[i].parent.expect("parent");
        let back = kin.xforms[i].transpose_apply_force(&f[i]);
        f[p] += back;
    }
    if off == 6 {
        for k in 0..6 {
            c[k] = f[0][k];
        }
    }
    c
}

/// Forward dynamics by explicit mass matrix and Cholesky solve.
pub fn composite_rigid_body<T: Real>(
    mb: &Multibody<T>,
    kin: &Kinematics<T>,
    tau: &[T],
    ext: &[Force<T>],
) -> Result<(Motion<T>, Vec<T>), DynamicsError> {
    let off = base_offset(mb);
    let m = mass_matrix(mb, kin);
    let c = bias_forces(mb, kin, ext);
    let mut rhs = -c;
    for (k, t) in tau.iter().enumerate() {
        rhs[off + k] += *t;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| DynamicsError::Singular("mass matrix".into()))?;
    let a = chol.solve(&rhs);
    let a0 = if off == 6 {
        Vector6::from_iterator(a.iter().take(6).copied())
    } else {
        Motion::zeros()
    };
    Ok((a0, a.iter().skip(off).copied().collect()))
}
