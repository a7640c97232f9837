//! 6-D spatial vector algebra in body coordinates (angular part first).

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::scalar::Real;

pub type Motion<T> = Vector6<T>;
pub type Force<T> = Vector6<T>;

#[inline]
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v.z,
        v.y,
        v.z,
        T::zero(),
        -v.x,
        -v.y,
        v.x,
        T::zero(),
    )
}

#[inline]
pub fn spatial<T: Real>(ang: &Vector3<T>, lin: &Vector3<T>) -> Vector6<T> {
    Vector6::new(ang.x, ang.y, ang.z, lin.x, lin.y, lin.z)
}

#[inline]
pub fn ang<T: Real>(v: &Vector6<T>) -> Vector3<T> {
    Vector3::new(v[0], v[1], v[2])
}

#[inline]
pub fn lin<T: Real>(v: &Vector6<T>) -> Vector3<T> {
    Vector3::new(v[3], v[4], v[5])
}

/// `v ×ₘ m`
#[inline]
pub fn cross_motion<T: Real>(v: &Motion<T>, m: &Motion<T>) -> Motion<T> {
    let (w, vl) = (ang(v), lin(v));
    let (ma, ml) = (ang(m), lin(m));
    spatial(&w.cross(&ma), &(w.cross(&ml) + vl.cross(&ma)))
}

/// `v ×* f`
#[inline]
pub fn cross_force<T: Real>(v: &Motion<T>, f: &Force<T>) -> Force<T> {
    let (w, vl) = (ang(v), lin(v));
    let (n, fl) = (ang(f), lin(f));
    spatial(&(w.cross(&n) + vl.cross(&fl)), &w.cross(&fl))
}

/// Plücker transform from frame A to frame B: `E` rotates A coordinates into
/// B coordinates and `r` is the origin of B expressed in A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xform<T: Real> {
    pub e: Matrix3<T>,
    pub r: Vector3<T>,
}

impl<T: Real> Xform<T> {
    pub fn identity() -> Self {
        Self {
            e: Matrix3::identity(),
            r: Vector3::zeros(),
        }
    }

    pub fn new(e: Matrix3<T>, r: Vector3<T>) -> Self {
        Self { e, r }
    }

    #[inline]
    pub fn apply_motion(&self, m: &Motion<T>) -> Motion<T> {
        let (w, v) = (ang(m), lin(m));
        spatial(&(self.e * w), &(self.e * (v - self.r.cross(&w))))
    }

    #[inline]
    pub fn apply_force(&self, f: &Force<T>) -> Force<T> {
        let (n, fl) = (ang(f), lin(f));
        spatial(&(self.e * (n - self.r.cross(&fl))), &(self.e * fl))
    }

    /// `Xᵀ f`: maps a force in B coordinates back to A.
    #[inline]
    pub fn transpose_apply_force(&self, f: &Force<T>) -> Force<T> {
        let (n, fl) = (ang(f), lin(f));
        let et_f = self.e.transpose() * fl;
        spatial(&(self.e.transpose() * n + self.r.cross(&et_f)), &et_f)
    }

    /// 6×6 motion transform matrix.
    pub fn motion_matrix(&self) -> Matrix6<T> {
        let mut x = Matrix6::zeros();
        let erx = -(self.e * skew(&self.r));
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.e);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.e);
        x.fixed_view_mut::<3, 3>(3, 0).copy_from(&erx);
        x
    }

    /// `self` followed by `next` (A→B then B→C gives A→C).
    pub fn then(&self, next: &Xform<T>) -> Xform<T> {
        Xform {
            e: next.e * self.e,
            r: self.r + self.e.transpose() * next.r,
        }
    }
}

/// Rigid-body spatial inertia about the body frame origin.
pub fn rigid_inertia<T: Real>(mass: T, com: &Vector3<T>, inertia_com: &Matrix3<T>) -> Matrix6<T> {
    let cx = skew(com);
    let mut i = Matrix6::zeros();
    let upper = inertia_com + cx * cx.transpose() * mass;
    i.fixed_view_mut::<3, 3>(0, 0).copy_from(&upper);
    i.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cx * mass));
    i.fixed_view_mut::<3, 3>(3, 0).copy_from(&(cx.transpose() * mass));
    i.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * mass));
    i
}

/// Rotation matrix for angle `q` about unit `axis`.
pub fn axis_rotation<T: Real>(axis: &Vector3<T>, q: T) -> Matrix3<T> {
    let (s, c) = (q.sin(), q.cos());
    let k = skew(axis);
    Matrix3::identity() + k * s + k * k * (T::one() - c)
}
