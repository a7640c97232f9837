use nalgebra::{Matrix3, Matrix6, Vector3};

use crate::scalar::Real;
use crate::spatial::{axis_rotation, rigid_inertia, Xform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Fixed,
    Floating,
}

/// One rigid body. Body 0 is the base; every other body hangs off its
/// parent through a revolute joint located at `joint_origin` (parent frame)
/// whose frame is aligned with the parent's at zero joint angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Body<T: Real> {
    pub name: String,
    pub parent: Option<usize>,
    pub joint_origin: Vector3<T>,
    pub axis: Vector3<T>,
    pub mass: T,
    pub com: Vector3<T>,
    pub inertia_com: Matrix3<T>,
    /// Reflected rotor inertia added to the joint-space diagonal.
    pub armature: T,
    pub spatial_inertia: Matrix6<T>,
}

impl<T: Real> Body<T> {
    pub fn new(
        name: impl Into<String>,
        parent: Option<usize>,
        joint_origin: Vector3<T>,
        axis: Vector3<T>,
        mass: T,
        com: Vector3<T>,
        inertia_com: Matrix3<T>,
    ) -> Self {
        let spatial_inertia = rigid_inertia(mass, &com, &inertia_com);
        Self {
            name: name.into(),
            parent,
            joint_origin,
            axis,
            mass,
            com,
            inertia_com,
            armature: T::zero(),
            spatial_inertia,
        }
    }

    pub fn refresh_inertia(&mut self) {
        self.spatial_inertia = rigid_inertia(self.mass, &self.com, &self.inertia_com);
    }

    /// Parent-to-child transform at joint angle `q`.
    #[inline]
    pub fn joint_xform(&self, q: T) -> Xform<T> {
        Xform::new(axis_rotation(&self.axis, q).transpose(), self.joint_origin)
    }
}

/// A set of points rigidly attached to one body, reported together as a
/// single foot contact flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactGroup<T: Real> {
    pub body: usize,
    pub points: Vec<Vector3<T>>,
}

/// Kinematic tree in topological order: `bodies[i].parent < i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multibody<T: Real> {
    pub bodies: Vec<Body<T>>,
    pub base: BaseKind,
    pub gravity: Vector3<T>,
    pub contact_groups: Vec<ContactGroup<T>>,
}

impl<T: Real> Multibody<T> {
    pub fn new(base: BaseKind, bodies: Vec<Body<T>>) -> Self {
        Self {
            bodies,
            base,
            gravity: Vector3::new(T::zero(), T::zero(), T::lit(-9.81)),
            contact_groups: Vec::new(),
        }
    }

    /// Number of revolute joints.
    pub fn num_joints(&self) -> usize {
        self.bodies.len() - 1
    }

    /// Size of the generalized velocity vector.
    pub fn num_dofs(&self) -> usize {
        self.num_joints()
            + match self.base {
                BaseKind::Fixed => 0,
                BaseKind::Floating => 6,
            }
    }

    pub fn total_mass(&self) -> T {
        self.bodies.iter().fold(T::zero(), |acc, b| acc + b.mass)
    }

    pub fn with_gravity(mut self, g: Vector3<T>) -> Self {
        self.gravity = g;
        self
    }
}
