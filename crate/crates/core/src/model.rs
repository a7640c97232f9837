//! Robot description: the five-joint-per-leg biped, its motors, and the
//! part counts of the candidate minimal leg configurations.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuation::PdGains;
use crate::dynamics::{BaseKind, Body, ContactGroup, Kinematics, Multibody, SimState};
use crate::scalar::Real;

pub const NUM_JOINTS: usize = 10;
pub const JOINTS_PER_LEG: usize = 5;

/// The four minimal leg configurations compared when choosing the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigurationId {
    /// Every joint single-supported.
    Config1,
    /// Every joint except hip yaw double-supported.
    Config2,
    /// Double support plus parallel linkages at knee and ankle.
    Config3,
    /// The adopted design, revised for maintenance and cost.
    Config4,
}

impl ConfigurationId {
    pub const ALL: [ConfigurationId; 4] = [
        ConfigurationId::Config1,
        ConfigurationId::Config2,
        ConfigurationId::Config3,
        ConfigurationId::Config4,
    ];
}

impl fmt::Display for ConfigurationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConfigurationId::Config1 => "Config1",
            ConfigurationId::Config2 => "Config2",
            ConfigurationId::Config3 => "Config3",
            ConfigurationId::Config4 => "Config4",
        };
        f.write_str(s)
    }
}

/// Distinct link components (mirrored parts excluded) needed to build the
/// given configuration.
pub const fn count_links(config: ConfigurationId) -> u32 {
    match config {
        // torso + hip1 + hip2 + thigh + calf + foot
        ConfigurationId::Config1 => 6,
        // hip1, hip2, thigh and calf become two-part assemblies
        ConfigurationId::Config2 => 10,
        ConfigurationId::Config3 => 13,
        ConfigurationId::Config4 => 18,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum MotorModelId {
    AK10_9,
    AK70_10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorSpec {
    pub id: MotorModelId,
    pub gear_ratio: f64,
    /// N·m at the output.
    pub torque_limit: f64,
    /// rad/s at the output.
    pub velocity_limit: f64,
    /// Reflected rotor inertia, kg·m².
    #[serde(default)]
    pub armature: f64,
    /// Default joint PD gains for joints driven by this motor.
    #[serde(default = "default_kp")]
    pub kp: f64,
    #[serde(default = "default_kd")]
    pub kd: f64,
}

fn default_kp() -> f64 {
    200.0
}

fn default_kd() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Box { size: [f64; 3], center: [f64; 3] },
    Capsule { radius: f64, length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub mass: f64,
    /// About the centre of mass, link frame.
    pub inertia: [[f64; 3]; 3],
    pub com: [f64; 3],
    pub geometry: Geometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointKind {
    HipY,
    HipR,
    HipP,
    KneeP,
    AnkleP,
}

impl JointKind {
    /// Chain order from pelvis to foot.
    pub const CHAIN: [JointKind; JOINTS_PER_LEG] = [
        JointKind::HipY,
        JointKind::HipR,
        JointKind::HipP,
        JointKind::KneeP,
        JointKind::AnkleP,
    ];

    pub fn motor(self) -> MotorModelId {
        match self {
            JointKind::HipP | JointKind::KneeP => MotorModelId::AK10_9,
            JointKind::HipY | JointKind::HipR | JointKind::AnkleP => MotorModelId::AK70_10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointName {
    pub side: Side,
    pub kind: JointKind,
}

impl JointName {
    /// Joints in canonical index order.
    pub fn all() -> impl Iterator<Item = JointName> {
        [Side::Left, Side::Right]
            .into_iter()
            .flat_map(|side| JointKind::CHAIN.into_iter().map(move |kind| JointName { side, kind }))
    }

    pub fn index(self) -> usize {
        let leg = match self.side {
            Side::Left => 0,
            Side::Right => JOINTS_PER_LEG,
        };
        leg + JointKind::CHAIN.iter().position(|k| *k == self.kind).expect("kind in chain")
    }
}

impl fmt::Display for JointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::Left => "L",
            Side::Right => "R",
        };
        write!(f, "{side}_{:?}", self.kind)
    }
}

impl FromStr for JointName {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointName::all()
            .find(|j| j.to_string() == s)
            .ok_or_else(|| ModelError::UnknownJoint(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub child: String,
    /// Joint position in the parent link frame.
    pub origin: [f64; 3],
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    pub motor: MotorModelId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub total_mass: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub default_pose: Vec<f64>,
    pub motors: Vec<MotorSpec>,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("kinematic tree is not a single acyclic tree: {0}")]
    Cycle(String),
    #[error("invalid mass: {0}")]
    Mass(String),
    #[error("invalid joint limits: {0}")]
    Limit(String),
    #[error("inertia of link {0} is not symmetric positive definite")]
    Inertia(String),
    #[error("unknown joint name {0:?}")]
    UnknownJoint(String),
    #[error("unknown link {0:?}")]
    UnknownLink(String),
    #[error("motor binding: {0}")]
    Motor(String),
    #[error("invalid robot spec: {0}")]
    Invalid(String),
    #[error("reading {path}: {msg}")]
    Read { path: String, msg: String },
}

/// Loads the built-in default description.
pub fn default_robot_spec() -> RobotSpec {
    RobotSpec::from_toml(include_str!("../assets/robot.toml")).expect("bundled robot spec parses")
}

impl RobotSpec {
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("robot spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn joint(&self, name: &str) -> Option<&JointSpec> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn link(&self, name: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.name == name)
    }

    pub fn motor(&self, id: MotorModelId) -> Option<&MotorSpec> {
        self.motors.iter().find(|m| m.id == id)
    }

    pub fn link_mass_sum(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }
}

/// Built, indexed robot. Body `i + 1` of [`RobotModel::multibody`] is moved by
/// joint `i`; joints follow the canonical order
/// `[L: HipY, HipR, HipP, KneeP, AnkleP, R: same]`.
#[derive(Debug, Clone)]
pub struct RobotModel<T: Real> {
    pub spec: RobotSpec,
    pub multibody: Multibody<T>,
    pub joint_names: Vec<JointName>,
    pub torque_limits: Vec<T>,
    pub velocity_limits: Vec<T>,
    pub position_limits: Vec<(T, T)>,
    pub default_pose: Vec<T>,
    pub total_mass: T,
    pub thigh_length: T,
    pub calf_length: T,
    /// Base height that puts the lowest foot point on flat ground at the
    /// default pose.
    pub nominal_base_height: T,
    pub pd_gains: PdGains<T>,
}

impl<T: Real> RobotModel<T> {
    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    /// Parent array over bodies (`None` for the base).
    pub fn parents(&self) -> Vec<Option<usize>> {
        self.multibody.bodies.iter().map(|b| b.parent).collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|j| j.to_string() == name)
    }

    pub fn motor_of(&self, joint: usize) -> MotorModelId {
        self.joint_names[joint].kind.motor()
    }

    /// Standing state at the default pose on flat ground.
    pub fn standing_state(&self) -> SimState<T> {
        let mut s = SimState::new(&self.multibody);
        s.q.clone_from(&self.default_pose);
        s.base_position.z = self.nominal_base_height;
        s
    }
}

fn vec3<T: Real>(v: [f64; 3]) -> Vector3<T> {
    Vector3::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))
}

fn check_inertia(link: &LinkSpec) -> Result<(), ModelError> {
    let m = Matrix3::from_fn(|r, c| link.inertia[r][c]);
    let asym = (m - m.transpose()).abs().max();
    if !m.iter().all(|v| v.is_finite()) || asym > 1e-12 {
        return Err(ModelError::Inertia(link.name.clone()));
    }
    let min_eig = m.symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(ModelError::Inertia(link.name.clone()));
    }
    Ok(())
}

/// Validates the description and builds the indexed tree.
pub fn build_robot<T: Real>(spec: &RobotSpec) -> Result<RobotModel<T>, ModelError> {
    let mut link_index: HashMap<&str, usize> = HashMap::new();
    for (i, link) in spec.links.iter().enumerate() {
        if link_index.insert(link.name.as_str(), i).is_some() {
            return Err(ModelError::Invalid(format!("duplicate link {}", link.name)));
        }
        if !(link.mass > 0.0) || !link.mass.is_finite() {
            return Err(ModelError::Mass(format!("link {} has mass {}", link.name, link.mass)));
        }
        if !link.com.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Invalid(format!("link {} has non-finite com", link.name)));
        }
        check_inertia(link)?;
    }

    if spec.joints.len() != NUM_JOINTS {
        return Err(ModelError::Invalid(format!(
            "expected {NUM_JOINTS} joints, found {}",
            spec.joints.len()
        )));
    }
    let mut by_name: HashMap<JointName, &JointSpec> = HashMap::new();
    let mut children: HashSet<&str> = HashSet::new();
    for joint in &spec.joints {
        let name: JointName = joint.name.parse()?;
        if by_name.insert(name, joint).is_some() {
            return Err(ModelError::Invalid(format!("duplicate joint {}", joint.name)));
        }
        if !(joint.limits[0] < joint.limits[1]) {
            return Err(ModelError::Limit(format!(
                "{}: [{}, {}]",
                joint.name, joint.limits[0], joint.limits[1]
            )));
        }
        for l in [&joint.parent, &joint.child] {
            if !link_index.contains_key(l.as_str()) {
                return Err(ModelError::UnknownLink(l.clone()));
            }
        }
        if joint.parent == joint.child || !children.insert(joint.child.as_str()) {
            return Err(ModelError::Cycle(format!("link {} has more than one parent", joint.child)));
        }
        if joint.motor != name.kind.motor() {
            return Err(ModelError::Motor(format!(
                "{} must use {:?}, found {:?}",
                joint.name,
                name.kind.motor(),
                joint.motor
            )));
        }
        let motor = spec
            .motor(joint.motor)
            .ok_or_else(|| ModelError::Motor(format!("no table for {:?}", joint.motor)))?;
        if !(motor.torque_limit > 0.0) || !(motor.velocity_limit > 0.0) || motor.armature < 0.0
            || !(motor.kp >= 0.0)
            || !(motor.kd >= 0.0)
        {
            return Err(ModelError::Motor(format!("{:?} has invalid limits", motor.id)));
        }
        let axis = Vector3::from(joint.axis);
        if ((axis.norm() - 1.0).abs()) > 1e-9 {
            return Err(ModelError::Invalid(format!("{} axis is not unit length", joint.name)));
        }
    }

    let roots: Vec<&LinkSpec> = spec
        .links
        .iter()
        .filter(|l| !children.contains(l.name.as_str()))
        .collect();
    if roots.len() != 1 {
        return Err(ModelError::Cycle(format!(
            "expected one floating base, found {} parentless links",
            roots.len()
        )));
    }
    let base_name = roots[0].name.as_str();

    // body 0 is the base, body k+1 the child of canonical joint k
    let mut body_of_link: HashMap<&str, usize> = HashMap::new();
    body_of_link.insert(base_name, 0);
    let ordered: Vec<(JointName, &JointSpec)> =
        JointName::all().map(|n| (n, by_name[&n])).collect();
    for (k, (_, joint)) in ordered.iter().enumerate() {
        if body_of_link.insert(joint.child.as_str(), k + 1).is_some() {
            return Err(ModelError::Cycle(format!("link {} reached twice", joint.child)));
        }
    }
    for (name, joint) in &ordered {
        let parent_body = body_of_link[joint.parent.as_str()];
        let child_body = body_of_link[joint.child.as_str()];
        if parent_body >= child_body {
            return Err(ModelError::Cycle(format!(
                "{name} attaches to a link that is not above it in the chain"
            )));
        }
        // hip chain Y→R→P, then knee, ankle
        let idx = name.index();
        let expected_parent = if idx % JOINTS_PER_LEG == 0 { 0 } else { idx };
        if parent_body != expected_parent {
            return Err(ModelError::Cycle(format!("{name} breaks the Y-R-P-knee-ankle chain")));
        }
    }

    let mass_sum = spec.link_mass_sum();
    if (mass_sum - spec.total_mass).abs() > 1e-9 {
        return Err(ModelError::Mass(format!(
            "link masses sum to {mass_sum}, total_mass is {}",
            spec.total_mass
        )));
    }
    if spec.default_pose.len() != NUM_JOINTS {
        return Err(ModelError::Invalid("default_pose must have 10 entries".into()));
    }

    let make_body = |link: &LinkSpec, parent: Option<usize>, origin: [f64; 3], axis: [f64; 3], armature: f64| {
        let inertia = Matrix3::from_fn(|r, c| T::lit(link.inertia[r][c]));
        let mut b = Body::new(
            link.name.clone(),
            parent,
            vec3(origin),
            vec3(axis),
            T::lit(link.mass),
            vec3(link.com),
            inertia,
        );
        b.armature = T::lit(armature);
        b
    };

    let base_link = roots[0];
    let mut bodies = vec![make_body(base_link, None, [0.0; 3], [0.0; 3], 0.0)];
    let mut contact_groups = Vec::new();
    for (k, (name, joint)) in ordered.iter().enumerate() {
        let link = &spec.links[link_index[joint.child.as_str()]];
        let motor = spec.motor(joint.motor).expect("checked above");
        let parent = body_of_link[joint.parent.as_str()];
        bodies.push(make_body(link, Some(parent), joint.origin, joint.axis, motor.armature));
        if name.kind == JointKind::AnkleP {
            let Geometry::Box { size, center } = &link.geometry else {
                return Err(ModelError::Invalid(format!("foot link {} needs box geometry", link.name)));
            };
            let (hx, hy, hz) = (size[0] / 2.0, size[1] / 2.0, size[2] / 2.0);
            let z = center[2] - hz;
            let points = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .iter()
                .map(|(sx, sy)| vec3([center[0] + sx * hx, center[1] + sy * hy, z]))
                .collect();
            contact_groups.push(ContactGroup { body: k + 1, points });
        }
    }
    let mut multibody = Multibody::new(BaseKind::Floating, bodies);
    multibody.contact_groups = contact_groups;

    let motor_of = |j: &JointSpec| spec.motor(j.motor).expect("checked above");
    let default_pose: Vec<T> = spec.default_pose.iter().map(|v| T::lit(*v)).collect();
    let mut model = RobotModel {
        spec: spec.clone(),
        joint_names: ordered.iter().map(|(n, _)| *n).collect(),
        torque_limits: ordered.iter().map(|(_, j)| T::lit(motor_of(j).torque_limit)).collect(),
        velocity_limits: ordered.iter().map(|(_, j)| T::lit(motor_of(j).velocity_limit)).collect(),
        position_limits: ordered
            .iter()
            .map(|(_, j)| (T::lit(j.limits[0]), T::lit(j.limits[1])))
            .collect(),
        default_pose,
        total_mass: T::lit(spec.total_mass),
        thigh_length: T::lit(spec.thigh_length),
        calf_length: T::lit(spec.calf_length),
        nominal_base_height: T::zero(),
        pd_gains: PdGains {
            kp: ordered.iter().map(|(_, j)| T::lit(motor_of(j).kp)).collect(),
            kd: ordered.iter().map(|(_, j)| T::lit(motor_of(j).kd)).collect(),
        },
        multibody,
    };
    model.nominal_base_height = standing_height(&model);
    Ok(model)
}

fn standing_height<T: Real>(model: &RobotModel<T>) -> T {
    let mut state = SimState::new(&model.multibody);
    state.q.clone_from(&model.default_pose);
    let kin = Kinematics::compute(&model.multibody, &state);
    let mut lowest = T::zero();
    for g in &model.multibody.contact_groups {
        for p in &g.points {
            lowest = lowest.min(kin.point_position(g.body, p).z);
        }
    }
    -lowest
}
