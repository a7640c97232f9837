//! Simulation, training and deployment codec for a small 10-joint biped.
//!
//! Numerical code is generic over [`scalar::Real`]; the aliases below pick
//! the two instantiations used in practice.

pub mod actuation;
pub mod canlink;
pub mod dynamics;
pub mod env;
pub mod learn;
pub mod model;
pub mod scalar;
pub mod sim2sim;
pub mod spatial;

pub type Robot = model::RobotModel<f64>;
pub type Robot32 = model::RobotModel<f32>;
pub type State = dynamics::SimState<f64>;
pub type State32 = dynamics::SimState<f32>;
pub type Env = env::Env<f64>;
pub type Env32 = env::Env<f32>;
pub type Policy = learn::Policy<f64>;
pub type Policy32 = learn::Policy<f32>;
