#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Beam tracking for a millimeter-wave node hanging on an overhead messenger
//! wire: wire physics, planar-array channel, a delayed-observation RL
//! environment, a DQN learner, reference policies, and experiment plumbing.

pub mod channel;
pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod experiment;
pub mod policies;
pub mod wire;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use channel::{AmplitudeNorm, ArrayConfig, BeamOrientation, ChannelConfig, DepartureGeometry};
pub use config::{ExperimentConfig, Scenario, StateMode};
pub use dqn::{MlpParams, TrainConfig};
pub use env::{
    ActionIndex, EnvConfig, Environment, StateVector, StepOutcome, TrackingEnv, TrackingSetup,
};
pub use error::{Error, Result};
pub use experiment::{MetricsRecord, SweepAxis, SweepSpec};
pub use policies::PolicyKind;
pub use wire::{ImpulseEvent, PointId, WindModel, WireParams, WireState};
