//! Privacy-aware subscription game for floating car data.
//!
//! Vehicles subscribe to impact levels of geocast messages under a bandwidth
//! budget and share what they receive with neighbours over V2V links. A
//! vehicle that hides its position behind an imprecision disk receives more
//! irrelevant traffic per relevant message.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod model;
pub mod obfuscation;
pub mod oracle;
pub mod sim;
pub mod solver;

pub use error::{ModelError, ObfuscationError, SolverError};
pub use geometry::{Point, Square};
pub use model::{
    default_scenario, ImpactLevel, ImpactLevelTable, Message, PrivacyProfile, ScenarioConfig,
    SimParams, Strategy,
};
pub use obfuscation::{adaptation_factor, RhoTable};
pub use solver::{Game, SolverOptions, StrategyProfile, SupportPartition};
