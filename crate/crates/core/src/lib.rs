//! Seeded simulation of crowdsourced quality-of-experience feedback for
//! finding under-performing sites in a mobile network.
//!
//! The pipeline runs layout → user mobility → satisfaction labels → survey
//! delivery → classifier predictions → site ranking, with every random draw
//! taken from a stream derived from one master seed (see [`seed`]).
//! [`experiment`] strings the stages together and writes result tables.

pub mod classifier;
pub mod delivery;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mobility;
pub mod satisfaction;
pub mod seed;
pub mod topology;

pub use classifier::{ClassifierSpec, GridPoint};
pub use delivery::{DeliveryConfig, Strategy, SurveyAssignment};
pub use detection::{DetectionMetrics, LabelInput, LabelSource, RankingResult};
pub use error::{Error, Result};
pub use experiment::{Format, RunRecord, Scenario, ScenarioConfig};
pub use mobility::{MobilityParams, Preset, VisitMatrix};
pub use satisfaction::{SatisfactionVector, UserProfileParams};
pub use seed::{SeedPath, Stage};
pub use topology::{Extent, Site, Topology};
