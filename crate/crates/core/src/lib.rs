//! Simulation core for co-robotic visual exploration: topic fields, an
//! online logistic interest model, a motion-primitive planner, query
//! selectors and a bandwidth-limited mission loop.

pub mod error;
pub mod experiment;
pub mod field;
pub mod live;
pub mod mission;
pub mod planner;
pub mod reward;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use field::{GridLocation, InterestMap, InterestProfile, TopicField};
pub use mission::{run_mission, Mission, MissionConfig, MissionTrace, MetricsRecord, Operator};
pub use reward::{FitConfig, LabeledDataset, RewardModelParams};
pub use selection::SelectorKind;
