//! Agent-based social simulation: declarative scenarios compiled to validated
//! behavior graphs, a deterministic round-based event kernel that runs locally
//! or across master/worker processes, a feedback pipeline producing
//! fine-tuning datasets, and an experiment, statistics and report layer.

pub mod agent;
pub mod analysis;
pub mod behavior_graph;
pub mod distributed;
pub mod experiment;
pub mod kernel;
pub mod report;
pub mod scenarios;
pub mod seed;
pub mod value;
pub mod vr2t;

pub use value::{Value, ValueMap};
