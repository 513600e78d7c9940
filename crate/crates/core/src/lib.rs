//! Discrete air-traffic scenario toolkit.
//!
//! Sectors are represented as graphs whose nodes sit roughly 20 nmi apart.
//! Aircraft advance along routes one node per step (fast) or one node every
//! two steps (slow); two aircraft interact when they share a node or swap
//! nodes in one step. On top of that exact verifier sit the synthetic sector
//! generator, random baselines, prompt construction, a chat-completion
//! client and the benchmark harness.

pub mod baseline;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod prompting;
pub mod rollout;
pub mod sectors;

pub use error::Error;
pub use model::{
    fl_overlap, fl_range, Aircraft, Benchmark, BenchmarkParams, FlightLevelRange, InteractionClass,
    InteractionEvent, Mechanism, NodeId, Point, RouteId, Scenario, SectorGraph, Speed,
};
pub use rollout::{detect_interactions, unique_pairs, validate_scenario, ValidationReport};
