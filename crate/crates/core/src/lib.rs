//! Traffic analytics and control primitives behind the agent's tools.
//!
//! - [`trips`]: trip-record store and time-windowed statistics
//! - [`render`] / [`artifacts`]: SVG and markdown outputs in a file-backed store
//! - [`network`] / [`sim`]: signalized network model and point-queue simulator
//! - [`webster`]: fixed-time signal optimization
//! - [`synth`]: seeded synthetic trip data
//! - [`fixtures`]: sample networks

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod fixtures;
pub mod geometry;
pub mod network;
pub mod render;
pub mod sim;
pub mod synth;
pub mod trips;
pub mod webster;

pub use artifacts::{Artifact, ArtifactError, ArtifactKind, ArtifactStore};
pub use geometry::NetworkGeometry;
pub use network::{RoadNetwork, SignalPlan};
pub use sim::{PerformanceReport, SimResult};
pub use trips::{TimeWindow, TripDataset, TripStore};
