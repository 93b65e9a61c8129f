//! Overlap-volume analytics for radiotherapy treatment plans.
//!
//! Structures (targets, organs at risk, helper volumes) and the dose field
//! share one voxel grid. From them the crate derives overlap volumes between
//! structures and dose regions, per-overlap dose metrics and DVH distances,
//! and serves them to scripts (see [`report`]) and clients (see [`service`]).

pub mod analysis;
pub mod bundle;
pub mod cli;
pub mod error;
pub mod filter;
pub mod grid;
pub mod metrics;
pub mod overlap;
pub mod phantom;
pub mod report;
pub mod service;
pub mod slice;

pub use analysis::{AnalysisConfig, PlanAnalysis};
pub use bundle::{load_bundle, save_bundle, PlanBundle};
pub use error::{Error, Result};
pub use filter::{FilterSpec, Metric, Range};
pub use grid::{DoseGrid, Rgb, Role, StructureMask, VoxelGrid3D, VoxelSet};
pub use metrics::{DoseStats, DvhCurve, HiConvention, OverlapRecord};
pub use phantom::{generate_phantom, PhantomSpec};
