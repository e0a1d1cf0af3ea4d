//! Energy-constrained placement of heap objects in a DRAM + STT-RAM hybrid
//! main memory.
//!
//! The crate turns per-object access profiles into placement decisions:
//!
//! * [`profile`], [`scaling`], [`synth`]: object profiles, workload
//!   extrapolation and a seeded generator.
//! * [`device`], [`energy`]: device constants and per-object energy.
//! * [`ilp`]: exact 0-1 integer programming.
//! * [`planner`]: latency-optimal static placement under an energy budget.
//! * [`migration`]: re-planning with migration when the budget changes.
//! * [`baselines`], [`evaluate`]: reference strategies and an independent scorer.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod device;
pub mod energy;
pub mod evaluate;
pub mod ilp;
pub mod migration;
pub mod placement;
pub mod planner;
pub mod profile;
pub mod scaling;
pub mod synth;

pub use device::DeviceSpec;
pub use placement::{Device, PlacementPlan};
pub use profile::{ObjectProfile, ProfileSet};
