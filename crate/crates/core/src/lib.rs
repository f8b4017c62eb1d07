//! Numerical core of a desk-scale laboratory for targeted attacks on
//! tropical-cyclone track detection.
//!
//! The pipeline runs end to end without any I/O:
//!
//! 1. [`synth`] builds gridded weather fields with moving vortices.
//! 2. [`detector`] is the rule-based black box that turns fields into
//!    trajectories (candidate minima, closed contours, stitching).
//! 3. [`labels`] dilates sparse detector masks into soft labels and
//!    [`surrogate`] fits a small convolutional scorer to them.
//! 4. [`targetgen`] synthesizes a deviating target trajectory and
//!    [`attack`] perturbs the forecast so the detector follows it.
//! 5. [`metrics`] and [`stealth`] score efficacy and detectability.
//!
//! The crate is `no_std` and only needs an allocator; file formats,
//! rendering and the command-line driver live in the `tcsteer` crate.

#![no_std]

extern crate alloc;

pub mod attack;
pub mod detector;
pub mod fields;
pub mod geo;
pub mod labels;
pub mod metrics;
pub mod stealth;
pub mod surrogate;
pub mod synth;
pub mod targetgen;
pub mod track;
pub mod volume;

pub use attack::{AttackConfig, AttackError, AttackOutcome, Method};
pub use detector::{Candidate, DetectorConfig};
pub use fields::{DetectorInputs, FieldError, FieldSequence, StandardizationStats, Variable};
pub use geo::{GeoPoint, GridGeometry};
pub use labels::DilationParams;
pub use surrogate::{SurrogateModel, TrainConfig};
pub use track::{TrackPoint, Trajectory};
pub use volume::Volume;
