//! File formats, rendering and pipeline helpers around `tcsteer-core`.

pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod geojson;
pub mod manifest;
pub mod svg;
pub mod wfld;

pub use error::{Error, Result};
