//! Synthetic MRI generation and SDF-driven cortical surface placement.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deform;
pub mod error;
pub mod mesh;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod sdf;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use mesh::TriangleMesh;
pub use volume::{GridGeometry, LabelVolume, ScalarVolume};
