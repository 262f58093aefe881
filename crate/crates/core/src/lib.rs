//! Differentiable physically-based inverse-rendering toolkit.
//!
//! The crate provides volumetric material fields with factored
//! parameterizations (voxel / triplane / tricolumn), a split-sum
//! image-based-lighting shader with a Monte-Carlo reference, an
//! emission-absorption ray marcher with hand-derived adjoints end to end,
//! the loss/metric suite, a procedural PBR scene generator, a per-scene
//! Adam fitter, and marching-tetrahedra mesh extraction.

pub mod error;
pub mod field;
pub mod img;
pub mod math;
pub mod pbr;
pub mod render;
pub mod rng;

pub use error::{Error, Result};
