//! Motion-artefact synthesis and detection for cine MR sequences.
//!
//! The crate covers the whole pipeline: synthetic pulsating-ventricle
//! phantoms, Cartesian k-space line replacement to fabricate mistriggering
//! artefacts, motion-based ROI extraction, a spatio-temporal 3D CNN written
//! from scratch (forward, backward, Adadelta), classical baselines and a
//! stratified cross-validation harness.

pub mod augment;
pub mod baselines;
pub mod benchmark;
pub mod cnn;
pub mod dataset;
mod error;
pub mod eval;
pub mod json;
pub mod kspace;
pub mod numerics;
pub mod pgm;
pub mod phantom;
pub mod preprocess;

pub use error::{Error, Result};
pub use numerics::{CineSequence, ComplexGrid, RealVolume};
