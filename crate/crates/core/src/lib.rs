//! Multi-view plane-sweep depth estimation with pluggable patch similarity.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a minimal CNN engine and the n-branch similarity network.
//! - [`geometry`]: pinhole cameras, depth planes, plane-induced homographies
//!   and bilinear warping.
//! - [`similarity`]: SAD, ZNCC, pairwise consensus and the learned measures.
//! - [`sweep`]: cost-volume construction, box filtering and depth extraction.
//! - [`dataset`]: synthetic scenes, patch sampling and the training loop.
//! - [`eval`]: point-cloud lifting, accuracy/completeness and error maps.
//! - [`io`]: PGM/PPM/PFM/PLY readers and writers and the camera file format.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod similarity;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
