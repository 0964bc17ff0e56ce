//! Two-stage hypernetwork pipeline for auto-colored 3D models.
//!
//! Stage 1 trains a hypernetwork that emits the weights of a small target
//! network mapping unit-ball samples onto an object's surface. Stage 2 trains
//! a second hypernetwork that colors those reconstructions, sharing the same
//! prior sample so every point's position and color come from the same input.
//! Feeding the vertices of a subdivided icosphere through the trained target
//! networks turns the pair into a vertex-colored triangle mesh.
//!
//! The crate is organized around the pipeline's data flow:
//!
//! - [`nn`] — dense MLPs with reverse-mode gradients over externally supplied
//!   flat weight vectors (the hypernetwork contract), plus Adam.
//! - [`metrics`] — Chamfer distance, exact EMD, color MSE, k-NN alignment.
//! - [`encoder`] — permutation-invariant point-cloud encoder with a
//!   variational latent.
//! - [`shape_stage`] / [`color_stage`] — the two training stages.
//! - [`meshgen`] — icosphere generation, the triangulation trick, and latent
//!   interpolation.
//! - [`io`] — cloud/mesh file formats, normalization, synthetic data.
//! - [`checkpoint`] / [`config`] — serialized weights and run configuration.
//!
//! See the book under `book/` for a guided tour; its code snippets compile
//! and run as part of this crate's test suite.

pub mod checkpoint;
pub mod color;
pub mod color_stage;
pub mod config;
pub mod encoder;
mod error;
pub mod io;
pub mod meshgen;
pub mod metrics;
pub mod nn;
pub mod shape_stage;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    //! Compiles and runs the book's code snippets as doctests.
    #![doc = include_str!("../../../book/src/introduction.md")]
    #![doc = include_str!("../../../book/src/autodiff.md")]
    #![doc = include_str!("../../../book/src/metrics.md")]
    #![doc = include_str!("../../../book/src/encoder.md")]
    #![doc = include_str!("../../../book/src/two_stage.md")]
    #![doc = include_str!("../../../book/src/meshes.md")]
    #![doc = include_str!("../../../book/src/files_and_cli.md")]
}
