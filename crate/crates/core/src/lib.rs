//! Neural radiance field reconstruction on the CPU.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`] – dense tensors, a define-by-run gradient tape and Adam.
//! * [`encodings`] – frequency and multiresolution hash-grid input encodings.
//! * [`fields`] – the vanilla MLP field, the hash-grid ("instant") field and
//!   the time-conditioned deformation field, plus checkpoint I/O.
//! * [`renderer`] – cameras, rays, stratified sampling and alpha compositing.
//! * [`dataset`] – transforms-JSON manifests, frame selection and analytic
//!   synthetic scenes with orbit / spin trajectories.
//! * [`preprocess`] – chroma-key background removal.
//! * [`metrics`] – PSNR, SSIM and report assembly.
//! * [`trainer`] – ray batching, optimisation, evaluation and benchmarking.
//! * [`cli`] – the command-line front end used by the `rsonerf` binary.

pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod encodings;
mod error;
pub mod fields;
pub mod metrics;
pub mod preprocess;
pub mod raster;
pub mod renderer;
pub mod trainer;

pub use error::{Error, Result};
