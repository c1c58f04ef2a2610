//! Estimation of data-driven BRDF model weights from a single HDR reflectance
//! map under known natural lighting.
//!
//! A BRDF is represented as a linear combination of tabulated basis BRDFs
//! (MERL half-angle parameterization). Rendering a sphere under a captured
//! light probe is a fixed linear operator on the BRDF table, so the basis
//! observations only have to be rendered once per lighting condition. The
//! estimator clusters the basis into material classes with a Gaussian mixture
//! over a low-dimensional subspace, solves one regularized least squares per
//! class and color channel, and keeps the candidate that best explains the
//! observation.
//!
//! Modules follow the pipeline order:
//!
//! * [`brdf`] / [`merl`] — tabulated BRDF storage, evaluation, synthesis, I/O
//! * [`envlight`] / [`hdr`] / [`pfm`] — light probes and HDR image formats
//! * [`render`] — sphere geometry, transport operator, basis observations
//! * [`subspace`] / [`gmm`] — truncated SVD and material-class clustering
//! * [`estimate`] — per-class regularized solves, balancing, selection
//! * [`cache`] / [`config`] / [`pipeline`] — batch orchestration for the CLI

pub mod brdf;
pub mod cache;
pub mod config;
pub mod demo;
pub mod envlight;
pub mod estimate;
pub mod gmm;
pub mod halfangle;
pub mod hdr;
pub mod img;
pub mod merl;
pub mod pfm;
pub mod pipeline;
pub mod render;
pub mod subspace;

mod error;
pub(crate) mod vec3;

pub use error::{Error, Result};
