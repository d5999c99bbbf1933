//! Compact generative point-cloud perception with self-organizing Gaussian
//! mixture models.
//!
//! The crate covers the whole pipeline: depth+intensity frames are turned
//! into 4D point clouds ([`ingest`]), a mean-shift pass estimates the number
//! of mixture components and log-space EM fits the model ([`fit`]), the
//! fitted [`Gmm4`] can be resampled and queried ([`inference`]), pairs of
//! models can be aligned on SE(3) ([`registration`]) and resampled points
//! can be raytraced into an occupancy grid ([`occupancy`]).
//!
//! Data-parallel loops go through [`par`], which runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iteration
//! otherwise. Reductions use fixed-shape chunking, so results do not depend
//! on the thread count.

pub mod error;
pub mod fit;
pub mod inference;
pub mod ingest;
pub mod kernels;
pub mod model;
pub mod occupancy;
pub mod par;
pub mod registration;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use model::{memory_footprint, CholeskyCache, Gmm4, PointCloud4D, RigidTransform};
