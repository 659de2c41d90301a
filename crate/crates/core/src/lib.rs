//! Singular-value distance statistics for transformer projection weights.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`checkpoint`] reads safetensors checkpoints and resolves the seven
//!    projection matrices of every decoder layer.
//! 2. [`spectral`] reduces each projection to its top-`r` singular values and
//!    stacks them per projection kind across layers.
//! 3. [`dsv`] pools cosine distances between those singular-value vectors,
//!    fits generalized-Pareto and normal models and labels a pool as
//!    power-law or not.
//! 4. [`characterize`] partitions the projection kinds into referenced-weight
//!    groups.
//! 5. [`generator`] and [`lora`] synthesize LoRA A/B initialization tensors
//!    whose row-wise distance pools follow a reference model's grouping.

pub mod characterize;
pub mod checkpoint;
pub mod digest;
pub mod dsv;
pub mod error;
pub mod generator;
pub mod lora;
pub mod projection;
pub mod rng;
pub mod spectral;
pub mod tensors;

pub use error::{Error, Result};
pub use projection::{ProjectionKind, ProjectionMatrix};
