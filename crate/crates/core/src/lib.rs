//! Noise transport for zero-shot video from latent image diffusion models.
//!
//! The engine never touches model weights. It moves the *input noise* of a
//! deterministic sampler: on the latent lattice ([`crystal`]), or freely in
//! image space through the autoencoder ([`liquid`]). [`pipeline`] drives a
//! backend through the generation loops, [`metric`] scores temporal
//! smoothness from X-T slices and [`latentvis`] maps latents to RGB.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crystal;
pub mod dump;
pub mod error;
pub mod field;
pub mod latentvis;
pub mod liquid;
pub mod metric;
pub mod noise;
pub mod pipeline;
pub mod stats;

pub use error::{BackendError, DumpError, Error, ErrorClass, Result};
pub use field::{ImageField, LatentField, Lattice, Mask, Plane, LATENT_CHANNELS, VAE_SCALE};
pub use noise::{derive_seed, sample_noise, SeededNoiseSpec};
pub use stats::{measure_stats, ChannelStats};
