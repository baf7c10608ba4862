//! GAN-based anomaly detection toolkit.
//!
//! DCGAN generator/discriminator builders on a small reverse-mode
//! differentiation engine, adversarial training, anomaly scoring by latent
//! inversion, a four-stage image degradation pipeline, procedural datasets,
//! and detection metrics.

pub mod anomaly;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod degrade;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::{sample_latent, LatentPrior, LatentVector, Prng};
pub use tensor::{Reduction, Tensor};
