//! Layer primitives, parameter bookkeeping and the optimizer.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod layer;

pub use activation::{Activation, DEFAULT_LEAKY_SLOPE};
pub use adam::{Adam, AdamConfig};
pub use layer::{param_count, LayerKind, LayerParams, LayerSpec, DEFAULT_DROPOUT, INIT_STD};
