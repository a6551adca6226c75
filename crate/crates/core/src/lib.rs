//! Energy disaggregation with a hybrid CNN-LSTM sequence-to-sequence network.
//!
//! A window of the aggregate (mains) power signal goes in; a window of the same
//! length for one target appliance comes out. Every layer carries its own
//! forward and backward pass, written out by hand on a small dense [`Tensor`]
//! type, and checked against central finite differences.
//!
//! ## Modules
//!
//! - [`tensor`]: dense 64-bit arrays, activations, matmul, and the finite-difference oracle
//! - [`layers`]: 1D convolution, max-pooling, LSTM and dense layers with backward passes
//! - [`model`]: the Conv1D → MaxPool → LSTM → LSTM → Dense → Dense pipeline and checkpoints
//! - [`data`]: REFIT CSV ingestion, normalization, windowing, stitching, synthetic households
//! - [`training`]: MAE loss, Adam, and the seeded mini-batch loop
//! - [`eval`]: RMSE, ANE, on/off confusion counts, accuracy, F1 and report aggregation

pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use tensor::Tensor;
