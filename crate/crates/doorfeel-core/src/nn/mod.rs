//! Minimal deterministic neural-network engine.
//!
//! Two layers of API live here. [`api`] exposes single-sample operations on
//! small shape-checked arrays (convolution, pooling, LSTM steps, dense,
//! RMSE) — convenient for unit tests and one-off inference. The remaining
//! submodules are the batched engine the model is built on: buffers are
//! laid out *lane-minor* (`[feature][lane]`, one lane per batch sample), so
//! the batch dimension is the contiguous vectorization axis and per-sample
//! arithmetic never mixes lanes. A sample therefore produces bit-identical
//! numbers whatever batch it rides in.

pub mod adam;
pub mod api;
pub mod kernels;
pub mod loss;
pub mod lstm;
pub mod pool;
