//! Core pipeline for predicting affective door-feel ratings from
//! door-opening force profiles.
//!
//! Everything numeric lives here: sensor-series synchronization and angle
//! geometry, the 630-sample profile normalization, the adjective-pair
//! rating model, a small deterministic neural-network engine, the
//! two-stream CNN-LSTM, leave-one-out evaluation, and a synthetic data
//! generator. The crate is `no_std`-compatible (with `alloc`); file
//! formats and the CLI live in the companion `doorfeel` crate.

#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod error;
pub mod eval;
pub mod geometry;
pub mod math;
pub mod model;
pub mod nn;
pub mod profile;
pub mod ratings;
pub mod rng;
pub mod series;
pub mod synth;
