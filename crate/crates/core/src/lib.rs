//! Audio-conditioned full-page score following.
//!
//! This crate holds everything that is pure computation: a small dense
//! tensor library with reverse-mode differentiation, the log-frequency
//! spectrogram pipeline, the FiLM-conditioned U-Net with its audio
//! encoders, the synthetic data generator, the training loop, the
//! online tracker and the evaluation measures. It builds without `std`
//! (only `alloc` is required); file formats, timing and the command
//! line live in the companion `pgtk` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod data;
pub mod dsp;
pub mod eval;
pub mod model;
pub mod rng;
pub mod selfcheck;
pub mod tensor;
pub mod track;
pub mod train;

pub use tensor::{Graph, GraphError, NodeId, ParamId, ParamStore, Real, Tensor};
