//! Streaming spatial auditory-attention decoding.
//!
//! EEG decision windows are decoded as an ordered stream by a window-level
//! LSTM-like cell whose gates are fed by a convolutional block on the current
//! window and a linear block on the previous short-term state. This crate holds
//! everything that is pure computation: a small dense tensor library with
//! analytic backward rules, the decoder and its isolated-window CNN baseline,
//! the preprocessing pipeline, a synthetic EEG generator, Adam training with
//! ensembling, and the exact Wilcoxon signed-rank test used for comparisons.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! experiment orchestration live in the `streamaad` crate.
#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod real;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod training;

pub use data::Partition;
pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tensor::Tensor;
