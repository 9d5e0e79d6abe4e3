//! Stack-augmented recurrent networks.
//!
//! The crate contains a small reverse-mode autodiff engine, the
//! differentiable stack and queue buffers built on it, linear and LSTM
//! controllers, symbolic pushdown-transducer and grammar oracles for six
//! transduction tasks, and a training/evaluation harness.

pub mod autodiff;
pub mod buffers;
pub mod cfg;
pub mod checkpoint;
pub mod controller;
pub mod data;
pub mod error;
pub mod experiment;
pub mod optim;
pub mod oracles;
pub mod pdt;
pub mod stack;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
