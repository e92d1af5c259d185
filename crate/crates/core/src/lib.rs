//! End-to-end optimized transmission over dispersive intensity-modulated /
//! direct-detection (IM/DD) optical links.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`nn`]), a
//! differentiable IM/DD channel ([`channel`]), the bidirectional recurrent
//! transceiver ([`transceiver`]), sliding-window sequence estimation and
//! error counting ([`estimation`]), the two reference systems
//! ([`baselines`]), and the training/evaluation harness ([`harness`]).

pub mod baselines;
pub mod channel;
pub mod dsp;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod nn;
pub mod transceiver;

pub use error::{Error, Result};
