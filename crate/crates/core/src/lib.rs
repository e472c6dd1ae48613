//! Learned modulation for simultaneous wireless information and power
//! transfer.
//!
//! An encoder network maps each of `M` messages to a complex symbol under an
//! average power constraint; a decoder network recovers the message after an
//! AWGN channel. Both are trained jointly on
//! `mean cross-entropy + lambda / P_del`, where `P_del` is the power delivered
//! by a nonlinear energy harvester. Sweeping `lambda` traces the trade-off
//! between information rate and harvested power.

pub mod channel;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod harvester;
pub mod nn;
pub mod objective;
pub mod rng;
pub mod trainer;
pub mod transceiver;

pub use error::{Error, Result};
