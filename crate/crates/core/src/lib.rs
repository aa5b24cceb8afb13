//! Sending-or-not-sending twin-field QKD simulator.
//!
//! The crate is layered bottom-up:
//!
//! - [`ratecore`]: entropy, the AOPP key-rate formula, the repeaterless bound and the
//!   intensity-balance condition between the senders.
//! - [`optics`]: link/detector models, interference click probabilities and the drifting
//!   channel phase.
//! - [`servo`]: the dual-band phase lock, frequency pre-compensation and timing alignment.
//! - [`engine`]: the three-party session (two senders, one measuring relay) and the analytic
//!   expectation of its tallies.
//! - [`postproc`]: sifting, odd-parity pairing, decoy bounds and key-rate finalization.
//! - [`experiment`]: configuration files, presets, sweeps, the optimizer and the identity
//!   suite used by the command-line front end.
//!
//! Monte Carlo sessions are chunked over a fixed segment grid, so results do not depend on
//! the chunk count. With the `parallel` feature (default) chunks run on rayon's pool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiment;
pub mod optics;
pub mod postproc;
pub mod ratecore;
pub mod report;
pub mod servo;

mod numeric;

pub use error::{Error, Result};
