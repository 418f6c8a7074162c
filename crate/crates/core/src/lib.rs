//! Rate-splitting multiple access (RSMA) link-abstraction toolkit.
//!
//! The crate evaluates one-layer rate-splitting in the multi-antenna downlink
//! broadcast channel and stream-splitting with SIC in the uplink multiple
//! access channel, alongside SDMA, NOMA and OMA reference schemes. All rates
//! are Gaussian-signalling, infinite-blocklength rates in bits/s/Hz.
//!
//! Module map:
//! - [`channel`]: channel realizations, Rayleigh sampling, imperfect CSIT.
//! - [`downlink`]: SINRs, common rate, share feasibility and per-user totals.
//! - [`precoder`]: ZF / multicast builders, power-split search, WSR optimizer.
//! - [`uplink`]: stream splitting, decoding orders, MMSE-SIC stream rates.
//! - [`baselines`]: SDMA, NOMA, TDMA and the two-user MAC capacity pentagon.
//! - [`experiments`]: seeded Monte Carlo runner, summaries and CSV output.
//! - [`cli`]: the `rsma` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod downlink;
mod error;
pub mod experiments;
pub mod linalg;
pub mod precoder;
pub mod uplink;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// `log2(1 + x)`, the Gaussian capacity of a link with SINR `x`.
#[inline]
pub fn capacity(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}
