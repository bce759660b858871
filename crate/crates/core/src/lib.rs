//! Risk-sensitive task fetching and offloading for vehicular edge computing.
//!
//! Vehicles (VUEs) near an intersection either fetch camera images and
//! synthesize them locally, or let an edge server synthesize them and send
//! the result downlink. Each VUE learns a channel-state-conditioned policy
//! with a distributed no-regret learner whose utility is the negative
//! exponential of its end-to-end delay, so the learned behaviour trades mean
//! delay against variance and higher-order tail statistics.
//!
//! Module map:
//!
//! - [`channel`]: geometry, path loss, two-level fading quantization, state indexing
//! - [`delay`]: fetch, compute, and downlink delay components
//! - [`power`]: KKT downlink power allocation at the edge server
//! - [`agent`]: per-VUE utility/regret/policy estimation
//! - [`engine`]: the synchronous learning loop and baseline schemes
//! - [`oracle`]: exact-enumeration best response for small networks
//! - [`metrics`]: mean/variance/skewness, entropic risk, empirical CCDF

// `!(x > 0.0)` is used deliberately so NaN lands on the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod channel;
pub mod delay;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod params;
pub mod power;
pub mod rng;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
