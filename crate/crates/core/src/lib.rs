//! Inconsistency detection for network meta-analysis by stochastic search
//! over inconsistency factors.
//!
//! The usual flow is [`network::load_network`] → [`placement::place`] →
//! [`mcmc::run_ssifs`] → [`report::build_report`], or [`pipeline::analyze`]
//! for all of it with an [`config::AnalysisConfig`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod mcmc;
pub mod network;
pub mod oracle;
pub mod pipeline;
pub mod placement;
pub mod posterior;
pub mod priors;
pub mod report;

pub use error::{Error, Result};
