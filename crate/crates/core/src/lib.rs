//! Monte Carlo valuation adjustments for centrally cleared and bilaterally
//! collateralized swap portfolios.
//!
//! The crate simulates a clearing house whose members trade a stylized
//! interest-rate swap, with correlated member defaults, margins, a default
//! fund waterfall and regulatory capital, and estimates the CVA, DVA, MVA,
//! MLA and KVA of a reference member.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capital;
pub mod credit_model;
pub mod error;
pub mod experiments;
pub mod margining;
pub mod market_model;
pub mod math;
pub mod rng;
pub mod xva_engine;

pub use error::{Error, Result};
