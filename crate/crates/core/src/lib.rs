//! Grey-box component models, identification and simulation of a
//! polygeneration plant with stratified hot and cold storage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fit;
pub mod heat_rejection;
pub mod loads;
pub mod machines;
pub mod metrics;
pub mod plant;
pub mod storage;
pub mod timeseries;
pub mod units;

pub use error::{Error, Result};
