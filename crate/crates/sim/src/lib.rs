//! Scenario files, trace records and parameter sweeps for the AI-RAN site
//! simulator in `airan-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod records;
pub mod sweep;
