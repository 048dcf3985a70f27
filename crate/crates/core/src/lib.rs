#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod compute;
pub mod engine;
pub mod error;
pub mod fabric;
pub mod metrics;
pub mod orchestrator;
pub mod scenario;
pub mod time;
pub mod workload;
