// `!(x > 0.0)` guards double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod engine;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fabric;
pub mod metrics;
pub mod pfc;
pub mod qcn;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod traffic;
pub mod transport;
