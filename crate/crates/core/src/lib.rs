#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity,
    clippy::too_many_arguments
)]

pub mod config;
pub mod control;
pub mod ensemble;
pub mod error;
pub mod noise;
pub mod regularization;
pub mod report;
pub mod spaces;
pub mod spde;
pub mod suites;

pub use error::{Error, Result};
