// `!(x > 0.0)` is used on purpose: it rejects NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod budget;
pub mod config;
pub mod domain;
pub mod error;
pub mod exact;
pub mod fit;
pub mod holder;
pub mod kernel;
pub mod mollify;
pub mod pipeline;
pub mod solver;
pub mod taylor;
