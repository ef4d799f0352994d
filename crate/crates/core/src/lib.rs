//! Tail scales, moment indices and moment determinacy of randomly stopped sums.
//!
// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod determinacy;
pub mod distributions;
pub mod ext;
pub mod moments;
pub mod rng;
pub mod scales;
pub mod stopped_sum;
pub mod zigzag;
