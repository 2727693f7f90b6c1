// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod control;
pub mod error;
pub mod harness;
pub mod meta;
pub mod model;
pub mod numerics;
pub mod online;
pub mod rng;
