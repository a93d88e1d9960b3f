#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod eval;
pub mod exec;
pub mod experiment;
pub mod geometry;
pub mod hierarchy;
pub mod image;
pub mod localize;
pub mod losses;
pub mod net;
pub mod pose;
pub mod sparse;
pub mod synth;
pub mod train;
