// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Camera-aware hybrid depth/height lifting for bird's-eye-view perception.

pub mod bevfusion;
pub mod cli;
pub mod config;
pub mod binning;
pub mod distill;
pub mod geometry;
pub mod lifting;
pub mod oracle;
pub mod report;
pub mod tensor;
pub mod weights;
