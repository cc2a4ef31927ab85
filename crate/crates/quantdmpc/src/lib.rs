//! Quantized distributed optimization for networked control.
//!
//! The crate covers the whole chain from a graph-structured parametric QP to a
//! closed-loop multi-vehicle simulation:
//!
//! * [`netqp`] describes the distributed problem and its convexity constants.
//! * [`quant`] provides the refined uniform quantizer and its wire codec.
//! * [`solver`] runs the quantized distributed projected-gradient method.
//! * [`design`] picks the quantization design that minimizes the certified bound.
//! * [`auv`], [`dmpc`] and [`sim`] build and run the multi-AUV formation example.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auv;
pub mod config;
pub mod design;
pub mod dmpc;
pub mod error;
pub mod linalg;
pub mod netqp;
pub mod oracle;
pub mod quant;
pub mod scalar;
pub mod sim;
pub mod solver;

pub use error::{Error, ErrorFamily, Result};
pub use config::RunConfig;
pub use scalar::Scalar;

/// Double-precision bound constants.
pub type BoundParams = design::BoundParams<f64>;
/// Double-precision quantization design.
pub type QuantizationDesign = design::QuantizationDesign<f64>;
/// Double-precision design search result.
pub type DesignSearch = design::DesignSearch<f64>;
/// Double-precision quantizer state.
pub type QuantizerState = quant::QuantizerState<f64>;
/// Double-precision refinement schedule.
pub type RefinementSchedule = quant::RefinementSchedule<f64>;
