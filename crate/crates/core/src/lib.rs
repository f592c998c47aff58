//! Quantizing compiler for small feed-forward neural networks.
//!
//! The pipeline parses a network description, resolves every edge to a
//! concrete fixed-point or minifloat format, folds nonlinear activations
//! into constant lookup tables, and then either simulates the result
//! bit-accurately, emits portable integer-only C source for HLS tools, or
//! estimates the hardware it would need.

pub mod actlut;
pub mod dyadic;
pub mod emit;
pub mod estimate;
pub mod fixnum;
pub mod format;
pub mod minifloat;
pub mod model;
pub mod sim;

pub use dyadic::Dyadic;
pub use fixnum::{FxFormat, FxValue, Overflow, Rounding};
pub use format::{FormatError, NumFormat, Scalar};
pub use minifloat::{MfFormat, MfValue};
pub use model::{build_ir, parse_model, ConfigError, ModelError, NetworkModel, QuantConfig, TypedIr};
