//! PS8-Net: a from-scratch convolutional engine for eight-state protein
//! secondary structure prediction.
//!
//! The crate bundles a small reverse-mode autodiff tape ([`tape`], [`ops`]),
//! the network's building blocks ([`model`]), the CullPDB-style data pipeline
//! ([`data`]), the optimization loop ([`train`]) and Q8 evaluation together
//! with the ablation harnesses ([`eval`]).

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod labels;
pub mod model;
pub mod ops;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tape::{Mode, OpKind, Tape, Var};
pub use tensor::Tensor;
