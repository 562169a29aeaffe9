// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod checkpoint;
pub mod congan;
pub mod domain;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod seeds;
pub mod simulate;
pub mod transfer;

pub use domain::*;
pub use error::{Error, Result};
