#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anatomy;
pub mod camera;
pub mod cli;
pub mod error;
pub mod features;
pub mod image;
pub mod io;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod synth;
pub mod target;

pub use error::{Error, Result};
