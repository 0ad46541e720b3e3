#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Open-vocabulary 3D segmentation of posed RGB-D sequences.

pub mod cloud;
pub mod config;
pub mod error;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod region;
pub mod studies;
pub mod synth;
pub mod views;

pub use error::{Error, Result};
