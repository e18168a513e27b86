//! Core of a detector for diffusion-generated video.
//!
//! A frozen spatio-temporal backbone turns windows of frames into fixed-size
//! embeddings; a small trainable head maps each embedding to a
//! learned-prototype score, and a video is called fake when the sum of its
//! window scores is positive. This crate holds the numerical pieces and the
//! training/evaluation protocol. It is `no_std` (with `alloc`); file formats
//! and the command line live in the `vipera` crate.

#![no_std]

extern crate alloc;

pub mod backbone;
pub mod dataset;
pub mod error;
pub mod head;
pub mod metrics;
pub mod numcore;
pub mod sampler;
pub mod source;
pub mod trainer;

pub use error::{Error, Result};
pub use numcore::Matrix;
