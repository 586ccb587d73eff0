//! Depth-guided spatial attention for RGB-D face identification.
//!
//! A guidance stream (depth, thermal, or any co-registered single-channel
//! raster) steers a spatial attention map over RGB convolutional features.
//! Everything runs on CPU from random initialization: tensors with a
//! reverse-mode tape, VGG-style dual backbones, feature pooling and
//! attention refinement, the ablation variants, Adam training, a synthetic
//! RGB-D identity generator, and an evaluation harness.

pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub mod attention;
pub mod backbone;
pub mod config;
pub mod model;
pub mod nn;
pub mod data;
pub mod optim;
pub mod eval;
pub mod gradcheck;
pub mod cli;
