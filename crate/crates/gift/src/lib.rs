//! Group intention forecasting on multi-player annotation clips.
//!
//! The pipeline covers the full loop: a JSON annotation schema for 10-player
//! basketball clips ([`annotation`]), a deterministic scene synthesizer that
//! stands in for real footage ([`synth`]), feature tensor assembly with
//! orthonormal temporal DCT transforms ([`features`]), a dense-tensor
//! reverse-mode autodiff core with spatio-temporal graph convolution blocks
//! ([`nn`]), the encoder-decoder forecaster and its training loop ([`model`],
//! [`train`]), frame-level occurrence metrics ([`eval`]), and a CLI binding
//! everything together ([`cli`]).

pub mod annotation;
pub mod cli;
pub mod eval;
pub mod features;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;
