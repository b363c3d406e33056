//! Contrastive alignment of single-pixel satellite time series with
//! ground-level image embeddings.
//!
//! A temporal transformer encodes a spectral-temporal cube; an attention pool
//! fuses four directional ground embeddings; a queue-based InfoNCE loss pulls
//! the two together. Evaluation covers zero-shot classification from prompt
//! embeddings, cross-view retrieval, scenicness rank correlation and a linear
//! probe. Ground and text embeddings enter as precomputed vectors.
//!
//! The `sits-align` binary wraps every stage; see [`cli`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod config;
pub mod contrastive;
pub mod datamodel;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
