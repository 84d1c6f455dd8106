//! Desk-scale concept unlearning laboratory.
//!
//! A tiny autoregressive model memorizes a synthetic entity / relation /
//! attribute world; the unlearning engine then removes one entity together
//! with its attributions using self-generated triplets and sentences, and
//! the evaluation harness measures what was forgotten and what survived.

pub mod cli;
pub mod error;
pub mod eval;
pub mod extract;
pub mod losses;
pub mod model;
pub mod seed;
pub mod unlearn;
pub mod world;

pub use error::{Error, Result};
