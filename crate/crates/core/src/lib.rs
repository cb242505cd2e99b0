//! Semantically consistent image-to-image translation with mean-teacher
//! consistency training for domain-adaptive segmentation, on procedural
//! two-domain toy scenes.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nets;
pub mod pipeline;
pub mod toyworld;
pub mod trainer;

pub use error::{Error, Result};
