//! File formats, dataset loading and the command-line pipeline around
//! [`sigvae_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod splitfile;

pub use error::{Error, Result};
pub use sigvae_core as core;
