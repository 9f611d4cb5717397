//! Semi-implicit graph variational auto-encoders.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that does not
//! touch the filesystem: a small dense reverse-mode AD engine, graph
//! utilities, the four inference networks (VGAE, SIG-VAE, naive SIVI and
//! planar-flow VGAE), the inner-product and Bernoulli-Poisson decoders, the
//! variational objectives, training loops and ranking metrics.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod config;
pub mod decoders;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod params;
pub mod rng;

pub use error::{Error, Result};
