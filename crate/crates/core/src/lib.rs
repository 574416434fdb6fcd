//! Bosonic grid-state generation and loss benchmarking in a truncated Fock space.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod gates;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod logical;
pub mod metrics;
pub mod noise;
pub mod optimize;
pub mod protocol;
pub mod qec;
pub mod spectrum;

pub use error::{Error, Result};
