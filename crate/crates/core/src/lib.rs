pub mod error;
pub mod autoencoder;
pub mod cli;
pub mod config;
pub mod detectors;
pub mod evaluation;
pub mod fronthaul;
pub mod selftest;
pub mod signal_model;

pub use error::{Error, Result};
