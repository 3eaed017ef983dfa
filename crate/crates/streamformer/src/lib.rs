//! File formats, decoding drivers, self-checks and the command-line tool
//! around `streamformer-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod decode;
pub mod error;
pub mod features;
pub mod model;
pub mod verify;
pub mod weights;
pub mod wer;

pub use error::{Error, Result};
