//! Streaming Conformer-Transducer inference kernels.
//!
//! Block-wise encoder with augmented-memory attention and weak-attention
//! suppression, a VGG front-end that runs incrementally, a segmenting stream
//! session, and a neural transducer (predictor, joiner, lattice loss, greedy
//! and beam decoding with shallow LM fusion).
//!
//! The crate is `no_std` and only needs `alloc`.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod attention;
pub mod encoder;
pub mod error;
pub mod params;
pub mod rng;
pub mod stream;
pub mod tensor;
pub mod transducer;

pub use error::{Error, Result};
pub use tensor::Matrix;
