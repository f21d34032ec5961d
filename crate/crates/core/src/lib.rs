//! Deterministic construction of deep threshold networks that memorize
//! δ-separated binary-labelled datasets.
//!
//! The pipeline lives in [`construct`]: a Gaussian hyperplane coding layer,
//! a GF(2) compression subnetwork built from XOR gadgets, a prefix-trie
//! selector, and an up-projection followed by a √n-wide memorization layer.
//! [`netcore`] holds the network model itself, [`geometry`] the datasets,
//! [`lowerbound`] the clustered-sphere harness and [`capacity`] the
//! bit-complexity calculator.

pub mod capacity;
pub mod construct;
pub mod error;
pub mod geometry;
pub mod lowerbound;
pub mod netcore;
pub mod rng;

pub use error::{Error, Result};
