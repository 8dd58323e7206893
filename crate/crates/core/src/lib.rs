//! Learned binary Hamming codes for re-identification over precomputed embeddings.
//!
//! The pipeline is:
//!
//! 1. [`dataset`] loads or synthesizes labeled embedding rows and draws
//!    identity-balanced `P x K1` batches.
//! 2. [`model`] maps rows through a trainable adapter into a feature `f`,
//!    a continuous hash vector `h` and identity logits.
//! 3. [`solver`] alternates between AMSGrad steps on the network
//!    ([`losses`], [`optimizer`]), a closed-form update of the code classifier
//!    `W_h` and a discrete cyclic coordinate descent sweep over the code matrix `B`.
//! 4. [`hamming`] packs sign codes into 64-bit words and ranks galleries by
//!    XOR/popcount distance; [`metrics`] scores rankings with CMC and mAP;
//!    [`bench`] times packed scans against float scans.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod hamming;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod parallel;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
