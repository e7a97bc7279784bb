//! Seeded Monte Carlo experiments and run manifests.
//!
//! Every sample draws from its own substream `derive_seed(master, [κ-index,
//! sample-index])` and results are collected in index order, so outputs do
//! not depend on the number of worker threads.

pub mod experiments;
pub mod manifest;
pub mod stats;

pub use experiments::*;
pub use manifest::{OutputDigest, RunManifest, SubstreamSeed};
