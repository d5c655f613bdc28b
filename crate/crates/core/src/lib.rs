//! Learning adaptive Cartesian k-space subsampling with policy gradients.
//!
//! The crate simulates single-coil Cartesian MRI acquisition on real-valued
//! images, trains a small convolutional policy that picks the next k-space
//! column to measure, and provides the analysis tooling used to compare the
//! greedy and non-greedy estimators: non-learned baselines and oracles,
//! policy mutual information, and gradient signal-to-noise ratios.
//!
//! Module map:
//!
//! - [`kspace`]: images, centered orthonormal 2-D DFT, column masks.
//! - [`recon`]: the reconstruction interface (zero-filled and precomputed tables).
//! - [`metrics`]: SSIM, PSNR and the per-step reward.
//! - [`policynet`]: the policy network, its reverse-mode gradients, Adam and checkpoints.
//! - [`estimators`]: greedy and non-greedy policy-gradient estimators, training and evaluation.
//! - [`baselines`]: random, equispaced and oracle schedules.
//! - [`diagnostics`]: entropies, mutual information and gradient SNR.
//! - [`datagen`]: synthetic phantoms, PGM I/O and dataset splits.

pub mod baselines;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod kspace;
pub mod metrics;
pub mod policynet;
pub mod recon;
pub mod seeding;

pub use error::{Error, Result};
