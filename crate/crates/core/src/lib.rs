//! Verification and experiment laboratory for robust generalization.
//!
//! Two halves share this crate. The verification half certifies the
//! inequalities of the robust-generalization toolkit against brute-force
//! oracles: exact Rademacher complexity of finite vector sets, local
//! extremal envelopes and the robust squared loss, and the closed-form gap
//! and lower bounds they feed. The experiment half reproduces the empirical
//! pipeline: train small networks to overfitting, measure the pairwise
//! empirical Lipschitz lower bound, and fit power-law scaling exponents in
//! dataset size and parameter count.

// Index-based loops are the clearer idiom for the in-place linear algebra
// kernels here.
#![allow(clippy::needless_range_loop)]

pub mod bounds;
pub mod dataset;
pub mod lipestimate;
pub mod matrix;
pub mod pwl;
pub mod rademacher;
pub mod rng;
pub mod robust_loss;
pub mod scalefit;
pub mod stats;
pub mod trainer;
pub mod verify;
