//! Resilient distributed averaging in multi-agent networks with misbehaving nodes.
//!
//! Regular nodes run a competition-based update (Friedkin-Johnsen dynamics with a
//! tunable competition parameter `lambda`), while misbehaving nodes broadcast biased
//! and noisy versions of their observations. The crate provides:
//!
//! - [`graphs`]: communication-graph generation, partitioning and editing;
//! - [`numerics`]: the dense linear-algebra kernel (solves, symmetric eigendecompositions,
//!   discrete Lyapunov equations);
//! - [`dynamics`]: trajectory simulation of the consensus, FJ, W-MSR and SABA protocols
//!   plus a Monte Carlo estimator of the consensus error;
//! - [`analysis`]: closed-form steady-state performance (resolvent, error terms and their
//!   decomposition, derivatives, optimality conditions, optimal competition search);
//! - [`gramian`]: controllability-Gramian attack-energy metrics;
//! - [`netdesign`]: worst-case attacker search, connectivity sweeps and greedy
//!   almost-regular edge pruning;
//! - [`experiments`]: reproducible experiment drivers shared by the CLI and the
//!   browser demo.
//!
//! All randomized routines take explicit seeds or RNG state; results are reproducible
//! and independent of scheduling.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gramian;
pub mod graphs;
pub mod io;
pub mod netdesign;
pub mod numerics;
pub(crate) mod par;

pub use error::{Error, Result};
