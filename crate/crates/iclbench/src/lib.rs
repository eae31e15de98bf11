//! Tabular workbench for constrained reinforcement learning and inverse
//! constraint learning.
//!
//! Everything runs on finite-horizon tabular MDPs with exact solvers, so the
//! usual learning-curve noise of deep RL is absent: constrained RL is solved
//! by Lagrangian dual ascent over exact backward-induction best responses,
//! and constraints are learned from expert demonstrations by a no-regret
//! constraint player (FTRL over a feature-linear class) playing against those
//! solvers.
//!
//! Module map:
//!
//! - [`mdp`] — dynamics, policies, occupancy measures, values, trajectory
//!   sampling, JSON formats.
//! - [`solvers`] — exact RL / entropy-regularized RL best responses and the
//!   constrained-RL game with classic and PID dual updates.
//! - [`constraints`] — feature maps, linear constraint classes, projections,
//!   FTRL and regression-style constraint updates.
//! - [`icl`] — the single-task inverse-constraint-learning loop, per-round
//!   losses, regret accounting and validation selection.
//! - [`mticl`] — the multi-task loop, the restricted constraint class, the
//!   sample-complexity calculator and assumption diagnostics.
//! - [`identify`] — geometric identifiability via occupancy-difference null
//!   spaces, saturation and mixture-independence checks.
//! - [`envs`] — built-in environments (velocity / position / maze analogs),
//!   ground-truth constraints, expert generation, task distributions.
//! - [`harness`] — run configs, the CLI pipelines, metrics CSV emission, and
//!   the single-shot regression baseline.

pub mod constraints;
pub mod envs;
pub mod error;
pub mod harness;
pub mod icl;
pub mod identify;
pub mod mdp;
pub mod mticl;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
