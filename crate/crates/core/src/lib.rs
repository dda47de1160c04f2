//! Numerical toolkit for a Bayesian reading of quantum measurement.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense complex matrices at small dimension (eigen-decomposition,
//!   operator functions, polar decomposition, tensor products, partial traces).
//! * [`effects`] POVMs, the minimal informationally complete construction,
//!   frame functions and state reconstruction, the certainty bound.
//! * [`states`] density operators and their probability-vector representation
//!   over a fixed standard measurement; classical conditioning.
//! * [`update`] Kraus instruments, refinement/readjustment factorisation,
//!   dilations, channels and Choi matrices, remote steering, teleportation.
//! * [`entropy`] Shannon, von Neumann, subentropy and mean measurement entropy.
//! * [`locality`] local POVM trees, bilinear frame functions, joint-operator
//!   reconstruction and its counterexamples.
//! * [`definetti`] exchangeable states, posterior updating over state priors,
//!   prior merging and the real-Hilbert-space counterexample.
//!
//! Every random routine takes an explicit RNG or seed; see [`rng`].

pub mod definetti;
pub mod effects;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod locality;
pub mod rng;
pub mod states;
pub mod update;

pub use error::{Error, Result};
pub use linalg::{Matrix, C64};
pub use states::DensityOperator;
