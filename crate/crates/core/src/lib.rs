//! Continual representation finetuning on a frozen encoder.
//!
//! A pretrained transformer-style encoder stays frozen while low-rank
//! interventions edit its hidden representations: h + R^T(Wh + b - Rh).
//! The crate provides:
//! - `linalg`: deterministic dense matrix ops, seeded RNG, k-means
//! - `nn`: a small encoder with explicit forward/backward and checkpoints
//! - `reft`: the representation-editing algebra, its delta bound, and
//!   parameter accounting
//! - `continual`: TIL/DIL/CIL protocol execution, prototype classifiers,
//!   domain routing, and Avg/Last metrics
//! - `data`: synthetic task streams, class-imbalance sampling, IDX/CSV IO
//! - `verify`: randomized property suites backing `core-reft verify`
//! - `cli`: the `core-reft` command-line front end

pub mod cli;
pub mod container;
pub mod continual;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod reft;
pub mod verify;

pub use continual::{Scenario, TaskStream, TrainHyper};
pub use data::Dataset;
pub use error::{CoreError, Result};
pub use linalg::{Matrix, SeededRng, Vector};
pub use nn::{EncoderConfig, FrozenEncoder};
pub use reft::{InterventionConfig, InterventionParams, Interventions, Positions};
