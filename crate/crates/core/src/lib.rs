//! Sparse decentralized federated learning.
//!
//! Every node keeps an `s`-sparse model, talks to a random subset of its
//! neighbours every `kappa_i` ticks and exchanges one-bit compressed messages
//! (`norm`, `sign(Phi x)`). Gradients can be perturbed with the Gaussian
//! mechanism; the accountant tracks the composed `(epsilon, delta)` spend.
//!
//! The crate is organised bottom-up:
//!
//! * [`sparse`] – dense vectors/matrices and the hard-threshold projection.
//! * [`codec`] – one-bit compressive-sensing encoder/decoder and wire format.
//! * [`privacy`] – noise calibration, clipping and composition.
//! * [`topology`] – graphs, neighbour selection and mixing matrices.
//! * [`objectives`] – losses, synthetic data and LibSVM ingestion.
//! * [`node`] – the per-node CEPS state machine.
//! * [`simulator`] – round-based orchestration and metrics.
//! * [`baselines`] – D-PSGD family and DFedAvgM under the same harness.
//! * [`config`] / [`report`] – configuration files, sweeps and exports.

pub mod baselines;
pub mod codec;
pub mod config;
pub mod error;
pub mod node;
pub mod objectives;
pub mod privacy;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod sparse;
pub mod topology;

pub use error::{Error, Result};
pub use sparse::{Matrix, ModelVector, SparsityBudget};
