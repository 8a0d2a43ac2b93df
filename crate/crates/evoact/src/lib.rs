//! Evolves scalar activation functions for feedforward neural networks with
//! genetic programming, co-evolving a weight-initialization gene alongside
//! each function tree.
//!
//! An individual is a pair of genes: an expression tree built from a fixed
//! set of unary/binary primitives over the scalar input `x`, and a nominal
//! weight-initialization scheme. Fitness comes from training a small network
//! that uses the tree as its hidden activation, measured on a held-out
//! validation split. Winners are retrained, tested repeatedly, and compared
//! against ReLU/ELU/SELU baselines with a Tukey HSD significance test.
//!
//! Start with the runnable programs under `examples/`, or the `evoact`
//! binary for the batch workflow (`evolve`, `baseline`, `compare`, `props`,
//! `synth` subcommands).

pub mod config;
pub mod data;
pub mod evolution;
pub mod experiment;
pub mod expr;
pub mod genome;
pub mod init;
pub mod nn;
pub mod props;
pub mod rng;
pub mod stats;

pub use config::ExperimentConfig;
pub use expr::{ActivationTree, DualValue, NonFinite};
pub use genome::Chromosome;
pub use init::InitScheme;
pub use props::PropertyVector;
