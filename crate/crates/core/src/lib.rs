//! Phenotype-structured tumour–immune dynamics.
//!
//! The tumour density `n(t, x)` and the effector (`ℓ`) and precursor (`p`)
//! immune densities live on phenotype axes `x, y ∈ [0, 1]`. The crate
//! integrates the integro-differential system on a uniform grid, computes the
//! long-time limit predicted for a concentrating tumour, integrates the
//! three-variable ODE reduction, and classifies outcomes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod ide;
pub mod model;
pub mod ode;

pub use error::{Error, Result};
pub use grid::{FunctionSpec, PhenotypeGrid};
pub use model::{DiscreteModel, ModelParams};
