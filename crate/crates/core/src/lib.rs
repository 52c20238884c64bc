//! Bayesian hierarchical modelling of examiner agreement for periodontal
//! probing depths recorded in whole millimetres.
//!
//! The crate covers the calibration data model ([`data`]), synthetic studies
//! and a Monte Carlo truth oracle ([`simulate`]), Gibbs sampling for four
//! nested models ([`inference`]), convergence and model-comparison
//! diagnostics ([`diagnostics`]), agreement indices and their posterior
//! predictive estimates ([`agreement`]), and least-squares clustering of
//! site-level biases ([`clustering`]).

pub mod agreement;
pub mod censoring;
pub mod clustering;
pub mod data;
pub mod diagnostics;
pub mod inference;
pub mod numeric;
pub mod rng;
pub mod simulate;
