//! MCMC inference for the interval-censored examiner model.
//!
//! Latent log observed depths are imputed inside their censoring intervals,
//! which turns the multinomial likelihood into a Gaussian one and leaves
//! every other block conjugate.

mod layout;
mod model;
mod samples;
mod sampler;
mod state;
pub mod truncated;
pub mod updates;

use thiserror::Error;

pub use layout::{BiasUnits, FitData};
pub use model::{DppSpec, ModelSpec, ModelVariant};
pub use samples::{ChainSamples, DrawView, PosteriorSamples, RunConfig, SampleLayout};
pub use sampler::{run_chains, run_chains_on};
pub use state::{init_chain, prior_weights, stick_weights, ChainState, DppState};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("{sampler} sampler rejected {attempts} proposals in a row")]
    RejectionOverflow { sampler: &'static str, attempts: u64 },
    #[error("chain {chain}, iteration {iteration}: {source}")]
    AtIteration {
        chain: usize,
        iteration: usize,
        source: Box<InferenceError>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed samples: {0}")]
    Format(String),
}
