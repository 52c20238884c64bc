use std::time::Instant;

use rayon::prelude::*;

use super::layout::FitData;
use super::model::ModelSpec;
use super::samples::{ChainSamples, PosteriorSamples, RunConfig, SampleLayout};
use super::state::init_chain;
use super::updates::sweep;
use super::InferenceError;
use crate::data::CalibrationDataset;
use crate::rng::{stream, Domain};

/// Runs independent chains in parallel and collects their retained draws.
///
/// Chain `c` draws from stream `c` of the master seed, so results do not
/// depend on the number of worker threads.
pub fn run_chains(data: &CalibrationDataset, spec: &ModelSpec, config: &RunConfig) -> Result<PosteriorSamples, InferenceError> {
    run_chains_on(&FitData::new(data), spec, config)
}

/// [`run_chains`] on a prepared layout; an empty layout samples the prior.
pub fn run_chains_on(fit: &FitData, spec: &ModelSpec, config: &RunConfig) -> Result<PosteriorSamples, InferenceError> {
    spec.validate()?;
    if config.n_chains == 0 {
        return Err(InferenceError::InvalidSpec("at least one chain is required".into()));
    }
    if config.thin == 0 {
        return Err(InferenceError::InvalidSpec("thinning interval must be at least 1".into()));
    }
    let layout = SampleLayout::from_fit(fit, spec);
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_one(fit, spec, config, &layout, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorSamples {
        spec: *spec,
        config: *config,
        layout,
        chains,
    })
}

fn run_one(
    fit: &FitData,
    spec: &ModelSpec,
    config: &RunConfig,
    layout: &SampleLayout,
    chain: usize,
) -> Result<ChainSamples, InferenceError> {
    let start = Instant::now();
    let mut rng = stream(config.seed, Domain::Chain, chain as u64);
    let mut state = init_chain(fit, spec, &mut rng);
    let mut out = ChainSamples::with_capacity(layout, config.n_keep, config.retain_latent);
    let total = config.burn_in + config.n_keep * config.thin;
    for it in 0..total {
        sweep(&mut state, fit, spec, &mut rng).map_err(|e| InferenceError::AtIteration {
            chain,
            iteration: it,
            source: Box::new(e),
        })?;
        if it >= config.burn_in && (it - config.burn_in + 1).is_multiple_of(config.thin) {
            out.push(&state, fit);
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}
