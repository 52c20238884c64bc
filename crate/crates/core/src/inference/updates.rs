//! Gibbs full-conditional updates. Each `*_conditional` function returns the
//! exact normal full conditional that the matching update draws from, so
//! tests can check the algebra independently of the random draws.

use rand::Rng;

use super::layout::FitData;
use super::model::ModelSpec;
use super::state::{stick_weights, ChainState};
use super::truncated::{sample_sd, std_normal, truncated_normal};
use super::InferenceError;

/// Redraws every latent log observed depth from its normal conditional
/// restricted to the record's censoring interval.
pub fn update_latent_t<R: Rng + ?Sized>(state: &mut ChainState, fit: &FitData, rng: &mut R) {
    for r in 0..fit.n_records() {
        let (lo, hi) = fit.record_interval[r];
        let mean = state.record_mean(fit, r);
        let sd = state.record_sd(fit, r);
        state.latent_log_t[r] = truncated_normal(rng, mean, sd, lo, hi);
    }
}

/// Full conditional (mean, variance) of log θ at `site`: prior
/// N(μ + b_i, σ_ε²) combined with each replicate's bias-corrected latent
/// value.
pub fn theta_conditional(state: &ChainState, fit: &FitData, site: usize) -> (f64, f64) {
    let prior_prec = state.sigma_eps.powi(-2);
    let mut prec = prior_prec;
    let mut weighted = prior_prec * (state.mu + state.b[fit.site_subject[site]]);
    for &r in &fit.site_records[site] {
        let p = state.record_sd(fit, r).powi(-2);
        prec += p;
        weighted += p * (state.latent_log_t[r] - state.record_bias(fit, r));
    }
    (weighted / prec, 1.0 / prec)
}

/// Full conditional of μ after integrating out the subject effects:
/// each subject mean of log θ is N(μ, σ_b² + σ_ε²/m_i).
pub fn mu_conditional(state: &ChainState, fit: &FitData, spec: &ModelSpec) -> (f64, f64) {
    let mut prec = 1.0 / spec.prior_mu_variance;
    let mut weighted = spec.prior_mu_mean * prec;
    let (vb, ve) = (state.sigma_b.powi(2), state.sigma_eps.powi(2));
    for sites in &fit.subject_sites {
        if sites.is_empty() {
            continue;
        }
        let m = sites.len() as f64;
        let ybar = sites.iter().map(|&j| state.log_theta[j]).sum::<f64>() / m;
        let p = 1.0 / (vb + ve / m);
        prec += p;
        weighted += p * ybar;
    }
    (weighted / prec, 1.0 / prec)
}

/// Full conditional of subject effect `b_i` given μ and log θ.
pub fn b_conditional(state: &ChainState, fit: &FitData, subject: usize) -> (f64, f64) {
    let sites = &fit.subject_sites[subject];
    let ve = state.sigma_eps.powi(2);
    let prec = state.sigma_b.powi(-2) + sites.len() as f64 / ve;
    let resid: f64 = sites.iter().map(|&j| state.log_theta[j] - state.mu).sum();
    (resid / ve / prec, 1.0 / prec)
}

/// Redraws log θ for every site, then (μ, b) jointly: μ from its marginal
/// conditional and each b_i given μ.
pub fn update_theta_level<R: Rng + ?Sized>(state: &mut ChainState, fit: &FitData, spec: &ModelSpec, rng: &mut R) {
    for j in 0..fit.n_sites() {
        let (m, v) = theta_conditional(state, fit, j);
        state.log_theta[j] = m + v.sqrt() * std_normal(rng);
    }
    let (m, v) = mu_conditional(state, fit, spec);
    state.mu = m + v.sqrt() * std_normal(rng);
    for i in 0..fit.n_subjects {
        let (m, v) = b_conditional(state, fit, i);
        state.b[i] = m + v.sqrt() * std_normal(rng);
    }
}

/// Residual count and sum of squares feeding each variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceStats {
    pub sigma_b: (usize, f64),
    pub sigma_eps: (usize, f64),
    /// Per examiner; under a shared SD every entry holds the pooled total.
    pub sigma: [(usize, f64); 4],
}

pub fn variance_stats(state: &ChainState, fit: &FitData, spec: &ModelSpec) -> VarianceStats {
    let sigma_b = (fit.n_subjects, state.b.iter().map(|b| b * b).sum());
    let eps_ss = (0..fit.n_sites())
        .map(|j| (state.log_theta[j] - state.mu - state.b[fit.site_subject[j]]).powi(2))
        .sum();
    let mut sigma = [(0usize, 0.0f64); 4];
    for r in 0..fit.n_records() {
        let e = fit.record_examiner[r];
        sigma[e].0 += 1;
        sigma[e].1 += (state.latent_log_t[r] - state.record_mean(fit, r)).powi(2);
    }
    if spec.variant.shared_sigma() {
        let pooled = sigma.iter().fold((0, 0.0), |(n, s), (n2, s2)| (n + n2, s + s2));
        sigma = [pooled; 4];
    }
    VarianceStats {
        sigma_b,
        sigma_eps: (fit.n_sites(), eps_ss),
        sigma,
    }
}

/// Redraws σ_b, σ_ε and the examiner SDs under their uniform priors.
pub fn update_variances<R: Rng + ?Sized>(
    state: &mut ChainState,
    fit: &FitData,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<(), InferenceError> {
    let st = variance_stats(state, fit, spec);
    let upper = spec.sd_upper;
    state.sigma_b = sample_sd(rng, st.sigma_b.0, st.sigma_b.1, upper)?;
    state.sigma_eps = sample_sd(rng, st.sigma_eps.0, st.sigma_eps.1, upper)?;
    if spec.variant.shared_sigma() {
        let s = sample_sd(rng, st.sigma[0].0, st.sigma[0].1, upper)?;
        state.sigma = [s; 4];
    } else {
        for e in 0..4 {
            state.sigma[e] = sample_sd(rng, st.sigma[e].0, st.sigma[e].1, upper)?;
        }
    }
    Ok(())
}

/// Residuals log T − log θ of one examiner's records at one bias unit.
fn unit_residuals<'a>(state: &'a ChainState, fit: &'a FitData, rater: usize, unit: usize) -> impl Iterator<Item = f64> + 'a {
    fit.units[rater].records[unit]
        .iter()
        .map(move |&r| state.latent_log_t[r] - state.log_theta[fit.record_site[r]])
}

/// Full conditional of atom `m` of `rater`, or `None` when no unit is
/// allocated to it (the atom then follows the base distribution).
pub fn atom_conditional(state: &ChainState, fit: &FitData, spec: &ModelSpec, rater: usize, m: usize) -> Option<(f64, f64)> {
    let dpp = &state.dpp[rater];
    let sd = state.sigma[fit.units[rater].examiner.index()];
    let (mut n, mut sum) = (0usize, 0.0);
    for (u, &z) in dpp.alloc.iter().enumerate() {
        if z as usize == m {
            for r in unit_residuals(state, fit, rater, u) {
                n += 1;
                sum += r;
            }
        }
    }
    if n == 0 {
        return None;
    }
    let prior_prec = 1.0 / spec.dpp.base_variance;
    let p = sd.powi(-2);
    let prec = prior_prec + n as f64 * p;
    Some(((prior_prec * spec.dpp.base_mean + p * sum) / prec, 1.0 / prec))
}

/// Log allocation probabilities (unnormalised) of one unit over the atoms.
pub fn allocation_log_weights(state: &ChainState, fit: &FitData, rater: usize, unit: usize) -> Vec<f64> {
    let dpp = &state.dpp[rater];
    let sd = state.sigma[fit.units[rater].examiner.index()];
    let half_prec = 0.5 / (sd * sd);
    let resid: Vec<f64> = unit_residuals(state, fit, rater, unit).collect();
    dpp.atoms
        .iter()
        .zip(&dpp.weights)
        .map(|(&a, &w)| w.ln() - half_prec * resid.iter().map(|r| (r - a).powi(2)).sum::<f64>())
        .collect()
}

fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, logw: &[f64]) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Blocked Gibbs update of the bias mixture: allocations, then atoms, then
/// stick weights. With a single atom only the atom moves, which is the
/// constant-bias model.
pub fn update_dpp<R: Rng + ?Sized>(state: &mut ChainState, fit: &FitData, spec: &ModelSpec, rng: &mut R) {
    let base_sd = spec.dpp.base_variance.sqrt();
    for rater in 0..state.dpp.len() {
        let m = state.dpp[rater].atoms.len();
        if m > 1 {
            for u in 0..fit.units[rater].len() {
                let logw = allocation_log_weights(state, fit, rater, u);
                state.dpp[rater].alloc[u] = sample_log_categorical(rng, &logw) as u8;
            }
        }
        for k in 0..m {
            let (mean, var) = atom_conditional(state, fit, spec, rater, k).unwrap_or((spec.dpp.base_mean, base_sd * base_sd));
            state.dpp[rater].atoms[k] = mean + var.sqrt() * std_normal(rng);
        }
        if m > 1 {
            let counts = state.dpp[rater].occupancy();
            state.dpp[rater].weights = stick_weights(rng, &counts, spec.dpp.alpha);
        }
    }
}

/// One full sweep in the fixed order latent depths, depth level, variances,
/// bias mixture.
pub fn sweep<R: Rng + ?Sized>(state: &mut ChainState, fit: &FitData, spec: &ModelSpec, rng: &mut R) -> Result<(), InferenceError> {
    update_latent_t(state, fit, rng);
    update_theta_level(state, fit, spec, rng);
    update_variances(state, fit, spec, rng)?;
    if spec.variant.has_bias() {
        update_dpp(state, fit, spec, rng);
    }
    debug_assert_eq!(state.censoring_violations(fit), 0, "latent depth left its censoring interval");
    Ok(())
}
