use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::layout::FitData;
use super::model::ModelSpec;
use super::truncated::std_normal;
use crate::censoring::initial_log_depth;
use crate::numeric::{mean, variance};

/// Truncated stick-breaking state for one non-reference examiner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppState {
    /// Atom locations β*_m.
    pub atoms: Vec<f64>,
    /// Mixture weights w_m; nonnegative, summing to one.
    pub weights: Vec<f64>,
    /// Atom index per bias unit (0-based).
    pub alloc: Vec<u8>,
}

impl DppState {
    pub fn beta(&self, unit: usize) -> f64 {
        self.atoms[self.alloc[unit] as usize]
    }

    /// Number of units allocated to each atom.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut n = vec![0; self.atoms.len()];
        for &z in &self.alloc {
            n[z as usize] += 1;
        }
        n
    }
}

/// Complete Gibbs state of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub mu: f64,
    pub b: Vec<f64>,
    pub log_theta: Vec<f64>,
    pub sigma_b: f64,
    pub sigma_eps: f64,
    /// Error SDs for A, B, C and S; all equal under the shared-SD model.
    pub sigma: [f64; 4],
    /// Latent log observed depth per record.
    pub latent_log_t: Vec<f64>,
    /// Bias state for A, B and C; empty for models without bias.
    pub dpp: Vec<DppState>,
}

impl ChainState {
    /// Bias applied to a record (zero for the reference examiner and for
    /// bias-free models).
    pub fn record_bias(&self, fit: &FitData, record: usize) -> f64 {
        match (fit.record_unit[record], self.dpp.is_empty()) {
            (Some((ri, u)), false) => self.dpp[ri].beta(u),
            _ => 0.0,
        }
    }

    /// Mean of the latent log observed depth for a record.
    pub fn record_mean(&self, fit: &FitData, record: usize) -> f64 {
        self.log_theta[fit.record_site[record]] + self.record_bias(fit, record)
    }

    pub fn record_sd(&self, fit: &FitData, record: usize) -> f64 {
        self.sigma[fit.record_examiner[record]]
    }

    /// Number of latent values outside their censoring interval.
    pub fn censoring_violations(&self, fit: &FitData) -> usize {
        self.latent_log_t
            .iter()
            .zip(&fit.record_interval)
            .filter(|(t, (lo, hi))| !(**t >= *lo && **t < *hi))
            .count()
    }
}

/// Starting state for one chain.
///
/// Latent depths start at the log interval midpoints log(U + 0.5), site
/// depths at the mean of their two latent values and μ at the mean over all
/// records, with subject effects at zero. Standard deviations start at
/// data-based dispersions scaled by a chain-specific lognormal factor, which
/// makes chains overdispersed relative to each other. Every bias unit starts
/// on a first atom at zero; the remaining atoms are drawn from the base
/// distribution and stick weights from their prior, so additional classes
/// must be discovered from the data.
pub fn init_chain<R: Rng + ?Sized>(fit: &FitData, spec: &ModelSpec, rng: &mut R) -> ChainState {
    let latent_log_t: Vec<f64> = fit.record_depth.iter().map(|&u| initial_log_depth(u)).collect();
    let log_theta: Vec<f64> = fit
        .site_records
        .iter()
        .map(|[r0, r1]| 0.5 * (latent_log_t[*r0] + latent_log_t[*r1]))
        .collect();
    let mu = if latent_log_t.is_empty() { 0.0 } else { mean(&latent_log_t) };

    let upper = spec.sd_upper;
    let mut jitter = |base: f64| (base * (0.5 * std_normal(rng)).exp()).clamp(1e-3, 0.9 * upper);

    let subject_means: Vec<f64> = fit
        .subject_sites
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| mean(&s.iter().map(|&j| log_theta[j]).collect::<Vec<_>>()))
        .collect();
    let sd_or = |v: f64, fallback: f64| if v > 1e-6 { v.sqrt() } else { fallback };
    let sigma_b = jitter(sd_or(variance(&subject_means), 0.5));
    let within: Vec<f64> = log_theta
        .iter()
        .zip(&fit.site_subject)
        .map(|(t, &i)| t - subject_means.get(i).copied().unwrap_or(mu))
        .collect();
    let sigma_eps = jitter(sd_or(variance(&within), 0.5));
    let resid: Vec<f64> = latent_log_t
        .iter()
        .zip(&fit.record_site)
        .map(|(t, &j)| t - log_theta[j])
        .collect();
    let base_sigma = sd_or(variance(&resid), 0.2).max(0.05);
    let sigma = if spec.variant.shared_sigma() {
        [jitter(base_sigma); 4]
    } else {
        [jitter(base_sigma), jitter(base_sigma), jitter(base_sigma), jitter(base_sigma)]
    };

    let m = spec.atoms();
    let base_sd = spec.dpp.base_variance.sqrt();
    let dpp = if m == 0 {
        Vec::new()
    } else {
        fit.units
            .iter()
            .map(|units| {
                let mut atoms = vec![0.0; m];
                for a in atoms.iter_mut().skip(1) {
                    *a = spec.dpp.base_mean + base_sd * std_normal(rng);
                }
                DppState {
                    atoms,
                    weights: if m == 1 { vec![1.0] } else { prior_weights(rng, m, spec.dpp.alpha) },
                    alloc: vec![0; units.len()],
                }
            })
            .collect()
    };

    ChainState {
        mu,
        b: vec![0.0; fit.n_subjects],
        log_theta,
        sigma_b,
        sigma_eps,
        sigma,
        latent_log_t,
        dpp,
    }
}

/// Stick-breaking weights given per-atom counts: v_m ~ Beta(1 + n_m,
/// α + Σ_{l>m} n_l) for m < M, and the last weight takes the remainder.
pub fn stick_weights<R: Rng + ?Sized>(rng: &mut R, counts: &[usize], alpha: f64) -> Vec<f64> {
    let m = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut weights = Vec::with_capacity(m);
    let mut remaining = 1.0;
    for &n in &counts[..m - 1] {
        tail -= n;
        let v: f64 = Beta::new(1.0 + n as f64, alpha + tail as f64)
            .expect("positive beta parameters")
            .sample(rng);
        let w = remaining * v;
        weights.push(w);
        remaining -= w;
    }
    let rest: f64 = weights.iter().sum();
    weights.push((1.0 - rest).max(0.0));
    weights
}

pub fn prior_weights<R: Rng + ?Sized>(rng: &mut R, m: usize, alpha: f64) -> Vec<f64> {
    stick_weights(rng, &vec![0; m], alpha)
}
