//! Posterior-predictive agreement: replicate datasets simulated at the
//! observed design from retained posterior draws.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    observed_agreement, pair_record_indices, subjects_for, AgreementError, AgreementRow, AgreementTable, Indices,
    JointCounts, PairKey,
};
use crate::censoring::censor;
use crate::data::{CalibrationDataset, Examiner, ExaminerPair};
use crate::diagnostics::batch_quantile_se;
use crate::inference::{FitData, PosteriorSamples};
use crate::numeric::quantile_sorted;
use crate::rng::{stream, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictiveOptions {
    pub n_rep: usize,
    pub seed: u64,
    /// Draw posterior states with replacement even when enough distinct
    /// draws exist.
    pub with_replacement: bool,
    /// Redraw every site's log θ from N(μ + b_i, σ_ε²) of the posterior
    /// state instead of reusing the state's site depths.
    pub regenerate_depths: bool,
}

impl PredictiveOptions {
    pub fn new(n_rep: usize, seed: u64) -> Self {
        PredictiveOptions {
            n_rep,
            seed,
            with_replacement: false,
            regenerate_depths: false,
        }
    }
}

/// Median and equal-tailed 95% interval of one index across replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Batch-means standard error of the median, on the index's natural
    /// scale (proportions for the percentage indices, then multiplied by
    /// 100 to match the reported unit).
    pub mcse_median: f64,
    pub n_used: usize,
    /// Replicates whose index was undefined.
    pub n_dropped: usize,
}

impl IntervalEstimate {
    fn from_values(values: &[f64], n_total: usize, scale: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let unit: Vec<f64> = values.iter().map(|v| v / scale).collect();
        let se = batch_quantile_se(&unit, 0.5);
        Some(IntervalEstimate {
            median: quantile_sorted(&sorted, 0.5),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
            mcse_median: if se.is_nan() { 0.0 } else { se * scale },
            n_used: values.len(),
            n_dropped: n_total - values.len(),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub kappa: Option<IntervalEstimate>,
    pub p_exact: IntervalEstimate,
    pub p_within1: IntervalEstimate,
}

impl PredictiveSummary {
    /// Largest batch-means standard error among the three medians, with
    /// percentages expressed as proportions.
    pub fn max_mcse(&self) -> f64 {
        let k = self.kappa.map_or(0.0, |k| k.mcse_median);
        k.max(self.p_exact.mcse_median / 100.0).max(self.p_within1.mcse_median / 100.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveAgreement {
    pub table: AgreementTable,
    pub n_rep: usize,
    /// Whether posterior draws were sampled with replacement.
    pub resampled: bool,
    /// Per table row, the indices of every replicate in replicate order.
    pub replicates: Vec<(PairKey, Vec<Indices>)>,
}

/// Simulates `n_rep` recorded datasets at the observed design and summarises
/// the agreement indices of every examiner pair and of every examiner
/// against the censored true depth.
///
/// Replicate `r` takes the pooled draw `⌊r·D/n_rep⌋` when `n_rep ≤ D`
/// (distinct draws, in order, spread over all chains); otherwise, or when
/// requested, draws are picked uniformly with replacement. Each replicate
/// regenerates measurement noise and censoring from its own random stream;
/// its truth rows compare each examiner's simulated depths with the censored
/// θ of the same posterior state (or of the regenerated depths when
/// `regenerate_depths` is set).
pub fn posterior_predictive_agreement(
    samples: &PosteriorSamples,
    data: &CalibrationDataset,
    options: &PredictiveOptions,
) -> Result<PredictiveAgreement, AgreementError> {
    let fit = FitData::new(data);
    crate::diagnostics::check_layout(samples, &fit).map_err(|e| AgreementError::Mismatch(e.to_string()))?;
    let total = samples.total_draws();
    if total == 0 {
        return Err(AgreementError::NoDraws);
    }
    let n_rep = options.n_rep;
    let resampled = options.with_replacement || n_rep > total;

    let keys = PairKey::table_order();
    let pair_indices: Vec<(PairKey, Vec<[usize; 2]>)> = ExaminerPair::TABLE_ORDER
        .iter()
        .map(|&p| (PairKey::Pair(p), pair_record_indices(data, p)))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    let examiner_records: Vec<(PairKey, Vec<usize>)> = Examiner::ALL
        .iter()
        .map(|&e| {
            let recs = (0..fit.n_records()).filter(|&r| fit.record_examiner[r] == e.index()).collect();
            (PairKey::Truth(e), recs)
        })
        .filter(|(_, v): &(PairKey, Vec<usize>)| !v.is_empty())
        .collect();
    let active: Vec<PairKey> = keys
        .iter()
        .copied()
        .filter(|k| pair_indices.iter().any(|(p, _)| p == k) || examiner_records.iter().any(|(p, _)| p == k))
        .collect();

    let per_rep: Vec<Vec<Indices>> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(options.seed, Domain::Predictive, r as u64);
            let idx = if resampled {
                rng.random_range(0..total)
            } else {
                (r as u128 * total as u128 / n_rep as u128) as usize
            };
            let draw = samples.pooled(idx);
            let theta: Vec<f64> = if options.regenerate_depths {
                (0..fit.n_sites())
                    .map(|j| {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        draw.mu() + draw.b()[fit.site_subject[j]] + draw.sigma_eps() * z
                    })
                    .collect()
            } else {
                draw.log_theta().iter().map(|&t| t as f64).collect()
            };
            let sigma = draw.sigma();
            let depth: Vec<u8> = (0..fit.n_records())
                .map(|rec| {
                    let beta = fit.record_unit[rec].map_or(0.0, |(ri, u)| draw.beta(ri, u));
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    let lt = theta[fit.record_site[rec]] + beta + sigma[fit.record_examiner[rec]] * z;
                    censor(lt.exp())
                })
                .collect();
            let mut out = Vec::with_capacity(active.len());
            for (_, idx) in &pair_indices {
                let c = JointCounts::from_pairs(idx.iter().map(|[a, b]| (depth[*a], depth[*b])));
                out.push(Indices::from_counts(&c));
            }
            for (_, recs) in &examiner_records {
                let c = JointCounts::from_pairs(
                    recs.iter()
                        .map(|&rec| (depth[rec], censor(theta[fit.record_site[rec]].exp()))),
                );
                out.push(Indices::from_counts(&c));
            }
            out
        })
        .collect();

    let order: Vec<PairKey> = pair_indices
        .iter()
        .map(|(k, _)| *k)
        .chain(examiner_records.iter().map(|(k, _)| *k))
        .collect();
    let observed = observed_agreement(data);
    let mut rows = Vec::new();
    let mut replicates = Vec::new();
    for key in &active {
        let col = order.iter().position(|k| k == key).expect("active key");
        let series: Vec<Indices> = per_rep.iter().map(|v| v[col]).collect();
        let kappas: Vec<f64> = series.iter().filter_map(|i| i.kappa).collect();
        let exact: Vec<f64> = series.iter().map(|i| i.p_exact).collect();
        let within: Vec<f64> = series.iter().map(|i| i.p_within1).collect();
        let predictive = match (
            IntervalEstimate::from_values(&exact, n_rep, 100.0),
            IntervalEstimate::from_values(&within, n_rep, 100.0),
        ) {
            (Some(p_exact), Some(p_within1)) => Some(PredictiveSummary {
                kappa: IntervalEstimate::from_values(&kappas, n_rep, 1.0),
                p_exact,
                p_within1,
            }),
            _ => None,
        };
        let (n_subjects, n_sites) = subjects_for(data, *key);
        rows.push(AgreementRow {
            pair: *key,
            n_subjects,
            n_sites,
            observed: observed.row(*key).and_then(|r| r.observed),
            predictive,
        });
        replicates.push((*key, series));
    }
    Ok(PredictiveAgreement {
        table: AgreementTable { rows },
        n_rep,
        resampled,
        replicates,
    })
}
