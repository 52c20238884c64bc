//! Convergence diagnostics, batch-means Monte Carlo standard errors and the
//! DIC₃ model-comparison criterion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::data::CalibrationDataset;
use crate::inference::{FitData, ModelVariant, PosteriorSamples};
use crate::numeric::{log_norm_interval, mean, quantile_sorted, variance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least 2 chains with 10 draws each, got {chains} chains of {draws}")]
    InsufficientChains { chains: usize, draws: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("predictive density of record {record} (subject {subject}, tooth {tooth}, site {site}) is 0 in every draw")]
    NumericalUnderflow {
        record: usize,
        subject: u32,
        tooth: u8,
        site: String,
    },
    #[error("samples do not match the dataset: {0}")]
    Mismatch(String),
    #[error("samples contain no draws")]
    NoDraws,
}

/// Potential scale reduction factor with the degrees-of-freedom correction
/// and the upper bound of its 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psrf {
    pub parameter: String,
    pub estimate: f64,
    pub upper: f64,
}

/// Corrected potential scale reduction factor of one scalar traced in
/// several chains of equal length.
pub fn gelman_rubin_chains(parameter: &str, chains: &[Vec<f64>]) -> Result<Psrf, DiagnosticsError> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m < 2 || n < 10 {
        return Err(DiagnosticsError::InsufficientChains { chains: m, draws: n });
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let (mf, nf) = (m as f64, n as f64);
    let s2: Vec<f64> = chains.iter().map(|c| variance(c)).collect();
    let xbar: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&s2);
    let b = nf * variance(&xbar);
    let done = |v: f64| {
        Ok(Psrf {
            parameter: parameter.to_string(),
            estimate: v,
            upper: v,
        })
    };
    if w == 0.0 {
        return if b == 0.0 { done(1.0) } else { done(f64::INFINITY) };
    }
    let muhat = mean(&xbar);
    let xbar2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let var_w = variance(&s2) / mf;
    let var_b = 2.0 * b * b / (mf - 1.0);
    let cov = |a: &[f64], c: &[f64]| {
        let (ma, mc) = (mean(a), mean(c));
        a.iter().zip(c).map(|(x, y)| (x - ma) * (y - mc)).sum::<f64>() / (a.len() - 1) as f64
    };
    let cov_wb = (nf / mf) * (cov(&s2, &xbar2) - 2.0 * muhat * cov(&s2, &xbar));
    let v = (nf - 1.0) / nf * w + (1.0 + 1.0 / mf) * b / nf;
    let var_v = ((nf - 1.0).powi(2) * var_w
        + (1.0 + 1.0 / mf).powi(2) * var_b
        + 2.0 * (nf - 1.0) * (1.0 + 1.0 / mf) * cov_wb)
        / (nf * nf);
    let df_adj = if var_v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };
    let b_df = mf - 1.0;
    let w_df = if var_w > 0.0 { 2.0 * w * w / var_w } else { f64::INFINITY };
    let r2_fixed = (nf - 1.0) / nf;
    let r2_random = (1.0 + 1.0 / mf) * (1.0 / nf) * (b / w);
    let f_q = if w_df.is_finite() && w_df < 1e8 {
        FisherSnedecor::new(b_df, w_df).expect("valid df").inverse_cdf(0.975)
    } else {
        ChiSquared::new(b_df).expect("valid df").inverse_cdf(0.975) / b_df
    };
    Ok(Psrf {
        parameter: parameter.to_string(),
        estimate: (df_adj * (r2_fixed + r2_random)).sqrt(),
        upper: (df_adj * (r2_fixed + f_q * r2_random)).sqrt(),
    })
}

/// PSRF of a named parameter (see [`PosteriorSamples::series`]).
pub fn gelman_rubin(samples: &PosteriorSamples, parameter: &str) -> Result<Psrf, DiagnosticsError> {
    let series = samples
        .series(parameter)
        .ok_or_else(|| DiagnosticsError::UnknownParameter(parameter.to_string()))?;
    gelman_rubin_chains(parameter, &series)
}

/// Batch-means Monte Carlo standard error of the sample mean. Batches have
/// ⌊√n⌋ draws; trailing draws that do not fill a batch are dropped. Returns
/// NaN with fewer than two full batches.
pub fn batch_means_se(values: &[f64]) -> f64 {
    batched(values, mean)
}

/// Batch-means standard error of the `p` quantile, using batch quantiles
/// around the quantile of the retained draws.
pub fn batch_quantile_se(values: &[f64], p: f64) -> f64 {
    batched(values, |v| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        quantile_sorted(&s, p)
    })
}

fn batched(values: &[f64], stat: impl Fn(&[f64]) -> f64) -> f64 {
    let n = values.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b == 0 {
        return f64::NAN;
    }
    let a = n / b;
    if a < 2 {
        return f64::NAN;
    }
    let kept = &values[..a * b];
    let overall = stat(kept);
    let ss: f64 = kept.chunks_exact(b).map(|c| (stat(c) - overall).powi(2)).sum();
    let sigma2 = b as f64 * ss / (a - 1) as f64;
    (sigma2 / (a * b) as f64).sqrt()
}

/// Standard error of a mean pooled over independent chains.
pub fn batch_means_se_chains(chains: &[Vec<f64>]) -> f64 {
    let total: usize = chains.iter().map(Vec::len).sum();
    let var: f64 = chains
        .iter()
        .map(|c| (c.len() as f64 / total as f64).powi(2) * batch_means_se(c).powi(2))
        .sum();
    var.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dic3Report {
    pub variant: ModelVariant,
    /// −4 · posterior mean of the log likelihood.
    pub expected_deviance: f64,
    /// 2 · Σ log of the posterior-mean cell probabilities.
    pub plug_in: f64,
    pub dic3: f64,
    pub n_draws: usize,
    pub n_observations: usize,
}

/// DIC₃ over every retained draw: each recorded depth contributes the
/// probability of its censoring cell under the draw's parameters.
pub fn dic3(samples: &PosteriorSamples, data: &CalibrationDataset) -> Result<Dic3Report, DiagnosticsError> {
    let fit = FitData::new(data);
    check_layout(samples, &fit)?;
    let n_draws = samples.total_draws();
    if n_draws == 0 {
        return Err(DiagnosticsError::NoDraws);
    }
    let draws: Vec<_> = samples.iter_draws().collect();
    let per_record: Vec<(f64, f64)> = (0..fit.n_records())
        .into_par_iter()
        .map(|r| {
            let (lo, hi) = fit.record_interval[r];
            let site = fit.record_site[r];
            let e = fit.record_examiner[r];
            let unit = fit.record_unit[r];
            let mut sum_log = 0.0;
            let mut sum_p = 0.0;
            for d in &draws {
                let beta = unit.map_or(0.0, |(ri, u)| d.beta(ri, u));
                let mean = d.log_theta()[site] as f64 + beta;
                let sd = d.sigma()[e];
                let lp = log_norm_interval((lo - mean) / sd, (hi - mean) / sd);
                sum_log += lp;
                sum_p += lp.exp();
            }
            (sum_log, sum_p / n_draws as f64)
        })
        .collect();
    let mut mean_loglik = 0.0;
    let mut log_fhat = 0.0;
    for (r, (sl, fhat)) in per_record.iter().enumerate() {
        if *fhat <= 0.0 {
            let rec = &data.records()[r];
            return Err(DiagnosticsError::NumericalUnderflow {
                record: r,
                subject: rec.subject,
                tooth: rec.site.tooth,
                site: rec.site.location.code().to_string(),
            });
        }
        mean_loglik += sl / n_draws as f64;
        log_fhat += fhat.ln();
    }
    let expected_deviance = -4.0 * mean_loglik;
    let plug_in = 2.0 * log_fhat;
    Ok(Dic3Report {
        variant: samples.spec.variant,
        expected_deviance,
        plug_in,
        dic3: expected_deviance + plug_in,
        n_draws,
        n_observations: fit.n_records(),
    })
}

pub(crate) fn check_layout(samples: &PosteriorSamples, fit: &FitData) -> Result<(), DiagnosticsError> {
    let l = &samples.layout;
    let units: Vec<Vec<usize>> = fit.units.iter().map(|u| u.sites.clone()).collect();
    if l.n_records != fit.n_records() || l.n_sites != fit.n_sites() || l.n_subjects != fit.n_subjects || l.unit_sites != units {
        return Err(DiagnosticsError::Mismatch(format!(
            "samples have {} records over {} sites, dataset has {} over {}",
            l.n_records,
            l.n_sites,
            fit.n_records(),
            fit.n_sites()
        )));
    }
    Ok(())
}

/// PSRF for every scalar parameter of a run.
pub fn convergence_summary(samples: &PosteriorSamples) -> Result<Vec<Psrf>, DiagnosticsError> {
    let mut names = samples.scalar_names();
    if samples.spec.variant == ModelVariant::Model0 {
        names.retain(|n| !matches!(n.as_str(), "sigma_B" | "sigma_C" | "sigma_S"));
    }
    names.iter().map(|n| gelman_rubin(samples, n)).collect()
}
