//! Posterior partition inference over the site-level biases of one examiner:
//! pairwise co-clustering frequencies, the least-squares draw, and
//! characterisation of the resulting classes.
//!
//! Co-clustering is stored as exact integer counts `c_{ℓℓ'}` out of `D`
//! draws, so Δ = c / D is never rounded and the least-squares loss
//! `Σ (δ − Δ)²` is evaluated exactly as `Σ (D·δ − c)² / D²`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CalibrationDataset, Examiner, Location, ToothClass, MAX_DEPTH, N_CATEGORIES};
use crate::inference::{FitData, PosteriorSamples};
use crate::numeric::quantile_sorted;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("partition draws disagree on the number of sites: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no partition draws")]
    Empty,
    #[error("class {0} does not exist")]
    UnknownClass(usize),
    #[error("samples hold no allocations for examiner {0}")]
    NoAllocations(String),
    #[error("samples do not match the dataset: {0}")]
    Mismatch(String),
}

/// Class labels of the L sites of one examiner in one posterior draw.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionDraw {
    pub labels: Vec<u32>,
}

/// Allocation partitions of a non-reference examiner, pooled over chains.
pub fn partition_draws(samples: &PosteriorSamples, examiner: Examiner) -> Result<Vec<PartitionDraw>, ClusterError> {
    let r = examiner
        .rater_index()
        .ok_or_else(|| ClusterError::NoAllocations(examiner.to_string()))?;
    if samples.layout.atoms == 0 {
        return Err(ClusterError::NoAllocations(examiner.to_string()));
    }
    Ok(samples
        .iter_draws()
        .map(|d| PartitionDraw {
            labels: d.alloc(r).iter().map(|&z| z as u32 + 1).collect(),
        })
        .collect())
}

fn check_dims(draws: &[PartitionDraw]) -> Result<usize, ClusterError> {
    let first = draws.first().ok_or(ClusterError::Empty)?;
    let l = first.labels.len();
    for d in draws {
        if d.labels.len() != l {
            return Err(ClusterError::DimensionMismatch(l, d.labels.len()));
        }
    }
    Ok(l)
}

/// Sites grouped by label within one draw.
fn groups(labels: &[u32]) -> Vec<Vec<u32>> {
    let mut by: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, &z) in labels.iter().enumerate() {
        by.entry(z).or_default().push(i as u32);
    }
    by.into_values().collect()
}

/// Pairwise co-clustering counts over `n_draws` draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoclusterMatrix {
    n: usize,
    n_draws: u64,
    counts: Vec<u32>,
}

impl CoclusterMatrix {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn n_draws(&self) -> u64 {
        self.n_draws
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    /// Δ_{ij}.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.count(i, j) as f64 / self.n_draws as f64
    }

    /// Row-major single-precision Δ.
    pub fn to_f32(&self) -> Vec<f32> {
        let d = self.n_draws as f64;
        self.counts.iter().map(|&c| (c as f64 / d) as f32).collect()
    }

    /// Writes Δ as little-endian f32 row-major bytes.
    pub fn write_f32<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for x in self.to_f32() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Element-wise average of the draws' association matrices.
pub fn cocluster_matrix(draws: &[PartitionDraw]) -> Result<CoclusterMatrix, ClusterError> {
    let n = check_dims(draws)?;
    let counts = draws
        .par_iter()
        .fold(
            || vec![0u32; n * n],
            |mut acc, d| {
                for g in groups(&d.labels) {
                    for &i in &g {
                        let row = i as usize * n;
                        for &j in &g {
                            acc[row + j as usize] += 1;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; n * n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(CoclusterMatrix {
        n,
        n_draws: draws.len() as u64,
        counts,
    })
}

/// The least-squares draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresPartition {
    /// Pooled index of the chosen draw.
    pub draw_index: usize,
    /// Σ over ordered site pairs of (δ − Δ)².
    pub loss: f64,
    /// Class per site, 1-based, numbered by decreasing class size.
    pub labels: Vec<u32>,
}

/// D² · loss for every draw from the exact counts.
fn scaled_losses(draws: &[PartitionDraw], delta: &CoclusterMatrix) -> Vec<i128> {
    let d = delta.n_draws as i128;
    let base: i128 = delta.counts.iter().map(|&c| (c as i128).pow(2)).sum();
    draws
        .par_iter()
        .map(|draw| {
            let mut same: i128 = 0;
            for g in groups(&draw.labels) {
                for &i in &g {
                    let row = i as usize * delta.n;
                    for &j in &g {
                        same += d * d - 2 * d * delta.counts[row + j as usize] as i128;
                    }
                }
            }
            base + same
        })
        .collect()
}

fn argmin(losses: &[i128]) -> usize {
    // earliest draw wins ties
    losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("nonempty")
}

/// Dahl's least-squares partition: the draw whose association matrix is
/// closest to Δ in squared Frobenius distance, earliest draw on ties.
pub fn least_squares_partition(draws: &[PartitionDraw], delta: &CoclusterMatrix) -> Result<LeastSquaresPartition, ClusterError> {
    let n = check_dims(draws)?;
    if n != delta.n {
        return Err(ClusterError::DimensionMismatch(delta.n, n));
    }
    let losses = scaled_losses(draws, delta);
    let best = argmin(&losses);
    let d2 = (delta.n_draws as f64).powi(2);
    Ok(LeastSquaresPartition {
        draw_index: best,
        loss: losses[best] as f64 / d2,
        labels: relabel_by_size(&draws[best].labels),
    })
}

/// Same result as [`least_squares_partition`] without materialising Δ: the
/// count matrix is built `tile_rows` rows at a time and each draw's loss is
/// accumulated tile by tile.
pub fn least_squares_partition_tiled(draws: &[PartitionDraw], tile_rows: usize) -> Result<LeastSquaresPartition, ClusterError> {
    let n = check_dims(draws)?;
    let tile_rows = tile_rows.max(1);
    let d = draws.len() as i128;
    let draw_groups: Vec<Vec<Vec<u32>>> = draws.iter().map(|x| groups(&x.labels)).collect();
    let mut losses = vec![0i128; draws.len()];
    for start in (0..n).step_by(tile_rows) {
        let end = (start + tile_rows).min(n);
        let rows = end - start;
        let mut tile = vec![0u32; rows * n];
        for (draw, gs) in draws.iter().zip(&draw_groups) {
            for i in start..end {
                let li = draw.labels[i];
                let g = gs.iter().find(|g| draw.labels[g[0] as usize] == li).expect("own group");
                for &j in g {
                    tile[(i - start) * n + j as usize] += 1;
                }
            }
        }
        let base: i128 = tile.iter().map(|&c| (c as i128).pow(2)).sum();
        losses.par_iter_mut().zip(draws.par_iter()).for_each(|(loss, draw)| {
            let mut same = 0i128;
            for i in start..end {
                let li = draw.labels[i];
                for j in 0..n {
                    if draw.labels[j] == li {
                        same += d * d - 2 * d * tile[(i - start) * n + j] as i128;
                    }
                }
            }
            *loss += base + same;
        });
    }
    let best = argmin(&losses);
    Ok(LeastSquaresPartition {
        draw_index: best,
        loss: losses[best] as f64 / (d as f64).powi(2),
        labels: relabel_by_size(&draws[best].labels),
    })
}

/// Renumbers classes 1, 2, … by decreasing size, ties broken by first
/// appearance.
pub fn relabel_by_size(labels: &[u32]) -> Vec<u32> {
    let mut info: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (i, &z) in labels.iter().enumerate() {
        let e = info.entry(z).or_insert((0, i));
        e.0 += 1;
    }
    let mut order: Vec<(u32, usize, usize)> = info.into_iter().map(|(z, (n, first))| (z, n, first)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let map: BTreeMap<u32, u32> = order.iter().enumerate().map(|(k, (z, _, _))| (*z, k as u32 + 1)).collect();
    labels.iter().map(|z| map[z]).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSite {
    pub subject_id: u32,
    pub tooth: u8,
    pub location: Location,
}

/// Counts of class members with each descriptor.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub anterior: usize,
    pub maxillary: usize,
    pub proximal: usize,
    pub buccal: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCharacterization {
    /// 2.5%, 50% and 97.5% quantiles of β pooled over members and draws.
    pub beta_quantiles: [f64; 3],
    pub flags: FlagCounts,
    /// `flags` divided by class size.
    pub flag_proportions: [f64; 4],
    pub location_counts: BTreeMap<Location, usize>,
    pub tooth_class_counts: BTreeMap<ToothClass, usize>,
    /// Members per posterior-median θ, floored to whole millimetres.
    pub theta_category_counts: [usize; N_CATEGORIES],
    /// Members whose posterior-median θ reaches the deep-site threshold.
    pub deep_sites: usize,
    /// Minimum, median and maximum of the members' posterior-median θ (mm).
    pub theta_summary: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub id: u32,
    pub size: usize,
    pub singleton: bool,
    pub sites: Vec<ClassSite>,
    /// Absent for singletons unless requested.
    pub characterization: Option<ClassCharacterization>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub examiner: Examiner,
    pub n_sites: usize,
    pub draw_index: usize,
    pub loss: f64,
    pub labels: Vec<u32>,
    pub deep_threshold_mm: f64,
    pub classes: Vec<ClassSummary>,
}

impl PartitionSummary {
    /// Classes with more than one site.
    pub fn working_classes(&self) -> impl Iterator<Item = &ClassSummary> {
        self.classes.iter().filter(|c| !c.singleton)
    }

    pub fn class(&self, id: u32) -> Option<&ClassSummary> {
        self.classes.iter().find(|c| c.id == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationOptions {
    /// Posterior-median θ (mm) at or above which a site counts as deep.
    pub deep_threshold_mm: f64,
    pub include_singletons: bool,
}

impl Default for CharacterizationOptions {
    fn default() -> Self {
        CharacterizationOptions {
            deep_threshold_mm: 4.0,
            include_singletons: false,
        }
    }
}

/// Attaches per-class site lists, bias quantiles, descriptor cross-tabs and
/// depth summaries to a partition of `examiner`'s sites.
pub fn class_characterization(
    partition: &LeastSquaresPartition,
    examiner: Examiner,
    samples: &PosteriorSamples,
    data: &CalibrationDataset,
    options: &CharacterizationOptions,
) -> Result<PartitionSummary, ClusterError> {
    let rater = examiner
        .rater_index()
        .ok_or_else(|| ClusterError::NoAllocations(examiner.to_string()))?;
    if samples.layout.atoms == 0 {
        return Err(ClusterError::NoAllocations(examiner.to_string()));
    }
    let fit = FitData::new(data);
    crate::diagnostics::check_layout(samples, &fit).map_err(|e| ClusterError::Mismatch(e.to_string()))?;
    let unit_sites = &samples.layout.unit_sites[rater];
    if unit_sites.len() != partition.labels.len() {
        return Err(ClusterError::DimensionMismatch(unit_sites.len(), partition.labels.len()));
    }

    // posterior median θ per unit
    let draws: Vec<_> = samples.iter_draws().collect();
    let median_theta: Vec<f64> = unit_sites
        .par_iter()
        .map(|&j| {
            let mut v: Vec<f64> = draws.iter().map(|d| d.log_theta()[j] as f64).collect();
            v.sort_by(f64::total_cmp);
            quantile_sorted(&v, 0.5).exp()
        })
        .collect();

    let n_classes = partition.labels.iter().copied().max().unwrap_or(0);
    let mut classes = Vec::with_capacity(n_classes as usize);
    for id in 1..=n_classes {
        let members: Vec<usize> = (0..partition.labels.len()).filter(|&u| partition.labels[u] == id).collect();
        let singleton = members.len() == 1;
        let sites: Vec<ClassSite> = members
            .iter()
            .map(|&u| {
                let s = &data.sites()[unit_sites[u]];
                ClassSite {
                    subject_id: data.subject_ids()[s.subject],
                    tooth: s.position.tooth,
                    location: s.position.location,
                }
            })
            .collect();
        let characterization = (!singleton || options.include_singletons).then(|| {
            let mut betas: Vec<f64> = Vec::with_capacity(members.len() * draws.len());
            for d in &draws {
                betas.extend(members.iter().map(|&u| d.beta(rater, u)));
            }
            betas.sort_by(f64::total_cmp);
            let mut flags = FlagCounts::default();
            let mut location_counts = BTreeMap::new();
            let mut tooth_class_counts = BTreeMap::new();
            let mut theta_category_counts = [0usize; N_CATEGORIES];
            let mut deep_sites = 0;
            let mut thetas = Vec::with_capacity(members.len());
            for &u in &members {
                let pos = data.sites()[unit_sites[u]].position;
                let f = pos.flags();
                flags.anterior += f.anterior as usize;
                flags.maxillary += f.maxillary as usize;
                flags.proximal += f.proximal as usize;
                flags.buccal += f.buccal as usize;
                *location_counts.entry(pos.location).or_insert(0) += 1;
                *tooth_class_counts.entry(pos.tooth_class()).or_insert(0) += 1;
                let t = median_theta[u];
                theta_category_counts[(t.floor().max(0.0) as usize).min(MAX_DEPTH as usize)] += 1;
                deep_sites += (t >= options.deep_threshold_mm) as usize;
                thetas.push(t);
            }
            thetas.sort_by(f64::total_cmp);
            let size = members.len() as f64;
            ClassCharacterization {
                beta_quantiles: [
                    quantile_sorted(&betas, 0.025),
                    quantile_sorted(&betas, 0.5),
                    quantile_sorted(&betas, 0.975),
                ],
                flag_proportions: [
                    flags.anterior as f64 / size,
                    flags.maxillary as f64 / size,
                    flags.proximal as f64 / size,
                    flags.buccal as f64 / size,
                ],
                flags,
                location_counts,
                tooth_class_counts,
                theta_category_counts,
                deep_sites,
                theta_summary: [thetas[0], quantile_sorted(&thetas, 0.5), thetas[thetas.len() - 1]],
            }
        });
        classes.push(ClassSummary {
            id,
            size: members.len(),
            singleton,
            sites,
            characterization,
        });
    }

    Ok(PartitionSummary {
        examiner,
        n_sites: partition.labels.len(),
        draw_index: partition.draw_index,
        loss: partition.loss,
        labels: partition.labels.clone(),
        deep_threshold_mm: options.deep_threshold_mm,
        classes,
    })
}

/// Merges each listed group of classes into one, renumbers classes by size
/// and recomputes the characterisation.
pub fn merge_classes(
    summary: &PartitionSummary,
    merges: &[Vec<u32>],
    samples: &PosteriorSamples,
    data: &CalibrationDataset,
    options: &CharacterizationOptions,
) -> Result<PartitionSummary, ClusterError> {
    let n_classes = summary.classes.len() as u32;
    let mut target: Vec<u32> = (0..=n_classes).collect();
    for group in merges {
        for &c in group {
            if c == 0 || c > n_classes {
                return Err(ClusterError::UnknownClass(c as usize));
            }
        }
        if let Some(&root) = group.iter().min() {
            for &c in group {
                target[c as usize] = root;
            }
        }
    }
    // resolve chains introduced by overlapping groups
    for c in 1..=n_classes as usize {
        let mut t = target[c];
        while target[t as usize] != t {
            t = target[t as usize];
        }
        target[c] = t;
    }
    let merged: Vec<u32> = summary.labels.iter().map(|&z| target[z as usize]).collect();
    let partition = LeastSquaresPartition {
        draw_index: summary.draw_index,
        loss: summary.loss,
        labels: relabel_by_size(&merged),
    };
    class_characterization(&partition, summary.examiner, samples, data, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pd(v: &[u32]) -> PartitionDraw {
        PartitionDraw { labels: v.to_vec() }
    }

    #[test]
    fn three_site_example() {
        let draws = vec![pd(&[1, 1, 2]), pd(&[1, 2, 2])];
        let delta = cocluster_matrix(&draws).unwrap();
        assert_eq!(delta.get(0, 1), 0.5);
        assert_eq!(delta.get(0, 2), 0.0);
        assert_eq!(delta.get(1, 2), 0.5);
        assert_eq!(delta.get(2, 2), 1.0);
        let ls = least_squares_partition(&draws, &delta).unwrap();
        assert_eq!(ls.draw_index, 0);
        assert_eq!(ls.loss, 1.0);
        assert_eq!(ls.labels, vec![1, 1, 2]);
        let tiled = least_squares_partition_tiled(&draws, 2).unwrap();
        assert_eq!(tiled, ls);
    }

    #[test]
    fn identical_draws_zero_loss() {
        let draws = vec![pd(&[3, 3, 1, 2]); 4];
        let delta = cocluster_matrix(&draws).unwrap();
        assert!(delta.to_f32().iter().all(|&x| x == 0.0 || x == 1.0));
        let ls = least_squares_partition(&draws, &delta).unwrap();
        assert_eq!(ls.loss, 0.0);
        assert_eq!(ls.labels, vec![1, 1, 2, 3]);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            cocluster_matrix(&[pd(&[1, 2]), pd(&[1])]),
            Err(ClusterError::DimensionMismatch(2, 1))
        ));
        assert!(matches!(cocluster_matrix(&[]), Err(ClusterError::Empty)));
    }

    #[test]
    fn relabel_invariance() {
        let a = vec![pd(&[1, 1, 2, 3]), pd(&[2, 2, 2, 1])];
        let b = vec![pd(&[7, 7, 4, 5]), pd(&[9, 9, 9, 8])];
        assert_eq!(cocluster_matrix(&a).unwrap(), cocluster_matrix(&b).unwrap());
    }

    #[test]
    fn relabelling_orders_by_size() {
        assert_eq!(relabel_by_size(&[5, 2, 2, 9, 2, 5]), vec![2, 1, 1, 3, 1, 2]);
    }
}
