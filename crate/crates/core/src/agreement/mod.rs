//! Agreement indices over recorded-depth pairs: quadratic weighted kappa,
//! percent exact agreement and percent agreement within 1 mm.

mod predictive;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CalibrationDataset, Examiner, ExaminerPair, N_CATEGORIES};

pub use predictive::{
    posterior_predictive_agreement, IntervalEstimate, PredictiveAgreement, PredictiveOptions, PredictiveSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("weighted kappa undefined: chance agreement is 1 (all mass in one category on both margins)")]
    DegenerateMarginals,
    #[error("no sites for pair {0}")]
    MissingPair(String),
    #[error("posterior samples contain no draws")]
    NoDraws,
    #[error("posterior samples do not match the dataset: {0}")]
    Mismatch(String),
}

/// 16×16 table of counts over recorded categories 0..=15 for an ordered pair
/// of raters (row rater first).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts {
    counts: [[u64; N_CATEGORIES]; N_CATEGORIES],
}

impl Default for JointCounts {
    fn default() -> Self {
        JointCounts {
            counts: [[0; N_CATEGORIES]; N_CATEGORIES],
        }
    }
}

impl fmt::Debug for JointCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nonzero: Vec<_> = self.nonzero().collect();
        f.debug_struct("JointCounts").field("cells", &nonzero).finish()
    }
}

impl JointCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let mut c = Self::new();
        for (a, b) in pairs {
            c.add(a, b);
        }
        c
    }

    #[inline]
    pub fn add(&mut self, row: u8, col: u8) {
        self.counts[row as usize][col as usize] += 1;
    }

    pub fn add_count(&mut self, row: u8, col: u8, n: u64) {
        self.counts[row as usize][col as usize] += n;
    }

    pub fn get(&self, row: u8, col: u8) -> u64 {
        self.counts[row as usize][col as usize]
    }

    pub fn merge(&mut self, other: &JointCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn transpose(&self) -> JointCounts {
        let mut t = JointCounts::new();
        for i in 0..N_CATEGORIES {
            for j in 0..N_CATEGORIES {
                t.counts[j][i] = self.counts[i][j];
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_margins(&self) -> [u64; N_CATEGORIES] {
        let mut m = [0; N_CATEGORIES];
        for (i, row) in self.counts.iter().enumerate() {
            m[i] = row.iter().sum();
        }
        m
    }

    pub fn col_margins(&self) -> [u64; N_CATEGORIES] {
        let mut m = [0; N_CATEGORIES];
        for row in &self.counts {
            for (j, &c) in row.iter().enumerate() {
                m[j] += c;
            }
        }
        m
    }

    /// Non-zero cells as `((row, col), count)`.
    pub fn nonzero(&self) -> impl Iterator<Item = ((u8, u8), u64)> + '_ {
        self.counts.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(move |(j, &c)| ((i as u8, j as u8), c))
        })
    }
}

/// Quadratic weighted kappa with weights `1 - (u1 - u2)² / 15²`.
///
/// Computed as `1 - Σ d·p / Σ d·p_row·p_col` with `d = (u1 - u2)²`, which is
/// algebraically identical to `(p_o - p_e) / (1 - p_e)` and lets the
/// degenerate case be detected exactly on integer counts.
pub fn weighted_kappa(counts: &JointCounts) -> Result<f64, AgreementError> {
    let total = counts.total() as u128;
    if total == 0 {
        return Err(AgreementError::DegenerateMarginals);
    }
    let rows = counts.row_margins();
    let cols = counts.col_margins();
    let mut observed: u128 = 0;
    let mut chance: u128 = 0;
    for i in 0..N_CATEGORIES {
        for j in 0..N_CATEGORIES {
            let d = (i.abs_diff(j) * i.abs_diff(j)) as u128;
            observed += d * counts.counts[i][j] as u128;
            chance += d * rows[i] as u128 * cols[j] as u128;
        }
    }
    if chance == 0 {
        return Err(AgreementError::DegenerateMarginals);
    }
    Ok(1.0 - (observed as f64 * total as f64) / chance as f64)
}

/// Percentage of paired recordings differing by at most `tolerance` mm.
/// Returns NaN for an empty table.
pub fn percent_agreement(counts: &JointCounts, tolerance: u8) -> f64 {
    let total = counts.total();
    let within: u64 = counts
        .nonzero()
        .filter(|((a, b), _)| a.abs_diff(*b) <= tolerance)
        .map(|(_, c)| c)
        .sum();
    100.0 * within as f64 / total as f64
}

/// The three agreement indices for one table. `kappa` is `None` when the
/// table's marginals make weighted kappa undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Indices {
    pub kappa: Option<f64>,
    pub p_exact: f64,
    pub p_within1: f64,
}

impl Indices {
    pub fn from_counts(counts: &JointCounts) -> Self {
        Indices {
            kappa: weighted_kappa(counts).ok(),
            p_exact: percent_agreement(counts, 0),
            p_within1: percent_agreement(counts, 1),
        }
    }
}

/// Row key of an agreement table: an examiner pair, or an examiner against
/// censored true pocket depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairKey {
    Pair(ExaminerPair),
    Truth(Examiner),
}

impl PairKey {
    /// The fourteen rows in table order.
    pub fn table_order() -> Vec<PairKey> {
        ExaminerPair::TABLE_ORDER
            .iter()
            .map(|p| PairKey::Pair(*p))
            .chain(Examiner::ALL.iter().map(|e| PairKey::Truth(*e)))
            .collect()
    }

    pub fn label(&self) -> String {
        match self {
            PairKey::Pair(p) => p.label(),
            PairKey::Truth(e) => format!("{e}/PD"),
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PairKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().strip_suffix("/PD") {
            Some(e) => Ok(PairKey::Truth(e.parse()?)),
            None => Ok(PairKey::Pair(s.parse()?)),
        }
    }
}

impl Serialize for PairKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for PairKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub pair: PairKey,
    pub n_subjects: usize,
    pub n_sites: usize,
    /// Point estimates from the recorded data (absent for truth rows).
    pub observed: Option<Indices>,
    /// Posterior-predictive medians and intervals, when computed.
    pub predictive: Option<PredictiveSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub rows: Vec<AgreementRow>,
}

impl AgreementTable {
    pub fn row(&self, key: PairKey) -> Option<&AgreementRow> {
        self.rows.iter().find(|r| r.pair == key)
    }
}

/// Oriented record-index pairs for every site probed by `pair`.
pub(crate) fn pair_record_indices(data: &CalibrationDataset, pair: ExaminerPair) -> Vec<[usize; 2]> {
    data.sites()
        .iter()
        .filter(|s| data.pair_of(s) == pair)
        .map(|s| data.oriented_records(s))
        .collect()
}

/// Joint counts of recorded depths for one examiner pair.
pub fn pair_counts(data: &CalibrationDataset, pair: ExaminerPair) -> Result<JointCounts, AgreementError> {
    let idx = pair_record_indices(data, pair);
    if idx.is_empty() {
        return Err(AgreementError::MissingPair(pair.label()));
    }
    let records = data.records();
    Ok(JointCounts::from_pairs(
        idx.iter().map(|[a, b]| (records[*a].depth, records[*b].depth)),
    ))
}

pub(crate) fn subjects_for(data: &CalibrationDataset, key: PairKey) -> (usize, usize) {
    let mut seen = vec![false; data.n_subjects()];
    let mut n = 0;
    for s in data.sites() {
        let hit = match key {
            PairKey::Pair(p) => data.pair_of(s) == p,
            PairKey::Truth(e) => data.pair_of(s).contains(e),
        };
        if hit {
            seen[s.subject] = true;
            n += 1;
        }
    }
    (seen.into_iter().filter(|&x| x).count(), n)
}

/// Empirical agreement indices for every examiner pair present in `data`,
/// pooling all sites of a pair across subjects.
pub fn observed_agreement(data: &CalibrationDataset) -> AgreementTable {
    let rows = ExaminerPair::TABLE_ORDER
        .iter()
        .filter_map(|&pair| {
            let counts = pair_counts(data, pair).ok()?;
            let (n_subjects, n_sites) = subjects_for(data, PairKey::Pair(pair));
            Some(AgreementRow {
                pair: PairKey::Pair(pair),
                n_subjects,
                n_sites,
                observed: Some(Indices::from_counts(&counts)),
                predictive: None,
            })
        })
        .collect();
    AgreementTable { rows }
}
