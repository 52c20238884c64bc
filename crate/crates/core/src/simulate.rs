//! Synthetic calibration studies drawn from the generative model, and a Monte
//! Carlo oracle for the agreement indices they imply.
//!
//! Pocket depth is lognormal with a subject random effect; each examiner
//! observes it with multiplicative lognormal error and an optional rule-based
//! bias; observations are floored to whole millimetres and capped at 15.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{percent_agreement, weighted_kappa, Indices, JointCounts, PairKey};
use crate::censoring::censor;
use crate::data::{
    Arch, CalibrationDataset, DataError, Examiner, ExaminerPair, Location, Quadrant, SitePosition, SiteRecord,
    ToothClass, FULL_MOUTH_SITES,
};
use crate::rng::{stream, Domain};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("design error: {0}")]
    Design(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-examiner standard deviations of log observed depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExaminerSds {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

impl ExaminerSds {
    pub fn get(&self, e: Examiner) -> f64 {
        match e {
            Examiner::A => self.a,
            Examiner::B => self.b,
            Examiner::C => self.c,
            Examiner::S => self.s,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.s]
    }
}

/// Additive log-scale bias for one examiner, applied when every present
/// condition holds. Rules for the same examiner add up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRule {
    pub examiner: Examiner,
    pub magnitude: f64,
    /// True pocket depth threshold in mm (θ ≥ c).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<Location>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<Arch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tooth_classes: Option<Vec<ToothClass>>,
}

impl BiasRule {
    pub fn always(examiner: Examiner, magnitude: f64) -> Self {
        BiasRule {
            examiner,
            magnitude,
            min_depth: None,
            locations: None,
            arch: None,
            tooth_classes: None,
        }
    }

    pub fn applies(&self, site: &SitePosition, theta: f64) -> bool {
        self.min_depth.is_none_or(|c| theta >= c)
            && self.locations.as_ref().is_none_or(|l| l.contains(&site.location))
            && self.arch.is_none_or(|a| site.arch() == a)
            && self.tooth_classes.as_ref().is_none_or(|t| t.contains(&site.tooth_class()))
    }
}

/// Examiner-pair assignment for the four quadrants (upper right, upper left,
/// lower left, lower right) of each subject.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub subjects: Vec<[Option<ExaminerPair>; 4]>,
}

/// Balanced assignment of the ten examiner pairs to 36 quadrants: AS, BS and
/// CS in five subjects each, every other pair in three; each examiner sees as
/// many upper as lower quadrants and as many right as left ones.
const BALANCED_NINE: [[&str; 4]; 9] = [
    ["BS", "CC", "BC", "CS"],
    ["AA", "BS", "SS", "AC"],
    ["BC", "AC", "CS", "BB"],
    ["AS", "BS", "BC", "AC"],
    ["CC", "CS", "AB", "SS"],
    ["AS", "BS", "AB", "CS"],
    ["BB", "AA", "AS", "BS"],
    ["AB", "CC", "AA", "AS"],
    ["CS", "AS", "SS", "BB"],
];

impl Design {
    pub fn balanced_nine() -> Self {
        let subjects = BALANCED_NINE
            .iter()
            .map(|row| row.map(|p| Some(p.parse().expect("valid pair label"))))
            .collect();
        Design { subjects }
    }

    /// Every subject gets the same four quadrant pairs.
    pub fn uniform(n_subjects: usize, quadrants: [ExaminerPair; 4]) -> Self {
        Design {
            subjects: vec![quadrants.map(Some); n_subjects],
        }
    }

    fn validate(&self, n_subjects: usize) -> Result<(), SimError> {
        if self.subjects.len() != n_subjects {
            return Err(SimError::Design(format!(
                "design has {} subjects, parameters ask for {n_subjects}",
                self.subjects.len()
            )));
        }
        for (i, row) in self.subjects.iter().enumerate() {
            for (q, pair) in row.iter().enumerate() {
                if pair.is_none() {
                    return Err(SimError::Design(format!(
                        "subject {} quadrant {:?} has no examiner pair; its sites would have 0 measurements, not 2",
                        i + 1,
                        Quadrant::ALL[q]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DesignRepr {
    Named(String),
    Explicit(Vec<[String; 4]>),
}

impl Serialize for Design {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if *self == Design::balanced_nine() {
            return DesignRepr::Named("balanced".into()).serialize(serializer);
        }
        let rows = self
            .subjects
            .iter()
            .map(|row| row.map(|p| p.map(|p| p.label()).unwrap_or_else(|| "-".into())))
            .collect();
        DesignRepr::Explicit(rows).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Design {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match DesignRepr::deserialize(deserializer)? {
            DesignRepr::Named(name) if name == "balanced" => Ok(Design::balanced_nine()),
            DesignRepr::Named(name) => Err(serde::de::Error::custom(format!("unknown design `{name}`"))),
            DesignRepr::Explicit(rows) => {
                let mut subjects = Vec::with_capacity(rows.len());
                for row in rows {
                    let mut parsed = [None; 4];
                    for (slot, label) in parsed.iter_mut().zip(row.iter()) {
                        if label.trim() != "-" {
                            *slot = Some(label.parse().map_err(serde::de::Error::custom)?);
                        }
                    }
                    subjects.push(parsed);
                }
                Ok(Design { subjects })
            }
        }
    }
}

/// Parameters of the generative model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub mu: f64,
    pub sigma_b: f64,
    pub sigma_eps: f64,
    pub sigma: ExaminerSds,
    #[serde(default, rename = "bias")]
    pub bias_rules: Vec<BiasRule>,
    pub n_subjects: usize,
    pub design: Design,
}

impl TruthParams {
    /// Nine fully dentate subjects; examiner B reads pockets of 4 mm or more
    /// 0.5 too shallow (log scale), examiner C reads 0.25 too deep except on
    /// distolingual sites of mandibular posterior teeth where the net bias is
    /// −0.75.
    pub fn reference_scenario() -> Self {
        TruthParams {
            mu: 1.0,
            sigma_b: 0.2,
            sigma_eps: 0.3,
            sigma: ExaminerSds {
                a: 0.1,
                b: 0.25,
                c: 0.15,
                s: 0.07,
            },
            bias_rules: vec![
                BiasRule {
                    min_depth: Some(4.0),
                    ..BiasRule::always(Examiner::B, -0.5)
                },
                BiasRule::always(Examiner::C, 0.25),
                BiasRule {
                    locations: Some(vec![Location::DL]),
                    arch: Some(Arch::Mandibular),
                    tooth_classes: Some(vec![ToothClass::Premolar, ToothClass::Molar]),
                    ..BiasRule::always(Examiner::C, -1.0)
                },
            ],
            n_subjects: 9,
            design: Design::balanced_nine(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sds = [
            ("sigma_b", self.sigma_b),
            ("sigma_eps", self.sigma_eps),
            ("sigma.A", self.sigma.a),
            ("sigma.B", self.sigma.b),
            ("sigma.C", self.sigma.c),
            ("sigma.S", self.sigma.s),
        ];
        for (name, v) in sds {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.mu.is_finite() {
            return Err(SimError::InvalidParams("mu must be finite".into()));
        }
        for r in &self.bias_rules {
            if !r.magnitude.is_finite() {
                return Err(SimError::InvalidParams(format!("bias magnitude for {} is not finite", r.examiner)));
            }
            if r.examiner.is_reference() {
                return Err(SimError::InvalidParams("the standard examiner cannot carry a bias rule".into()));
            }
        }
        Ok(())
    }

    /// Summed bias of examiner `e` at a site with true depth `theta`.
    pub fn bias(&self, e: Examiner, site: &SitePosition, theta: f64) -> f64 {
        self.bias_rules
            .iter()
            .filter(|r| r.examiner == e && r.applies(site, theta))
            .map(|r| r.magnitude)
            .sum()
    }

    fn has_rules_for(&self, e: Examiner) -> bool {
        self.bias_rules.iter().any(|r| r.examiner == e)
    }

    fn marginal_log_theta_sd(&self) -> f64 {
        (self.sigma_b.powi(2) + self.sigma_eps.powi(2)).sqrt()
    }
}

/// Latent values behind one simulated site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSite {
    pub subject_id: u32,
    pub position: SitePosition,
    pub log_theta: f64,
    /// Log observed depth for replicate 1 and 2.
    pub log_t: [f64; 2],
}

/// Latent truth aligned with [`CalibrationDataset::sites`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub sites: Vec<LatentSite>,
}

impl LatentTruth {
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let io = |e: csv::Error| SimError::Data(DataError::Io(std::io::Error::other(e)));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["subject_id", "tooth", "site", "log_theta", "log_t_1", "log_t_2"])
            .map_err(io)?;
        for s in &self.sites {
            w.write_record([
                s.subject_id.to_string(),
                s.position.tooth.to_string(),
                s.position.location.code().to_string(),
                format!("{:e}", s.log_theta),
                format!("{:e}", s.log_t[0]),
                format!("{:e}", s.log_t[1]),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Data(DataError::Io(e)))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Data(DataError::Io(std::io::Error::other(m)));
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut sites = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{e}: `{}`", &rec[i])));
            let tooth: u8 = rec[1].parse().map_err(|e| bad(format!("{e}")))?;
            let location: Location = rec[2].parse().map_err(bad)?;
            sites.push(LatentSite {
                subject_id: rec[0].parse().map_err(|e| bad(format!("{e}")))?,
                position: SitePosition::new(tooth, location).ok_or_else(|| bad(format!("bad tooth {tooth}")))?,
                log_theta: num(3)?,
                log_t: [num(4)?, num(5)?],
            });
        }
        Ok(LatentTruth { sites })
    }
}

/// Draws a full calibration dataset. The design's subject rows are permuted
/// under the seed, which preserves its quadrant balance.
pub fn simulate_dataset(params: &TruthParams, seed: u64) -> Result<(CalibrationDataset, LatentTruth), SimError> {
    params.validate()?;
    params.design.validate(params.n_subjects)?;

    let mut order: Vec<usize> = (0..params.n_subjects).collect();
    order.shuffle(&mut stream(seed, Domain::DesignPermutation, 0));

    let mut rng = stream(seed, Domain::Simulation, 0);
    let mut records = Vec::with_capacity(params.n_subjects * FULL_MOUTH_SITES * 2);
    let mut latent = Vec::with_capacity(params.n_subjects * FULL_MOUTH_SITES);
    for (i, &row) in order.iter().enumerate() {
        let subject_id = (i + 1) as u32;
        let b: f64 = params.sigma_b * rng.sample::<f64, _>(StandardNormal);
        for position in SitePosition::full_mouth() {
            let q = position.quadrant() as usize;
            let pair = params.design.subjects[row][q].expect("validated design");
            let eps: f64 = params.sigma_eps * rng.sample::<f64, _>(StandardNormal);
            let log_theta = params.mu + b + eps;
            let theta = log_theta.exp();
            let mut log_t = [0.0; 2];
            for (k, examiner) in [pair.first, pair.second].into_iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                log_t[k] = log_theta + params.bias(examiner, &position, theta) + params.sigma.get(examiner) * z;
                records.push(SiteRecord {
                    subject: subject_id,
                    site: position,
                    examiner,
                    replicate: (k + 1) as u8,
                    depth: censor(log_t[k].exp()),
                });
            }
            latent.push(LatentSite {
                subject_id,
                position,
                log_theta,
                log_t,
            });
        }
    }

    let data = CalibrationDataset::from_records(records)?;
    // generation order is (subject, tooth, location): identical to dataset order
    debug_assert!(data
        .sites()
        .iter()
        .zip(&latent)
        .all(|(s, l)| data.subject_ids()[s.subject] == l.subject_id && s.position == l.position));
    Ok((data, LatentTruth { sites: latent }))
}

/// How bias indicators are evaluated by the truth oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    /// Brute force from the generative model: both measurements share the
    /// site and its true depth, so depth- and site-dependent biases act
    /// jointly with θ.
    Exact,
    /// Normal-mixture construction: each measurement's bias indicator is an
    /// independent draw with its marginal prevalence, unrelated to θ and to
    /// the partner measurement, as in a normal-mixture calculation of the
    /// joint cell probabilities.
    MarginalMixture,
}

/// Monte Carlo estimate of population agreement for one table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthAgreement {
    pub pair: PairKey,
    pub mode: TruthMode,
    pub n_draws: u64,
    pub indices: Indices,
    pub kappa_se: f64,
    pub p_exact_se: f64,
    pub p_within1_se: f64,
}

/// Smallest accepted number of oracle draws.
pub const MIN_TRUTH_DRAWS: u64 = 100_000;
const ORACLE_BATCHES: u64 = 64;

/// Population agreement for a table row by simulation: draws (site, θ, T, T')
/// i.i.d., censors, and evaluates the indices on the pooled joint table. For
/// truth rows the second rater is the censored true depth. The standard
/// errors come from the spread of 64 independent batch estimates.
pub fn truth_agreement(
    params: &TruthParams,
    pair: PairKey,
    n_draws: u64,
    seed: u64,
    mode: TruthMode,
) -> Result<TruthAgreement, SimError> {
    params.validate()?;
    if n_draws < MIN_TRUTH_DRAWS {
        return Err(SimError::InvalidParams(format!(
            "truth oracle needs at least {MIN_TRUTH_DRAWS} draws, got {n_draws}"
        )));
    }
    let key_index = PairKey::table_order().iter().position(|k| *k == pair).unwrap_or(0) as u64;
    let positions: Vec<SitePosition> = SitePosition::full_mouth().collect();
    let sd_theta = params.marginal_log_theta_sd();

    let batches: Vec<JointCounts> = (0..ORACLE_BATCHES)
        .into_par_iter()
        .map(|batch| {
            let n = n_draws / ORACLE_BATCHES + u64::from(batch < n_draws % ORACLE_BATCHES);
            let mut rng = stream(seed, Domain::TruthOracle, key_index * ORACLE_BATCHES + batch);
            let mut counts = JointCounts::new();
            let mut context = |rng: &mut crate::rng::StreamRng| {
                let site = positions[rng.random_range(0..positions.len())];
                let z: f64 = rng.sample(StandardNormal);
                (site, params.mu + sd_theta * z)
            };
            let measure = |rng: &mut crate::rng::StreamRng,
                           e: Examiner,
                           site: &SitePosition,
                           log_theta: f64,
                           ctx: &mut dyn FnMut(&mut crate::rng::StreamRng) -> (SitePosition, f64)| {
                let bias = if !params.has_rules_for(e) {
                    0.0
                } else {
                    match mode {
                        TruthMode::Exact => params.bias(e, site, log_theta.exp()),
                        TruthMode::MarginalMixture => {
                            let (s2, lt2) = ctx(rng);
                            params.bias(e, &s2, lt2.exp())
                        }
                    }
                };
                let z: f64 = rng.sample(StandardNormal);
                censor((log_theta + bias + params.sigma.get(e) * z).exp())
            };
            for _ in 0..n {
                let (site, log_theta) = context(&mut rng);
                let (u1, u2) = match pair {
                    PairKey::Pair(p) => {
                        let u1 = measure(&mut rng, p.first, &site, log_theta, &mut context);
                        let u2 = measure(&mut rng, p.second, &site, log_theta, &mut context);
                        (u1, u2)
                    }
                    PairKey::Truth(e) => {
                        let u1 = measure(&mut rng, e, &site, log_theta, &mut context);
                        (u1, censor(log_theta.exp()))
                    }
                };
                counts.add(u1, u2);
            }
            counts
        })
        .collect();

    let mut total = JointCounts::new();
    for b in &batches {
        total.merge(b);
    }
    let se = |f: &dyn Fn(&JointCounts) -> Option<f64>| {
        let vals: Vec<f64> = batches.iter().filter_map(f).collect();
        if vals.len() < 2 {
            return 0.0;
        }
        (crate::numeric::variance(&vals) / vals.len() as f64).sqrt()
    };
    Ok(TruthAgreement {
        pair,
        mode,
        n_draws,
        indices: Indices::from_counts(&total),
        kappa_se: se(&|c| weighted_kappa(c).ok()),
        p_exact_se: se(&|c| Some(percent_agreement(c, 0))),
        p_within1_se: se(&|c| Some(percent_agreement(c, 1))),
    })
}

/// Truth rows for every key, in table order.
pub fn truth_table(
    params: &TruthParams,
    n_draws: u64,
    seed: u64,
    mode: TruthMode,
) -> Result<Vec<TruthAgreement>, SimError> {
    PairKey::table_order()
        .into_iter()
        .map(|k| truth_agreement(params, k, n_draws, seed, mode))
        .collect()
}
