//! Index structures the sampler needs, derived once from a dataset.

use serde::{Deserialize, Serialize};

use crate::censoring::log_interval;
use crate::data::{CalibrationDataset, Examiner};

/// Sites at which one non-reference examiner probed at least once. Each such
/// site carries a single bias β shared by that examiner's records there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasUnits {
    pub examiner: Examiner,
    /// Dense site index per unit.
    pub sites: Vec<usize>,
    /// Record indices per unit (one or two).
    pub records: Vec<Vec<usize>>,
}

impl BiasUnits {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Flattened view of a dataset for the Gibbs sweeps.
#[derive(Clone, Debug)]
pub struct FitData {
    pub n_subjects: usize,
    pub site_subject: Vec<usize>,
    pub site_records: Vec<[usize; 2]>,
    pub subject_sites: Vec<Vec<usize>>,
    pub record_site: Vec<usize>,
    pub record_examiner: Vec<usize>,
    pub record_depth: Vec<u8>,
    pub record_interval: Vec<(f64, f64)>,
    /// Bias units for A, B and C.
    pub units: [BiasUnits; 3],
    /// For each record, `(rater index, unit index)` when the examiner is not
    /// the reference.
    pub record_unit: Vec<Option<(usize, usize)>>,
}

impl FitData {
    pub fn new(data: &CalibrationDataset) -> Self {
        let n_subjects = data.n_subjects();
        let sites = data.sites();
        let records = data.records();
        let mut subject_sites = vec![Vec::new(); n_subjects];
        for (j, s) in sites.iter().enumerate() {
            subject_sites[s.subject].push(j);
        }
        let record_site = data.site_of_record();
        let record_examiner: Vec<usize> = records.iter().map(|r| r.examiner.index()).collect();

        let mut units = Examiner::RATERS.map(|examiner| BiasUnits {
            examiner,
            sites: Vec::new(),
            records: Vec::new(),
        });
        let mut record_unit = vec![None; records.len()];
        for (j, s) in sites.iter().enumerate() {
            for e in Examiner::RATERS {
                let mine: Vec<usize> = s.records.iter().copied().filter(|&r| records[r].examiner == e).collect();
                if mine.is_empty() {
                    continue;
                }
                let ri = e.rater_index().expect("non-reference");
                let u = units[ri].sites.len();
                for &r in &mine {
                    record_unit[r] = Some((ri, u));
                }
                units[ri].sites.push(j);
                units[ri].records.push(mine);
            }
        }

        FitData {
            n_subjects,
            site_subject: sites.iter().map(|s| s.subject).collect(),
            site_records: sites.iter().map(|s| s.records).collect(),
            subject_sites,
            record_site,
            record_examiner,
            record_depth: records.iter().map(|r| r.depth).collect(),
            record_interval: records.iter().map(|r| log_interval(r.depth)).collect(),
            units,
            record_unit,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.site_subject.len()
    }

    pub fn n_records(&self) -> usize {
        self.record_site.len()
    }

    /// Layout with no observations at all, used to check that the sampler
    /// reproduces the prior.
    pub fn empty() -> Self {
        FitData {
            n_subjects: 0,
            site_subject: Vec::new(),
            site_records: Vec::new(),
            subject_sites: Vec::new(),
            record_site: Vec::new(),
            record_examiner: Vec::new(),
            record_depth: Vec::new(),
            record_interval: Vec::new(),
            units: Examiner::RATERS.map(|examiner| BiasUnits {
                examiner,
                sites: Vec::new(),
                records: Vec::new(),
            }),
            record_unit: Vec::new(),
        }
    }
}
