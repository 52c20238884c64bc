//! Calibration-study data model: examiners, periodontal sites and recorded
//! probing depths, plus CSV ingestion and validation.
//!
//! Teeth are numbered 1–28 in Universal order with the third molars removed:
//! 1–14 run across the maxillary arch from the patient's upper right to upper
//! left, 15–28 across the mandibular arch from lower left to lower right.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest recordable probing depth in millimetres.
pub const MAX_DEPTH: u8 = 15;
/// Number of recorded-depth categories (0..=15).
pub const N_CATEGORIES: usize = 16;
/// Teeth per fully dentate mouth (third molars excluded).
pub const TEETH_PER_MOUTH: u8 = 28;
/// Probing locations per tooth.
pub const SITES_PER_TOOTH: usize = 6;
/// Sites in a fully dentate mouth.
pub const FULL_MOUTH_SITES: usize = TEETH_PER_MOUTH as usize * SITES_PER_TOOTH;

/// Column names of the calibration CSV, in order.
pub const CSV_HEADER: [&str; 6] = ["subject_id", "tooth", "site", "examiner", "replicate", "depth_mm"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at row {row}, field `{field}`: {message}")]
    Parse {
        row: usize,
        field: String,
        message: String,
    },
    #[error("validation error at row {row}, field `{field}`: {message}")]
    Validation {
        row: usize,
        field: String,
        message: String,
    },
}

impl DataError {
    fn parse(row: usize, field: &str, message: impl Into<String>) -> Self {
        DataError::Parse {
            row,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn validation(row: usize, field: &str, message: impl Into<String>) -> Self {
        DataError::Validation {
            row,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// One of the four calibration examiners. `S` is the standard (reference)
/// examiner; bias parameters exist only for `A`, `B` and `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Examiner {
    A,
    B,
    C,
    S,
}

impl Examiner {
    pub const ALL: [Examiner; 4] = [Examiner::A, Examiner::B, Examiner::C, Examiner::S];
    /// Non-reference examiners, in bias-parameter order.
    pub const RATERS: [Examiner; 3] = [Examiner::A, Examiner::B, Examiner::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_reference(self) -> bool {
        self == Examiner::S
    }

    /// Position among the biased examiners, `None` for the standard.
    pub fn rater_index(self) -> Option<usize> {
        match self {
            Examiner::S => None,
            e => Some(e as usize),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Examiner::A => "A",
            Examiner::B => "B",
            Examiner::C => "C",
            Examiner::S => "S",
        }
    }
}

impl fmt::Display for Examiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Examiner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(Examiner::A),
            "B" => Ok(Examiner::B),
            "C" => Ok(Examiner::C),
            "S" => Ok(Examiner::S),
            other => Err(format!("unknown examiner `{other}` (expected A, B, C or S)")),
        }
    }
}

/// Probing location on a tooth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    DB,
    B,
    MB,
    DL,
    L,
    ML,
}

impl Location {
    pub const ALL: [Location; 6] = [
        Location::DB,
        Location::B,
        Location::MB,
        Location::DL,
        Location::L,
        Location::ML,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Location::DB => "DB",
            Location::B => "B",
            Location::MB => "MB",
            Location::DL => "DL",
            Location::L => "L",
            Location::ML => "ML",
        }
    }

    /// Distal or mesial (interproximal) as opposed to mid-tooth.
    pub fn is_proximal(self) -> bool {
        !matches!(self, Location::B | Location::L)
    }

    pub fn is_buccal(self) -> bool {
        matches!(self, Location::DB | Location::B | Location::MB)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Location {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "DB" => Ok(Location::DB),
            "B" => Ok(Location::B),
            "MB" => Ok(Location::MB),
            "DL" => Ok(Location::DL),
            "L" => Ok(Location::L),
            "ML" => Ok(Location::ML),
            other => Err(format!("unknown site code `{other}` (expected DB, B, MB, DL, L or ML)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Maxillary,
    Mandibular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToothClass {
    Incisor,
    Canine,
    Premolar,
    Molar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    UpperRight,
    UpperLeft,
    LowerLeft,
    LowerRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::UpperRight,
        Quadrant::UpperLeft,
        Quadrant::LowerLeft,
        Quadrant::LowerRight,
    ];

    pub fn is_upper(self) -> bool {
        matches!(self, Quadrant::UpperRight | Quadrant::UpperLeft)
    }

    pub fn is_right(self) -> bool {
        matches!(self, Quadrant::UpperRight | Quadrant::LowerRight)
    }

    /// Teeth in this quadrant, in numbering order.
    pub fn teeth(self) -> std::ops::RangeInclusive<u8> {
        match self {
            Quadrant::UpperRight => 1..=7,
            Quadrant::UpperLeft => 8..=14,
            Quadrant::LowerLeft => 15..=21,
            Quadrant::LowerRight => 22..=28,
        }
    }
}

/// Boolean site descriptors used for class characterisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteFlags {
    pub anterior: bool,
    pub maxillary: bool,
    pub proximal: bool,
    pub buccal: bool,
}

/// A periodontal site: tooth number plus probing location. All other
/// descriptors are derived from these two fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SitePosition {
    pub tooth: u8,
    pub location: Location,
}

impl SitePosition {
    pub fn new(tooth: u8, location: Location) -> Option<Self> {
        (1..=TEETH_PER_MOUTH)
            .contains(&tooth)
            .then_some(SitePosition { tooth, location })
    }

    /// All 168 sites of a full mouth in numbering order.
    pub fn full_mouth() -> impl Iterator<Item = SitePosition> {
        (1..=TEETH_PER_MOUTH)
            .flat_map(|tooth| Location::ALL.into_iter().map(move |location| SitePosition { tooth, location }))
    }

    pub fn arch(&self) -> Arch {
        if self.tooth <= 14 {
            Arch::Maxillary
        } else {
            Arch::Mandibular
        }
    }

    pub fn quadrant(&self) -> Quadrant {
        match self.tooth {
            1..=7 => Quadrant::UpperRight,
            8..=14 => Quadrant::UpperLeft,
            15..=21 => Quadrant::LowerLeft,
            _ => Quadrant::LowerRight,
        }
    }

    pub fn tooth_class(&self) -> ToothClass {
        // position within the arch, 0 and 13 being second molars
        match (self.tooth - 1) % 14 {
            0 | 1 | 12 | 13 => ToothClass::Molar,
            2 | 3 | 10 | 11 => ToothClass::Premolar,
            4 | 9 => ToothClass::Canine,
            _ => ToothClass::Incisor,
        }
    }

    pub fn is_anterior(&self) -> bool {
        matches!(self.tooth_class(), ToothClass::Incisor | ToothClass::Canine)
    }

    pub fn is_proximal(&self) -> bool {
        self.location.is_proximal()
    }

    pub fn is_buccal(&self) -> bool {
        self.location.is_buccal()
    }

    pub fn flags(&self) -> SiteFlags {
        SiteFlags {
            anterior: self.is_anterior(),
            maxillary: self.arch() == Arch::Maxillary,
            proximal: self.is_proximal(),
            buccal: self.is_buccal(),
        }
    }
}

/// One recorded probing depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub subject: u32,
    pub site: SitePosition,
    pub examiner: Examiner,
    pub replicate: u8,
    pub depth: u8,
}

/// Unordered examiner pair in canonical orientation: alphabetical with the
/// standard last (A < B < C < S).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExaminerPair {
    pub first: Examiner,
    pub second: Examiner,
}

impl ExaminerPair {
    /// Table order: inter-examiner pairs against the standard, the other
    /// inter-examiner pairs, then intra-examiner pairs.
    pub const TABLE_ORDER: [ExaminerPair; 10] = [
        ExaminerPair::fixed(Examiner::A, Examiner::S),
        ExaminerPair::fixed(Examiner::B, Examiner::S),
        ExaminerPair::fixed(Examiner::C, Examiner::S),
        ExaminerPair::fixed(Examiner::A, Examiner::B),
        ExaminerPair::fixed(Examiner::A, Examiner::C),
        ExaminerPair::fixed(Examiner::B, Examiner::C),
        ExaminerPair::fixed(Examiner::A, Examiner::A),
        ExaminerPair::fixed(Examiner::B, Examiner::B),
        ExaminerPair::fixed(Examiner::C, Examiner::C),
        ExaminerPair::fixed(Examiner::S, Examiner::S),
    ];

    const fn fixed(first: Examiner, second: Examiner) -> Self {
        ExaminerPair { first, second }
    }

    pub fn new(a: Examiner, b: Examiner) -> Self {
        if a <= b {
            ExaminerPair { first: a, second: b }
        } else {
            ExaminerPair { first: b, second: a }
        }
    }

    pub fn is_intra(&self) -> bool {
        self.first == self.second
    }

    pub fn contains(&self, e: Examiner) -> bool {
        self.first == e || self.second == e
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.first, self.second)
    }
}

impl fmt::Display for ExaminerPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.first, self.second)
    }
}

impl FromStr for ExaminerPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => Ok(ExaminerPair::new(
                a.to_string().parse()?,
                b.to_string().parse()?,
            )),
            _ => Err(format!("invalid examiner pair `{s}`")),
        }
    }
}

/// A probed site with its two records, oriented so that `records[0]` is the
/// row examiner of the canonical pair (or replicate 1 for intra pairs).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Site {
    /// Dense subject index into [`CalibrationDataset::subject_ids`].
    pub subject: usize,
    pub position: SitePosition,
    /// Indices into [`CalibrationDataset::records`], replicate 1 then 2.
    pub records: [usize; 2],
}

/// Validated calibration dataset. Records are stored sorted by subject, tooth,
/// location and replicate so every site's two records are adjacent.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationDataset {
    records: Vec<SiteRecord>,
    subject_ids: Vec<u32>,
    sites: Vec<Site>,
}

impl CalibrationDataset {
    /// Builds a dataset from records; row numbers in errors are 1-based
    /// positions in `records`.
    pub fn from_records(records: Vec<SiteRecord>) -> Result<Self, DataError> {
        let rows = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        Self::from_rows(rows)
    }

    fn from_rows(mut rows: Vec<(usize, SiteRecord)>) -> Result<Self, DataError> {
        for (row, r) in &rows {
            if r.depth > MAX_DEPTH {
                return Err(DataError::validation(
                    *row,
                    "depth_mm",
                    format!("depth {} outside [0, {MAX_DEPTH}]", r.depth),
                ));
            }
            if !(1..=TEETH_PER_MOUTH).contains(&r.site.tooth) {
                return Err(DataError::validation(
                    *row,
                    "tooth",
                    format!("tooth {} outside [1, {TEETH_PER_MOUTH}]", r.site.tooth),
                ));
            }
        }

        let mut by_site: BTreeMap<(u32, SitePosition), Vec<(usize, SiteRecord)>> = BTreeMap::new();
        for (row, r) in rows.drain(..) {
            by_site.entry((r.subject, r.site)).or_default().push((row, r));
        }

        let mut subject_ids: Vec<u32> = by_site.keys().map(|(s, _)| *s).collect();
        subject_ids.dedup();

        let mut records = Vec::with_capacity(by_site.len() * 2);
        let mut sites = Vec::with_capacity(by_site.len());
        let mut subject = 0usize;
        for ((subject_id, position), mut group) in by_site {
            if group.len() != 2 {
                let row = group.last().map(|(row, _)| *row).unwrap_or(0);
                return Err(DataError::validation(
                    row,
                    "replicate",
                    format!(
                        "replicate count {} for subject {subject_id} site {}{} (expected exactly 2)",
                        group.len(),
                        position.tooth,
                        position.location
                    ),
                ));
            }
            group.sort_by_key(|(_, r)| r.replicate);
            if group[0].1.replicate == group[1].1.replicate {
                return Err(DataError::validation(
                    group[1].0,
                    "replicate",
                    format!(
                        "duplicate key: subject {subject_id} site {}{} replicate {}",
                        position.tooth, position.location, group[1].1.replicate
                    ),
                ));
            }
            if group[0].1.replicate != 1 || group[1].1.replicate != 2 {
                let (row, bad) = if group[0].1.replicate != 1 { group[0] } else { group[1] };
                return Err(DataError::validation(
                    row,
                    "replicate",
                    format!("replicate {} not in {{1, 2}}", bad.replicate),
                ));
            }
            while subject_ids[subject] != subject_id {
                subject += 1;
            }
            let base = records.len();
            records.push(group[0].1);
            records.push(group[1].1);
            sites.push(Site {
                subject,
                position,
                records: [base, base + 1],
            });
        }

        Ok(CalibrationDataset {
            records,
            subject_ids,
            sites,
        })
    }

    pub fn records(&self) -> &[SiteRecord] {
        &self.records
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Original subject identifiers, indexed by dense subject index.
    pub fn subject_ids(&self) -> &[u32] {
        &self.subject_ids
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    /// Number of sites `m_i` examined for each subject.
    pub fn sites_per_subject(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_subjects()];
        for s in &self.sites {
            counts[s.subject] += 1;
        }
        counts
    }

    /// Canonical examiner pair that probed a site.
    pub fn pair_of(&self, site: &Site) -> ExaminerPair {
        ExaminerPair::new(
            self.records[site.records[0]].examiner,
            self.records[site.records[1]].examiner,
        )
    }

    /// Record indices of a site ordered as (row, column) for its canonical
    /// pair: the first-listed examiner's record first, replicate 1 first for
    /// intra pairs.
    pub fn oriented_records(&self, site: &Site) -> [usize; 2] {
        let [r0, r1] = site.records;
        if self.records[r0].examiner <= self.records[r1].examiner {
            [r0, r1]
        } else {
            [r1, r0]
        }
    }

    /// Dense index of the site owning each record.
    pub fn site_of_record(&self) -> Vec<usize> {
        let mut out = vec![0; self.records.len()];
        for (i, s) in self.sites.iter().enumerate() {
            out[s.records[0]] = i;
            out[s.records[1]] = i;
        }
        out
    }

    /// Copy of the dataset with depths replaced; `depths` is indexed like
    /// [`Self::records`].
    pub fn with_depths(&self, depths: &[u8]) -> Result<Self, DataError> {
        assert_eq!(depths.len(), self.records.len(), "depth vector length mismatch");
        let records = self
            .records
            .iter()
            .zip(depths)
            .map(|(r, &depth)| SiteRecord { depth, ..*r })
            .collect();
        Self::from_records(records)
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
        wtr.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.records {
            wtr.write_record([
                r.subject.to_string(),
                r.site.tooth.to_string(),
                r.site.location.code().to_string(),
                r.examiner.label().to_string(),
                r.replicate.to_string(),
                r.depth.to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let f = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(f))
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let header = rdr
            .headers()
            .map_err(|e| DataError::parse(1, "header", e.to_string()))?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        if names != CSV_HEADER {
            return Err(DataError::parse(
                1,
                "header",
                format!("expected `{}`, found `{}`", CSV_HEADER.join(","), names.join(",")),
            ));
        }

        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            // header occupies row 1
            let row = i + 2;
            let rec = rec.map_err(|e| DataError::parse(row, "record", e.to_string()))?;
            if rec.len() != CSV_HEADER.len() {
                return Err(DataError::parse(
                    row,
                    "record",
                    format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
                ));
            }
            rows.push((row, parse_row(row, &rec)?));
        }
        Self::from_rows(rows)
    }
}

fn parse_int(row: usize, field: &str, raw: &str) -> Result<i64, DataError> {
    raw.parse::<i64>()
        .map_err(|_| DataError::parse(row, field, format!("`{raw}` is not an integer")))
}

fn parse_row(row: usize, rec: &csv::StringRecord) -> Result<SiteRecord, DataError> {
    let subject = parse_int(row, "subject_id", &rec[0])?;
    let subject = u32::try_from(subject)
        .map_err(|_| DataError::validation(row, "subject_id", format!("subject {subject} is negative or too large")))?;

    let tooth = parse_int(row, "tooth", &rec[1])?;
    if !(1..=TEETH_PER_MOUTH as i64).contains(&tooth) {
        return Err(DataError::validation(
            row,
            "tooth",
            format!("tooth {tooth} outside [1, {TEETH_PER_MOUTH}]"),
        ));
    }
    let location: Location = rec[2].parse().map_err(|m| DataError::parse(row, "site", m))?;
    let examiner: Examiner = rec[3].parse().map_err(|m| DataError::parse(row, "examiner", m))?;

    let replicate = parse_int(row, "replicate", &rec[4])?;
    if !(0..=255).contains(&replicate) {
        return Err(DataError::validation(row, "replicate", format!("replicate {replicate} not in {{1, 2}}")));
    }

    let depth = parse_int(row, "depth_mm", &rec[5])?;
    if !(0..=MAX_DEPTH as i64).contains(&depth) {
        return Err(DataError::validation(
            row,
            "depth_mm",
            format!("depth {depth} outside [0, {MAX_DEPTH}]"),
        ));
    }

    Ok(SiteRecord {
        subject,
        site: SitePosition {
            tooth: tooth as u8,
            location,
        },
        examiner,
        replicate: replicate as u8,
        depth: depth as u8,
    })
}

/// Reads and validates a calibration CSV.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<CalibrationDataset, DataError> {
    let f = std::fs::File::open(path)?;
    CalibrationDataset::from_reader(std::io::BufReader::new(f))
}

/// Subjects and sites examined by one examiner pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingRow {
    pub pair: ExaminerPair,
    pub n_subjects: usize,
    pub n_sites: usize,
}

/// Per-pair subject and site counts, in table order; absent pairs are omitted.
pub fn pairing_summary(data: &CalibrationDataset) -> Vec<PairingRow> {
    let mut subjects: BTreeMap<ExaminerPair, Vec<bool>> = BTreeMap::new();
    let mut sites: BTreeMap<ExaminerPair, usize> = BTreeMap::new();
    for site in data.sites() {
        let pair = data.pair_of(site);
        subjects.entry(pair).or_insert_with(|| vec![false; data.n_subjects()])[site.subject] = true;
        *sites.entry(pair).or_default() += 1;
    }
    ExaminerPair::TABLE_ORDER
        .iter()
        .filter_map(|pair| {
            sites.get(pair).map(|&n_sites| PairingRow {
                pair: *pair,
                n_subjects: subjects[pair].iter().filter(|&&x| x).count(),
                n_sites,
            })
        })
        .collect()
}
