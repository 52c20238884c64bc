//! Retained posterior draws and their on-disk form.
//!
//! A run directory holds `samples.json` (metadata and layout) and one
//! little-endian binary column per chain and component, plus `trace.csv`
//! with the scalar parameters for external plotting.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::FitData;
use super::model::ModelSpec;
use super::state::ChainState;
use super::InferenceError;
use crate::data::Examiner;

/// Chain-protocol settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
    /// Keep latent log observed depths (one f64 per record per draw).
    pub retain_latent: bool,
}

impl RunConfig {
    /// Three chains, 50,500 burn-in sweeps and 10,000 retained draws.
    pub fn full_protocol(seed: u64) -> Self {
        RunConfig {
            n_chains: 3,
            burn_in: 50_500,
            n_keep: 10_000,
            thin: 1,
            seed,
            retain_latent: false,
        }
    }

    /// Shortened protocol for desk runs: 5,000 burn-in and 2,000 retained.
    pub fn desk(seed: u64) -> Self {
        RunConfig {
            burn_in: 5_000,
            n_keep: 2_000,
            ..Self::full_protocol(seed)
        }
    }
}

/// Retained draws of one chain, stored draw-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSamples {
    pub mu: Vec<f64>,
    pub sigma_b: Vec<f64>,
    pub sigma_eps: Vec<f64>,
    pub sigma: Vec<[f64; 4]>,
    /// `n_keep × n_subjects`.
    pub b: Vec<f64>,
    /// `n_keep × n_sites`, single precision.
    pub log_theta: Vec<f32>,
    /// Per rater, `n_keep × n_units` atom indices.
    pub alloc: Vec<Vec<u8>>,
    /// Per rater, `n_keep × atoms` atom locations.
    pub atoms: Vec<Vec<f64>>,
    /// Per rater, `n_keep × atoms` stick weights.
    pub weights: Vec<Vec<f64>>,
    /// `n_keep × n_records` when retained.
    pub latent_log_t: Option<Vec<f64>>,
    /// Latent values found outside their censoring interval across all
    /// retained draws.
    pub censoring_violations: u64,
    /// Wall-clock sampling time; not persisted by [`PosteriorSamples::save`].
    pub seconds: f64,
}

impl ChainSamples {
    pub(crate) fn with_capacity(layout: &SampleLayout, n: usize, retain_latent: bool) -> Self {
        let raters = if layout.atoms == 0 { 0 } else { 3 };
        ChainSamples {
            mu: Vec::with_capacity(n),
            sigma_b: Vec::with_capacity(n),
            sigma_eps: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            b: Vec::with_capacity(n * layout.n_subjects),
            log_theta: Vec::with_capacity(n * layout.n_sites),
            alloc: (0..raters).map(|r| Vec::with_capacity(n * layout.unit_sites[r].len())).collect(),
            atoms: (0..raters).map(|_| Vec::with_capacity(n * layout.atoms)).collect(),
            weights: (0..raters).map(|_| Vec::with_capacity(n * layout.atoms)).collect(),
            latent_log_t: retain_latent.then(|| Vec::with_capacity(n * layout.n_records)),
            censoring_violations: 0,
            seconds: 0.0,
        }
    }

    pub(crate) fn push(&mut self, state: &ChainState, fit: &FitData) {
        self.mu.push(state.mu);
        self.sigma_b.push(state.sigma_b);
        self.sigma_eps.push(state.sigma_eps);
        self.sigma.push(state.sigma);
        self.b.extend_from_slice(&state.b);
        self.log_theta.extend(state.log_theta.iter().map(|&x| x as f32));
        for (r, d) in state.dpp.iter().enumerate() {
            self.alloc[r].extend_from_slice(&d.alloc);
            self.atoms[r].extend_from_slice(&d.atoms);
            self.weights[r].extend_from_slice(&d.weights);
        }
        if let Some(t) = self.latent_log_t.as_mut() {
            t.extend_from_slice(&state.latent_log_t);
        }
        self.censoring_violations += state.censoring_violations(fit) as u64;
    }

    pub fn n_draws(&self) -> usize {
        self.mu.len()
    }
}

/// Dimensions needed to slice the draw-major columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLayout {
    pub n_subjects: usize,
    pub n_sites: usize,
    pub n_records: usize,
    /// Atoms per rater (0 for models without bias).
    pub atoms: usize,
    /// Per rater A, B, C: dense site index of each bias unit.
    pub unit_sites: Vec<Vec<usize>>,
}

impl SampleLayout {
    pub fn from_fit(fit: &FitData, spec: &ModelSpec) -> Self {
        SampleLayout {
            n_subjects: fit.n_subjects,
            n_sites: fit.n_sites(),
            n_records: fit.n_records(),
            atoms: spec.atoms(),
            unit_sites: fit.units.iter().map(|u| u.sites.clone()).collect(),
        }
    }
}

/// All retained draws of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSamples {
    pub spec: ModelSpec,
    pub config: RunConfig,
    pub layout: SampleLayout,
    pub chains: Vec<ChainSamples>,
}

/// Read-only view of one retained draw.
#[derive(Clone, Copy, Debug)]
pub struct DrawView<'a> {
    samples: &'a PosteriorSamples,
    chain: usize,
    draw: usize,
}

impl<'a> DrawView<'a> {
    fn c(&self) -> &'a ChainSamples {
        &self.samples.chains[self.chain]
    }

    pub fn mu(&self) -> f64 {
        self.c().mu[self.draw]
    }

    pub fn sigma_b(&self) -> f64 {
        self.c().sigma_b[self.draw]
    }

    pub fn sigma_eps(&self) -> f64 {
        self.c().sigma_eps[self.draw]
    }

    pub fn sigma(&self) -> [f64; 4] {
        self.c().sigma[self.draw]
    }

    pub fn b(&self) -> &'a [f64] {
        let n = self.samples.layout.n_subjects;
        &self.c().b[self.draw * n..(self.draw + 1) * n]
    }

    pub fn log_theta(&self) -> &'a [f32] {
        let n = self.samples.layout.n_sites;
        &self.c().log_theta[self.draw * n..(self.draw + 1) * n]
    }

    /// Atom indices per unit for a rater (empty for models without bias).
    pub fn alloc(&self, rater: usize) -> &'a [u8] {
        let Some(col) = self.c().alloc.get(rater) else {
            return &[];
        };
        let n = self.samples.layout.unit_sites[rater].len();
        &col[self.draw * n..(self.draw + 1) * n]
    }

    pub fn atoms(&self, rater: usize) -> &'a [f64] {
        let Some(col) = self.c().atoms.get(rater) else {
            return &[];
        };
        let m = self.samples.layout.atoms;
        &col[self.draw * m..(self.draw + 1) * m]
    }

    pub fn weights(&self, rater: usize) -> &'a [f64] {
        let Some(col) = self.c().weights.get(rater) else {
            return &[];
        };
        let m = self.samples.layout.atoms;
        &col[self.draw * m..(self.draw + 1) * m]
    }

    /// Bias β of a rater at one of its units.
    pub fn beta(&self, rater: usize, unit: usize) -> f64 {
        match self.alloc(rater).get(unit) {
            Some(&z) => self.atoms(rater)[z as usize],
            None => 0.0,
        }
    }

    pub fn latent_log_t(&self) -> Option<&'a [f64]> {
        let n = self.samples.layout.n_records;
        self.c()
            .latent_log_t
            .as_ref()
            .map(|t| &t[self.draw * n..(self.draw + 1) * n])
    }
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.n_draws())
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.n_draws()).sum()
    }

    pub fn draw(&self, chain: usize, draw: usize) -> DrawView<'_> {
        assert!(draw < self.chains[chain].n_draws(), "draw index out of range");
        DrawView {
            samples: self,
            chain,
            draw,
        }
    }

    /// Draws pooled across chains, chain by chain in draw order.
    pub fn iter_draws(&self) -> impl Iterator<Item = DrawView<'_>> {
        self.chains
            .iter()
            .enumerate()
            .flat_map(move |(c, ch)| (0..ch.n_draws()).map(move |d| self.draw(c, d)))
    }

    /// Draw by pooled index (chain-major).
    pub fn pooled(&self, index: usize) -> DrawView<'_> {
        let per = self.draws_per_chain();
        self.draw(index / per, index % per)
    }

    pub fn censoring_violations(&self) -> u64 {
        self.chains.iter().map(|c| c.censoring_violations).sum()
    }

    /// Names of the scalar parameters understood by [`Self::series`].
    pub fn scalar_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["mu", "sigma_b", "sigma_eps"].iter().map(|s| s.to_string()).collect();
        v.extend(Examiner::ALL.iter().map(|e| format!("sigma_{e}")));
        v
    }

    /// Per-chain trace of a named quantity: `mu`, `sigma_b`, `sigma_eps`,
    /// `sigma_A` … `sigma_S`, `b[i]`, `log_theta[j]` or `beta_E[u]`.
    pub fn series(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        let pick = |f: &dyn Fn(DrawView<'_>) -> f64| -> Vec<Vec<f64>> {
            (0..self.n_chains())
                .map(|c| (0..self.chains[c].n_draws()).map(|d| f(self.draw(c, d))).collect())
                .collect()
        };
        let indexed = |prefix: &str| -> Option<usize> { name.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok() };
        match name {
            "mu" => return Some(pick(&|v| v.mu())),
            "sigma_b" => return Some(pick(&|v| v.sigma_b())),
            "sigma_eps" => return Some(pick(&|v| v.sigma_eps())),
            _ => {}
        }
        if let Some(e) = name.strip_prefix("sigma_") {
            let e: Examiner = e.parse().ok()?;
            return Some(pick(&|v| v.sigma()[e.index()]));
        }
        if let Some(i) = indexed("b[") {
            (i < self.layout.n_subjects).then_some(())?;
            return Some(pick(&|v| v.b()[i]));
        }
        if let Some(j) = indexed("log_theta[") {
            (j < self.layout.n_sites).then_some(())?;
            return Some(pick(&|v| v.log_theta()[j] as f64));
        }
        if let Some(rest) = name.strip_prefix("beta_") {
            let (e, idx) = rest.split_once('[')?;
            let e: Examiner = e.parse().ok()?;
            let r = e.rater_index()?;
            let u: usize = idx.strip_suffix(']')?.parse().ok()?;
            (self.layout.atoms > 0 && u < self.layout.unit_sites[r].len()).then_some(())?;
            return Some(pick(&|v| v.beta(r, u)));
        }
        None
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), InferenceError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let meta = SamplesMeta {
            spec: self.spec,
            config: self.config,
            layout: self.layout.clone(),
            chains: self
                .chains
                .iter()
                .map(|c| ChainMeta {
                    n_draws: c.n_draws(),
                    censoring_violations: c.censoring_violations,
                    latent: c.latent_log_t.is_some(),
                })
                .collect(),
        };
        fs::write(dir.join("samples.json"), serde_json::to_vec_pretty(&meta).map_err(fmt_err)?)?;
        for (ci, c) in self.chains.iter().enumerate() {
            let p = |name: &str| dir.join(format!("chain{ci}_{name}.bin"));
            write_f64(&p("mu"), &c.mu)?;
            write_f64(&p("sigma_b"), &c.sigma_b)?;
            write_f64(&p("sigma_eps"), &c.sigma_eps)?;
            write_f64(&p("sigma"), &c.sigma.iter().flatten().copied().collect::<Vec<_>>())?;
            write_f64(&p("b"), &c.b)?;
            write_f32(&p("log_theta"), &c.log_theta)?;
            for (r, e) in Examiner::RATERS.iter().enumerate().take(c.alloc.len()) {
                fs::write(p(&format!("alloc_{e}")), &c.alloc[r])?;
                write_f64(&p(&format!("atoms_{e}")), &c.atoms[r])?;
                write_f64(&p(&format!("weights_{e}")), &c.weights[r])?;
            }
            if let Some(t) = &c.latent_log_t {
                write_f64(&p("latent_log_t"), t)?;
            }
        }
        let mut w = BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
        writeln!(w, "chain,draw,{}", self.scalar_names().join(","))?;
        for (ci, c) in self.chains.iter().enumerate() {
            for d in 0..c.n_draws() {
                let s = c.sigma[d];
                writeln!(
                    w,
                    "{ci},{d},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    c.mu[d], c.sigma_b[d], c.sigma_eps[d], s[0], s[1], s[2], s[3]
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, InferenceError> {
        let dir = dir.as_ref();
        let meta: SamplesMeta = serde_json::from_slice(&fs::read(dir.join("samples.json"))?).map_err(fmt_err)?;
        let mut chains = Vec::with_capacity(meta.chains.len());
        let l = &meta.layout;
        for (ci, cm) in meta.chains.iter().enumerate() {
            let p = |name: &str| dir.join(format!("chain{ci}_{name}.bin"));
            let n = cm.n_draws;
            let expect = |v: usize, want: usize, what: &str| {
                if v == want {
                    Ok(())
                } else {
                    Err(InferenceError::Format(format!("chain {ci} {what}: {v} values, expected {want}")))
                }
            };
            let mu = read_f64(&p("mu"))?;
            expect(mu.len(), n, "mu")?;
            let sigma_b = read_f64(&p("sigma_b"))?;
            expect(sigma_b.len(), n, "sigma_b")?;
            let sigma_eps = read_f64(&p("sigma_eps"))?;
            expect(sigma_eps.len(), n, "sigma_eps")?;
            let sflat = read_f64(&p("sigma"))?;
            expect(sflat.len(), 4 * n, "sigma")?;
            let b = read_f64(&p("b"))?;
            expect(b.len(), n * l.n_subjects, "b")?;
            let log_theta = read_f32(&p("log_theta"))?;
            expect(log_theta.len(), n * l.n_sites, "log_theta")?;
            let raters = if l.atoms == 0 { 0 } else { 3 };
            let (mut alloc, mut atoms, mut weights) = (Vec::new(), Vec::new(), Vec::new());
            for (r, e) in Examiner::RATERS.iter().enumerate().take(raters) {
                let a = fs::read(p(&format!("alloc_{e}")))?;
                expect(a.len(), n * l.unit_sites[r].len(), "alloc")?;
                let at = read_f64(&p(&format!("atoms_{e}")))?;
                expect(at.len(), n * l.atoms, "atoms")?;
                let w = read_f64(&p(&format!("weights_{e}")))?;
                expect(w.len(), n * l.atoms, "weights")?;
                alloc.push(a);
                atoms.push(at);
                weights.push(w);
            }
            let latent_log_t = if cm.latent {
                let t = read_f64(&p("latent_log_t"))?;
                expect(t.len(), n * l.n_records, "latent_log_t")?;
                Some(t)
            } else {
                None
            };
            chains.push(ChainSamples {
                mu,
                sigma_b,
                sigma_eps,
                sigma: sflat.chunks_exact(4).map(|s| [s[0], s[1], s[2], s[3]]).collect(),
                b,
                log_theta,
                alloc,
                atoms,
                weights,
                latent_log_t,
                censoring_violations: cm.censoring_violations,
                seconds: 0.0,
            });
        }
        Ok(PosteriorSamples {
            spec: meta.spec,
            config: meta.config,
            layout: meta.layout,
            chains,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ChainMeta {
    n_draws: usize,
    censoring_violations: u64,
    latent: bool,
}

#[derive(Serialize, Deserialize)]
struct SamplesMeta {
    spec: ModelSpec,
    config: RunConfig,
    layout: SampleLayout,
    chains: Vec<ChainMeta>,
}

fn fmt_err(e: serde_json::Error) -> InferenceError {
    InferenceError::Format(e.to_string())
}

fn write_f64(path: &Path, v: &[f64]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

fn write_f32(path: &Path, v: &[f32]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

fn read_f64(path: &Path) -> Result<Vec<f64>, InferenceError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(InferenceError::Format(format!("{} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn read_f32(path: &Path) -> Result<Vec<f32>, InferenceError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(InferenceError::Format(format!("{} is not a whole number of f32 values", path.display())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}
