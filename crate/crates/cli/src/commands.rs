use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use probecal_core::agreement::{posterior_predictive_agreement, AgreementRow, PredictiveOptions};
use probecal_core::clustering::{
    class_characterization, cocluster_matrix, least_squares_partition, merge_classes, partition_draws,
    CharacterizationOptions,
};
use probecal_core::data::{load_dataset, Examiner};
use probecal_core::diagnostics::{convergence_summary, dic3, Dic3Report, DiagnosticsError, Psrf};
use probecal_core::inference::{run_chains, DppSpec, ModelSpec, ModelVariant, PosteriorSamples, RunConfig};
use probecal_core::numeric::quantile_sorted;
use probecal_core::simulate::{simulate_dataset, truth_table, TruthMode, TruthParams};

use crate::config::{overlay, ConfigFile};
use crate::error::CliError;
use crate::manifest::{self, manifest_path, Recorder};
use crate::{AgreementArgs, ChainArgs, ClusterArgs, CompareArgs, DiagnoseArgs, FitArgs, SimulateArgs, TruthModeArg};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_TRUTH_DRAWS: u64 = 10_000_000;
const DEFAULT_REPS: u64 = 10_000;

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn flag(set: bool) -> Option<bool> {
    set.then_some(true)
}

fn positive(name: &str, v: u64) -> Result<usize, CliError> {
    if v == 0 {
        Err(CliError::Usage(format!("`{name}` must be at least 1")))
    } else {
        Ok(v as usize)
    }
}

fn config_input(rec: &mut Recorder, path: Option<&Path>) -> Result<ConfigFile, CliError> {
    if let Some(p) = path {
        rec.input_file(p)?;
    }
    ConfigFile::load(path)
}

#[derive(Serialize)]
struct SimulateSettings {
    seed: u64,
    truth_draws: u64,
    truth_mode: TruthModeArg,
    #[serde(flatten)]
    params: TruthParams,
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("simulate");
    let cfg = config_input(&mut rec, a.config.as_deref())?;
    let seed = cfg.layer(a.seed, "seed")?.unwrap_or(DEFAULT_SEED);
    let truth_draws = cfg.layer(a.truth_draws, "truth_draws")?.unwrap_or(DEFAULT_TRUTH_DRAWS);
    let truth_mode = cfg.layer(a.truth_mode, "truth_mode")?.unwrap_or(TruthModeArg::Exact);
    let params = overlay(&TruthParams::reference_scenario(), cfg.take_rest())?;
    cfg.finish()?;
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let (data, latent) = simulate_dataset(&params, seed)?;
    ensure_parent(&a.out)?;
    data.save_csv(&a.out)?;
    let mut outputs = vec![display(&a.out)];
    if let Some(p) = &a.latent {
        ensure_parent(p)?;
        latent.save_csv(p)?;
        outputs.push(display(p));
    }
    if let Some(p) = &a.truth {
        let mode = match truth_mode {
            TruthModeArg::Exact => TruthMode::Exact,
            TruthModeArg::Mixture => TruthMode::MarginalMixture,
        };
        write_json(p, &truth_table(&params, truth_draws, seed, mode)?)?;
        outputs.push(display(p));
    }

    let settings = SimulateSettings {
        seed,
        truth_draws,
        truth_mode,
        params,
    };
    let m = rec.finish(Some(seed), &settings, outputs, Vec::new())?;
    manifest::write(&m, &manifest_path(&a.out, false))
}

/// Sampler settings shared by `fit` and `compare`.
#[derive(Clone, Copy, Serialize)]
struct ChainSettings {
    chains: usize,
    burnin: usize,
    keep: usize,
    thin: usize,
    seed: u64,
    alpha: f64,
    truncation: usize,
}

impl ChainSettings {
    fn resolve(a: &ChainArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let protocol = RunConfig::desk(DEFAULT_SEED);
        let dpp = DppSpec::default();
        let alpha = cfg.layer(a.alpha, "alpha")?.unwrap_or(dpp.alpha);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CliError::Usage(format!("`alpha` must be positive, got {alpha}")));
        }
        Ok(ChainSettings {
            chains: positive("chains", cfg.layer(a.chains, "chains")?.unwrap_or(protocol.n_chains as u64))?,
            burnin: cfg.layer(a.burnin, "burnin")?.unwrap_or(protocol.burn_in as u64) as usize,
            keep: positive("keep", cfg.layer(a.keep, "keep")?.unwrap_or(protocol.n_keep as u64))?,
            thin: positive("thin", cfg.layer(a.thin, "thin")?.unwrap_or(protocol.thin as u64))?,
            seed: cfg.layer(a.seed, "seed")?.unwrap_or(DEFAULT_SEED),
            alpha,
            truncation: positive("truncation", cfg.layer(a.truncation, "truncation")?.unwrap_or(dpp.truncation as u64))?,
        })
    }

    fn run_config(&self, retain_latent: bool) -> RunConfig {
        RunConfig {
            n_chains: self.chains,
            burn_in: self.burnin,
            n_keep: self.keep,
            thin: self.thin,
            seed: self.seed,
            retain_latent,
        }
    }

    fn spec(&self, variant: ModelVariant) -> ModelSpec {
        let mut spec = ModelSpec::new(variant);
        spec.dpp.alpha = self.alpha;
        spec.dpp.truncation = self.truncation;
        spec
    }
}

#[derive(Serialize)]
struct FitSettings {
    model: ModelVariant,
    retain_latent: bool,
    #[serde(flatten)]
    chain: ChainSettings,
}

fn model_setting(flag: Option<String>, cfg: &ConfigFile) -> Result<ModelVariant, CliError> {
    let text = match flag {
        Some(s) => Some(s),
        None => match cfg.value::<toml::Value>("model")? {
            None => None,
            Some(toml::Value::Integer(i)) => Some(i.to_string()),
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => return Err(CliError::Config(format!("key `model`: expected 0-3, got {other}"))),
        },
    };
    text.map_or(Ok(ModelVariant::Model3), |s| s.parse().map_err(CliError::Usage))
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("fit");
    let cfg = config_input(&mut rec, a.chain.config.as_deref())?;
    let model = model_setting(a.model, &cfg)?;
    let retain_latent = cfg.layer(flag(a.retain_latent), "retain_latent")?.unwrap_or(false);
    let chain = ChainSettings::resolve(&a.chain, &cfg)?;
    cfg.finish()?;

    rec.input_file(&a.data)?;
    let data = load_dataset(&a.data)?;
    let samples = run_chains(&data, &chain.spec(model), &chain.run_config(retain_latent))?;
    samples.save(&a.out)?;

    let seconds = samples.chains.iter().map(|c| c.seconds).collect();
    let settings = FitSettings {
        model,
        retain_latent,
        chain,
    };
    let m = rec.finish(Some(chain.seed), &settings, vec![display(&a.out)], seconds)?;
    manifest::write(&m, &manifest_path(&a.out, true))
}

#[derive(Serialize)]
struct ParameterSummary {
    parameter: String,
    mean: f64,
    median: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct DiagnoseReport {
    model: ModelVariant,
    chains: usize,
    draws_per_chain: usize,
    /// Absent when the run has too few chains or draws.
    psrf: Option<Vec<Psrf>>,
    posterior: Vec<ParameterSummary>,
    censoring_violations: u64,
    dic3: Option<Dic3Report>,
}

#[derive(Serialize)]
struct DiagnoseSettings {
    dic3: bool,
}

fn monitored(samples: &PosteriorSamples) -> Vec<String> {
    let mut names = samples.scalar_names();
    let variant = samples.spec.variant;
    if variant.shared_sigma() {
        names.retain(|n| !matches!(n.as_str(), "sigma_B" | "sigma_C" | "sigma_S"));
    }
    if variant == ModelVariant::Model2 {
        names.extend(Examiner::RATERS.iter().map(|e| format!("beta_{e}[0]")));
    }
    names
}

fn summarise(samples: &PosteriorSamples, name: &str) -> Option<ParameterSummary> {
    let mut pooled: Vec<f64> = samples.series(name)?.concat();
    if pooled.is_empty() {
        return None;
    }
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    pooled.sort_by(f64::total_cmp);
    Some(ParameterSummary {
        parameter: name.to_string(),
        mean,
        median: quantile_sorted(&pooled, 0.5),
        lower: quantile_sorted(&pooled, 0.025),
        upper: quantile_sorted(&pooled, 0.975),
    })
}

pub fn diagnose(a: DiagnoseArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("diagnose");
    rec.input_dir(&a.run)?;
    let samples = PosteriorSamples::load(&a.run)?;
    let psrf = match convergence_summary(&samples) {
        Ok(p) => Some(p),
        Err(DiagnosticsError::InsufficientChains { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let dic3 = match (&a.data, a.dic3) {
        (Some(path), true) => {
            rec.input_file(path)?;
            Some(dic3(&samples, &load_dataset(path)?)?)
        }
        _ => None,
    };
    let report = DiagnoseReport {
        model: samples.spec.variant,
        chains: samples.n_chains(),
        draws_per_chain: samples.draws_per_chain(),
        psrf,
        posterior: monitored(&samples).iter().filter_map(|n| summarise(&samples, n)).collect(),
        censoring_violations: samples.censoring_violations(),
        dic3,
    };

    match &a.out {
        Some(out) => {
            write_json(out, &report)?;
            let m = rec.finish(None, &DiagnoseSettings { dic3: a.dic3 }, vec![display(out)], Vec::new())?;
            manifest::write(&m, &manifest_path(out, false))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &report)?;
            writeln!(stdout).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

#[derive(Serialize)]
struct AgreementSettings {
    reps: usize,
    seed: u64,
    with_replacement: bool,
    regenerate_depths: bool,
}

#[derive(Serialize)]
struct AgreementOutput<'a> {
    n_rep: usize,
    resampled: bool,
    rows: &'a [AgreementRow],
}

pub fn agreement(a: AgreementArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("agreement");
    let cfg = config_input(&mut rec, a.config.as_deref())?;
    let settings = AgreementSettings {
        reps: positive("reps", cfg.layer(a.reps, "reps")?.unwrap_or(DEFAULT_REPS))?,
        seed: cfg.layer(a.seed, "seed")?.unwrap_or(DEFAULT_SEED),
        with_replacement: cfg.layer(flag(a.with_replacement), "with_replacement")?.unwrap_or(false),
        regenerate_depths: cfg.layer(flag(a.regenerate_depths), "regenerate_depths")?.unwrap_or(false),
    };
    cfg.finish()?;

    rec.input_dir(&a.run)?;
    rec.input_file(&a.data)?;
    let samples = PosteriorSamples::load(&a.run)?;
    let data = load_dataset(&a.data)?;
    let options = PredictiveOptions {
        with_replacement: settings.with_replacement,
        regenerate_depths: settings.regenerate_depths,
        ..PredictiveOptions::new(settings.reps, settings.seed)
    };
    let result = posterior_predictive_agreement(&samples, &data, &options)?;
    let output = AgreementOutput {
        n_rep: result.n_rep,
        resampled: result.resampled,
        rows: &result.table.rows,
    };
    write_json(&a.out, &output)?;

    let m = rec.finish(Some(settings.seed), &settings, vec![display(&a.out)], Vec::new())?;
    manifest::write(&m, &manifest_path(&a.out, false))
}

#[derive(Serialize)]
struct ClusterSettings {
    examiner: Examiner,
    merge: Vec<Vec<u32>>,
    deep_threshold: f64,
    include_singletons: bool,
}

#[derive(Serialize)]
struct DeltaHeader {
    rows: usize,
    cols: usize,
    dtype: &'static str,
    byte_order: &'static str,
    layout: &'static str,
    n_draws: u64,
    examiner: Examiner,
}

fn parse_merge(group: &str) -> Result<Vec<u32>, CliError> {
    let classes: Result<Vec<u32>, _> = group.split(',').map(|s| s.trim().parse::<u32>()).collect();
    match classes {
        Ok(c) if c.len() >= 2 => Ok(c),
        _ => Err(CliError::Usage(format!(
            "merge group `{group}` must list two or more class numbers separated by commas"
        ))),
    }
}

pub fn cluster(a: ClusterArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("cluster");
    let cfg = config_input(&mut rec, a.config.as_deref())?;
    let examiner: Examiner = a.examiner.parse().map_err(CliError::Usage)?;
    let merge_text: Vec<String> = if a.merge.is_empty() {
        cfg.value("merge")?.unwrap_or_default()
    } else {
        cfg.value::<toml::Value>("merge")?;
        a.merge.clone()
    };
    let defaults = CharacterizationOptions::default();
    let settings = ClusterSettings {
        examiner,
        merge: merge_text.iter().map(|g| parse_merge(g)).collect::<Result<_, _>>()?,
        deep_threshold: cfg.layer(a.deep_threshold, "deep_threshold")?.unwrap_or(defaults.deep_threshold_mm),
        include_singletons: cfg.layer(flag(a.include_singletons), "include_singletons")?.unwrap_or(false),
    };
    cfg.finish()?;

    rec.input_dir(&a.run)?;
    rec.input_file(&a.data)?;
    let samples = PosteriorSamples::load(&a.run)?;
    let data = load_dataset(&a.data)?;
    let draws = partition_draws(&samples, examiner)?;
    let delta = cocluster_matrix(&draws)?;
    let partition = least_squares_partition(&draws, &delta)?;
    let options = CharacterizationOptions {
        deep_threshold_mm: settings.deep_threshold,
        include_singletons: settings.include_singletons,
    };
    let mut summary = class_characterization(&partition, examiner, &samples, &data, &options)?;
    if !settings.merge.is_empty() {
        summary = merge_classes(&summary, &settings.merge, &samples, &data, &options)?;
    }
    write_json(&a.out, &summary)?;
    let mut outputs = vec![display(&a.out)];

    if let Some(p) = &a.delta {
        ensure_parent(p)?;
        let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?);
        delta.write_f32(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))?;
        let mut header_path = p.as_os_str().to_os_string();
        header_path.push(".json");
        let header_path = std::path::PathBuf::from(header_path);
        let header = DeltaHeader {
            rows: delta.n_sites(),
            cols: delta.n_sites(),
            dtype: "f32",
            byte_order: "little",
            layout: "row_major",
            n_draws: delta.n_draws(),
            examiner,
        };
        write_json(&header_path, &header)?;
        outputs.push(display(p));
        outputs.push(display(&header_path));
    }

    let m = rec.finish(None, &settings, outputs, Vec::new())?;
    manifest::write(&m, &manifest_path(&a.out, false))
}

#[derive(Serialize)]
struct CompareRow {
    rank: usize,
    model: ModelVariant,
    dic3: f64,
    expected_deviance: f64,
    plug_in: f64,
    n_draws: usize,
}

pub fn compare(a: CompareArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("compare");
    let cfg = config_input(&mut rec, a.chain.config.as_deref())?;
    let chain = ChainSettings::resolve(&a.chain, &cfg)?;
    cfg.finish()?;

    rec.input_file(&a.data)?;
    let data = load_dataset(&a.data)?;
    let mut rows = Vec::with_capacity(4);
    let mut seconds = Vec::new();
    for variant in ModelVariant::ALL {
        let samples = run_chains(&data, &chain.spec(variant), &chain.run_config(false))?;
        seconds.extend(samples.chains.iter().map(|c| c.seconds));
        let report = dic3(&samples, &data)?;
        rows.push(CompareRow {
            rank: 0,
            model: variant,
            dic3: report.dic3,
            expected_deviance: report.expected_deviance,
            plug_in: report.plug_in,
            n_draws: report.n_draws,
        });
    }
    rows.sort_by(|x, y| x.dic3.total_cmp(&y.dic3));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }

    println!("{:>4}  {:<6}  {:>12}  {:>12}  {:>12}", "rank", "model", "DIC3", "-4E[logL]", "2logf");
    for r in &rows {
        println!(
            "{:>4}  {:<6}  {:>12.2}  {:>12.2}  {:>12.2}",
            r.rank,
            r.model.number(),
            r.dic3,
            r.expected_deviance,
            r.plug_in
        );
    }

    if let Some(out) = &a.out {
        write_json(out, &rows)?;
        let m = rec.finish(Some(chain.seed), &chain, vec![display(out)], seconds)?;
        manifest::write(&m, &manifest_path(out, false))?;
    }
    Ok(())
}
