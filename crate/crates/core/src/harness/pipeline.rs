use std::collections::HashSet;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    BoundCheckConfig, DataSource, FilterConfig, GeneratorConfig, ModelKind, RunConfig,
};
use super::curve::emit_curve;
use super::io::read_csv;
use super::simulate::{simulate_linear, simulate_logistic};
use crate::bound_check::{theorem_bound_check, BoundReport, LossSpec};
use crate::codec::{
    self, binarize_response, decode, encode, partition, CodecManifest, DataMatrix, GrayImage,
};
use crate::distances::SampleSet;
use crate::error::{Error, Result};
use crate::filters::{
    augment_rows, dual_source_select, filter_candidates_with, transferable_pool, FilterOptions,
    FilterReport, SelectReport,
};
use crate::generators::{Backend, GenRequest, Generator, RemoteGenerator, Surrogate};
use crate::models::{evaluate, fit_cv, fit_ols, CvConfig, Family, FitResult};
use crate::rng::{derive_seed, stream};

pub const TEST_FRACTION: f64 = 0.2;
pub const SELECTION_FRACTION: f64 = 0.2;

const REP_TAG: u64 = 0x7265_7065;
const DATA_TAG: u64 = 0x6461_7461;
const SPLIT_TAG: u64 = 0x7370_6c74;
const SELECT_TAG: u64 = 0x7365_6c63;
const GEN_TAG: u64 = 0x0067_656e;
const FILTER_TAG: u64 = 0x6669_6c74;
const DRAW_TAG: u64 = 0x6472_6177;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub augmentation_size: usize,
    /// `None` when no repetition had rows to draw from.
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub n_repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub repetition: usize,
    pub baseline_error: f64,
    pub errors: Vec<Option<f64>>,
    pub pool_size: usize,
    pub filtered_size: usize,
    pub rho_star: Option<f64>,
    pub log_clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reports {
    /// Full selection report of repetition 0 (transfer filter).
    pub select: Option<SelectReport>,
    /// Full filter report of repetition 0 (distance filter).
    pub filter: Option<FilterReport>,
    pub bound: Option<BoundReport>,
    pub repetitions: Vec<RepetitionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_echo: RunConfig,
    pub per_size_curve: Vec<CurvePoint>,
    pub baseline_error: f64,
    pub baseline_std_error: f64,
    pub backend: Backend,
    pub reports: Reports,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl RunManifest {
    /// Pretty JSON with the wall clock zeroed, for byte comparisons.
    pub fn canonical_json(&self) -> Result<String> {
        let mut m = self.clone();
        m.wall_clock_seconds = 0.0;
        Ok(serde_json::to_string_pretty(&m)?)
    }
}

/// One repetition's data splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    /// Every non-test row; the augmented models are refitted on these.
    pub train: DataMatrix,
    pub test: DataMatrix,
    /// Held-out rows scored by the transfer selection.
    pub selection: Option<DataMatrix>,
    pub v1: DataMatrix,
    pub v2: DataMatrix,
}

fn fingerprint(row: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in row {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

impl Splits {
    pub fn new(data: &DataMatrix, with_selection: bool, seed: u64) -> Result<Self> {
        let (train, test) = partition(
            data,
            1.0 - TEST_FRACTION,
            derive_seed(seed, &[SPLIT_TAG]),
            true,
        )?;
        let (encoded, selection) = if with_selection {
            let (a, b) = partition(
                &train,
                1.0 - SELECTION_FRACTION,
                derive_seed(seed, &[SELECT_TAG]),
                true,
            )?;
            (a, Some(b))
        } else {
            (train.clone(), None)
        };
        let (v1, v2) = partition(&encoded, 0.5, 0, false)?;
        Ok(Self {
            train,
            test,
            selection,
            v1,
            v2,
        })
    }

    /// No test row (by value fingerprint) reaches encoding, generation or selection.
    pub fn isolated(&self) -> bool {
        let test: HashSet<u64> = (0..self.test.nrows())
            .map(|i| fingerprint(&self.test.row(i)))
            .collect();
        let mut parts = vec![&self.train, &self.v1, &self.v2];
        if let Some(s) = &self.selection {
            parts.push(s);
        }
        parts
            .iter()
            .all(|m| (0..m.nrows()).all(|i| !test.contains(&fingerprint(&m.row(i)))))
    }
}

pub fn model_family(kind: ModelKind) -> Family {
    match kind {
        ModelKind::Ols | ModelKind::Lasso => Family::Linear,
        ModelKind::Logistic => Family::Logistic,
    }
}

pub fn fit_model(kind: ModelKind, data: &DataMatrix) -> Result<FitResult> {
    let (x, y) = (data.predictors(), data.response());
    match kind {
        ModelKind::Ols => fit_ols(&x, &y),
        ModelKind::Lasso => Ok(fit_cv(Family::Linear, &x, &y, None, &CvConfig::default())?.0),
        ModelKind::Logistic => Ok(fit_cv(Family::Logistic, &x, &y, None, &CvConfig::default())?.0),
    }
}

/// Test error: mean squared error, or misclassification rate for logistic fits.
pub fn test_error(fit: &FitResult, test: &DataMatrix) -> Result<f64> {
    let m = evaluate(fit, &test.predictors(), &test.response())?;
    Ok(m.misclassification_rate.unwrap_or(m.mse))
}

pub fn load_data(source: &DataSource, seed: u64) -> Result<DataMatrix> {
    match source {
        DataSource::SimulateLinear {
            n,
            p,
            beta,
            noise_sd,
        } => simulate_linear(*n, *p, beta, *noise_sd, seed),
        DataSource::SimulateLogistic { n, p, beta } => simulate_logistic(*n, *p, beta, seed),
        DataSource::Csv { path, response_col } => {
            Ok(read_csv(path, response_col)?.with_response_last())
        }
    }
}

/// Generator named by the config. An unreachable service is an error
/// unless the config allows falling back to the surrogate.
pub fn build_generator(cfg: &GeneratorConfig) -> Result<Box<dyn Generator>> {
    match cfg {
        GeneratorConfig::Surrogate => Ok(Box::new(Surrogate)),
        GeneratorConfig::Remote {
            endpoint,
            timeout_seconds,
            fallback_to_surrogate,
        } => {
            let remote =
                RemoteGenerator::new(endpoint.clone(), Duration::from_secs_f64(*timeout_seconds));
            match remote.ensure_ready() {
                Ok(_) => Ok(Box::new(remote)),
                Err(e) if *fallback_to_surrogate => {
                    warn!("{endpoint} unavailable ({e}); falling back to the surrogate generator");
                    Ok(Box::new(Surrogate))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Images and sidecars of one encoded subset and its generated variants.
#[derive(Debug, Clone)]
pub struct Generated {
    pub source: GrayImage,
    pub manifest: CodecManifest,
    pub images: Vec<GrayImage>,
    pub pool: DataMatrix,
    pub log_clamped: usize,
    pub backend: Backend,
}

/// Encodes `subset`, generates one image per strength and decodes them into a row pool.
pub fn generate_pool(
    subset: &DataMatrix,
    config: &RunConfig,
    generator: &dyn Generator,
    seed: u64,
) -> Result<Generated> {
    let m = &config.mapping;
    let (source, manifest) = encode(
        subset,
        m.mapping_kind,
        m.exp_coefficient,
        m.quantization_bits,
    )?;
    let grid = config.strength_grid.values()?;
    let reqs: Vec<GenRequest> = grid
        .iter()
        .enumerate()
        .map(|(k, s)| GenRequest {
            image: source.clone(),
            prompt: config.prompt.clone(),
            strength: *s,
            guidance_scale: config.guidance_scale,
            seed: derive_seed(seed, &[k as u64]),
        })
        .collect();
    let mut images = Vec::with_capacity(reqs.len());
    let mut parts = Vec::with_capacity(reqs.len());
    let mut log_clamped = 0;
    let mut backend = Backend::Surrogate;
    for res in generator.generate_batch(&reqs) {
        let res = res?;
        backend = res.backend;
        let d = decode(&res.image, &manifest)?;
        log_clamped += d.log_clamped;
        parts.push(d.data);
        images.push(res.image);
    }
    let refs: Vec<&DataMatrix> = parts.iter().collect();
    let mut pool = DataMatrix::concat(&refs)?;
    if config.model == ModelKind::Logistic {
        pool = binarize_response(&clamp_response(&pool)?, 0.5)?;
    }
    Ok(Generated {
        source,
        manifest,
        images,
        pool,
        log_clamped,
        backend,
    })
}

/// Decoded responses can overshoot [0, 1] by rounding.
fn clamp_response(data: &DataMatrix) -> Result<DataMatrix> {
    let rc = data.response_col();
    let mut v = data.values().clone();
    v.column_mut(rc).apply(|y| *y = y.clamp(0.0, 1.0));
    DataMatrix::with_response(v, rc)
}

/// Column means and population sds of `reference`, sds below 1e-12 set to 1.
fn standardizer(reference: &DataMatrix) -> (Vec<f64>, Vec<f64>) {
    let v = reference.values();
    let n = v.nrows() as f64;
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for j in 0..v.ncols() {
        let col = v.column(j);
        let m = col.sum() / n;
        let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        means.push(m);
        sds.push(if sd < 1e-12 { 1.0 } else { sd });
    }
    (means, sds)
}

fn standardized(data: &DataMatrix, means: &[f64], sds: &[f64]) -> Result<SampleSet> {
    let v = data.values();
    SampleSet::new(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| {
        (v[(i, j)] - means[j]) / sds[j]
    }))
}

/// Output of the filter stage for one repetition.
#[derive(Debug, Clone)]
pub struct Filtered {
    /// `None` when nothing survived.
    pub pool: Option<DataMatrix>,
    pub select: Option<SelectReport>,
    pub filter: Option<FilterReport>,
    pub rho_star: Option<f64>,
}

/// Applies the configured filter to the decoded pools of `V1` and `V2`.
pub fn filter_pools(
    config: &RunConfig,
    splits: &Splits,
    pool1: &DataMatrix,
    pool2: &DataMatrix,
    seed: u64,
) -> Result<Filtered> {
    let mut out = Filtered {
        pool: None,
        select: None,
        filter: None,
        rho_star: None,
    };
    match &config.filter {
        FilterConfig::Transfer(t) => {
            let mut t = t.clone();
            t.seed = derive_seed(seed, &[t.seed]);
            t.family = model_family(config.model);
            let selection = splits
                .selection
                .as_ref()
                .ok_or_else(|| Error::invalid("transfer filter needs a selection split"))?;
            match dual_source_select(pool1, pool2, &splits.v1, &splits.v2, selection, &t) {
                Ok(report) => {
                    out.rho_star = Some(report.rho_star);
                    out.pool = transferable_pool(
                        pool1,
                        pool2,
                        &splits.v1,
                        &splits.v2,
                        report.rho_star,
                        &t,
                    )?
                    .data;
                    out.select = Some(report);
                }
                Err(Error::NoValidRatio) => {
                    warn!("no sampling ratio passed validation; pool is empty")
                }
                Err(e) => return Err(e),
            }
        }
        FilterConfig::Distance { metric, policy, .. } => {
            let originals = splits.v1.vstack(&splits.v2)?;
            let pool = pool1.vstack(pool2)?;
            let (means, sds) = standardizer(&originals);
            let options = FilterOptions {
                seed,
                ..FilterOptions::default()
            };
            let report = filter_candidates_with(
                &standardized(&originals, &means, &sds)?,
                &standardized(&pool, &means, &sds)?,
                *metric,
                *policy,
                &options,
            )?;
            if !report.retained_indices.is_empty() {
                out.pool = Some(pool.select_rows(&report.retained_indices));
            }
            out.filter = Some(report);
        }
    }
    Ok(out)
}

/// Seed and splits of one repetition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub splits: Splits,
}

pub fn repetition_seed(run_seed: u64, r: usize) -> u64 {
    derive_seed(run_seed, &[REP_TAG, r as u64])
}

/// Data and splits of repetition `r`. Simulated sources are redrawn per
/// repetition; a CSV is loaded once by the caller and only resplit.
pub fn prepare(config: &RunConfig, csv_data: Option<&DataMatrix>, r: usize) -> Result<Prepared> {
    let seed = repetition_seed(config.seed, r);
    let data = match csv_data {
        Some(d) => d.clone(),
        None => load_data(&config.data_source, derive_seed(seed, &[DATA_TAG]))?,
    };
    let transfer = matches!(config.filter, FilterConfig::Transfer(_));
    let splits = Splits::new(&data, transfer, seed)?;
    if !splits.isolated() {
        warn!("repetition {r}: a test row duplicates a training row");
    }
    Ok(Prepared { seed, splits })
}

pub fn filter_seed(rep_seed: u64) -> u64 {
    derive_seed(rep_seed, &[FILTER_TAG])
}

/// Generated pools of `V1` and `V2`.
pub fn generate_both(
    config: &RunConfig,
    splits: &Splits,
    generator: &dyn Generator,
    rep_seed: u64,
) -> Result<[Generated; 2]> {
    Ok([
        generate_pool(
            &splits.v1,
            config,
            generator,
            derive_seed(rep_seed, &[GEN_TAG, 1]),
        )?,
        generate_pool(
            &splits.v2,
            config,
            generator,
            derive_seed(rep_seed, &[GEN_TAG, 2]),
        )?,
    ])
}

struct Outcome {
    summary: RepetitionSummary,
    select: Option<SelectReport>,
    filter: Option<FilterReport>,
    bound: Option<BoundReport>,
    backend: Backend,
    artifacts: Option<(Generated, Generated)>,
}

fn run_repetition(
    config: &RunConfig,
    csv_data: Option<&DataMatrix>,
    generator: &dyn Generator,
    r: usize,
) -> Result<Outcome> {
    let Prepared { seed, splits } = prepare(config, csv_data, r)?;
    let [g1, g2] = generate_both(config, &splits, generator, seed)?;
    let pool_size = g1.pool.nrows() + g2.pool.nrows();
    let log_clamped = g1.log_clamped + g2.log_clamped;
    let Filtered {
        pool: filtered,
        select,
        filter,
        rho_star,
    } = filter_pools(config, &splits, &g1.pool, &g2.pool, filter_seed(seed))?;
    let filtered_size = filtered.as_ref().map_or(0, DataMatrix::nrows);

    let baseline_error = test_error(&fit_model(config.model, &splits.train)?, &splits.test)?;
    let mut errors = Vec::with_capacity(config.augmentation_sizes.len());
    for (k, &s) in config.augmentation_sizes.iter().enumerate() {
        if s == 0 {
            errors.push(Some(baseline_error));
            continue;
        }
        let Some(pool) = filtered.as_ref() else {
            errors.push(None);
            continue;
        };
        let take = s.min(pool.nrows());
        if take < s {
            warn!("repetition {r}: size {s} capped at the {take} filtered rows");
        }
        let idx =
            index::sample(&mut stream(seed, &[DRAW_TAG, k as u64]), pool.nrows(), take).into_vec();
        let augmented = augment_rows(&splits.train, &pool.select_rows(&idx))?;
        errors.push(Some(test_error(
            &fit_model(config.model, &augmented.data)?,
            &splits.test,
        )?));
    }

    let bound = match (&config.bound_check, &filtered) {
        (Some(b), Some(pool)) if r == 0 => Some(bound_check(b, &splits.train, pool, seed)?),
        _ => None,
    };

    let backend = g1.backend;
    let artifacts = (r == 0 && config.keep_artifacts).then_some((g1, g2));
    Ok(Outcome {
        summary: RepetitionSummary {
            repetition: r,
            baseline_error,
            errors,
            pool_size,
            filtered_size,
            rho_star,
            log_clamped,
        },
        select: if r == 0 { select } else { None },
        filter: if r == 0 { filter } else { None },
        bound,
        backend,
        artifacts,
    })
}

/// Bound check on the response column: real training rows against filtered synthetic rows.
pub fn bound_check(
    cfg: &BoundCheckConfig,
    real: &DataMatrix,
    synthetic: &DataMatrix,
    seed: u64,
) -> Result<BoundReport> {
    let grid = cfg
        .hypothesis_grid
        .iter()
        .map(|h| make_loss(cfg.loss, cfg.bound, *h))
        .collect::<Result<Vec<_>>>()?;
    let loss = grid
        .first()
        .ok_or_else(|| Error::invalid("empty hypothesis grid"))?;
    theorem_bound_check(
        &SampleSet::from_1d(&real.response())?,
        &SampleSet::from_1d(&synthetic.response())?,
        loss,
        &grid,
        cfg.delta,
        seed,
    )
}

fn make_loss(kind: crate::bound_check::LossKind, bound: f64, [a, b]: [f64; 2]) -> Result<LossSpec> {
    match kind {
        crate::bound_check::LossKind::AbsoluteLinear => LossSpec::absolute_linear(a, b, bound),
        crate::bound_check::LossKind::SquaredClipped => LossSpec::squared_clipped(a, b, bound),
    }
}

/// Mean and standard error of the mean; the error is 0 for a single value.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every repetition and returns the manifest without touching the disk.
pub fn run_with_generator(config: &RunConfig, generator: &dyn Generator) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let csv_data = match &config.data_source {
        DataSource::Csv { .. } => Some(load_data(&config.data_source, config.seed)?),
        _ => None,
    };
    let mut outcomes: Vec<Outcome> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(config, csv_data.as_ref(), generator, r))
        .collect::<Result<_>>()?;

    let baselines: Vec<f64> = outcomes.iter().map(|o| o.summary.baseline_error).collect();
    let (baseline_error, baseline_std_error) = mean_and_se(&baselines);
    let per_size_curve = config
        .augmentation_sizes
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let vals: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| o.summary.errors[k])
                .collect();
            let (mean_error, std_error) = if vals.is_empty() {
                (None, None)
            } else {
                let (m, se) = mean_and_se(&vals);
                (Some(m), Some(se))
            };
            CurvePoint {
                augmentation_size: s,
                mean_error,
                std_error,
                n_repetitions: vals.len(),
            }
        })
        .collect();

    let first = outcomes.first_mut().expect("at least one repetition");
    let reports = Reports {
        select: first.select.take(),
        filter: first.filter.take(),
        bound: first.bound.take(),
        repetitions: outcomes.iter().map(|o| o.summary.clone()).collect(),
    };
    let manifest = RunManifest {
        config_echo: config.clone(),
        per_size_curve,
        baseline_error,
        baseline_std_error,
        backend: outcomes[0].backend,
        reports,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    if let Some((g1, g2)) = outcomes[0].artifacts.take() {
        write_artifacts(&config.output_dir, &g1, &g2)?;
    }
    Ok(manifest)
}

/// Full run: builds the generator, runs, then writes `manifest.json` and
/// `curve.csv` into the output directory.
pub fn run_pipeline(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let generator = build_generator(&config.generator)?;
    let manifest = run_with_generator(config, generator.as_ref())?;
    write_outputs(&manifest, &config.output_dir)?;
    info!(
        "{} repetitions in {:.1}s, baseline error {:.6}",
        config.repetitions, manifest.wall_clock_seconds, manifest.baseline_error
    );
    Ok(manifest)
}

pub fn write_outputs(manifest: &RunManifest, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    emit_curve(manifest, dir.join("curve.csv"))
}

/// Encoded PNGs with sidecars, and the generated images under `gen/`.
pub fn write_artifacts(dir: &Path, g1: &Generated, g2: &Generated) -> Result<()> {
    let gen_dir = dir.join("gen");
    std::fs::create_dir_all(&gen_dir)?;
    for (name, g) in [("v1", g1), ("v2", g2)] {
        let p = dir.join(format!("{name}.png"));
        codec::write_png(&g.source, &p)?;
        codec::write_manifest(&g.manifest, &p)?;
        for (k, im) in g.images.iter().enumerate() {
            codec::write_png(im, gen_dir.join(format!("{name}_{k:04}.png")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::TransferConfig;
    use crate::harness::config::{MappingConfig, StrengthGrid};

    fn config(filter: FilterConfig, model: ModelKind) -> RunConfig {
        RunConfig {
            data_source: DataSource::SimulateLinear {
                n: 120,
                p: 4,
                beta: vec![1.0, -1.0, 0.5, 0.0],
                noise_sd: 0.5,
            },
            mapping: MappingConfig::default(),
            generator: GeneratorConfig::Surrogate,
            prompt: String::new(),
            strength_grid: StrengthGrid {
                start: 0.1,
                stop: 0.3,
                step: 0.1,
            },
            guidance_scale: 7.5,
            filter,
            model,
            repetitions: 2,
            augmentation_sizes: vec![0, 20, 1000],
            seed: 5,
            output_dir: std::env::temp_dir(),
            keep_artifacts: false,
            bound_check: None,
        }
    }

    fn transfer() -> FilterConfig {
        let mut t = TransferConfig::new(vec![0.5, 1.0], 40, 0);
        t.iterations = 2;
        FilterConfig::Transfer(t)
    }

    #[test]
    fn splits_are_disjoint_and_sized() {
        let data = simulate_linear(100, 3, &[1.0, 0.0, 0.0], 1.0, 1).unwrap();
        let s = Splits::new(&data, true, 9).unwrap();
        assert_eq!((s.train.nrows(), s.test.nrows()), (80, 20));
        let sel = s.selection.as_ref().unwrap();
        assert_eq!(sel.nrows(), 16);
        assert_eq!(s.v1.nrows() + s.v2.nrows(), 64);
        assert!(s.isolated());
        let mut leaky = s.clone();
        leaky.v1 = leaky.v1.vstack(&s.test.select_rows(&[0])).unwrap();
        assert!(!leaky.isolated());
    }

    #[test]
    fn transfer_run_is_deterministic() {
        let cfg = config(transfer(), ModelKind::Lasso);
        let a = run_with_generator(&cfg, &Surrogate).unwrap();
        let b = run_with_generator(&cfg, &Surrogate).unwrap();
        assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
        assert_eq!(a.per_size_curve.len(), 3);
        assert_eq!(a.per_size_curve[0].mean_error, Some(a.baseline_error));
        assert_eq!(a.reports.repetitions.len(), 2);
        assert!(a.reports.select.is_some());
    }

    #[test]
    fn distance_run_with_ols_and_bound() {
        let mut cfg = config(
            FilterConfig::Distance {
                metric: crate::filters::DistanceMetric::Wasserstein,
                policy: crate::filters::FilterPolicy::Quantile { q: 0.5 },
                features: Default::default(),
            },
            ModelKind::Ols,
        );
        cfg.bound_check = Some(crate::harness::config::BoundCheckConfig {
            loss: crate::bound_check::LossKind::AbsoluteLinear,
            bound: 100.0,
            hypothesis_grid: vec![[1.0, 0.0], [0.5, 0.0]],
            delta: 0.05,
        });
        let m = run_with_generator(&cfg, &Surrogate).unwrap();
        let f = m.reports.filter.as_ref().unwrap();
        // 96 encoded rows, 3 strengths
        assert_eq!(f.distances.len(), 288);
        assert_eq!(f.retained_indices.len(), 144);
        assert_eq!(m.reports.repetitions[0].filtered_size, 144);
        assert!(m.reports.bound.is_some());
        assert!(m.per_size_curve.iter().all(|p| p.n_repetitions == 2));
    }

    #[test]
    fn logistic_pool_is_binary() {
        let cfg = RunConfig {
            data_source: DataSource::SimulateLogistic {
                n: 100,
                p: 3,
                beta: vec![2.0, 0.0, 0.0],
            },
            ..config(transfer(), ModelKind::Logistic)
        };
        let data = load_data(&cfg.data_source, 3).unwrap();
        let g = generate_pool(&data, &cfg, &Surrogate, 1).unwrap();
        assert_eq!(g.pool.nrows(), 300);
        assert!(g.pool.response().iter().all(|y| *y == 0.0 || *y == 1.0));
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(transfer(), ModelKind::Ols);
        cfg.repetitions = 1;
        cfg.output_dir = dir.path().to_path_buf();
        cfg.keep_artifacts = true;
        run_pipeline(&cfg).unwrap();
        let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        assert!(curve.starts_with("size,mean_error,std_error,baseline\n"));
        assert_eq!(curve.lines().count(), 4);
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config_echo, cfg);
        assert!(dir.path().join("v1.png").exists());
        assert!(dir.path().join("gen").join("v2_0002.png").exists());
    }

    #[test]
    fn unreachable_remote() {
        let cfg = GeneratorConfig::Remote {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_seconds: 1.0,
            fallback_to_surrogate: false,
        };
        assert!(matches!(build_generator(&cfg), Err(Error::Unreachable(_))));
        let cfg = GeneratorConfig::Remote {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_seconds: 1.0,
            fallback_to_surrogate: true,
        };
        assert!(build_generator(&cfg).is_ok());
    }
}
