use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use augmentor_core::codec::{self, decode, encode, read_manifest, read_png, DataMatrix};
use augmentor_core::harness::{
    self, bound_check, build_generator, filter_pools, filter_seed, fit_model, generate_both, load_data, prepare,
    test_error, write_artifacts, write_csv, DataSource, GeneratorConfig, RunConfig,
};
use augmentor_core::models::evaluate;
use augmentor_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

/// Augment small tabular datasets with filtered, generator-produced rows.
#[derive(Parser)]
#[command(name = "augmentor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (or load) the configured dataset and write data.csv.
    Simulate(Common),
    /// Split the data and encode V1 and V2 as grayscale PNGs with sidecars.
    Encode(Common),
    /// Decode every PNG in the output directory (and gen/) that has a sidecar.
    Decode(Common),
    /// Encode and run the generator over the strength grid.
    Generate(Common),
    /// Generate, decode and filter; writes filter.json and filtered.csv.
    Filter(Common),
    /// Fit the configured model on the training split and score the test split.
    Evaluate(Common),
    /// Run every repetition and write manifest.json and curve.csv.
    Pipeline(Common),
    /// Check the generalization bound on the filtered rows of repetition 0.
    BoundCheck(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Surrogate,
    Remote,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    keep_artifacts: bool,
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    /// Service URL for the remote generator.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
struct EmptyPool;

impl std::fmt::Display for EmptyPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("filtered pool is empty for every augmentation size")
    }
}

impl std::error::Error for EmptyPool {}

fn load_config(c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(&c.config)
        .with_context(|| format!("reading {}", c.config.display()))
        .map_err(ConfigError)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    cfg.keep_artifacts |= c.keep_artifacts;
    match (c.generator, &c.endpoint) {
        (Some(GeneratorKind::Surrogate), _) => cfg.generator = GeneratorConfig::Surrogate,
        (Some(GeneratorKind::Remote), endpoint) | (None, endpoint @ Some(_)) => {
            let (old_endpoint, timeout_seconds, fallback) = match &cfg.generator {
                GeneratorConfig::Remote {
                    endpoint,
                    timeout_seconds,
                    fallback_to_surrogate,
                } => (Some(endpoint.clone()), *timeout_seconds, *fallback_to_surrogate),
                GeneratorConfig::Surrogate => (None, 120.0, false),
            };
            let endpoint = endpoint
                .clone()
                .or(old_endpoint)
                .ok_or_else(|| ConfigError(anyhow::anyhow!("remote generator needs --endpoint")))?;
            cfg.generator = GeneratorConfig::Remote {
                endpoint,
                timeout_seconds,
                fallback_to_surrogate: fallback,
            };
        }
        (None, None) => {}
    }
    cfg.validate().map_err(|e| ConfigError(e.into()))?;
    Ok(cfg)
}

fn csv_source(cfg: &RunConfig) -> anyhow::Result<Option<DataMatrix>> {
    Ok(match cfg.data_source {
        DataSource::Csv { .. } => Some(load_data(&cfg.data_source, cfg.seed)?),
        _ => None,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> anyhow::Result<()> {
    let (Command::Simulate(c)
    | Command::Encode(c)
    | Command::Decode(c)
    | Command::Generate(c)
    | Command::Filter(c)
    | Command::Evaluate(c)
    | Command::Pipeline(c)
    | Command::BoundCheck(c)) = &command;
    let cfg = load_config(c)?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    match command {
        Command::Simulate(_) => {
            let data = load_data(&cfg.data_source, cfg.seed)?;
            write_csv(&data, out.join("data.csv"))?;
            info!("wrote {} rows to {}", data.nrows(), out.join("data.csv").display());
        }
        Command::Encode(_) => {
            let prep = prepare(&cfg, csv_source(&cfg)?.as_ref(), 0)?;
            let m = &cfg.mapping;
            for (name, part) in [("v1", &prep.splits.v1), ("v2", &prep.splits.v2)] {
                let (image, manifest) = encode(part, m.mapping_kind, m.exp_coefficient, m.quantization_bits)?;
                let path = out.join(format!("{name}.png"));
                codec::write_png(&image, &path)?;
                codec::write_manifest(&manifest, &path)?;
            }
            write_csv(&prep.splits.train, out.join("train.csv"))?;
            write_csv(&prep.splits.test, out.join("test.csv"))?;
        }
        Command::Decode(_) => {
            let mut count = 0;
            for dir in [out.clone(), out.join("gen")] {
                let Ok(entries) = std::fs::read_dir(&dir) else { continue };
                let mut pngs: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "png"))
                    .collect();
                pngs.sort();
                for png in pngs {
                    // generated images share the sidecar of their source
                    let sidecar_of = if dir == out {
                        png.clone()
                    } else {
                        let stem = png.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                        out.join(format!("{}.png", stem.split('_').next().unwrap_or(stem)))
                    };
                    let Ok(manifest) = read_manifest(&sidecar_of) else {
                        warn!("no sidecar for {}", png.display());
                        continue;
                    };
                    let decoded = decode(&read_png(&png)?, &manifest)?;
                    write_csv(&decoded.data, png.with_extension("csv"))?;
                    count += 1;
                }
            }
            if count == 0 {
                bail!("no encoded PNGs with sidecars in {}", out.display());
            }
            info!("decoded {count} images");
        }
        Command::Generate(_) => {
            let generator = build_generator(&cfg.generator)?;
            let prep = prepare(&cfg, csv_source(&cfg)?.as_ref(), 0)?;
            let [g1, g2] = generate_both(&cfg, &prep.splits, generator.as_ref(), prep.seed)?;
            write_artifacts(&out, &g1, &g2)?;
            info!("generated {} images per subset", g1.images.len());
        }
        Command::Filter(_) | Command::BoundCheck(_) => {
            let bound_cfg = match (&command, &cfg.bound_check) {
                (Command::BoundCheck(_), None) => {
                    return Err(ConfigError(anyhow::anyhow!("bound-check needs a bound_check section")).into())
                }
                (_, b) => b.clone(),
            };
            let generator = build_generator(&cfg.generator)?;
            let prep = prepare(&cfg, csv_source(&cfg)?.as_ref(), 0)?;
            let [g1, g2] = generate_both(&cfg, &prep.splits, generator.as_ref(), prep.seed)?;
            if cfg.keep_artifacts {
                write_artifacts(&out, &g1, &g2)?;
            }
            let f = filter_pools(&cfg, &prep.splits, &g1.pool, &g2.pool, filter_seed(prep.seed))?;
            if let Command::BoundCheck(_) = command {
                let pool = f.pool.as_ref().ok_or(EmptyPool)?;
                let report = bound_check(bound_cfg.as_ref().expect("checked above"), &prep.splits.train, pool, prep.seed)?;
                write_json(&out.join("bound.json"), &report)?;
                println!(
                    "lhs {:.6} <= w1 {:.6} + rademacher {:.6} + confidence {:.6}: {}",
                    report.lhs, report.w1_term, report.rademacher_term, report.confidence_term, report.holds
                );
            } else {
                write_json(
                    &out.join("filter.json"),
                    &json!({
                        "pool_size": g1.pool.nrows() + g2.pool.nrows(),
                        "filtered_size": f.pool.as_ref().map_or(0, DataMatrix::nrows),
                        "rho_star": f.rho_star,
                        "select": f.select,
                        "filter": f.filter,
                    }),
                )?;
                match &f.pool {
                    Some(p) => write_csv(p, out.join("filtered.csv"))?,
                    None => return Err(EmptyPool.into()),
                }
            }
        }
        Command::Evaluate(_) => {
            let prep = prepare(&cfg, csv_source(&cfg)?.as_ref(), 0)?;
            let fit = fit_model(cfg.model, &prep.splits.train)?;
            let test = &prep.splits.test;
            let metrics = evaluate(&fit, &test.predictors(), &test.response())?;
            let error = test_error(&fit, test)?;
            write_json(&out.join("evaluation.json"), &json!({"fit": fit, "metrics": metrics, "test_error": error}))?;
            println!("test error {error:.6}");
        }
        Command::Pipeline(_) => {
            let manifest = harness::run_pipeline(&cfg)?;
            for p in &manifest.per_size_curve {
                println!(
                    "size {:>6}  error {}",
                    p.augmentation_size,
                    p.mean_error.map_or("NA".into(), |e| format!("{e:.6}"))
                );
            }
            let drawn: Vec<_> = manifest.per_size_curve.iter().filter(|p| p.augmentation_size > 0).collect();
            if !drawn.is_empty() && drawn.iter().all(|p| p.mean_error.is_none()) {
                return Err(EmptyPool.into());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if err.downcast_ref::<EmptyPool>().is_some() {
        return 4;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Unreachable(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
