//! Simulation, configuration, the end-to-end pipeline and its outputs.

pub mod config;
pub mod curve;
pub mod io;
pub mod pipeline;
pub mod simulate;

pub use config::{
    BoundCheckConfig, DataSource, FilterConfig, GeneratorConfig, MappingConfig, ModelKind,
    RunConfig, StrengthGrid,
};
pub use curve::{curve_csv, emit_curve, format_g9, CURVE_HEADER};
pub use io::{read_csv, write_csv, ResponseColumn};
pub use pipeline::{
    bound_check, build_generator, filter_pools, filter_seed, fit_model, generate_both,
    generate_pool, load_data, model_family, prepare, repetition_seed, run_pipeline,
    run_with_generator, test_error, write_artifacts, write_outputs, CurvePoint, Filtered,
    Generated, Prepared, RepetitionSummary, Reports, RunManifest, Splits,
};
pub use simulate::{simulate_linear, simulate_logistic};
