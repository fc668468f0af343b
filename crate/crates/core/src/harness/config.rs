use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::ResponseColumn;
use crate::bound_check::LossKind;
use crate::codec::MappingKind;
use crate::distances::FeatureSpec;
use crate::error::{Error, Result};
use crate::filters::{DistanceMetric, FilterPolicy, TransferConfig};
use crate::generators::{strength_grid, DEFAULT_GUIDANCE_SCALE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    SimulateLinear {
        n: usize,
        p: usize,
        beta: Vec<f64>,
        noise_sd: f64,
    },
    SimulateLogistic {
        n: usize,
        p: usize,
        beta: Vec<f64>,
    },
    Csv {
        path: PathBuf,
        response_col: ResponseColumn,
    },
}

fn default_exp_coefficient() -> f64 {
    0.05
}
fn default_bits() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub mapping_kind: MappingKind,
    #[serde(default = "default_exp_coefficient")]
    pub exp_coefficient: f64,
    #[serde(default = "default_bits")]
    pub quantization_bits: u32,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            mapping_kind: MappingKind::Exponential,
            exp_coefficient: default_exp_coefficient(),
            quantization_bits: default_bits(),
        }
    }
}

fn default_timeout() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    Surrogate,
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_seconds: f64,
        /// Use the surrogate when the service is down instead of failing.
        #[serde(default)]
        fallback_to_surrogate: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl StrengthGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        strength_grid(self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterConfig {
    Transfer(TransferConfig),
    Distance {
        metric: DistanceMetric,
        policy: FilterPolicy,
        /// Only used for image inputs; tabular rows are compared directly.
        #[serde(default)]
        features: FeatureSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Lasso,
    Logistic,
}

fn default_delta() -> f64 {
    0.05
}

fn default_grid() -> Vec<[f64; 2]> {
    vec![[1.0, 0.0]]
}

/// Bound check on the response column of repetition 0: real training
/// responses against the filtered synthetic ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckConfig {
    pub loss: LossKind,
    pub bound: f64,
    #[serde(default = "default_grid")]
    pub hypothesis_grid: Vec<[f64; 2]>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_guidance() -> f64 {
    DEFAULT_GUIDANCE_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_source: DataSource,
    #[serde(default)]
    pub mapping: MappingConfig,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub prompt: String,
    pub strength_grid: StrengthGrid,
    #[serde(default = "default_guidance")]
    pub guidance_scale: f64,
    pub filter: FilterConfig,
    pub model: ModelKind,
    pub repetitions: usize,
    pub augmentation_sizes: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub keep_artifacts: bool,
    #[serde(default)]
    pub bound_check: Option<BoundCheckConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.augmentation_sizes.is_empty() {
            return Err(Error::invalid("augmentation_sizes is empty"));
        }
        if self.augmentation_sizes.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("augmentation_sizes must be non-decreasing"));
        }
        if !(self.guidance_scale > 0.0) {
            return Err(Error::invalid("guidance_scale must be positive"));
        }
        let grid = self.strength_grid.values()?;
        if let Some(k) = grid.iter().find(|k| !(0.001..=1.0).contains(*k)) {
            return Err(Error::invalid(format!("strength {k} outside [0.001, 1]")));
        }
        match &self.data_source {
            DataSource::SimulateLinear { p, beta, .. }
            | DataSource::SimulateLogistic { p, beta, .. } => {
                if beta.len() != *p {
                    return Err(Error::mismatch(format!("{p} coefficients"), beta.len()));
                }
            }
            DataSource::Csv { .. } => {}
        }
        if matches!(self.data_source, DataSource::SimulateLogistic { .. })
            && self.model != ModelKind::Logistic
        {
            return Err(Error::invalid("binary responses need the logistic model"));
        }
        match &self.filter {
            FilterConfig::Transfer(t) => t.validate()?,
            FilterConfig::Distance { policy, .. } => policy.validate()?,
        }
        if let GeneratorConfig::Remote {
            timeout_seconds, ..
        } = &self.generator
        {
            if !(*timeout_seconds > 0.0) {
                return Err(Error::invalid("timeout_seconds must be positive"));
            }
        }
        if let Some(b) = &self.bound_check {
            if !(b.delta > 0.0 && b.delta < 1.0) || !(b.bound > 0.0) || b.hypothesis_grid.is_empty()
            {
                return Err(Error::invalid(
                    "bound_check needs delta in (0, 1), bound > 0 and a hypothesis",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "data_source": {"kind": "simulate_linear", "n": 100, "p": 3, "beta": [2, -1, 0.5], "noise_sd": 1},
        "generator": {"kind": "surrogate"},
        "prompt": "The last column is the response variable",
        "strength_grid": {"start": 0.01, "stop": 1.0, "step": 0.01},
        "filter": {"kind": "transfer", "ratio_set": [0.1, 0.5], "batch_size": 100, "iterations": 10},
        "model": "ols",
        "repetitions": 3,
        "augmentation_sizes": [0, 50, 100],
        "seed": 1,
        "output_dir": "out"
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_json(SAMPLE).unwrap();
        assert_eq!(c.guidance_scale, 7.5);
        assert_eq!(c.mapping, MappingConfig::default());
        assert_eq!(c.strength_grid.values().unwrap().len(), 100);
        match &c.filter {
            FilterConfig::Transfer(t) => assert_eq!((t.iterations, t.detection_c0), (10, 2.0)),
            _ => panic!("wrong filter"),
        }
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = SAMPLE.replace("[0, 50, 100]", "[50, 0]");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("\"repetitions\": 3", "\"repetitions\": 0");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("\"p\": 3", "\"p\": 4");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("\"model\": \"ols\"", "\"model\": \"ridge\"");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn distance_filter_config() {
        let text = SAMPLE.replace(
            r#"{"kind": "transfer", "ratio_set": [0.1, 0.5], "batch_size": 100, "iterations": 10}"#,
            r#"{"kind": "distance", "metric": "wasserstein", "policy": {"kind": "quantile", "q": 0.8}}"#,
        );
        let c = RunConfig::from_json(&text).unwrap();
        assert!(matches!(
            c.filter,
            FilterConfig::Distance {
                metric: DistanceMetric::Wasserstein,
                ..
            }
        ));
    }
}
