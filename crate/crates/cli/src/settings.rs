//! Layered subcommand settings: built-in defaults, then the `--config`
//! file, then explicit flags. Unknown keys are rejected at every layer.

use std::fmt;
use std::fs;
use std::path::Path;

use saeprobe::intervention::{RankPolicy, DEFAULT_REMOVAL_FRACTION};
use saeprobe::metrics::{PairWeighting, DEFAULT_ACTIVITY_EPSILON};
use saeprobe::sae::{SaeShape, TrainConfig};
use saeprobe::{derive_seed, PoolingStrategy, TokenRole};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::args::Profile;

/// Invalid flags or settings; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Collects the flags that were actually given.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.0.insert(key.to_string(), v);
        }
        self
    }
}

pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<&Path>, flags: Flags) -> anyhow::Result<T> {
    let mut merged = serde_json::to_value(defaults)?;
    let obj = merged.as_object_mut().ok_or_else(|| anyhow::anyhow!("settings must serialize to an object"))?;
    if let Some(path) = file {
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(layer) = value else {
            return Err(usage(format!("config {} must hold a JSON object", path.display())));
        };
        obj.extend(layer);
    }
    obj.extend(flags.0);
    serde_json::from_value(merged).map_err(|e| usage(format!("invalid settings: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub width: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub alpha: f64,
    pub buffer_capacity: usize,
    pub standardize: bool,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl TrainSettings {
    pub fn for_profile(profile: Profile, seed: u64) -> Self {
        let adam = TrainConfig::default();
        let (width, k, batch_size, steps, buffer_capacity) = match profile {
            Profile::Desk => (256, 8, 256, 1000, 16_384),
            Profile::Mllm => (32_768, 32, adam.batch_size, 20_000, 262_144),
            Profile::Vlm => (7_168, 32, adam.batch_size, 20_000, 262_144),
        };
        Self {
            width,
            k,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size,
            steps,
            alpha: adam.alpha,
            buffer_capacity,
            standardize: false,
            init_seed: derive_seed(seed, "train/init"),
            shuffle_seed: derive_seed(seed, "train/shuffle"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            alpha: self.alpha,
            steps: self.steps,
            seed: self.init_seed,
            standardize: self.standardize,
        }
    }

    pub fn shape(&self, input_dim: usize) -> SaeShape {
        SaeShape { width: self.width, input_dim, k: self.k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSettings {
    pub pooling: PoolingStrategy,
    pub masked_roles: Vec<TokenRole>,
    pub fraction: f64,
    pub activity_epsilon: f64,
    pub weighting: PairWeighting,
    pub density_grid: usize,
    pub bandwidth: Option<f64>,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        Self {
            pooling: PoolingStrategy::Mean,
            masked_roles: Vec::new(),
            fraction: 0.01,
            activity_epsilon: DEFAULT_ACTIVITY_EPSILON,
            weighting: PairWeighting::Uniform,
            density_grid: 256,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterveneSettings {
    pub fraction: f64,
    pub rank_policy: RankPolicy,
}

impl Default for InterveneSettings {
    fn default() -> Self {
        Self { fraction: DEFAULT_REMOVAL_FRACTION, rank_policy: RankPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub pooling: PoolingStrategy,
    pub masked_roles: Vec<TokenRole>,
    pub ks: Vec<usize>,
    pub remove_from_queries: bool,
    pub remove_from_candidates: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            pooling: PoolingStrategy::Mean,
            masked_roles: Vec::new(),
            ks: vec![1, 5, 10],
            remove_from_queries: true,
            remove_from_candidates: true,
        }
    }
}
