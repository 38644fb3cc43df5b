//! Run configuration: every hyperparameter of the pipeline in one
//! serializable struct, validated at load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GenConfig, Perspective};
use crate::sampling::Strategy;
use crate::seed::fnv1a64;
use crate::sentiment::SentimentConfig;
use crate::summodel::DecodeConfig;
use crate::valuation::ValuationConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One value per perspective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerPerspective<T> {
    pub pros: T,
    pub cons: T,
    pub verdict: T,
}

impl<T: Copy> PerPerspective<T> {
    pub fn get(&self, p: Perspective) -> T {
        match p {
            Perspective::Pros => self.pros,
            Perspective::Cons => self.cons,
            Perspective::Verdict => self.verdict,
        }
    }

    pub fn values(&self) -> [T; 3] {
        [self.pros, self.cons, self.verdict]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeSettings {
    pub beam: usize,
    pub min_len: PerPerspective<usize>,
    pub max_len: usize,
    pub lenpen: PerPerspective<f64>,
    pub trigram_blocking: bool,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            beam: 5,
            min_len: PerPerspective {
                pros: 35,
                cons: 25,
                verdict: 25,
            },
            max_len: 80,
            lenpen: PerPerspective {
                pros: 0.5,
                cons: 0.5,
                verdict: 1.0,
            },
            trigram_blocking: true,
        }
    }
}

impl DecodeSettings {
    pub fn for_perspective(&self, p: Perspective) -> DecodeConfig {
        DecodeConfig {
            beam: self.beam,
            min_len: self.min_len.get(p),
            max_len: self.max_len,
            lenpen: self.lenpen.get(p),
            trigram_blocking: self.trigram_blocking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub embed: usize,
    pub ctx: usize,
    pub hidden: usize,
    /// Bound of the uniform embedding initialization.
    pub init_scale: f64,
    /// Multiplier on the context projection's initialization bound.
    pub ctx_gain: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            embed: 32,
            ctx: 32,
            hidden: 64,
            init_scale: 1.0,
            ctx_gain: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Entities per update.
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip: f64,
}

/// Subset strategy used at each point of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategySettings {
    pub stage1: Strategy,
    pub candidates: Strategy,
    pub stage2: Strategy,
    pub inference: Strategy,
}

impl Default for StrategySettings {
    fn default() -> Self {
        StrategySettings {
            stage1: Strategy::SentimentRandom,
            candidates: Strategy::SentimentInfoWeighted,
            stage2: Strategy::SentimentInfo,
            inference: Strategy::SentimentInfo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Reviews per input subset.
    pub k: usize,
    /// Candidate summaries per entity for stage II.
    pub m: usize,
    pub lambda_val: f64,
    pub lambda_ctr: f64,
    pub alpha: f64,
    pub gamma: PerPerspective<f64>,
    pub decode: DecodeSettings,
    pub seed: u64,
    pub min_freq: usize,
    pub model: ModelSettings,
    pub stage1: StageSettings,
    pub stage2: StageSettings,
    pub strategies: StrategySettings,
    pub sentiment: SentimentConfig,
    pub valuation: ValuationConfig,
    pub synth: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 10,
            m: 16,
            lambda_val: 1e-2,
            lambda_ctr: 1e-3,
            alpha: 2.0,
            gamma: PerPerspective {
                pros: 0.1,
                cons: 1.0,
                verdict: 0.1,
            },
            decode: DecodeSettings::default(),
            seed: 42,
            min_freq: 1,
            model: ModelSettings::default(),
            stage1: StageSettings {
                epochs: 20,
                learning_rate: 0.1,
                batch_size: 8,
                clip: 5.0,
            },
            stage2: StageSettings {
                epochs: 10,
                learning_rate: 0.1,
                batch_size: 8,
                clip: 5.0,
            },
            strategies: StrategySettings::default(),
            sentiment: SentimentConfig::default(),
            valuation: ValuationConfig::default(),
            synth: GenConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Stable hash of the serialized config.
    pub fn hash(&self) -> u64 {
        fnv1a64(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_owned()));
        if self.k == 0 || self.m == 0 {
            return bad("k and m must be positive");
        }
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.lambda_val) || !nonneg(self.lambda_ctr) || !nonneg(self.alpha) {
            return bad("lambda_val, lambda_ctr and alpha must be finite and non-negative");
        }
        if !self.gamma.values().into_iter().all(nonneg) {
            return bad("gamma must be finite and non-negative");
        }
        for p in Perspective::ALL {
            if self.decode.for_perspective(p).validate().is_err() {
                return bad("decode settings need beam >= 1 and 1 <= min_len <= max_len");
            }
        }
        if self.min_freq == 0 {
            return bad("min_freq must be at least 1");
        }
        let m = &self.model;
        if m.embed == 0 || m.ctx == 0 || m.hidden == 0 || !nonneg(m.init_scale) || !nonneg(m.ctx_gain) {
            return bad("model dimensions must be positive");
        }
        for s in [&self.stage1, &self.stage2] {
            if s.batch_size == 0 || !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) || !nonneg(s.clip) {
                return bad("stage settings need batch_size >= 1, learning_rate > 0 and clip >= 0");
            }
        }
        if self.sentiment.batch_size == 0 || self.sentiment.learning_rate <= 0.0 {
            return bad("sentiment batch_size and learning_rate must be positive");
        }
        if self.valuation.dim == 0 || self.valuation.batch_size == 0 || self.valuation.max_reviews < 2 {
            return bad("valuation needs dim >= 1, batch_size >= 1 and max_reviews >= 2");
        }
        self.synth
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
