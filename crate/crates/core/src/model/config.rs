use serde::{Deserialize, Serialize};

use crate::diff::AdamConfig;
use crate::error::{Error, Result};
use crate::par::ExecMode;
use crate::prior::DEFAULT_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
}

impl Precision {
    pub fn tag(self) -> u8 {
        match self {
            Precision::F64 => 8,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            8 => Some(Precision::F64),
            _ => None,
        }
    }
}

/// How the decoder-side keyword distribution of a guided word is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaAlphaAxis {
    /// Column `v` of the topic-word matrix (normalized over the vocabulary).
    #[default]
    Vocabulary,
    /// Softmax over topics of `ρ_v · α_k`.
    Topic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_topics: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Width of both encoder hidden layers.
    pub hidden_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub dropout_rate: f64,
    pub thr: f64,
    pub rng_seed: u64,
    pub precision: Precision,
    pub weight_decay: f64,
    /// Stop once the total loss improved by less than
    /// `min_rel_improvement` (relative) over this many epochs.
    pub early_stop_patience: Option<usize>,
    pub min_rel_improvement: f64,
    pub gamma_alpha_axis: GammaAlphaAxis,
    /// Start each topic embedding at its topic's mean seed embedding.
    pub alpha_warm_start: bool,
    pub exec_mode: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_topics: 0,
            epochs: 150,
            batch_size: 40,
            learning_rate: 0.005,
            hidden_size: 800,
            lambda1: 15.0,
            lambda2: 10.0,
            dropout_rate: 0.1,
            thr: DEFAULT_THRESHOLD,
            rng_seed: 0,
            precision: Precision::F64,
            weight_decay: AdamConfig::default().weight_decay,
            early_stop_patience: Some(20),
            min_rel_improvement: 1e-4,
            gamma_alpha_axis: GammaAlphaAxis::Vocabulary,
            alpha_warm_start: false,
            exec_mode: ExecMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_topics < 2 {
            return bad("num_topics must be at least 2");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden_size < 1 {
            return bad("hidden_size must be at least 1");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(-1.0..=1.0).contains(&self.thr) {
            return bad("thr must lie in [-1, 1]");
        }
        if self.weight_decay < 0.0 || self.min_rel_improvement < 0.0 {
            return bad("weight_decay and min_rel_improvement must be non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}
