use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SpecAugmentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Head only, on precomputed embeddings.
    EmbeddingProbe,
    /// MLP over pooled log-mel statistics, trained from scratch.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossWeighting {
    Proportional,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Wacc,
    Uar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub specaugment: SpecAugmentConfig,
    pub backbone: Backbone,
    pub loss_weighting: LossWeighting,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    pub mlp_hidden: Vec<usize>,
    pub weight_decay: f64,
}

const KEYS: [&str; 11] = [
    "base_lr",
    "batch_size",
    "epochs",
    "warmup_epochs",
    "specaugment",
    "backbone",
    "loss_weighting",
    "seed",
    "selection_metric",
    "mlp_hidden",
    "weight_decay",
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("{key}: cannot parse {value:?}")))
}

fn parse_specaugment(value: &str) -> Result<SpecAugmentConfig> {
    let (f, t) = value
        .split_once('/')
        .ok_or_else(|| config_err(format!("specaugment: expected \"freq/time\", got {value:?}")))?;
    Ok(SpecAugmentConfig::new(
        parse_num("specaugment", f.trim())?,
        parse_num("specaugment", t.trim())?,
    ))
}

fn parse_hidden(value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num("mlp_hidden", v.trim())).collect()
}

impl TrainConfig {
    /// Embedding probe: lr 0.00025, batch 32, no SpecAugment.
    /// MLP: lr 0.001, batch 256, SpecAugment 20/50, one hidden layer of 64.
    pub fn defaults(backbone: Backbone) -> Self {
        let (base_lr, batch_size, specaugment, mlp_hidden) = match backbone {
            Backbone::EmbeddingProbe => (0.00025, 32, SpecAugmentConfig::disabled(), vec![]),
            Backbone::Mlp => (0.001, 256, SpecAugmentConfig::new(20, 50), vec![64]),
        };
        Self {
            base_lr,
            batch_size,
            epochs: 50,
            warmup_epochs: 5,
            specaugment,
            backbone,
            loss_weighting: LossWeighting::Proportional,
            seed: 0,
            selection_metric: SelectionMetric::Wacc,
            mlp_hidden,
            weight_decay: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(config_err(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(config_err("weight_decay must be non-negative"));
        }
        if self.batch_size < 2 {
            return Err(config_err("batch_size must be at least 2 (batch normalization)"));
        }
        if self.epochs <= self.warmup_epochs {
            return Err(config_err("epochs must exceed warmup_epochs"));
        }
        match self.backbone {
            Backbone::EmbeddingProbe if !self.mlp_hidden.is_empty() => {
                Err(config_err("mlp_hidden is only valid with backbone = mlp"))
            }
            Backbone::Mlp if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) => {
                Err(config_err("backbone = mlp needs non-zero mlp_hidden sizes"))
            }
            _ => Ok(()),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys not given take
    /// the defaults of the configured backbone. Unknown or repeated keys are
    /// errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(config_err(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if !seen.insert(key) {
                return Err(config_err(format!("line {}: {key} given twice", n + 1)));
            }
            pairs.push((key, value));
        }
        let backbone = match pairs.iter().find(|(k, _)| *k == "backbone").map(|(_, v)| *v) {
            None | Some("embedding-probe") => Backbone::EmbeddingProbe,
            Some("mlp") => Backbone::Mlp,
            Some(other) => return Err(config_err(format!("backbone: unknown value {other:?}"))),
        };
        let mut cfg = Self::defaults(backbone);
        for (key, value) in pairs {
            match key {
                "base_lr" => cfg.base_lr = parse_num(key, value)?,
                "batch_size" => cfg.batch_size = parse_num(key, value)?,
                "epochs" => cfg.epochs = parse_num(key, value)?,
                "warmup_epochs" => cfg.warmup_epochs = parse_num(key, value)?,
                "specaugment" => cfg.specaugment = parse_specaugment(value)?,
                "backbone" => {}
                "loss_weighting" => {
                    cfg.loss_weighting = match value {
                        "proportional" => LossWeighting::Proportional,
                        "none" => LossWeighting::None,
                        other => return Err(config_err(format!("loss_weighting: unknown value {other:?}"))),
                    }
                }
                "seed" => cfg.seed = parse_num(key, value)?,
                "selection_metric" => {
                    cfg.selection_metric = match value {
                        "wacc" => SelectionMetric::Wacc,
                        "uar" => SelectionMetric::Uar,
                        other => return Err(config_err(format!("selection_metric: unknown value {other:?}"))),
                    }
                }
                "mlp_hidden" => cfg.mlp_hidden = parse_hidden(value)?,
                "weight_decay" => cfg.weight_decay = parse_num(key, value)?,
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Text form accepted by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let backbone = match self.backbone {
            Backbone::EmbeddingProbe => "embedding-probe",
            Backbone::Mlp => "mlp",
        };
        let weighting = match self.loss_weighting {
            LossWeighting::Proportional => "proportional",
            LossWeighting::None => "none",
        };
        let metric = match self.selection_metric {
            SelectionMetric::Wacc => "wacc",
            SelectionMetric::Uar => "uar",
        };
        let hidden: Vec<String> = self.mlp_hidden.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "backbone = {backbone}");
        let _ = writeln!(out, "base_lr = {}", self.base_lr);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "warmup_epochs = {}", self.warmup_epochs);
        let _ = writeln!(out, "specaugment = {}", self.specaugment);
        let _ = writeln!(out, "loss_weighting = {weighting}");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "selection_metric = {metric}");
        let _ = writeln!(out, "mlp_hidden = {}", hidden.join(","));
        let _ = writeln!(out, "weight_decay = {}", self.weight_decay);
        out
    }

    pub fn model_hidden(&self) -> Vec<usize> {
        match self.backbone {
            Backbone::EmbeddingProbe => Vec::new(),
            Backbone::Mlp => self.mlp_hidden.clone(),
        }
    }

    /// Whether training examples need spectrograms rather than fixed vectors.
    pub fn augments(&self) -> bool {
        self.backbone == Backbone::Mlp && !self.specaugment.is_identity()
    }
}
