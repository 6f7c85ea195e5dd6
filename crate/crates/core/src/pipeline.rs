//! Pipeline configuration and train/dev splitting.
//!
//! Config files are flat UTF-8 `key = value` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytics::{Grouping, LengthUnit};
use crate::context::{ContextConfig, ContextKind};
use crate::encoder::{CombinationStrategy, DEFAULT_HIDDEN_DIM};
use crate::error::{Error, Result};
use crate::models::TrainConfig;
use crate::tagcodec::TaggingScheme;

pub const PATH_KEYS: [&str; 11] = [
    "articles",
    "si_labels",
    "tc_labels",
    "model",
    "output",
    "vectors",
    "pred",
    "gold",
    "tags",
    "input",
    "per_class",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub scheme: TaggingScheme,
    pub strategy: String,
    pub alpha: Option<f64>,
    pub hidden_dim: usize,
    pub context_kind: ContextKind,
    pub context: ContextConfig,
    pub length_feature: bool,
    pub train: TrainConfig,
    /// Fraction of articles used for training.
    pub split: f64,
    /// Source scheme for tag conversion.
    pub from_scheme: Option<TaggingScheme>,
    pub unit: LengthUnit,
    pub grouping: Grouping,
    pub bin_width: Option<usize>,
    pub paths: BTreeMap<String, PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheme: TaggingScheme::Bioe,
            strategy: "NONE".to_string(),
            alpha: None,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            context_kind: ContextKind::Sentence,
            context: ContextConfig::default(),
            length_feature: false,
            train: TrainConfig::default(),
            split: 0.9,
            from_scheme: None,
            unit: LengthUnit::Chars,
            grouping: Grouping::Technique,
            bin_width: None,
            paths: BTreeMap::new(),
        }
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    /// Applies every `key = value` line of `text` over the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Config {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::InvalidArgument(format!("bad value {value:?} for {key}"));
        match key {
            "scheme" => self.scheme = value.parse()?,
            "strategy" => self.strategy = value.to_string(),
            "alpha" => self.alpha = Some(value.parse().map_err(|_| bad())?),
            "hidden_dim" => self.hidden_dim = value.parse().map_err(|_| bad())?,
            "context" | "context_kind" => self.context_kind = value.parse()?,
            "context_cap" | "cap" => self.context.cap = value.parse().map_err(|_| bad())?,
            "cap_includes_fragment" => self.context.cap_includes_fragment = parse_bool(value).ok_or_else(bad)?,
            "length_feature" => self.length_feature = parse_bool(value).ok_or_else(bad)?,
            "class_weighting" => self.train.class_weighting = parse_bool(value).ok_or_else(bad)?,
            "lr" | "learning_rate" => self.train.learning_rate = value.parse().map_err(|_| bad())?,
            "epochs" => self.train.epochs = value.parse().map_err(|_| bad())?,
            "batch_size" | "batch" => self.train.batch_size = value.parse().map_err(|_| bad())?,
            "seed" => self.train.seed = value.parse().map_err(|_| bad())?,
            "dim" => self.train.dim = value.parse().map_err(|_| bad())?,
            "split" => {
                let f: f64 = value.parse().map_err(|_| bad())?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidArgument(format!("split {f} outside (0, 1]")));
                }
                self.split = f;
            }
            "from_scheme" => self.from_scheme = Some(value.parse()?),
            "unit" => self.unit = value.parse()?,
            "grouping" => self.grouping = value.parse()?,
            "bin_width" => {
                let w: usize = value.parse().map_err(|_| bad())?;
                if w == 0 {
                    return Err(bad());
                }
                self.bin_width = Some(w);
            }
            k if PATH_KEYS.contains(&k) => {
                self.paths.insert(k.to_string(), PathBuf::from(value));
            }
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn combination_strategy(&self) -> Result<CombinationStrategy> {
        CombinationStrategy::from_parts(&self.strategy, self.alpha, Some(self.hidden_dim))
    }

    pub fn path(&self, key: &str) -> Result<&PathBuf> {
        self.paths
            .get(key)
            .ok_or_else(|| Error::InvalidArgument(format!("missing path: {key}")))
    }

    /// Every setting as sorted `key = value` lines; `parse` reads it back.
    pub fn to_text(&self) -> String {
        let mut entries: BTreeMap<&str, String> = BTreeMap::new();
        entries.insert("scheme", self.scheme.to_string());
        entries.insert("strategy", self.strategy.clone());
        if let Some(a) = self.alpha {
            entries.insert("alpha", a.to_string());
        }
        entries.insert("hidden_dim", self.hidden_dim.to_string());
        entries.insert("context", self.context_kind.to_string());
        entries.insert("context_cap", self.context.cap.to_string());
        entries.insert("cap_includes_fragment", self.context.cap_includes_fragment.to_string());
        entries.insert("length_feature", self.length_feature.to_string());
        entries.insert("class_weighting", self.train.class_weighting.to_string());
        entries.insert("lr", self.train.learning_rate.to_string());
        entries.insert("epochs", self.train.epochs.to_string());
        entries.insert("batch_size", self.train.batch_size.to_string());
        entries.insert("seed", self.train.seed.to_string());
        entries.insert("dim", self.train.dim.to_string());
        entries.insert("split", self.split.to_string());
        if let Some(s) = self.from_scheme {
            entries.insert("from_scheme", s.to_string());
        }
        entries.insert("unit", self.unit.to_string());
        entries.insert("grouping", self.grouping.to_string());
        if let Some(w) = self.bin_width {
            entries.insert("bin_width", w.to_string());
        }
        for (k, v) in &self.paths {
            entries.insert(k, v.display().to_string());
        }
        entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Seeded shuffle, then the first `round(fraction * n)` items go to train.
/// Both halves keep the input order.
pub fn split_train_dev<T>(items: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::EmptyInput("items to split"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside (0, 1]")));
    }
    let n = items.len();
    let n_train = ((fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut dev = Vec::with_capacity(n - n_train);
    for (item, t) in items.into_iter().zip(is_train) {
        if t {
            train.push(item);
        } else {
            dev.push(item);
        }
    }
    Ok((train, dev))
}
