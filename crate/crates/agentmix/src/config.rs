//! Run configuration: a TOML file with `[data]`, `[provider]`, `[train]` and
//! `[run]` sections, layered as defaults < preset < file < command-line flags.
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use agentmix_core::train::{Ablation, Preset, TrainConfig};
use serde::Deserialize;

use crate::embedding::ProviderConfig;
use crate::error::{io, Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub train_fraction: Option<f64>,
}

/// Training keys; `None` means "not set at this layer".
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub preset: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lambda_pg: Option<f64>,
    pub lambda_shap: Option<f64>,
    pub ema_decay: Option<f64>,
    pub mc_budget: Option<usize>,
    pub shapley_interval: Option<usize>,
    pub agent_hidden: Option<Vec<usize>>,
    pub fusion_hidden: Option<Vec<usize>>,
    pub centralized_only: Option<bool>,
    pub no_decision_matrix: Option<bool>,
    pub no_contribution_losses: Option<bool>,
    pub log_interval: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub data: DataSection,
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub run: RunSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let mut config: FileConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.data.path);
        rebase(&mut config.run.out);
        rebase(&mut config.run.cache_dir);
        Ok(config)
    }
}

/// Fully resolved settings for `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub provider: Option<ProviderConfig>,
    /// Template; agents, classes and dim are filled from the data.
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub log_interval: u64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Train/test ratio that goes with each preset.
pub fn preset_train_fraction(preset: Preset) -> f64 {
    match preset {
        Preset::HccLike => 0.75,
        Preset::MtbLike => 0.8,
    }
}

pub fn parse_preset(name: &str) -> Result<Preset> {
    Preset::parse(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}; expected hcc-like or mtb-like")))
}

/// Layers `file` then `flags` over the defaults. `preset` from the flags wins
/// over the file's, and is applied beneath every explicitly set key.
pub fn resolve(file: &FileConfig, flags: &FileConfig) -> Result<RunConfig> {
    let preset = match flags.train.preset.as_deref().or(file.train.preset.as_deref()) {
        Some(name) => Some(parse_preset(name)?),
        None => None,
    };
    let mut train = TrainConfig::new(0, 0, 0);
    let mut train_fraction = DEFAULT_TRAIN_FRACTION;
    if let Some(p) = preset {
        p.apply(&mut train);
        train_fraction = preset_train_fraction(p);
    }
    let mut log_interval = 1;
    for layer in [file, flags] {
        apply_train(&mut train, &layer.train);
        if let Some(v) = layer.train.log_interval {
            log_interval = v;
        }
        if let Some(f) = layer.data.train_fraction {
            train_fraction = f;
        }
    }
    let pick = |f: fn(&FileConfig) -> Option<PathBuf>| f(flags).or_else(|| f(file));
    let dataset = pick(|c| c.data.path.clone())
        .ok_or_else(|| Error::Config("no dataset path; set [data] path or pass --dataset".into()))?;
    let seeds = flags
        .run
        .seeds
        .clone()
        .or_else(|| file.run.seeds.clone())
        .unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    if log_interval == 0 {
        return Err(Error::Config("log_interval must be positive".into()));
    }
    let provider = flags.provider.clone().or_else(|| file.provider.clone());
    if let Some(p) = &provider {
        p.validate()?;
    }
    Ok(RunConfig {
        dataset,
        provider,
        train,
        train_fraction,
        log_interval,
        seeds,
        out: pick(|c| c.run.out.clone()).unwrap_or_else(|| PathBuf::from("agentmix-out")),
        cache_dir: pick(|c| c.run.cache_dir.clone()),
    })
}

fn apply_train(config: &mut TrainConfig, s: &TrainSection) {
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = s.$field.clone() {
                config.$field = v;
            }
        )*};
    }
    set!(epochs, batch_size, learning_rate, lambda_pg, lambda_shap, ema_decay, shapley_interval, agent_hidden, fusion_hidden);
    if let Some(m) = s.mc_budget {
        config.mc_budget = Some(m);
    }
    let a: &mut Ablation = &mut config.ablation;
    if let Some(v) = s.centralized_only {
        a.centralized_only = v;
    }
    if let Some(v) = s.no_decision_matrix {
        a.no_decision_matrix = v;
    }
    if let Some(v) = s.no_contribution_losses {
        a.no_contribution_losses = v;
    }
}
