use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use emcar_core::data::UisOptions;
use emcar_core::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Synthetic heterogeneous data request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    /// CSV of clean base records with `id,name,address,city,state,zip`
    /// columns; built-in people are drawn when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_records: Option<PathBuf>,
    /// Number of base records (one positive pair each). With
    /// `base_records`, 0 means all of them.
    pub people: usize,
    #[serde(flatten)]
    pub options: UisOptions,
    pub seed: u64,
    /// Two-column `term,synonym` CSV for synonym-replacement negatives.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub synonym_negatives: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            base_records: None,
            people: 100,
            options: UisOptions::default(),
            seed: 0,
            lexicon: None,
            synonym_negatives: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Magellan directory: `tableA.csv`, `tableB.csv` and either
    /// `pairs.csv` or `train.csv`/`valid.csv`/`test.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorSpec>,
    /// Seed of the 3:1:1 split applied to unsplit data.
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("emcar-out"),
            dataset: DatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config. Relative paths inside it resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        if let Some(p) = cfg.dataset.path.as_mut() {
            fix(p);
        }
        if let Some(g) = cfg.dataset.generate.as_mut() {
            g.base_records.as_mut().map(fix);
            g.lexicon.as_mut().map(fix);
        }
        if let Some(p) = cfg.model.pretrained.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
