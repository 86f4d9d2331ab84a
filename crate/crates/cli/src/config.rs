//! Engine configuration: one TOML file, with `key=value` overrides from the command line.
//!
//! ```toml
//! seed = 7
//! out_dir = "out"
//! transfer_threshold = 1000000
//!
//! [train]
//! epochs = 30
//!
//! [[region]]
//! name = "dense"
//! world = "worlds/dense"
//! global = true
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use aqmap_core::dataset::AqiBreakpoints;
use aqmap_core::features::{FeatureConfig, Preset, Truncation};
use aqmap_core::ingest::HampelConfig;
use aqmap_core::model::TrainConfig;
use aqmap_core::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    /// World directory in the standard layout.
    pub world: PathBuf,
    /// Contributes training rows to the global model used for transfer.
    #[serde(default)]
    pub global: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n1: usize,
    pub n2: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            n1: t.n1,
            n2: t.n2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleaningSection {
    pub enabled: bool,
    pub window: usize,
    pub k: f64,
}

impl Default for CleaningSection {
    fn default() -> Self {
        let h = HampelConfig::default();
        CleaningSection {
            enabled: true,
            window: h.window,
            k: h.k,
        }
    }
}

fn default_threshold() -> usize {
    1_000_000
}

fn default_truncation() -> String {
    "truncated".into()
}

fn default_samples() -> usize {
    5000
}

fn default_eval_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Drives the station split, resampling and weight initialization.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// PAQI breakpoints file; the built-in defaults when absent.
    #[serde(default)]
    pub breakpoints: Option<PathBuf>,
    /// Regions with fewer training rows than this are fitted by transfer.
    #[serde(default = "default_threshold")]
    pub transfer_threshold: usize,
    #[serde(default = "default_truncation")]
    pub truncation: String,
    #[serde(default)]
    pub power_plants: bool,
    /// Rows drawn per exposure category for training.
    #[serde(default = "default_samples")]
    pub samples_per_category: usize,
    /// Rows drawn per exposure category for evaluation.
    #[serde(default = "default_eval_samples")]
    pub eval_samples_per_category: usize,
    #[serde(default)]
    pub cleaning: CleaningSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(rename = "region")]
    pub regions: Vec<RegionConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Sets `dotted.key = value` in a TOML table. Values parse as TOML, or are taken as strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override `{assignment}` is not key=value"))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut at = table;
    for p in &parts[..parts.len() - 1] {
        at = at
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("override `{key}`: `{p}` is not a table"))?;
    }
    at.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl EngineConfig {
    /// Reads and validates a config file, applying `overrides` first.
    pub fn load(path: &Path, overrides: &[String]) -> Result<EngineConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut table: toml::Table =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: EngineConfig = table
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            bail!("config defines no [[region]]");
        }
        for (i, r) in self.regions.iter().enumerate() {
            if self.regions[..i].iter().any(|o| o.name == r.name) {
                bail!("region `{}` is defined twice", r.name);
            }
            if r.name.is_empty() || r.name.contains(['/', '\\']) {
                bail!("region name `{}` must be a plain file name", r.name);
            }
            let dir = self.resolve(&r.world);
            if !dir.is_dir() {
                bail!(
                    "region `{}`: world directory {} does not exist",
                    r.name,
                    dir.display()
                );
            }
        }
        if let Some(b) = &self.breakpoints {
            let p = self.resolve(b);
            if !p.is_file() {
                bail!("breakpoints file {} does not exist", p.display());
            }
        }
        self.truncation()?;
        self.train_config(Execution::Sequential).validate()?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn region(&self, name: &str) -> Result<&RegionConfig> {
        self.regions
            .iter()
            .find(|r| r.name == name)
            .with_context(|| format!("unknown region `{name}`"))
    }

    /// Region names given, or all regions when none are.
    pub fn select(&self, names: &[String]) -> Result<Vec<&RegionConfig>> {
        if names.is_empty() {
            return Ok(self.regions.iter().collect());
        }
        names.iter().map(|n| self.region(n)).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    /// Artifact directory of one region.
    pub fn region_dir(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn world_dir(&self, region: &RegionConfig) -> PathBuf {
        self.resolve(&region.world)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        Ok(self.truncation.parse()?)
    }

    pub fn feature_config(&self, preset: Preset) -> Result<FeatureConfig> {
        Ok(FeatureConfig {
            truncation: self.truncation()?,
            power_plants: self.power_plants,
            ..FeatureConfig::with_preset(preset)
        })
    }

    pub fn train_config(&self, execution: Execution) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.seed,
            n1: self.train.n1,
            n2: self.train.n2,
            execution,
        }
    }

    pub fn hampel(&self) -> Option<HampelConfig> {
        self.cleaning.enabled.then_some(HampelConfig {
            window: self.cleaning.window,
            k: self.cleaning.k,
        })
    }

    pub fn breakpoints(&self) -> Result<AqiBreakpoints> {
        match &self.breakpoints {
            Some(p) => Ok(AqiBreakpoints::load(&self.resolve(p))?),
            None => Ok(AqiBreakpoints::default()),
        }
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
