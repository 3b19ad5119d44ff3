use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use masker_core::corpus::SyntheticSpec;
use masker_core::masker::TrainConfig;
use masker_core::model::ModelConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTarget {
    Ood,
    CrossDomain,
    Substitution,
}

/// Where corpora live. Relative paths resolve against the config file's
/// directory; unset entries default to `<out>/data/<split>.jsonl`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub test_id: Option<PathBuf>,
    pub test_ood: Option<PathBuf>,
    pub test_crossdomain: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Seeds of a multi-seed run; empty means `[seed]`.
    pub seeds: Vec<u64>,
    pub paths: Paths,
    /// Benchmark generated when no training corpus path is set.
    pub synthetic: SyntheticSpec,
    /// `vocab_size` and `num_classes` are taken from the corpus.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: Vec<EvalTarget>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: Vec::new(),
            paths: Paths::default(),
            synthetic: SyntheticSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: vec![EvalTarget::Ood, EvalTarget::CrossDomain, EvalTarget::Substitution],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key.path=value` overrides. Values are
    /// read as TOML and fall back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    /// Reads `path`, resolving relative corpus paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::load_with(Some(path), &[])
    }

    /// Defaults when `path` is `None`; overrides apply before validation.
    pub fn load_with(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg = Self::from_toml_with(&text, overrides)?;
        let base = path.and_then(Path::parent).unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.train,
            &mut cfg.paths.test_id,
            &mut cfg.paths.test_ood,
            &mut cfg.paths.test_crossdomain,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synthetic.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.model.dim == 0 || self.model.heads == 0 || !self.model.dim.is_multiple_of(self.model.heads) {
            return Err(CliError::Config("model.dim must be a positive multiple of model.heads".into()));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&json))
    }

    pub fn wants(&self, target: EvalTarget) -> bool {
        self.eval.contains(&target)
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in {item:?}")))?;
    let mut node = table;
    for p in parts {
        node = node
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{p} is not a section")))?;
    }
    node.insert(last.to_owned(), value);
    Ok(())
}
