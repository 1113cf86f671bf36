//! Experiment configuration: a TOML file, overridable from the command line.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demos::{DemoKind, DensityConfig};
use crate::error::{Error, Result};
use crate::eval::Averaging;
use crate::model::ModelConfig;

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "GRAPE_NER_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub entity_types: Vec<String>,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

impl DatasetConfig {
    pub fn files(&self) -> [(&'static str, &Path); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub shots: Vec<usize>,
    pub k_dev: usize,
    pub demos: Vec<DemoKind>,
    /// Empty means `[model.batch_size]`.
    pub batch_sizes: Vec<usize>,
    pub averaging: Averaging,
    pub density: DensityConfig,
    pub model: ModelConfig,
    pub datasets: Vec<DatasetConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            seeds: vec![1, 2, 3, 4, 5],
            shots: vec![25, 50],
            k_dev: 100,
            demos: vec![DemoKind::Grape],
            batch_sizes: Vec::new(),
            averaging: Averaging::Micro,
            density: DensityConfig::default(),
            model: ModelConfig::default(),
            datasets: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`; relative dataset paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for ds in &mut cfg.datasets {
            for p in [&mut ds.train, &mut ds.dev, &mut ds.test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        if self.batch_sizes.is_empty() {
            vec![self.model.batch_size]
        } else {
            self.batch_sizes.clone()
        }
    }

    /// Structural checks; file existence is checked separately so the
    /// caller can report the missing path.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return err("seeds must not be empty".into());
        }
        if self.shots.is_empty() || self.shots.contains(&0) {
            return err("shots must be non-empty and positive".into());
        }
        if self.demos.is_empty() {
            return err("demos must not be empty".into());
        }
        if self.batch_sizes.contains(&0) {
            return err("batch sizes must be positive".into());
        }
        self.density.validate()?;
        self.model.validate()?;
        let mut names = BTreeSet::new();
        for ds in &self.datasets {
            if !names.insert(ds.name.as_str()) {
                return err(format!("duplicate dataset `{}`", ds.name));
            }
            if ds.entity_types.is_empty() {
                return err(format!("dataset `{}` declares no entity types", ds.name));
            }
            if ds.name.contains(['/', '\\']) {
                return err(format!("dataset name `{}` must not contain path separators", ds.name));
            }
        }
        Ok(())
    }

    pub fn missing_files(&self) -> Vec<PathBuf> {
        self.datasets.iter().flat_map(|d| d.files().map(|(_, p)| p.to_path_buf())).filter(|p| !p.is_file()).collect()
    }

    /// First 12 hex digits of SHA-256 over the canonical JSON form; names
    /// the run directory.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))[..12].to_string()
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig> {
        self.datasets.iter().find(|d| d.name == name).ok_or_else(|| Error::Config(format!("no dataset named `{name}`")))
    }
}

/// Output root: explicit flag, then the environment, then the file.
pub fn resolve_output(flag: Option<&Path>, env: Option<&str>, file: &Path) -> PathBuf {
    match (flag, env) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(e)) if !e.is_empty() => PathBuf::from(e),
        _ => file.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
output_dir = "results"
seeds = [1, 2]
shots = [25]
demos = ["grape", "none"]

[model]
epochs = 3

[[datasets]]
name = "toy"
entity_types = ["Chemical"]
train = "train.conll"
dev = "dev.conll"
test = "test.conll"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.demos, [DemoKind::Grape, DemoKind::None]);
        assert_eq!(cfg.k_dev, 100);
        assert_eq!(cfg.model.epochs, 3);
        assert_eq!(cfg.model.learning_rate, 3e-5);
        assert_eq!(cfg.batch_sizes(), [1]);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_report_position() {
        let err = ExperimentConfig::from_toml("seedz = [1]\n").unwrap_err().to_string();
        assert!(err.contains("seedz"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.shots = vec![0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn round_trips_and_hashes() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.content_hash(), cfg.content_hash());
        let mut other = cfg.clone();
        other.seeds.push(3);
        assert_ne!(other.content_hash(), cfg.content_hash());
    }

    #[test]
    fn output_precedence() {
        let file = Path::new("from-file");
        assert_eq!(resolve_output(Some(Path::new("flag")), Some("env"), file), PathBuf::from("flag"));
        assert_eq!(resolve_output(None, Some("env"), file), PathBuf::from("env"));
        assert_eq!(resolve_output(None, None, file), PathBuf::from("from-file"));
    }
}
