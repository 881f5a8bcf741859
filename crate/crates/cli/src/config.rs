//! Experiment configuration: a versioned TOML manifest with CLI overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use roblab_core::dataset::{synthetic_blobs, ImageDataset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub data: DataConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub train: TrainSection,
    pub output: OutputConfig,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSourceKind,
    #[serde(default)]
    pub train_images: Option<PathBuf>,
    #[serde(default)]
    pub train_labels: Option<PathBuf>,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DataSourceKind {
    Idx,
    Synthetic,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub d: usize,
    pub classes: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub width: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 1e-3,
            batch_size: 128,
            patience: 10,
            max_epochs: 500,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { jobs: 1 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "config schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.grid.n.is_empty() || self.grid.width.is_empty() || self.grid.seeds.is_empty() {
            bail!("grid.n, grid.width, and grid.seeds must be non-empty");
        }
        match self.data.source {
            DataSourceKind::Synthetic => {
                if self.data.synthetic.is_none() {
                    bail!("data.source = synthetic requires a [data.synthetic] section");
                }
            }
            DataSourceKind::Idx => {
                for (name, path) in [
                    ("train_images", &self.data.train_images),
                    ("train_labels", &self.data.train_labels),
                    ("test_images", &self.data.test_images),
                    ("test_labels", &self.data.test_labels),
                ] {
                    if path.is_none() {
                        bail!("data.source = idx requires data.{name}");
                    }
                }
            }
        }
        if self.train.batch_size == 0 || self.train.patience == 0 || self.train.max_epochs == 0 {
            bail!("train.batch_size, train.patience, and train.max_epochs must be positive");
        }
        if self.train.learning_rate.is_nan() || self.train.learning_rate <= 0.0 {
            bail!("train.learning_rate must be positive");
        }
        Ok(())
    }

    /// Load train and test datasets per the data section.
    pub fn load_data(&self) -> Result<(ImageDataset, ImageDataset)> {
        match self.data.source {
            DataSourceKind::Idx => {
                let train = ImageDataset::from_idx_files(
                    self.data.train_images.as_ref().unwrap(),
                    self.data.train_labels.as_ref().unwrap(),
                )?;
                let test = ImageDataset::from_idx_files(
                    self.data.test_images.as_ref().unwrap(),
                    self.data.test_labels.as_ref().unwrap(),
                )?;
                Ok((train, test))
            }
            DataSourceKind::Synthetic => {
                let s = self.data.synthetic.as_ref().unwrap();
                let train = synthetic_blobs(s.d, s.classes, s.train_n, s.spread, s.seed)?;
                let test = synthetic_blobs(s.d, s.classes, s.test_n, s.spread, s.seed + 1)?;
                Ok((train, test))
            }
        }
    }

    /// Reject n values larger than the loaded training set.
    pub fn check_grid_against(&self, train: &ImageDataset) -> Result<()> {
        if let Some(&max_n) = self.grid.n.iter().max() {
            if max_n > train.len() {
                bail!(
                    "grid.n contains {max_n} but the training set has only {} samples",
                    train.len()
                );
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
schema_version = 1

[data]
source = "synthetic"

[data.synthetic]
d = 16
classes = 4
train_n = 400
test_n = 100
spread = 0.4
seed = 3

[grid]
n = [100, 200]
width = [4, 8]
seeds = [0, 1]

[train]
learning_rate = 1e-3
batch_size = 64
patience = 5
max_epochs = 40

[output]
dir = "runs/demo"

[run]
jobs = 2
"#;

    #[test]
    fn parses_and_validates_sample() {
        let cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid.n, vec![100, 200]);
        assert_eq!(cfg.run.jobs, 2);
        let (train, test) = cfg.load_data().unwrap();
        assert_eq!(train.len(), 400);
        assert_eq!(test.len(), 100);
        cfg.check_grid_against(&train).unwrap();
    }

    #[test]
    fn rejects_wrong_version_and_empty_grid() {
        let mut cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.schema_version = 99;
        assert!(cfg.validate().is_err());

        let mut cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.grid.n.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_oversized_grid_n() {
        let mut cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.grid.n = vec![100_000];
        let (train, _) = cfg.load_data().unwrap();
        assert!(cfg.check_grid_against(&train).is_err());
    }

    #[test]
    fn idx_source_requires_paths() {
        let text = SAMPLE.replace("source = \"synthetic\"", "source = \"idx\"");
        let cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
