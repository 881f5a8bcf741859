//! Experiment-grid runner: for each (n, width, seed) cell, subset the
//! training data, build and train a model to overfitting, squash its
//! outputs, run the pairwise Lipschitz scan, and append one CSV row.
//!
//! Rows are committed strictly in grid order regardless of the worker
//! count: cells compute in parallel waves, but a wave's rows are written
//! sequentially once the whole wave is done. Interrupting a run therefore
//! leaves a clean grid-order prefix, and rerunning reproduces the exact
//! byte stream an uninterrupted run would have produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use roblab_core::dataset::ImageDataset;
use roblab_core::lipestimate::{pairwise_lip, LipError, ScalingRecord};
use roblab_core::rng::Rng;
use roblab_core::trainer::{train_until_overfit, Mlp, MlpSpec, TrainConfig, TrainError};

use crate::config::ExperimentConfig;

pub const CSV_HEADER: &str =
    "n,width,p,seed,L_emp,stopped_epoch,best_test_loss,final_train_loss,status";

/// One grid cell in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub n: usize,
    pub width: usize,
    pub seed: u64,
}

/// One results row; `None` numeric fields print as empty CSV cells.
#[derive(Clone, Debug)]
pub struct CsvRow {
    pub key: CellKey,
    pub p: usize,
    pub l_emp: Option<f64>,
    pub stopped_epoch: Option<usize>,
    pub best_test_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub status: String,
}

impl CsvRow {
    pub fn to_line(&self) -> String {
        fn opt_f(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        fn opt_u(v: Option<usize>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.key.n,
            self.key.width,
            self.p,
            self.key.seed,
            opt_f(self.l_emp),
            opt_u(self.stopped_epoch),
            opt_f(self.best_test_loss),
            opt_f(self.final_train_loss),
            self.status
        )
    }

    pub fn parse_line(line: &str) -> Result<CsvRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            bail!("expected 9 CSV fields, found {} in: {line}", fields.len());
        }
        let parse_opt_f = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse()?))
            }
        };
        let parse_opt_u = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse()?))
            }
        };
        Ok(CsvRow {
            key: CellKey {
                n: fields[0].parse()?,
                width: fields[1].parse()?,
                seed: fields[3].parse()?,
            },
            p: fields[2].parse()?,
            l_emp: parse_opt_f(fields[4])?,
            stopped_epoch: parse_opt_u(fields[5])?,
            best_test_loss: parse_opt_f(fields[6])?,
            final_train_loss: parse_opt_f(fields[7])?,
            status: fields[8].to_string(),
        })
    }

    /// Convert an ok row into the record the fits consume.
    pub fn to_scaling_record(&self) -> Option<ScalingRecord> {
        if self.status != "ok" {
            return None;
        }
        Some(ScalingRecord {
            n: self.key.n,
            p: self.p,
            width: self.key.width,
            seed: self.key.seed,
            l_emp: self.l_emp?,
            stopped_epoch: self.stopped_epoch?,
            best_test_loss: self.best_test_loss?,
        })
    }
}

/// Parse a results CSV produced by this runner.
pub fn read_results_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        Some(other) => bail!("unexpected CSV header: {other}"),
        None => bail!("empty results file"),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(CsvRow::parse_line)
        .collect()
}

/// Per-cell seed derivation: one stream per (seed, n, width) for training
/// and one per (seed, n) for the subset, so every width at a given n sees
/// the same data.
fn subset_seed(seed: u64, n: usize) -> u64 {
    Rng::stream(seed, &[0x64617461, n as u64]).next_u64() // "data"
}

fn train_seed(seed: u64, n: usize, width: usize) -> u64 {
    Rng::stream(seed, &[0x63656c6c, n as u64, width as u64]).next_u64() // "cell"
}

fn run_cell(
    cfg: &ExperimentConfig,
    train: &ImageDataset,
    test: &ImageDataset,
    key: CellKey,
) -> Result<CsvRow> {
    let classes = train.num_classes();
    let spec = MlpSpec::new(train.feature_dim(), vec![key.width], classes);
    let p = spec.param_count();
    let subset = train.sample_subset(key.n, subset_seed(key.seed, key.n))?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.train.learning_rate,
        batch_size: cfg.train.batch_size,
        patience: cfg.train.patience,
        max_epochs: cfg.train.max_epochs,
        seed: train_seed(key.seed, key.n, key.width),
        ..TrainConfig::default()
    };
    let model = Mlp::build(spec, train_cfg.seed);
    let outcome = match train_until_overfit(model, &subset, test, &train_cfg) {
        Ok(outcome) => outcome,
        Err(TrainError::Diverged { epoch }) => {
            return Ok(CsvRow {
                key,
                p,
                l_emp: None,
                stopped_epoch: Some(epoch),
                best_test_loss: None,
                final_train_loss: None,
                status: "failed_divergence".to_string(),
            });
        }
        Err(other) => return Err(other.into()),
    };
    let squashed = outcome.model.predict_squashed(subset.features())?;
    match pairwise_lip(&squashed, subset.features()) {
        Ok(est) => Ok(CsvRow {
            key,
            p,
            l_emp: Some(est.l_emp),
            stopped_epoch: Some(outcome.stopped_epoch),
            best_test_loss: Some(outcome.best_test_loss),
            final_train_loss: Some(outcome.final_train_loss()),
            status: "ok".to_string(),
        }),
        Err(LipError::AllPairsSkipped { .. }) => Ok(CsvRow {
            key,
            p,
            l_emp: None,
            stopped_epoch: Some(outcome.stopped_epoch),
            best_test_loss: Some(outcome.best_test_loss),
            final_train_loss: Some(outcome.final_train_loss()),
            status: "failed_degenerate".to_string(),
        }),
        Err(other) => Err(other.into()),
    }
}

/// Execute the grid, resuming past any rows already in the CSV. Returns the
/// CSV path.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let (train, test) = cfg.load_data()?;
    cfg.check_grid_against(&train)?;
    fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let csv_path = cfg.output.dir.join("results.csv");

    // canonical grid order: n, then width, then seed
    let mut cells = Vec::new();
    for &n in &cfg.grid.n {
        for &width in &cfg.grid.width {
            for &seed in &cfg.grid.seeds {
                cells.push(CellKey { n, width, seed });
            }
        }
    }
    let total = cells.len();

    let done: Vec<CellKey> = if csv_path.exists() {
        read_results_csv(&csv_path)?
            .into_iter()
            .map(|r| r.key)
            .collect()
    } else {
        Vec::new()
    };
    let pending: Vec<CellKey> = cells
        .iter()
        .filter(|c| !done.contains(c))
        .copied()
        .collect();

    let mut file = if csv_path.exists() {
        fs::OpenOptions::new().append(true).open(&csv_path)?
    } else {
        let mut f = fs::File::create(&csv_path)?;
        writeln!(f, "{CSV_HEADER}")?;
        f
    };

    if pending.is_empty() {
        eprintln!("run-grid: all {total} cells already present in {}", csv_path.display());
        return Ok(csv_path);
    }

    let jobs = cfg.run.jobs.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;

    let mut completed = done.len();
    for wave in pending.chunks(jobs) {
        let results: Vec<Result<CsvRow>> = pool.install(|| {
            wave.par_iter()
                .map(|&key| run_cell(cfg, &train, &test, key))
                .collect()
        });
        for result in results {
            let row = result?;
            writeln!(file, "{}", row.to_line())?;
            completed += 1;
            eprintln!(
                "run-grid [{completed}/{total}] n={} width={} seed={} p={} L_emp={} status={}",
                row.key.n,
                row.key.width,
                row.key.seed,
                row.p,
                row.l_emp.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                row.status
            );
        }
        file.flush()?;
    }
    Ok(csv_path)
}
