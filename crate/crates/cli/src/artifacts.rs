//! On-disk layout of stage outputs. Every JSON artifact is wrapped as
//! `{"config_hash": ..., "data": ...}`; model files carry the hash in their header.

use std::fs;
use std::path::{Path, PathBuf};

use kdsim::io::{load_model, save_model};
use kdsim::nn::Model;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Stage;
use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn partition(&self) -> PathBuf {
        self.root.join("partition.json")
    }

    pub fn participant_model(&self, k: usize) -> PathBuf {
        self.root.join("pretrain").join(format!("participant_{k:02}.kdsm"))
    }

    pub fn pretrain_summary(&self) -> PathBuf {
        self.root.join("pretrain").join("summary.json")
    }

    pub fn pair_stem(&self, stage: Stage, method: &str, option: &str, t: usize, s: usize) -> PathBuf {
        self.root.join(stage.name()).join(format!("{method}_{option}_t{t}_s{s}"))
    }

    pub fn matrix_results(&self) -> PathBuf {
        self.root.join("matrix").join("results.json")
    }

    pub fn best_teachers(&self) -> PathBuf {
        self.root.join("matrix").join("best_teachers.json")
    }

    pub fn consolidated_model(&self) -> PathBuf {
        self.root.join("consolidate").join("model.kdsm")
    }

    pub fn consolidate_summary(&self) -> PathBuf {
        self.root.join("consolidate").join("summary.json")
    }

    pub fn fed_trajectories(&self) -> PathBuf {
        self.root.join("fedavg").join("trajectories.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    config_hash: String,
    data: T,
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| kdsim::KdError::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| kdsim::KdError::io(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, data: &T) -> Result<(), CliError> {
    let env = Envelope {
        config_hash: config_hash.to_string(),
        data,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("artifact serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_model(path: &Path, config_hash: &str, model: &Model) -> Result<(), CliError> {
    ensure_parent(path)?;
    save_model(path, model, config_hash)?;
    Ok(())
}

/// Checks input artifacts against the hashes the current configuration implies.
#[derive(Clone, Copy, Debug)]
pub struct Guard {
    pub force: bool,
}

impl Guard {
    fn check(&self, path: &Path, producer: Stage, expected: &str, found: &str) -> Result<(), CliError> {
        if expected == found {
            return Ok(());
        }
        if self.force {
            log::warn!("{}: config hash mismatch ignored (--force)", path.display());
            return Ok(());
        }
        Err(CliError::Stale {
            path: path.to_path_buf(),
            producer: producer.name(),
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }

    pub fn require(&self, path: &Path, producer: Stage) -> Result<(), CliError> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::Missing {
                path: path.to_path_buf(),
                producer: producer.name(),
            })
        }
    }

    pub fn read_json<T: DeserializeOwned>(&self, path: &Path, producer: Stage, expected: &str) -> Result<T, CliError> {
        self.require(path, producer)?;
        let text = fs::read_to_string(path).map_err(|e| kdsim::KdError::io(path, e))?;
        let env: Envelope<T> =
            serde_json::from_str(&text).map_err(|e| kdsim::KdError::format(path, e.to_string()))?;
        self.check(path, producer, expected, &env.config_hash)?;
        Ok(env.data)
    }

    pub fn read_model(&self, path: &Path, producer: Stage, expected: &str) -> Result<Model, CliError> {
        self.require(path, producer)?;
        let (model, hash) = load_model(path)?;
        self.check(path, producer, expected, &hash)?;
        Ok(model)
    }
}
