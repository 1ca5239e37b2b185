//! Experiment configuration: one JSON file describing data, model, training,
//! and the active-learning block, schema-validated with defaults echoed into
//! the output directory.

use evipitch::active::Criterion;
use evipitch::dataio::{FrontendConfig, SyntheticSpec};
use evipitch::error::{Error, Result};
use evipitch::network::{ModelConfig, Task, TrainParams};
use evipitch::pitchgrid::PitchGrid;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub block_filters: Vec<usize>,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    pub leaky_slope: f64,
    pub pool_factor: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            block_filters: d.block_filters,
            dropout_rate: d.dropout_rate,
            weight_decay: d.weight_decay,
            leaky_slope: d.leaky_slope,
            pool_factor: d.pool_factor,
            seed: d.seed,
        }
    }
}

/// Where the labeled clips come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DataSection {
    /// WAV + label-CSV corpus listed in a manifest JSON.
    Manifest {
        path: PathBuf,
        /// train/validation/test ratios.
        #[serde(default = "default_ratios")]
        ratios: [f64; 3],
        #[serde(default)]
        split_seed: u64,
    },
    /// Seeded in-memory synthetic corpora (source domain + shifted target).
    Synthetic {
        source: SyntheticSpec,
        target: SyntheticSpec,
        #[serde(default = "default_source_count")]
        source_count: usize,
        #[serde(default = "default_pool_count")]
        target_pool_count: usize,
        #[serde(default = "default_test_count")]
        target_test_count: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_ratios() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}
fn default_source_count() -> usize {
    200
}
fn default_pool_count() -> usize {
    300
}
fn default_test_count() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActiveSection {
    /// Base checkpoint to adapt (produced by `train`).
    pub base_checkpoint: PathBuf,
    pub criteria: Vec<Criterion>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_batch_size: usize,
    pub voiced_only_scoring: bool,
}

impl Default for ActiveSection {
    fn default() -> Self {
        ActiveSection {
            base_checkpoint: PathBuf::from("checkpoint.ckpt"),
            criteria: vec![Criterion::Epistemic, Criterion::Aleatoric, Criterion::Random],
            budgets: vec![25, 50, 100, 200],
            seeds: vec![1, 2, 3],
            finetune_epochs: 20,
            finetune_lr: 1e-4,
            finetune_batch_size: 8,
            voiced_only_scoring: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub grid: PitchGrid,
    #[serde(default)]
    pub frontend: FrontendConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainParams,
    pub data: DataSection,
    #[serde(default)]
    pub active: Option<ActiveSection>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("config schema violation: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.frontend.validate()?;
        self.model_config().validate()?;
        match &self.data {
            DataSection::Manifest { ratios, .. } => {
                let sum: f64 = ratios.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("split ratios sum to {sum}, expected 1")));
                }
            }
            DataSection::Synthetic {
                source,
                target,
                source_count,
                target_pool_count,
                target_test_count,
                ..
            } => {
                source.validate(&self.grid)?;
                target.validate(&self.grid)?;
                if *source_count == 0 || *target_pool_count == 0 || *target_test_count == 0 {
                    return Err(Error::config("synthetic corpus counts must be positive"));
                }
            }
        }
        if let Some(active) = &self.active {
            if active.criteria.is_empty() || active.budgets.is_empty() || active.seeds.is_empty() {
                return Err(Error::config("active block needs criteria, budgets, and seeds"));
            }
            if !active.budgets.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::config("active budgets must be strictly ascending"));
            }
        }
        Ok(())
    }

    /// Full model config assembled from the task, grid, and frontend.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            task: self.task,
            block_filters: self.model.block_filters.clone(),
            n_bins: self.grid.n_bins,
            n_freq: self.frontend.output_freq(evipitch::dsp::FFT_SIZE / 2 + 1),
            dropout_rate: self.model.dropout_rate,
            weight_decay: self.model.weight_decay,
            leaky_slope: self.model.leaky_slope,
            pool_factor: self.model.pool_factor,
            seed: self.model.seed,
        }
    }

    /// Hex SHA-256 of the canonical resolved JSON.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Write the resolved config (defaults included) next to the artifacts.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("resolved_config.json"), json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config_json() -> String {
        r#"{
            "task": "M2",
            "data": {
                "synthetic": {
                    "source": {},
                    "target": { "noise_snr_db": 15.0 }
                }
            }
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_synthetic_config_with_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(&synthetic_config_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.task, Task::M2);
        assert_eq!(cfg.grid.n_bins, 384);
        let mc = cfg.model_config();
        assert_eq!(mc.n_freq, 1025);
        assert_eq!(mc.n_bins, 384);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = r#"{ "task": "M2", "data": { "synthetic": { "source": {}, "target": {} } }, "bogus": 1 }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    }

    #[test]
    fn digest_changes_with_any_field() {
        let a: ExperimentConfig = serde_json::from_str(&synthetic_config_json()).unwrap();
        let mut b = a.clone();
        b.training.lr = 0.5;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    #[test]
    fn invalid_synthetic_spec_names_field() {
        let bad = r#"{
            "task": "M2",
            "data": { "synthetic": {
                "source": { "pitch_min_hz": 10.0 },
                "target": {}
            } }
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("pitch_range"), "{err}");
    }
}
