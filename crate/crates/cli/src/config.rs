use std::path::{Path, PathBuf};

use linfilt::attack_eval::{AttackKind, MeanSource, ShadowConfig};
use linfilt::data::{normalize_class_set, DatasetSpec};
use linfilt::filtration::Strategy;
use linfilt::inversion::ObjectiveKind;
use linfilt::model::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionSettings {
    pub steps: usize,
    pub step_size: f64,
    pub objective: ObjectiveKind,
}

impl Default for InversionSettings {
    fn default() -> Self {
        InversionSettings {
            steps: 1000,
            step_size: 0.1,
            objective: ObjectiveKind::LogProb,
        }
    }
}

/// Everything a run needs. Every stochastic step is seeded from `base_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub layer_dims: Vec<usize>,
    pub train: TrainConfig,
    pub deleted: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub attacks: Vec<AttackKind>,
    pub models_per_pool: usize,
    pub train_fraction: f64,
    pub sample_size: Option<usize>,
    pub estimate_on: MeanSource,
    pub directions: usize,
    pub baseline_pool: bool,
    pub inversion: InversionSettings,
    pub out_dir: PathBuf,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            layer_dims: vec![8, 50, 10],
            train: TrainConfig::default(),
            deleted: vec![0],
            strategies: Strategy::ALL.to_vec(),
            attacks: AttackKind::ALL.to_vec(),
            models_per_pool: 20,
            train_fraction: 0.7,
            sample_size: None,
            estimate_on: MeanSource::Train,
            directions: 200,
            baseline_pool: true,
            inversion: InversionSettings::default(),
            out_dir: PathBuf::from("out"),
            base_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.strategies.is_empty() {
            return Err(CliError::Config("strategies must not be empty".into()));
        }
        if self.attacks.is_empty() {
            return Err(CliError::Config("attacks must not be empty".into()));
        }
        if self.directions == 0 {
            return Err(CliError::Config("directions must be positive".into()));
        }
        if let DatasetSpec::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } = &self.dataset
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if !p.exists() {
                    return Err(CliError::Config(format!("dataset file {} does not exist", p.display())));
                }
            }
        }
        let k = *self
            .layer_dims
            .last()
            .ok_or_else(|| CliError::Config("layer_dims must not be empty".into()))?;
        normalize_class_set(&self.deleted, k)?;
        self.shadow(self.strategies[0]).validate()?;
        Ok(())
    }

    pub fn shadow(&self, strategy: Strategy) -> ShadowConfig {
        ShadowConfig {
            dataset: self.dataset.clone(),
            layer_dims: self.layer_dims.clone(),
            deleted: self.deleted.clone(),
            strategy,
            models_per_pool: self.models_per_pool,
            train_fraction: self.train_fraction,
            train: self.train.clone(),
            base_seed: self.base_seed,
            sample_size: self.sample_size,
            mean_source: self.estimate_on,
            baseline_pool: self.baseline_pool,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            sample_size: Some(10),
            strategies: vec![Strategy::Naive, Strategy::Zeroing],
            train: TrainConfig {
                learning_rate: 0.1 + 0.2,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let again: ExperimentConfig = serde_json::from_str(&back.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"models_per_pool": 4, "deleted": [2, 3]}"#).unwrap();
        assert_eq!(cfg.models_per_pool, 4);
        assert_eq!(cfg.directions, 200);
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"modls": 4}"#).is_err());
    }

    #[test]
    fn validation() {
        let cfg = ExperimentConfig {
            strategies: vec![],
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg = ExperimentConfig {
            deleted: (0..10).collect(),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            dataset: DatasetSpec::Mnist {
                train_images: "/nonexistent/a".into(),
                train_labels: "/nonexistent/b".into(),
                test_images: "/nonexistent/c".into(),
                test_labels: "/nonexistent/d".into(),
            },
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
