//! The shadow-model pipeline: pools of unlearned and retrained models whose
//! test-set logits feed the attacks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::{LogitRecord, Origin};
use crate::data::{normalize_class_set, remove_classes, Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::filtration::{unlearn, Strategy};
use crate::model::{init_model_with, train, MlpClassifier, TrainConfig};

/// Which split the class means of the seen models are estimated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSource {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShadowConfig {
    pub dataset: DatasetSpec,
    /// Full-model layer widths; retrained models end in `k - |C|` instead.
    pub layer_dims: Vec<usize>,
    pub deleted: Vec<usize>,
    pub strategy: Strategy,
    pub models_per_pool: usize,
    pub train_fraction: f64,
    /// Template; each model overrides `seed`.
    pub train: TrainConfig,
    pub base_seed: u64,
    /// Per-class cap on rows used for class means, `None` for all.
    pub sample_size: Option<usize>,
    pub mean_source: MeanSource,
    /// Also train a second not-seen pool for the KS baseline.
    pub baseline_pool: bool,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            dataset: DatasetSpec::default(),
            layer_dims: vec![8, 50, 10],
            deleted: vec![0],
            strategy: Strategy::Normalization,
            models_per_pool: 20,
            train_fraction: 0.7,
            train: TrainConfig::default(),
            base_seed: 0,
            sample_size: None,
            mean_source: MeanSource::Train,
            baseline_pool: false,
        }
    }
}

impl ShadowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models_per_pool < 2 {
            return Err(Error::InvalidParam("models_per_pool must be at least 2".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParam("train_fraction must lie in (0, 1)".into()));
        }
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidParam("layer_dims needs an input and an output width".into()));
        }
        if self.sample_size == Some(0) {
            return Err(Error::InvalidParam("sample_size must be positive".into()));
        }
        self.train.validate()
    }
}

/// Trained shadow models. Pools are kept so several strategies can be
/// evaluated against the same models.
#[derive(Debug, Clone)]
pub struct ShadowPools {
    pub deleted: Vec<usize>,
    pub full: Vec<MlpClassifier>,
    pub retrained: Vec<MlpClassifier>,
    pub baseline: Vec<MlpClassifier>,
    pub base_seed: u64,
    train_set: Dataset,
    test_set: Dataset,
}

fn train_one(dims: &[usize], ds: &Dataset, template: &TrainConfig, seed: u64) -> Result<MlpClassifier> {
    let cfg = TrainConfig {
        seed,
        ..template.clone()
    };
    train(&init_model_with(dims, seed, cfg.init_scale)?, ds, &cfg)
}

fn train_pool(dims: &[usize], ds: &Dataset, template: &TrainConfig, seeds: Vec<u64>) -> Result<Vec<MlpClassifier>> {
    seeds
        .into_par_iter()
        .map(|s| train_one(dims, ds, template, s))
        .collect()
}

impl ShadowPools {
    /// Seeds: full models `base_seed + i`, retrained `base_seed + N + i`,
    /// baseline `base_seed + 2N + i`.
    pub fn train(cfg: &ShadowConfig, train_set: &Dataset, test_set: &Dataset) -> Result<ShadowPools> {
        cfg.validate()?;
        let k = train_set.num_classes;
        if cfg.layer_dims.first() != Some(&train_set.dim()) || cfg.layer_dims.last() != Some(&k) {
            return Err(Error::shape(format!(
                "layer_dims {:?} do not fit {}-dimensional data with {k} classes",
                cfg.layer_dims,
                train_set.dim()
            )));
        }
        if test_set.num_classes != k || test_set.dim() != train_set.dim() {
            return Err(Error::shape("train and test splits disagree"));
        }
        let deleted = normalize_class_set(&cfg.deleted, k)?;
        let reduced = remove_classes(train_set, &deleted)?;
        let mut reduced_dims = cfg.layer_dims.clone();
        *reduced_dims.last_mut().unwrap() = k - deleted.len();

        let n = cfg.models_per_pool as u64;
        let seeds = |offset: u64| (0..n).map(|i| cfg.base_seed.wrapping_add(offset + i)).collect::<Vec<_>>();
        let full = train_pool(&cfg.layer_dims, train_set, &cfg.train, seeds(0))?;
        let retrained = train_pool(&reduced_dims, &reduced, &cfg.train, seeds(n))?;
        let baseline = if cfg.baseline_pool {
            train_pool(&reduced_dims, &reduced, &cfg.train, seeds(2 * n))?
        } else {
            Vec::new()
        };
        Ok(ShadowPools {
            deleted,
            full,
            retrained,
            baseline,
            base_seed: cfg.base_seed,
            train_set: train_set.clone(),
            test_set: test_set.clone(),
        })
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test_set
    }

    /// Unlearns every full model with `strategy`, the class means and plan of
    /// model `i` seeded by `base_seed + i`.
    pub fn unlearned(
        &self,
        strategy: Strategy,
        sample_size: Option<usize>,
        mean_source: MeanSource,
    ) -> Result<Vec<MlpClassifier>> {
        let source = match mean_source {
            MeanSource::Train => &self.train_set,
            MeanSource::Test => &self.test_set,
        };
        self.full
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                unlearn(
                    m,
                    source,
                    &self.deleted,
                    strategy,
                    sample_size,
                    self.base_seed.wrapping_add(i as u64),
                )
            })
            .collect()
    }

    /// Test-set logits of every model, ordered by model id then test row.
    pub fn records(
        &self,
        strategy: Strategy,
        sample_size: Option<usize>,
        mean_source: MeanSource,
    ) -> Result<Vec<LogitRecord>> {
        let seen = self.unlearned(strategy, sample_size, mean_source)?;
        let pools = [
            (Origin::Seen, &seen),
            (Origin::NotSeen, &self.retrained),
            (Origin::NotSeen, &self.baseline),
        ];
        let mut out = Vec::new();
        let mut model_id = 0;
        for (origin, models) in pools {
            for m in models {
                let logits = m.predict_logits(&self.test_set.inputs)?;
                out.extend(logits.into_iter().zip(&self.test_set.labels).map(|(logits, &c)| LogitRecord {
                    model_id,
                    origin,
                    true_class: c,
                    logits,
                }));
                model_id += 1;
            }
        }
        Ok(out)
    }
}

pub fn shadow_experiment(cfg: &ShadowConfig) -> Result<Vec<LogitRecord>> {
    let (train_set, test_set) = cfg.dataset.load()?;
    let pools = ShadowPools::train(cfg, &train_set, &test_set)?;
    pools.records(cfg.strategy, cfg.sample_size, cfg.mean_source)
}
