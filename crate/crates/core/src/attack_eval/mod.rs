//! Adversarial evaluation of unlearning.
//!
//! Two pools of shadow models predict the same test inputs: models trained
//! on everything and then unlearned ("seen"), and models retrained without
//! the deleted classes ("not seen"). Binary attack classifiers learn to tell
//! the pools apart from the logits alone; their advantage over guessing, and
//! random-direction KS statistics between the pools, measure how well the
//! unlearning hides what the model saw.

pub mod adaboost;
pub mod audit;
pub mod forest;
pub mod knn;
pub mod ks;
pub mod records;
pub mod shadow;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adaboost::AdaBoostAttack;
pub use audit::{label_change_report, LabelChangeReport};
pub use forest::RandomForestAttack;
pub use knn::KnnAttack;
pub use ks::{ks_phi, ks_phi_with_directions, ks_report, two_sample_ks, KsReport};
pub use records::{load_records, save_records, LogitRecord, Origin, RecordPools};
pub use shadow::{shadow_experiment, MeanSource, ShadowConfig, ShadowPools};

use crate::error::{Error, Result};
use records::csv_error;

pub const KNN_NEIGHBORS: usize = 5;
pub const FOREST_TREES: usize = 100;
pub const FOREST_MAX_DEPTH: usize = 8;
pub const BOOSTING_ROUNDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Knn,
    RandomForest,
    #[serde(rename = "adaboost")]
    AdaBoost,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Knn, AttackKind::RandomForest, AttackKind::AdaBoost];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Knn => "knn",
            AttackKind::RandomForest => "random_forest",
            AttackKind::AdaBoost => "adaboost",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown attack {s:?}")))
    }
}

/// A fitted binary classifier predicting whether logits came from a seen model.
#[derive(Debug, Clone)]
pub enum AttackModel {
    Knn(KnnAttack),
    RandomForest(RandomForestAttack),
    AdaBoost(AdaBoostAttack),
}

impl AttackModel {
    pub fn predict(&self, logits: &[f64]) -> Origin {
        let seen = match self {
            AttackModel::Knn(m) => m.predict(logits),
            AttackModel::RandomForest(m) => m.predict(logits),
            AttackModel::AdaBoost(m) => m.predict(logits),
        };
        if seen {
            Origin::Seen
        } else {
            Origin::NotSeen
        }
    }
}

/// Fits an attack with the default hyperparameters. `seed` drives the
/// random forest's bootstrap and feature sampling.
pub fn fit_attack<R: std::borrow::Borrow<LogitRecord>>(
    kind: AttackKind,
    train: &[R],
    seed: u64,
) -> Result<AttackModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("attack training records"));
    }
    let points: Vec<Vec<f64>> = train.iter().map(|r| r.borrow().logits.clone()).collect();
    let labels: Vec<bool> = train.iter().map(|r| r.borrow().origin.is_seen()).collect();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateData("attack training data has a single origin".into()));
    }
    Ok(match kind {
        AttackKind::Knn => AttackModel::Knn(KnnAttack::fit(KNN_NEIGHBORS, points, labels)?),
        AttackKind::RandomForest => AttackModel::RandomForest(RandomForestAttack::fit(
            &points,
            &labels,
            FOREST_TREES,
            FOREST_MAX_DEPTH,
            seed,
        )?),
        AttackKind::AdaBoost => {
            AttackModel::AdaBoost(AdaBoostAttack::fit(&points, &labels, BOOSTING_ROUNDS)?)
        }
    })
}

/// `2 (accuracy - 1/2)`.
pub fn advantage_from_accuracy(accuracy: f64) -> f64 {
    2.0 * (accuracy - 0.5)
}

pub fn attack_accuracy<R: std::borrow::Borrow<LogitRecord>>(attack: &AttackModel, test: &[R]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("attack test records"));
    }
    let correct = test
        .iter()
        .filter(|r| attack.predict(&r.borrow().logits) == r.borrow().origin)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

pub fn classifier_advantage<R: std::borrow::Borrow<LogitRecord>>(attack: &AttackModel, test: &[R]) -> Result<f64> {
    Ok(advantage_from_accuracy(attack_accuracy(attack, test)?))
}

/// Which models' records train the attacks; the rest test them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSplit {
    pub train: BTreeSet<usize>,
    pub test: BTreeSet<usize>,
}

/// Splits the seen and the not-seen model ids separately, putting
/// `round(train_fraction * n)` of each (at least one, and leaving at least
/// one) on the training side.
pub fn split_models(records: &[&LogitRecord], train_fraction: f64, seed: u64) -> Result<ModelSplit> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidParam(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = ModelSplit {
        train: BTreeSet::new(),
        test: BTreeSet::new(),
    };
    for origin in [Origin::Seen, Origin::NotSeen] {
        let mut ids: Vec<usize> = records
            .iter()
            .filter(|r| r.origin == origin)
            .map(|r| r.model_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if ids.len() < 2 {
            return Err(Error::DegenerateData(format!(
                "need at least two {origin} models to split, found {}",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        let n_train = ((train_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
        split.train.extend(&ids[..n_train]);
        split.test.extend(&ids[n_train..]);
    }
    if !split.train.is_disjoint(&split.test) {
        return Err(Error::DegenerateData("a model id appears with both origins".into()));
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Class(usize),
    Unlearned,
    Remaining,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Class(c) => write!(f, "class_{c}"),
            Scope::Unlearned => f.write_str("unlearned"),
            Scope::Remaining => f.write_str("remaining"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRow {
    pub attack: AttackKind,
    pub scope: Scope,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageReport {
    pub rows: Vec<AdvantageRow>,
    pub split: ModelSplit,
}

impl AdvantageReport {
    pub fn get(&self, attack: AttackKind, scope: Scope) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.attack == attack && r.scope == scope)
            .map(|r| r.advantage)
    }

    /// CSV with header `attack,class_scope,advantage`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["attack", "class_scope", "advantage"]).map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([r.attack.to_string(), r.scope.to_string(), r.advantage.to_string()])
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits one attack per (true class, attack kind) on the records of the
/// training-side models and scores it on the remaining models. Baseline-pool
/// records are ignored.
pub fn per_class_advantage(
    records: &[LogitRecord],
    deleted: &[usize],
    kinds: &[AttackKind],
    train_fraction: f64,
    seed: u64,
) -> Result<AdvantageReport> {
    let pools = RecordPools::split(records);
    let attack_records = pools.attack_records();
    records::check_dimension(records)?;
    let split = split_models(&attack_records, train_fraction, seed)?;

    let mut by_class: BTreeMap<usize, (Vec<&LogitRecord>, Vec<&LogitRecord>)> = BTreeMap::new();
    for r in attack_records {
        let entry = by_class.entry(r.true_class).or_default();
        if split.train.contains(&r.model_id) {
            entry.0.push(r);
        } else {
            entry.1.push(r);
        }
    }

    let mut rows = Vec::new();
    for &kind in kinds {
        let mut unlearned = Vec::new();
        let mut remaining = Vec::new();
        for (&class, (train, test)) in &by_class {
            let attack = fit_attack(kind, train, seed.wrapping_add(class as u64))?;
            let advantage = classifier_advantage(&attack, test)?;
            if deleted.contains(&class) {
                unlearned.push(advantage);
            } else {
                remaining.push(advantage);
            }
            rows.push(AdvantageRow {
                attack: kind,
                scope: Scope::Class(class),
                advantage,
            });
        }
        for (scope, values) in [(Scope::Unlearned, unlearned), (Scope::Remaining, remaining)] {
            if !values.is_empty() {
                rows.push(AdvantageRow {
                    attack: kind,
                    scope,
                    advantage: values.iter().sum::<f64>() / values.len() as f64,
                });
            }
        }
    }
    Ok(AdvantageReport { rows, split })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic_records(shift: f64, models: usize, per_model: usize, seed: u64) -> Vec<LogitRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut out = Vec::new();
        for m in 0..2 * models {
            let origin = if m < models { Origin::Seen } else { Origin::NotSeen };
            for i in 0..per_model {
                let mut logits: Vec<f64> = (0..3).map(|_| noise.sample(&mut rng)).collect();
                if origin.is_seen() {
                    logits[0] += shift;
                }
                out.push(LogitRecord {
                    model_id: m,
                    origin,
                    true_class: i % 2,
                    logits,
                });
            }
        }
        out
    }

    #[test]
    fn advantage_endpoints() {
        assert_eq!(advantage_from_accuracy(1.0), 1.0);
        assert_eq!(advantage_from_accuracy(0.5), 0.0);
        assert!((advantage_from_accuracy(0.7965) - 0.593).abs() < 1e-12);
    }

    #[test]
    fn separable_origins_are_detected_by_every_attack() {
        let records = synthetic_records(10.0, 6, 40, 1);
        let refs: Vec<&LogitRecord> = records.iter().collect();
        let split = split_models(&refs, 0.7, 0).unwrap();
        let (train, test): (Vec<&LogitRecord>, Vec<&LogitRecord>) =
            refs.iter().partition(|r| split.train.contains(&r.model_id));
        for kind in AttackKind::ALL {
            let attack = fit_attack(kind, &train, 3).unwrap();
            assert_eq!(attack_accuracy(&attack, &test).unwrap(), 1.0, "{kind}");
        }
    }

    #[test]
    fn null_distribution_has_no_advantage() {
        let records = synthetic_records(0.0, 10, 200, 2);
        let report = per_class_advantage(&records, &[0], &AttackKind::ALL, 0.7, 5).unwrap();
        for row in &report.rows {
            assert!(row.advantage.abs() <= 0.1, "{row:?}");
        }
    }

    #[test]
    fn flipped_predictions_negate_advantage() {
        let records = synthetic_records(1.0, 4, 50, 3);
        let attack = fit_attack(AttackKind::Knn, &records, 0).unwrap();
        let adv = classifier_advantage(&attack, &records).unwrap();
        let flipped: Vec<LogitRecord> = records
            .iter()
            .map(|r| LogitRecord {
                origin: if r.origin.is_seen() { Origin::NotSeen } else { Origin::Seen },
                ..r.clone()
            })
            .collect();
        let flipped_adv = classifier_advantage(&attack, &flipped).unwrap();
        assert!((adv + flipped_adv).abs() < 1e-12);
    }

    #[test]
    fn forest_is_deterministic() {
        let records = synthetic_records(0.7, 4, 60, 4);
        let a = fit_attack(AttackKind::RandomForest, &records, 11).unwrap();
        let b = fit_attack(AttackKind::RandomForest, &records, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(a.predict(&x), b.predict(&x));
        }
    }

    #[test]
    fn degenerate_training_data() {
        let records = synthetic_records(1.0, 2, 5, 5);
        let seen_only: Vec<&LogitRecord> = records.iter().filter(|r| r.origin.is_seen()).collect();
        assert!(matches!(
            fit_attack(AttackKind::Knn, &seen_only, 0),
            Err(Error::DegenerateData(_))
        ));
        let none: Vec<LogitRecord> = Vec::new();
        assert!(fit_attack(AttackKind::Knn, &none, 0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
    }

    #[test]
    fn report_shape_and_no_model_leakage() {
        let mut records = Vec::new();
        for m in 0..10 {
            let origin = if m < 5 { Origin::Seen } else { Origin::NotSeen };
            for c in 0..10 {
                for j in 0..4 {
                    records.push(LogitRecord {
                        model_id: m,
                        origin,
                        true_class: c,
                        logits: (0..9).map(|i| (m * 31 + c * 7 + j * 3 + i) as f64 % 5.0).collect(),
                    });
                }
            }
        }
        let report = per_class_advantage(&records, &[0], &AttackKind::ALL, 0.7, 1).unwrap();
        assert_eq!(report.rows.len(), 3 * (10 + 2));
        assert!(report.split.train.is_disjoint(&report.split.test));
        assert_eq!(report.split.train.len() + report.split.test.len(), 10);
        assert!(report.get(AttackKind::AdaBoost, Scope::Unlearned).is_some());
        for row in &report.rows {
            assert!((-1.0..=1.0).contains(&row.advantage));
        }
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("attack,class_scope,advantage\nknn,class_0,"));
    }
}
