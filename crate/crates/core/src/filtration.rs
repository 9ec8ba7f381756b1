//! Linear filtration of a classifier's logit layer.
//!
//! Given the class-mean logit matrix `A` (column `j` is the mean logit vector
//! of inputs of class `j`) and a deletion set `C`, a plan builds the
//! `(k-|C|) x k` matrix `B` whose retained columns are the projected means
//! `π_C(a_r)` and whose deleted columns are replacement vectors chosen by a
//! [`Strategy`]. The filtration matrix is `F = B A⁻¹`, which maps each column
//! of `A` onto the matching column of `B`. Applying the plan replaces the
//! output layer `(W, b)` with `(F W, F b)`, so the original layer is gone from
//! the returned model.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_class_set, sample_per_class, Dataset};
use crate::error::{Error, Result};
use crate::model::MlpClassifier;
use crate::numerics::{column_mean, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Replacement is the projected class mean itself: `F` drops the output.
    Naive,
    /// Projected class mean shifted so its mean matches the retained columns.
    Normalization,
    /// Standard normal replacement vector.
    Randomization,
    /// Zero replacement vector.
    Zeroing,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Naive,
        Strategy::Normalization,
        Strategy::Randomization,
        Strategy::Zeroing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Normalization => "normalization",
            Strategy::Randomization => "randomization",
            Strategy::Zeroing => "zeroing",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown strategy {s:?}")))
    }
}

/// Estimated class-mean logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeans {
    /// `k x k`; column `j` is the mean logit vector of class `j`.
    pub matrix: Matrix,
    pub counts: Vec<usize>,
}

impl ClassMeans {
    /// Averages logit vectors per label.
    pub fn from_logits(logits: &[Vec<f64>], labels: &[usize], k: usize) -> Result<ClassMeans> {
        if logits.len() != labels.len() {
            return Err(Error::shape("one label per logit vector required"));
        }
        let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
        for (l, &y) in logits.iter().zip(labels) {
            if l.len() != k {
                return Err(Error::shape(format!("logit vector of length {} for k = {k}", l.len())));
            }
            groups
                .get_mut(y)
                .ok_or(Error::InvalidClass { class: y, outputs: k })?
                .push(l);
        }
        let mut columns = Vec::with_capacity(k);
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::MissingClass(j));
            }
            columns.push(column_mean(g)?);
        }
        Ok(ClassMeans {
            matrix: Matrix::from_columns(&columns)?,
            counts: groups.iter().map(Vec::len).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.cols()
    }

    pub fn mean(&self, j: usize) -> Vec<f64> {
        self.matrix.column(j)
    }
}

/// Drops the coordinates listed in `deleted`, keeping the rest in order.
pub fn projection(v: &[f64], deleted: &[usize]) -> Result<Vec<f64>> {
    let deleted = normalize_class_set(deleted, v.len())?;
    Ok(project_sorted(v, &deleted))
}

fn project_sorted(v: &[f64], deleted: &[usize]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .filter(|(i, _)| deleted.binary_search(i).is_err())
        .map(|(_, &x)| x)
        .collect()
}

/// Mean-logit estimate over at most `sample_cap` rows per class
/// (all rows when `None`).
pub fn estimate_class_means(
    model: &MlpClassifier,
    ds: &Dataset,
    sample_cap: Option<usize>,
    seed: u64,
) -> Result<ClassMeans> {
    let k = model.num_outputs();
    if ds.num_classes != k {
        return Err(Error::shape(format!(
            "dataset has {} classes, model has {k} outputs",
            ds.num_classes
        )));
    }
    let sample = match sample_cap {
        Some(s) => sample_per_class(ds, s, seed),
        None => ds.clone(),
    };
    let logits = model.predict_logits(&sample.inputs)?;
    ClassMeans::from_logits(&logits, &sample.labels, k)
}

/// The replacement column `z` for deleted class `j`.
pub fn replacement_column<R: Rng + ?Sized>(
    means: &ClassMeans,
    j: usize,
    deleted: &[usize],
    strategy: Strategy,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = means.num_classes();
    let deleted = normalize_class_set(deleted, k)?;
    if deleted.binary_search(&j).is_err() {
        return Err(Error::InvalidClassSet(format!("class {j} is not in the deletion set")));
    }
    let dim = k - deleted.len();
    let projected = project_sorted(&means.mean(j), &deleted);
    Ok(match strategy {
        Strategy::Naive => projected,
        Strategy::Normalization => {
            let own_mean = projected.iter().sum::<f64>() / dim as f64;
            let retained: Vec<f64> = (0..k)
                .filter(|r| deleted.binary_search(r).is_err())
                .flat_map(|r| project_sorted(&means.mean(r), &deleted))
                .collect();
            let grand_mean = retained.iter().sum::<f64>() / retained.len() as f64;
            projected.iter().map(|v| v - own_mean + grand_mean).collect()
        }
        Strategy::Randomization => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
        Strategy::Zeroing => vec![0.0; dim],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationPlan {
    /// Deleted original class indices, ascending.
    pub deleted: Vec<usize>,
    pub strategy: Strategy,
    pub seed: u64,
    /// `(k-|C|) x k` target matrix.
    pub b: Matrix,
    /// `(k-|C|) x k` filtration matrix `B A⁻¹`.
    pub f: Matrix,
}

impl FiltrationPlan {
    pub fn num_classes(&self) -> usize {
        self.f.cols()
    }

    pub fn num_retained(&self) -> usize {
        self.f.rows()
    }

    pub fn filter_logits(&self, logits: &[f64]) -> Result<Vec<f64>> {
        self.f.matvec(logits)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FiltrationPlan> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Builds `B` for the strategy and solves `F = B A⁻¹`.
///
/// Randomization draws from one generator seeded with `seed`, consumed in
/// ascending deleted-class order.
pub fn build_filtration(
    means: &ClassMeans,
    deleted: &[usize],
    strategy: Strategy,
    seed: u64,
) -> Result<FiltrationPlan> {
    let k = means.num_classes();
    let deleted = normalize_class_set(deleted, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(k);
    for j in 0..k {
        if deleted.binary_search(&j).is_ok() {
            columns.push(replacement_column(means, j, &deleted, strategy, &mut rng)?);
        } else {
            columns.push(project_sorted(&means.mean(j), &deleted));
        }
    }
    let b = Matrix::from_columns(&columns)?;
    let inverse = means.matrix.invert().map_err(|e| match e {
        Error::SingularMatrix { context } => Error::SingularMatrix {
            context: format!("class means linearly dependent ({context})"),
        },
        other => other,
    })?;
    let f = b.matmul(&inverse)?;
    Ok(FiltrationPlan {
        deleted,
        strategy,
        seed,
        b,
        f,
    })
}

/// Absorbs the plan into the model's output layer: `(W, b) ↦ (F W, F b)`.
pub fn apply_filtration(plan: &FiltrationPlan, model: &MlpClassifier) -> Result<MlpClassifier> {
    if plan.num_classes() != model.num_outputs() {
        return Err(Error::shape(format!(
            "plan built for {} classes, model has {} outputs",
            plan.num_classes(),
            model.num_outputs()
        )));
    }
    let head = model.logit_layer();
    let weights = plan.f.matmul(&head.weights)?;
    let bias = plan.f.matvec(&head.bias)?;
    model.replace_output_layer(weights, bias)
}

/// Estimates class means, builds one plan for the whole deletion set, and
/// applies it.
pub fn unlearn(
    model: &MlpClassifier,
    ds: &Dataset,
    deleted: &[usize],
    strategy: Strategy,
    sample_cap: Option<usize>,
    seed: u64,
) -> Result<MlpClassifier> {
    Ok(unlearn_with_plan(model, ds, deleted, strategy, sample_cap, seed)?.0)
}

pub fn unlearn_with_plan(
    model: &MlpClassifier,
    ds: &Dataset,
    deleted: &[usize],
    strategy: Strategy,
    sample_cap: Option<usize>,
    seed: u64,
) -> Result<(MlpClassifier, FiltrationPlan)> {
    let means = estimate_class_means(model, ds, sample_cap, seed)?;
    let plan = build_filtration(&means, deleted, strategy, seed)?;
    Ok((apply_filtration(&plan, model)?, plan))
}
