//! Model inversion: projected gradient ascent on the input towards one class,
//! and binary PGM export of the result.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MlpClassifier, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Logit,
    #[default]
    LogProb,
}

impl ObjectiveKind {
    pub fn for_class(self, class: usize) -> Objective {
        match self {
            ObjectiveKind::Logit => Objective::Logit(class),
            ObjectiveKind::LogProb => Objective::LogProb(class),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub target_class: usize,
    pub objective: ObjectiveKind,
    pub steps: usize,
    pub step_size: f64,
    /// Starting input; a constant 0.5 vector when `None`.
    pub init: Option<Vec<f64>>,
    /// Project every iterate onto `[0, 1]^d`.
    pub clamp: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            target_class: 0,
            objective: ObjectiveKind::LogProb,
            steps: 1000,
            step_size: 0.1,
            init: None,
            clamp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    /// The best iterate found.
    pub input: Vec<f64>,
    /// Objective at the start and after every step.
    pub trace: Vec<f64>,
    /// Index into `trace` of `input`.
    pub best_step: usize,
}

impl Inversion {
    pub fn objective(&self) -> f64 {
        self.trace[self.best_step]
    }
}

/// Runs `steps` iterations of `x <- clamp(x + step_size * grad)`.
///
/// A fixed step can overshoot, so the iterate with the highest objective is
/// returned rather than the last one; its objective is never below the
/// starting value.
pub fn invert_class(model: &MlpClassifier, cfg: &InversionConfig) -> Result<Inversion> {
    if cfg.target_class >= model.num_outputs() {
        return Err(Error::InvalidClass {
            class: cfg.target_class,
            outputs: model.num_outputs(),
        });
    }
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::InvalidParam("step_size must be positive".into()));
    }
    let objective = cfg.objective.for_class(cfg.target_class);
    let mut x = match &cfg.init {
        Some(v) if v.len() != model.input_dim() => {
            return Err(Error::shape(format!(
                "init has length {}, model expects {}",
                v.len(),
                model.input_dim()
            )))
        }
        Some(v) => v.clone(),
        None => vec![0.5; model.input_dim()],
    };
    let (mut value, mut grad) = model.objective_and_gradient(&x, objective)?;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    trace.push(value);
    let mut best = (value, x.clone(), 0);
    for step in 1..=cfg.steps {
        for (xi, g) in x.iter_mut().zip(&grad) {
            *xi += cfg.step_size * g;
            if cfg.clamp {
                *xi = xi.clamp(0.0, 1.0);
            }
        }
        (value, grad) = model.objective_and_gradient(&x, objective)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("inversion objective"));
        }
        trace.push(value);
        if value > best.0 {
            best = (value, x.clone(), step);
        }
    }
    Ok(Inversion {
        input: best.1,
        trace,
        best_step: best.2,
    })
}

/// `P5` header then one byte per pixel, `round(255 v)`.
pub fn encode_pgm(image: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if width * height != image.len() {
        return Err(Error::shape(format!(
            "{width}x{height} image needs {} pixels, got {}",
            width * height,
            image.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(image.iter().map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8));
    Ok(out)
}

pub fn save_pgm(image: &[f64], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pgm(image, width, height)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Smallest near-square grid holding `d` pixels, for inputs that are not images.
pub fn grid_shape(d: usize) -> (usize, usize) {
    let width = (d as f64).sqrt().ceil().max(1.0) as usize;
    (width, d.div_ceil(width))
}
