//! Synthetic satisfaction classifier at a fixed (FPR, TPR) working point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub fpr: f64,
    pub tpr: f64,
}

impl ClassifierSpec {
    pub fn new(fpr: f64, tpr: f64) -> Result<Self> {
        let spec = ClassifierSpec { fpr, tpr };
        spec.validate()?;
        Ok(spec)
    }

    /// Predicts every user as satisfied.
    pub const ALL_SATISFIED: ClassifierSpec = ClassifierSpec { fpr: 0.0, tpr: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fpr", self.fpr), ("tpr", self.tpr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Predicted labels (`true` = dissatisfied). Each user consumes exactly one
/// uniform draw, in order, so predictions at different working points with
/// the same stream are coupled: raising TPR or FPR only ever turns
/// predictions from satisfied to dissatisfied.
pub fn predict_labels<R: Rng + ?Sized>(truth: &[bool], spec: &ClassifierSpec, rng: &mut R) -> Vec<bool> {
    truth
        .iter()
        .map(|&dissatisfied| {
            let u: f64 = rng.random();
            if dissatisfied {
                u < spec.tpr
            } else {
                u < spec.fpr
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub spec: ClassifierSpec,
    /// Both rates strictly below 1, the half-open grid of the reference sweep.
    pub in_reference_grid: bool,
}

/// Every (FPR, TPR) pair on `{0, step, 2 step, ...} ∩ [0, 1]`, FPR-major.
pub fn working_point_grid(step: f64) -> Result<Vec<GridPoint>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::param("step", format!("must lie in (0, 1], got {step}")));
    }
    let count = ((1.0 + 1e-9) / step).floor() as usize;
    let values: Vec<f64> = (0..=count).map(|k| ((k as f64 * step) * 1e9).round() / 1e9).collect();
    let mut grid = Vec::with_capacity(values.len() * values.len());
    for &fpr in &values {
        for &tpr in &values {
            grid.push(GridPoint {
                spec: ClassifierSpec { fpr, tpr },
                in_reference_grid: fpr < 1.0 && tpr < 1.0,
            });
        }
    }
    Ok(grid)
}

/// Published working points of a real satisfaction classifier.
pub fn reference_working_points() -> Vec<(&'static str, ClassifierSpec)> {
    [
        ("fpr20-tpr33", 0.20, 0.33),
        ("fpr35-tpr50", 0.35, 0.50),
        ("fpr15-tpr26", 0.15, 0.26),
        ("fpr05-tpr09", 0.05, 0.09),
        ("fpr10-tpr16", 0.10, 0.16),
    ]
    .into_iter()
    .map(|(name, fpr, tpr)| (name, ClassifierSpec { fpr, tpr }))
    .collect()
}
