//! Data and evaluation around the estimator: feature tables, a synthetic
//! hierarchical generator, episodic few-shot evaluation and a replay-buffer
//! miniature of incremental learning.

mod benchmark;
mod episodes;
mod replay;
mod synthetic;

pub use benchmark::Benchmark;
pub use episodes::{
    run_episode, run_episodes, sample_episode, Episode, EpisodeMetrics, EpisodeOutcome, EpisodeSpec, Mode,
};
pub use replay::{run_replay_lite, ReplayConfig, StageAccuracy, DEFAULT_BUFFER};
pub use synthetic::{generate_tree_data, SyntheticTreeSpec};

use crate::error::{Error, Result};
use crate::geometry::{raw, BallPoint, Curvature};
use alloc::string::String;
use alloc::vec::Vec;

/// Labeled feature vectors of one dimension.
///
/// Vectors are tangent vectors at the origin; [`FeatureTable::points`] maps
/// them into a ball.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    rows: Vec<(String, Vec<f64>)>,
    curvature: Option<f64>,
}

impl FeatureTable {
    pub fn new(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        for (label, v) in &rows {
            if label.is_empty() {
                return Err(Error::InvalidParameter("empty label".into()));
            }
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("feature of {label}")));
            }
        }
        Ok(Self {
            dim,
            rows,
            curvature: None,
        })
    }

    /// Rows given as ball coordinates of curvature `c`, stored as their
    /// tangent images at the origin.
    pub fn from_ball(dim: usize, rows: Vec<(String, Vec<f64>)>, c: Curvature) -> Result<Self> {
        let mut tangent = Vec::with_capacity(rows.len());
        for (label, x) in rows {
            let p = BallPoint::new(x, c)?;
            tangent.push((label, raw::logm0(p.coords(), c.value())));
        }
        Ok(Self::new(dim, tangent)?.with_curvature(Some(c.value())))
    }

    pub fn with_curvature(mut self, c: Option<f64>) -> Self {
        self.curvature = c;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[(String, Vec<f64>)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Curvature hint carried with the data, if any.
    pub fn curvature(&self) -> Option<f64> {
        self.curvature
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (l, _) in &self.rows {
            if !out.contains(&l.as_str()) {
                out.push(l);
            }
        }
        out
    }

    /// Rows grouped by label, in order of first appearance.
    pub fn grouped(&self) -> Vec<(String, Vec<Vec<f64>>)> {
        let mut out: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for (l, v) in &self.rows {
            match out.iter_mut().find(|(x, _)| x == l) {
                Some((_, vs)) => vs.push(v.clone()),
                None => out.push((l.clone(), alloc::vec![v.clone()])),
            }
        }
        out
    }

    /// Grouped rows mapped into the ball of curvature `c` by `expm_0`.
    pub fn points(&self, c: Curvature) -> Vec<(String, Vec<BallPoint>)> {
        self.grouped()
            .into_iter()
            .map(|(l, vs)| {
                let pts = vs
                    .iter()
                    .map(|v| BallPoint::from_raw(raw::expm0(v, c.value()), c))
                    .collect();
                (l, pts)
            })
            .collect()
    }
}

/// Mean and normal-approximation 95% half-width of `values`.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * crate::math::sqrt(var / n as f64))
}

#[cfg(test)]
mod tests;
