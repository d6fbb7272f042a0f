//! Classification objectives over the ball.
//!
//! Plain `f64` implementations live here; [`graph`] holds the tape versions
//! used for training. Both are tested against each other.

pub mod graph;

use crate::error::{Error, Result};
use crate::estimator::ClassDistributions;
use crate::geometry::{raw, BallPoint, Curvature};
use crate::math;
use crate::rng;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Distance-based classifier: one weight point per class.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicClassifier {
    labels: Vec<String>,
    weights: Vec<BallPoint>,
}

impl HyperbolicClassifier {
    pub fn new(labels: Vec<String>, weights: Vec<BallPoint>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} labels for {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::TooFewClasses { needed: 1, found: 0 });
        }
        let (c, d) = (weights[0].curvature(), weights[0].dim());
        for (i, w) in weights.iter().enumerate() {
            if w.curvature() != c {
                return Err(Error::CurvatureMismatch {
                    left: c.value(),
                    right: w.curvature().value(),
                });
            }
            if w.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: w.dim(),
                });
            }
            if labels[..i].contains(&labels[i]) {
                return Err(Error::DuplicateLabel(labels[i].clone()));
            }
        }
        Ok(Self { labels, weights })
    }

    /// Weights placed at the class prototypes.
    pub fn from_prototypes(dists: &ClassDistributions) -> Result<Self> {
        Self::new(
            dists.labels().map(String::from).collect(),
            dists.classes().iter().map(|c| c.dist.prototype().clone()).collect(),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[BallPoint] {
        &self.weights
    }

    pub fn curvature(&self) -> Curvature {
        self.weights[0].curvature()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    /// Replace the weights, keeping labels.
    pub fn with_weights(&self, weights: Vec<BallPoint>) -> Result<Self> {
        Self::new(self.labels.clone(), weights)
    }

    fn check_query(&self, x: &BallPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        if x.curvature() != self.curvature() {
            return Err(Error::CurvatureMismatch {
                left: self.curvature().value(),
                right: x.curvature().value(),
            });
        }
        Ok(())
    }

    /// `-d(x, w_j)` for every class.
    pub fn logits(&self, x: &BallPoint) -> Result<Vec<f64>> {
        self.check_query(x)?;
        let c = self.curvature().value();
        Ok(self
            .weights
            .iter()
            .map(|w| -raw::distance(x.coords(), w.coords(), c))
            .collect())
    }

    /// Index of the nearest weight among the first `first` classes.
    pub fn predict_among(&self, x: &BallPoint, first: usize) -> Result<usize> {
        let logits = self.logits(x)?;
        let upto = first.min(logits.len());
        let mut best = 0;
        for j in 1..upto {
            if logits[j] > logits[best] {
                best = j;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, x: &BallPoint) -> Result<usize> {
        self.predict_among(x, self.len())
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + math::ln(logits.iter().map(|&v| math::exp(v - m)).sum());
    logits.iter().map(|v| v - lse).collect()
}

fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + math::ln(values.iter().map(|&v| math::exp(v - m)).sum())
}

/// Softmax over negative distances to the class weights.
pub fn class_probability(clf: &HyperbolicClassifier, x: &BallPoint) -> Result<Vec<f64>> {
    Ok(log_softmax(&clf.logits(x)?).into_iter().map(math::exp).collect())
}

/// `-log p(label | x)`.
pub fn negative_log_likelihood(clf: &HyperbolicClassifier, x: &BallPoint, label: &str) -> Result<f64> {
    let j = clf.index_of(label)?;
    Ok(-log_softmax(&clf.logits(x)?)[j])
}

/// Mean over the listed classes of the mean negative log-likelihood of their
/// samples.
pub fn finite_sample_loss(
    clf: &HyperbolicClassifier,
    samples_by_class: &[(String, Vec<BallPoint>)],
) -> Result<f64> {
    if samples_by_class.is_empty() {
        return Err(Error::InsufficientData("no classes in sample set".into()));
    }
    let mut total = 0.0;
    for (label, samples) in samples_by_class {
        if samples.is_empty() {
            return Err(Error::InsufficientData(alloc::format!("no samples for {label}")));
        }
        let mut acc = 0.0;
        for x in samples {
            acc += negative_log_likelihood(clf, x, label)?;
        }
        total += acc / samples.len() as f64;
    }
    Ok(total / samples_by_class.len() as f64)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of the expected cross-entropy when every class
/// contributes features drawn from its distribution. Each draw samples one
/// feature per class and evaluates [`finite_sample_loss`] on that set.
pub fn mc_infinite_loss(
    clf: &HyperbolicClassifier,
    dists: &ClassDistributions,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    mc_infinite_loss_estimate(clf, dists, draws, seed).map(|e| e.mean)
}

pub fn mc_infinite_loss_estimate(
    clf: &HyperbolicClassifier,
    dists: &ClassDistributions,
    draws: usize,
    seed: u64,
) -> Result<Estimate> {
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be at least 1".into()));
    }
    check_curvature(clf, dists)?;
    if dists.is_empty() {
        return Err(Error::InsufficientData("no distributions".into()));
    }
    let index: Vec<usize> = dists
        .labels()
        .map(|l| clf.index_of(l))
        .collect::<Result<_>>()?;
    let d = clf.dim();
    let mut r = rng::seeded(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let mut value = 0.0;
        for (class, &j) in dists.classes().iter().zip(&index) {
            let x = class.dist.sample(&rng::standard_normal(&mut r, d))?;
            value += -log_softmax(&clf.logits(&x)?)[j];
        }
        value /= dists.len() as f64;
        sum += value;
        sum_sq += value * value;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = if draws > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean,
        std_error: math::sqrt(var / n),
    })
}

fn check_curvature(clf: &HyperbolicClassifier, dists: &ClassDistributions) -> Result<()> {
    if clf.curvature() != dists.curvature() {
        return Err(Error::CurvatureMismatch {
            left: clf.curvature().value(),
            right: dists.curvature().value(),
        });
    }
    if let Some(d) = dists.dim() {
        if d != clf.dim() {
            return Err(Error::DimensionMismatch {
                expected: clf.dim(),
                found: d,
            });
        }
    }
    Ok(())
}

/// Breakdown of the closed-form bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundTerms {
    /// `exponents[j][j']`: exponent of class `j'` in the normalizer of
    /// distribution `j`, relative to the class's own score (so the `j' = j`
    /// entry is 0).
    pub exponents: Vec<Vec<f64>>,
    /// `log xi_j`, including the own score `w_j . (p_hat_j + mu_j)`.
    pub log_xi: Vec<f64>,
    /// Per-distribution loss `log xi_j - w_j . (p_hat_j + mu_j)`.
    pub terms: Vec<f64>,
    pub loss: f64,
}

struct BoundSetup {
    index: Vec<usize>,
    anchors: Vec<Vec<f64>>,
}

fn bound_setup(clf: &HyperbolicClassifier, dists: &ClassDistributions) -> Result<BoundSetup> {
    check_curvature(clf, dists)?;
    if dists.is_empty() {
        return Err(Error::InsufficientData("no distributions".into()));
    }
    let c = dists.curvature().value();
    let index = dists
        .labels()
        .map(|l| clf.index_of(l))
        .collect::<Result<Vec<_>>>()?;
    let anchors = dists
        .classes()
        .iter()
        .map(|cd| {
            let mut a = raw::logm0(cd.dist.prototype().coords(), c);
            for (x, m) in a.iter_mut().zip(cd.dist.mean()) {
                *x += m;
            }
            a
        })
        .collect();
    Ok(BoundSetup { index, anchors })
}

/// `L^T v` for lower-triangular `L`.
fn lt_times(l: &crate::diff::Tensor, v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|j| (j..d).map(|i| l.get(i, j) * v[i]).sum())
        .collect()
}

/// `L (L^T v)`.
fn sigma_times(l: &crate::diff::Tensor, v: &[f64]) -> Vec<f64> {
    let t = lt_times(l, v);
    let d = v.len();
    (0..d)
        .map(|i| (0..=i).map(|j| l.get(i, j) * t[j]).sum())
        .collect()
}

/// Closed-form upper bound on the infinite-augmentation loss, with classifier
/// weights taken as ambient vectors:
///
/// `(1/N) sum_j log sum_j' exp((w_j' - w_j).a_j + |w_j'|^2 - |w_j|^2
///  + 1/2 (w_j' - w_j)^T Sigma_j (w_j' - w_j))`, `a_j = logm_0(p_j) + mu_j`.
pub fn upper_bound_terms(clf: &HyperbolicClassifier, dists: &ClassDistributions) -> Result<BoundTerms> {
    let setup = bound_setup(clf, dists)?;
    let w: Vec<&[f64]> = clf.weights().iter().map(|w| w.coords()).collect();
    let norms: Vec<f64> = w.iter().map(|v| math::norm_sq(v)).collect();
    let mut exponents = Vec::with_capacity(dists.len());
    let mut log_xi = Vec::with_capacity(dists.len());
    let mut terms = Vec::with_capacity(dists.len());
    for ((cd, &j), a) in dists.classes().iter().zip(&setup.index).zip(&setup.anchors) {
        let l = cd.dist.scale();
        let row: Vec<f64> = (0..w.len())
            .map(|jp| {
                let delta: Vec<f64> = w[jp].iter().zip(w[j]).map(|(x, y)| x - y).collect();
                let quad = math::norm_sq(&lt_times(l, &delta));
                math::dot(&delta, a) + norms[jp] - norms[j] + 0.5 * quad
            })
            .collect();
        let term = logsumexp(&row);
        log_xi.push(term + math::dot(w[j], a));
        terms.push(term);
        exponents.push(row);
    }
    let loss = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(BoundTerms {
        exponents,
        log_xi,
        terms,
        loss,
    })
}

pub fn upper_bound_loss(clf: &HyperbolicClassifier, dists: &ClassDistributions) -> Result<f64> {
    upper_bound_terms(clf, dists).map(|t| t.loss)
}

/// Euclidean gradient of [`upper_bound_loss`] with respect to every
/// classifier weight (in classifier order).
pub fn upper_bound_gradient(
    clf: &HyperbolicClassifier,
    dists: &ClassDistributions,
) -> Result<Vec<Vec<f64>>> {
    let setup = bound_setup(clf, dists)?;
    let terms = upper_bound_terms(clf, dists)?;
    let w: Vec<&[f64]> = clf.weights().iter().map(|w| w.coords()).collect();
    let d = clf.dim();
    let n = dists.len() as f64;
    let mut grad = vec![vec![0.0; d]; w.len()];
    for (jd, ((cd, &j), a)) in dists
        .classes()
        .iter()
        .zip(&setup.index)
        .zip(&setup.anchors)
        .enumerate()
    {
        let l = cd.dist.scale();
        let row = &terms.exponents[jd];
        for jp in 0..w.len() {
            let pi = math::exp(row[jp] - terms.terms[jd]) / n;
            let delta: Vec<f64> = w[jp].iter().zip(w[j]).map(|(x, y)| x - y).collect();
            let sd = sigma_times(l, &delta);
            for i in 0..d {
                grad[jp][i] += pi * (a[i] + 2.0 * w[jp][i] + sd[i]);
                grad[j][i] -= pi * (a[i] + 2.0 * w[j][i] + sd[i]);
            }
        }
    }
    Ok(grad)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "gamma {gamma} outside (0, 1)"
        )))
    }
}

/// Hinge form of the hierarchy regularizer on origin distances.
pub fn hierarchy_from_distances(di: f64, dj: f64, dk: f64, gamma: f64) -> f64 {
    2.0 * dk - di - dj + (gamma * (di + dj) - dk).max(0.0)
}

/// `2 d(p_k,0) - d(p_i,0) - d(p_j,0) + max(0, gamma (d(p_i,0) + d(p_j,0)) - d(p_k,0))`.
pub fn hierarchy_regularizer(
    p_i: &BallPoint,
    p_j: &BallPoint,
    p_k: &BallPoint,
    gamma: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    let c = p_i.curvature();
    for p in [p_j, p_k] {
        if p.curvature() != c {
            return Err(Error::CurvatureMismatch {
                left: c.value(),
                right: p.curvature().value(),
            });
        }
    }
    let origin = |p: &BallPoint| raw::distance_to_origin(p.coords(), c.value());
    Ok(hierarchy_from_distances(origin(p_i), origin(p_j), origin(p_k), gamma))
}

/// Mean negative log-likelihood of labeled points over all classifier
/// classes.
pub fn validation_cross_entropy(
    clf: &HyperbolicClassifier,
    validation: &[(String, BallPoint)],
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::InsufficientData("empty validation set".into()));
    }
    let mut acc = 0.0;
    for (label, x) in validation {
        acc += negative_log_likelihood(clf, x, label)?;
    }
    Ok(acc / validation.len() as f64)
}

/// Validation cross-entropy plus `beta` times the mean hierarchy penalty over
/// the synthesized triples `(p_i, p_j, p_k)`; an empty triple list adds 0.
pub fn total_meta_loss(
    clf_star: &HyperbolicClassifier,
    validation: &[(String, BallPoint)],
    unseen_triples: &[(BallPoint, BallPoint, BallPoint)],
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("beta {beta} must be >= 0")));
    }
    let ce = validation_cross_entropy(clf_star, validation)?;
    check_gamma(gamma)?;
    if unseen_triples.is_empty() {
        return Ok(ce);
    }
    let mut reg = 0.0;
    for (a, b, k) in unseen_triples {
        reg += hierarchy_regularizer(a, b, k, gamma)?;
    }
    Ok(ce + beta * reg / unseen_triples.len() as f64)
}

#[cfg(test)]
mod tests;
