//! Riemannian training of the classifier on the closed-form bound, and the
//! bi-level update of the estimator networks.
//!
//! The inner loop exists twice: on plain values ([`train_inner`]) and on the
//! tape ([`train_inner_graph`]), where every step stays differentiable so the
//! outer loss can be back-propagated through all of them. Both follow the
//! same acceptance rule, so they visit the same iterates.

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::estimator::{BoundBank, DistBatch, EstimationInput, EstimatorBank, Provenance};
use crate::geometry::graph::{self as ggraph, CurvatureVar};
use crate::geometry::{raw, BallPoint, Curvature};
use crate::losses::{self, graph as lgraph, HyperbolicClassifier};
use crate::estimator::ClassDistributions;
use crate::math;
use crate::rng;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerConfig {
    /// Maximum number of steps `K`.
    pub steps: usize,
    /// Step size `eta`.
    pub lr: f64,
    /// Stop once a step lowers the bound by less than this.
    pub tol: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            lr: 0.1,
            tol: 1e-6,
        }
    }
}

impl InnerConfig {
    /// `K >= 1` and a finite, non-negative step size (`eta = 0` leaves the
    /// weights at their initialization).
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("inner steps must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("inner learning rate {}", self.lr)));
        }
        if self.tol.is_nan() {
            return Err(Error::InvalidParameter("inner tolerance is NaN".into()));
        }
        Ok(())
    }
}

/// Relative sizes of the training and validation parts of each class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: u32,
    pub validation: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self {
            train: 1,
            validation: 1,
        }
    }
}

impl SplitRatio {
    /// Training share of a class with `n >= 2` samples, at least one sample
    /// on each side.
    pub fn train_count(&self, n: usize) -> usize {
        let total = (self.train + self.validation) as f64;
        let t = crate::math::round(n as f64 * self.train as f64 / total) as usize;
        t.clamp(1, n - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Weight of the hierarchy regularizer.
    pub beta: f64,
    /// Hinge margin of the hierarchy regularizer.
    pub gamma: f64,
    pub split: SplitRatio,
    /// Draw this many classes per iteration instead of using all of them.
    pub ways: Option<usize>,
    pub seed: u64,
    pub inner: InnerConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            lr: 1e-3,
            beta: 10.0,
            gamma: 0.1,
            split: SplitRatio::default(),
            ways: None,
            seed: 0,
            inner: InnerConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("outer learning rate {}", self.lr)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta {} must be >= 0", self.beta)));
        }
        if !(0.01..=0.25).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma {} outside [0.01, 0.25]",
                self.gamma
            )));
        }
        if self.split.train == 0 || self.split.validation == 0 {
            return Err(Error::InvalidParameter("split ratio parts must be positive".into()));
        }
        if let Some(w) = self.ways {
            if w < 2 {
                return Err(Error::TooFewClasses { needed: 2, found: w });
            }
        }
        Ok(())
    }
}

fn riemannian_scale(w: &[f64], c: f64) -> f64 {
    let f = 0.5 * (1.0 + c * math::norm_sq(w));
    f * f
}

/// `w <- expm_w(-eta ((1 + c|w|^2)/2)^2 g)` for every weight.
pub fn riemannian_step(
    clf: &HyperbolicClassifier,
    euclidean_grads: &[Vec<f64>],
    eta: f64,
) -> Result<HyperbolicClassifier> {
    if euclidean_grads.len() != clf.len() {
        return Err(Error::InvalidParameter(format!(
            "{} gradients for {} weights",
            euclidean_grads.len(),
            clf.len()
        )));
    }
    let c = clf.curvature();
    let mut weights = Vec::with_capacity(clf.len());
    for (w, g) in clf.weights().iter().zip(euclidean_grads) {
        if g.len() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                found: g.len(),
            });
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("classifier gradient".into()));
        }
        let s = -eta * riemannian_scale(w.coords(), c.value());
        let u: Vec<f64> = g.iter().map(|v| v * s).collect();
        weights.push(BallPoint::new(raw::expm(w.coords(), &u, c.value()), c)?);
    }
    clf.with_weights(weights)
}

/// What the inner loop does with a candidate step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Verdict {
    Continue,
    /// Accept and stop.
    Last,
    /// Keep the current weights and stop.
    Reject,
}

fn judge(current: f64, candidate: f64, tol: f64) -> Verdict {
    if !(candidate <= current) {
        Verdict::Reject
    } else if current - candidate < tol {
        Verdict::Last
    } else {
        Verdict::Continue
    }
}

/// Result of a plain inner run.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerRun {
    pub classifier: HyperbolicClassifier,
    /// Bound value at the start and after every accepted step.
    pub losses: Vec<f64>,
}

/// Train a classifier over `dists`, starting at the prototypes.
pub fn train_inner(dists: &ClassDistributions, cfg: &InnerConfig) -> Result<HyperbolicClassifier> {
    train_inner_traced(dists, cfg).map(|r| r.classifier)
}

pub fn train_inner_traced(dists: &ClassDistributions, cfg: &InnerConfig) -> Result<InnerRun> {
    let init = HyperbolicClassifier::from_prototypes(dists)?;
    train_inner_from(init, dists, cfg)
}

/// Inner loop from an arbitrary starting classifier.
pub fn train_inner_from(
    init: HyperbolicClassifier,
    dists: &ClassDistributions,
    cfg: &InnerConfig,
) -> Result<InnerRun> {
    cfg.validate()?;
    let mut clf = init;
    let mut loss = losses::upper_bound_loss(&clf, dists)?;
    let mut trace = alloc::vec![loss];
    for _ in 0..cfg.steps {
        let grad = losses::upper_bound_gradient(&clf, dists)?;
        let next = riemannian_step(&clf, &grad, cfg.lr)?;
        let next_loss = losses::upper_bound_loss(&next, dists)?;
        let verdict = judge(loss, next_loss, cfg.tol);
        if verdict == Verdict::Reject {
            break;
        }
        clf = next;
        loss = next_loss;
        trace.push(loss);
        if verdict == Verdict::Last {
            break;
        }
    }
    Ok(InnerRun {
        classifier: clf,
        losses: trace,
    })
}

/// One Riemannian step on the tape, rows of `w` against rows of `grad`.
pub fn riemannian_step_graph<'g>(w: Var<'g>, grad: Var<'g>, k: CurvatureVar<'g>, eta: f64) -> Var<'g> {
    let f = (1.0 + k.c * w.row_norm_sq()).scale(0.5);
    let u = grad * f.square().scale(-eta);
    ggraph::expm(w, u, k)
}

/// Unrolled inner loop over a batch; returns the final weights (`N x d`).
pub fn train_inner_graph<'g>(batch: &DistBatch<'g>, cfg: &InnerConfig) -> Result<Var<'g>> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InsufficientData("no distributions".into()));
    }
    let k = batch.k;
    let a = batch.anchors();
    let scales = batch.scale_matrices();
    let mut w = batch.protos;
    let mut bound = lgraph::upper_bound(w, a, &scales);
    let mut loss = bound.loss.scalar()?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("inner bound".into()));
    }
    for _ in 0..cfg.steps {
        if !bound.gradient.is_finite() {
            return Err(Error::NonFinite("classifier gradient".into()));
        }
        let next = riemannian_step_graph(w, bound.gradient, k, cfg.lr);
        check_inside(&next.value(), k.c.scalar()?)?;
        let next_bound = lgraph::upper_bound(next, a, &scales);
        let next_loss = next_bound.loss.scalar()?;
        let verdict = judge(loss, next_loss, cfg.tol);
        if verdict == Verdict::Reject {
            break;
        }
        w = next;
        bound = next_bound;
        loss = next_loss;
        if verdict == Verdict::Last {
            break;
        }
    }
    Ok(w)
}

fn check_inside(w: &Tensor, c: f64) -> Result<()> {
    let radius = 1.0 / math::sqrt(-c);
    for r in 0..w.rows() {
        let norm = math::norm(w.row_slice(r));
        if !(norm < radius) {
            return Err(Error::OutsideBall { norm, radius });
        }
    }
    Ok(())
}

/// One training/validation split of a meta-training dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTask {
    /// Training part.
    pub train: EstimationInput,
    /// Validation features as tangent vectors at the origin.
    pub queries: Vec<Vec<f64>>,
    /// Index of each query's class in `train`.
    pub targets: Vec<usize>,
}

/// Dataset grouped by class, as tangent vectors at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaDataset {
    labels: Vec<String>,
    tangents: Vec<Vec<Vec<f64>>>,
}

impl MetaDataset {
    /// Requires at least two classes with at least two samples each.
    pub fn new(labels: Vec<String>, tangents: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if labels.len() != tangents.len() {
            return Err(Error::InvalidParameter("one feature list per label".into()));
        }
        if labels.len() < 2 {
            return Err(Error::TooFewClasses {
                needed: 2,
                found: labels.len(),
            });
        }
        for (label, xs) in labels.iter().zip(&tangents) {
            if xs.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "class {label} has {} sample(s), splitting needs 2",
                    xs.len()
                )));
            }
        }
        Ok(Self { labels, tangents })
    }

    pub fn from_points(features_by_class: &[(String, Vec<BallPoint>)]) -> Result<Self> {
        Self::new(
            features_by_class.iter().map(|(l, _)| l.clone()).collect(),
            features_by_class
                .iter()
                .map(|(_, xs)| {
                    xs.iter()
                        .map(|x| raw::logm0(x.coords(), x.curvature().value()))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tangents(&self) -> &[Vec<Vec<f64>>] {
        &self.tangents
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Split seeded by `(seed, iteration)`: optionally draw `ways` classes,
    /// then shuffle each class and cut it by `split`.
    pub fn split(
        &self,
        split: SplitRatio,
        ways: Option<usize>,
        seed: u64,
        iteration: u64,
        c0: Curvature,
    ) -> Result<MetaTask> {
        let mut r = rng::substream(seed, iteration);
        let mut classes: Vec<usize> = (0..self.len()).collect();
        if let Some(w) = ways {
            if w > self.len() {
                return Err(Error::TooFewClasses {
                    needed: w,
                    found: self.len(),
                });
            }
            classes.shuffle(&mut r);
            classes.truncate(w);
            classes.sort_unstable();
        }
        let mut labels = Vec::with_capacity(classes.len());
        let mut train = Vec::with_capacity(classes.len());
        let mut queries = Vec::new();
        let mut targets = Vec::new();
        for (slot, &ci) in classes.iter().enumerate() {
            let xs = &self.tangents[ci];
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.shuffle(&mut r);
            let t = split.train_count(xs.len());
            train.push(order[..t].iter().map(|&i| xs[i].clone()).collect());
            for &i in &order[t..] {
                queries.push(xs[i].clone());
                targets.push(slot);
            }
            labels.push(self.labels[ci].clone());
        }
        Ok(MetaTask {
            train: EstimationInput::from_tangents(labels, train, c0)?,
            queries,
            targets,
        })
    }
}

/// Outer objective on the tape, with its parts.
#[derive(Clone, Debug)]
pub struct MetaLoss<'g> {
    pub total: Var<'g>,
    pub cross_entropy: Var<'g>,
    /// Mean hierarchy penalty over the synthesized classes.
    pub regularizer: Var<'g>,
    /// Seen estimates followed by synthesized classes.
    pub batch: DistBatch<'g>,
    /// Trained weights, aligned with `batch`.
    pub weights: Var<'g>,
}

/// Estimate, synthesize, train the classifier by unrolling and score the
/// validation queries over all `n + m` classes.
pub fn meta_loss<'g>(bank: &BoundBank<'g>, task: &MetaTask, cfg: &MetaConfig) -> Result<MetaLoss<'g>> {
    if task.queries.is_empty() {
        return Err(Error::InsufficientData("empty validation set".into()));
    }
    let seen = bank.estimate_seen(&task.train)?;
    let unseen = bank.synthesize_unseen(&seen)?;
    let batch = seen.concat(&unseen);
    let k = batch.k;
    let weights = train_inner_graph(&batch, &cfg.inner)?;

    let g = k.graph();
    let queries = ggraph::expm0(g.constant(Tensor::from_rows(&task.queries)?), k);
    let cross_entropy = lgraph::cross_entropy(lgraph::logits(queries, weights, k), &task.targets);

    let origin = ggraph::distance_to_origin(batch.protos, k);
    let first: Vec<usize> = unseen.pairs.iter().flatten().map(|p| p.0).collect();
    let second: Vec<usize> = unseen.pairs.iter().flatten().map(|p| p.1).collect();
    let own: Vec<usize> = (seen.len()..batch.len()).collect();
    let regularizer = lgraph::hierarchy(
        origin.select_rows(&first),
        origin.select_rows(&second),
        origin.select_rows(&own),
        cfg.gamma,
    )
    .mean();
    let total = cross_entropy + regularizer.scale(cfg.beta);
    Ok(MetaLoss {
        total,
        cross_entropy,
        regularizer,
        batch,
        weights,
    })
}

/// Value of the outer objective for `task` without touching the bank's
/// parameters.
pub fn evaluate_meta_loss(bank: &EstimatorBank, task: &MetaTask, cfg: &MetaConfig) -> Result<f64> {
    let g = Graph::new();
    meta_loss(&bank.bind(&g), task, cfg)?.total.scalar()
}

/// Outer loss and its gradient in bank parameter order.
pub fn meta_gradient(bank: &EstimatorBank, task: &MetaTask, cfg: &MetaConfig) -> Result<(f64, Vec<Tensor>)> {
    let g = Graph::new();
    let bound = bank.bind(&g);
    let loss = meta_loss(&bound, task, cfg)?;
    let value = loss.total.scalar()?;
    let grads = g.backward(loss.total)?;
    Ok((value, bound.params().into_iter().map(|p| grads.get(p)).collect()))
}

/// Meta-trained bank and the outer loss seen at every iteration (before
/// that iteration's update).
#[derive(Clone, Debug, PartialEq)]
pub struct MetaRun {
    pub bank: EstimatorBank,
    pub losses: Vec<f64>,
}

pub fn meta_train(bank: &EstimatorBank, dataset: &MetaDataset, cfg: &MetaConfig) -> Result<MetaRun> {
    meta_train_with(bank, dataset, cfg, |_, _| {})
}

/// [`meta_train`] reporting `(iteration, loss)` after every update.
pub fn meta_train_with(
    bank: &EstimatorBank,
    dataset: &MetaDataset,
    cfg: &MetaConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<MetaRun> {
    cfg.validate()?;
    let mut bank = bank.clone();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let task = dataset.split(cfg.split, cfg.ways, cfg.seed, it as u64, bank.c0())?;
        let (loss, grads) = match meta_gradient(&bank, &task, cfg) {
            Ok(v) => v,
            Err(Error::NonFinite(_) | Error::OutsideBall { .. } | Error::Integration { .. }) => {
                return Err(Error::MetaDiverged { iteration: it })
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !grads.iter().all(|t| t.is_finite()) {
            return Err(Error::MetaDiverged { iteration: it });
        }
        bank.apply_gradient(&grads, cfg.lr)?;
        trace.push(loss);
        progress(it, loss);
    }
    Ok(MetaRun { bank, losses: trace })
}

/// A synthetic feature with its class and origin.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedFeature {
    pub label: String,
    pub point: BallPoint,
    pub provenance: Provenance,
}

/// `per_class_draws` samples from every seen estimate and every synthesized
/// class, class by class in estimation order.
pub fn augment(
    bank: &EstimatorBank,
    features_by_class: &[(String, Vec<BallPoint>)],
    per_class_draws: usize,
    seed: u64,
) -> Result<Vec<AugmentedFeature>> {
    if per_class_draws == 0 {
        return Err(Error::InvalidParameter("per_class_draws must be >= 1".into()));
    }
    let dists = bank.estimate_dual(features_by_class)?;
    let mut out = Vec::with_capacity(dists.len() * per_class_draws);
    for (i, class) in dists.classes().iter().enumerate() {
        let mut r = rng::substream(seed, i as u64);
        for point in class.dist.sample_n(&mut r, per_class_draws)? {
            out.push(AugmentedFeature {
                label: class.label.clone(),
                point,
                provenance: class.provenance,
            });
        }
    }
    Ok(out)
}
