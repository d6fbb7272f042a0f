use super::{mean_ci95, FeatureTable};
use crate::error::{Error, Result};
use crate::estimator::{ClassDistributions, EstimationInput, EstimatorBank, Provenance};
use crate::geometry::{raw, BallPoint, Curvature};
use crate::losses::HyperbolicClassifier;
use crate::rng;
use crate::trainer::{train_inner, InnerConfig};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::seq::SliceRandom;

/// Which distributions the episode classifier is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Moment fits of the support set; the networks are never called.
    NoAug,
    /// Seen-class estimates only.
    SeenAug,
    /// Seen-class estimates plus all synthesized pair classes.
    DualAug,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NoAug, Mode::SeenAug, Mode::DualAug];

    pub fn name(self) -> &'static str {
        match self {
            Mode::NoAug => "no_aug",
            Mode::SeenAug => "seen_aug",
            Mode::DualAug => "dual_aug",
        }
    }

    /// Distributions for the given support classes.
    pub fn distributions(self, bank: &EstimatorBank, input: &EstimationInput) -> Result<ClassDistributions> {
        match self {
            Mode::NoAug => input.initial_distributions(),
            Mode::SeenAug => bank.estimate_prepared(input),
            Mode::DualAug => {
                let seen = bank.estimate_prepared(input)?;
                let unseen = bank.synthesize_unseen(&seen)?;
                seen.concat(unseen)
            }
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(alloc::format!("unknown mode `{s}`")))
    }
}

/// `ways`-way `shots`-shot episodes with `queries` queries per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            ways: 5,
            shots: 1,
            queries: 15,
            episodes: 200,
            seed: 0,
        }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 {
            return Err(Error::InvalidParameter("ways must be >= 2".into()));
        }
        if self.shots == 0 {
            return Err(Error::InvalidParameter("shots must be >= 1".into()));
        }
        if self.queries == 0 {
            return Err(Error::InvalidParameter("queries must be >= 1".into()));
        }
        Ok(())
    }
}

/// One sampled task, in tangent coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub labels: Vec<String>,
    pub support: Vec<Vec<Vec<f64>>>,
    pub queries: Vec<Vec<f64>>,
    /// Class index of each query.
    pub targets: Vec<usize>,
}

/// Draw episode `index`: `ways` eligible classes, then `shots + queries`
/// distinct samples from each.
pub fn sample_episode(classes: &[(String, Vec<Vec<f64>>)], spec: &EpisodeSpec, index: u64) -> Result<Episode> {
    spec.validate()?;
    let need = spec.shots + spec.queries;
    let mut eligible: Vec<usize> = (0..classes.len()).filter(|&i| classes[i].1.len() >= need).collect();
    if eligible.len() < spec.ways {
        return Err(Error::InsufficientData(alloc::format!(
            "{} classes have {need} samples, {} needed",
            eligible.len(),
            spec.ways
        )));
    }
    let mut r = rng::substream(spec.seed, index);
    eligible.shuffle(&mut r);
    eligible.truncate(spec.ways);
    eligible.sort_unstable();
    let mut ep = Episode {
        labels: Vec::with_capacity(spec.ways),
        support: Vec::with_capacity(spec.ways),
        queries: Vec::with_capacity(spec.ways * spec.queries),
        targets: Vec::with_capacity(spec.ways * spec.queries),
    };
    for (slot, &ci) in eligible.iter().enumerate() {
        let (label, xs) = &classes[ci];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.shuffle(&mut r);
        ep.labels.push(label.clone());
        ep.support.push(order[..spec.shots].iter().map(|&i| xs[i].clone()).collect());
        for &i in &order[spec.shots..need] {
            ep.queries.push(xs[i].clone());
            ep.targets.push(slot);
        }
    }
    Ok(ep)
}

/// Query counts of one episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct EpisodeOutcome {
    /// Correct under the seen-class logits.
    pub correct: usize,
    /// Correct under all logits, synthesized classes included.
    pub correct_all: usize,
    pub total: usize,
}

impl EpisodeOutcome {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn accuracy_all(&self) -> f64 {
        self.correct_all as f64 / self.total as f64
    }
}

/// Train the episode classifier and score its queries.
pub fn run_episode(bank: &EstimatorBank, episode: &Episode, mode: Mode, inner: &InnerConfig) -> Result<EpisodeOutcome> {
    let input = EstimationInput::from_tangents(episode.labels.clone(), episode.support.clone(), bank.c0())?;
    let dists = mode.distributions(bank, &input)?;
    let seen = dists.with_provenance(Provenance::Seen).count();
    let clf = train_inner(&dists, inner)?;
    score(&clf, dists.curvature(), seen, &episode.queries, &episode.targets)
}

pub(crate) fn score(
    clf: &HyperbolicClassifier,
    c: Curvature,
    seen: usize,
    queries: &[Vec<f64>],
    targets: &[usize],
) -> Result<EpisodeOutcome> {
    let mut out = EpisodeOutcome {
        total: queries.len(),
        ..EpisodeOutcome::default()
    };
    for (q, &t) in queries.iter().zip(targets) {
        let x = BallPoint::from_raw(raw::expm0(q, c.value()), c);
        if clf.predict_among(&x, seen)? == t {
            out.correct += 1;
        }
        if clf.predict(&x)? == t {
            out.correct_all += 1;
        }
    }
    Ok(out)
}

/// Accuracy summary over episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub mode: Mode,
    pub spec: EpisodeSpec,
    pub mean_acc: f64,
    pub ci95: f64,
    /// Same, with synthesized classes kept in the argmax.
    pub mean_acc_all: f64,
    pub ci95_all: f64,
    pub accuracies: Vec<f64>,
}

impl EpisodeMetrics {
    /// Aggregate in episode order.
    pub fn aggregate(mode: Mode, spec: EpisodeSpec, outcomes: &[EpisodeOutcome]) -> Self {
        let accuracies: Vec<f64> = outcomes.iter().map(|o| o.accuracy()).collect();
        let all: Vec<f64> = outcomes.iter().map(|o| o.accuracy_all()).collect();
        let (mean_acc, ci95) = mean_ci95(&accuracies);
        let (mean_acc_all, ci95_all) = mean_ci95(&all);
        Self {
            mode,
            spec,
            mean_acc,
            ci95,
            mean_acc_all,
            ci95_all,
            accuracies,
        }
    }
}

/// Run `spec.episodes` episodes one after another.
pub fn run_episodes(
    bank: &EstimatorBank,
    table: &FeatureTable,
    spec: &EpisodeSpec,
    mode: Mode,
    inner: &InnerConfig,
) -> Result<EpisodeMetrics> {
    spec.validate()?;
    let classes = table.grouped();
    let outcomes = (0..spec.episodes as u64)
        .map(|e| run_episode(bank, &sample_episode(&classes, spec, e)?, mode, inner))
        .collect::<Result<Vec<_>>>()?;
    Ok(EpisodeMetrics::aggregate(mode, *spec, &outcomes))
}
