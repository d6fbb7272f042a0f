use super::episodes::{score, Mode};
use super::FeatureTable;
use crate::error::{Error, Result};
use crate::estimator::{EstimationInput, EstimatorBank, Provenance};
use crate::rng;
use crate::trainer::{train_inner, InnerConfig};
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

/// Features kept per past class.
pub const DEFAULT_BUFFER: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayConfig {
    pub buffer_per_class: usize,
    pub mode: Mode,
    pub inner: InnerConfig,
    /// Share of each class held out for testing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            buffer_per_class: DEFAULT_BUFFER,
            mode: Mode::DualAug,
            inner: InnerConfig::default(),
            test_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Accuracy after training stage `stage`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageAccuracy {
    pub stage: usize,
    /// Over the test features of every stage so far.
    pub accuracy: f64,
    /// Over the test features of the first stage only.
    pub first_stage_accuracy: f64,
    pub classes: usize,
}

struct StageData {
    labels: Vec<String>,
    train: Vec<Vec<Vec<f64>>>,
    test: Vec<(usize, Vec<f64>)>,
}

fn split_stage(table: &FeatureTable, cfg: &ReplayConfig, stage: usize, offset: usize) -> Result<StageData> {
    let mut r = rng::substream(cfg.seed, stage as u64);
    let mut data = StageData {
        labels: Vec::new(),
        train: Vec::new(),
        test: Vec::new(),
    };
    for (k, (label, mut xs)) in table.grouped().into_iter().enumerate() {
        if xs.len() < 2 {
            return Err(Error::InsufficientData(alloc::format!(
                "class {label} needs a training and a test sample"
            )));
        }
        xs.shuffle(&mut r);
        let test = (crate::math::round(xs.len() as f64 * cfg.test_fraction) as usize).clamp(1, xs.len() - 1);
        let train = xs.split_off(test);
        data.test.extend(xs.into_iter().map(|x| (offset + k, x)));
        data.labels.push(label);
        data.train.push(train);
    }
    Ok(data)
}

/// Train stage by stage. Classes of the current stage contribute all their
/// training features; classes of earlier stages contribute only the first
/// `buffer_per_class` of theirs. The classifier is retrained on the bound
/// over the distributions estimated from both (per `cfg.mode`) and scored on
/// the seen-class logits.
pub fn run_replay_lite(bank: &EstimatorBank, stages: &[FeatureTable], cfg: &ReplayConfig) -> Result<Vec<StageAccuracy>> {
    if stages.is_empty() {
        return Err(Error::InsufficientData("empty task stream".into()));
    }
    if cfg.buffer_per_class == 0 {
        return Err(Error::InvalidParameter("buffer_per_class must be >= 1".into()));
    }
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::InvalidParameter("test_fraction must lie in (0, 1)".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut buffers: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut tests: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut first_stage = 0;
    let mut out = Vec::with_capacity(stages.len());
    for (s, table) in stages.iter().enumerate() {
        for l in table.labels() {
            if labels.iter().any(|x| x == l) {
                return Err(Error::DuplicateLabel(l.into()));
            }
        }
        let data = split_stage(table, cfg, s, labels.len())?;
        let mut names = labels.clone();
        names.extend(data.labels.iter().cloned());
        let mut feats = buffers.clone();
        feats.extend(data.train.iter().cloned());
        tests.extend(data.test);
        if s == 0 {
            first_stage = tests.len();
        }

        let input = EstimationInput::from_tangents(names, feats, bank.c0())?;
        let dists = cfg.mode.distributions(bank, &input)?;
        let seen = dists.with_provenance(Provenance::Seen).count();
        let clf = train_inner(&dists, &cfg.inner)?;
        let (queries, targets): (Vec<Vec<f64>>, Vec<usize>) = tests.iter().map(|(t, q)| (q.clone(), *t)).unzip();
        let all = score(&clf, dists.curvature(), seen, &queries, &targets)?;
        let first = score(
            &clf,
            dists.curvature(),
            seen,
            &queries[..first_stage],
            &targets[..first_stage],
        )?;
        out.push(StageAccuracy {
            stage: s,
            accuracy: all.accuracy(),
            first_stage_accuracy: first.accuracy(),
            classes: seen,
        });

        labels.extend(data.labels);
        buffers.extend(
            data.train
                .into_iter()
                .map(|xs| xs.into_iter().take(cfg.buffer_per_class).collect()),
        );
    }
    Ok(out)
}
