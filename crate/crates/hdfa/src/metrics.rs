//! Metrics documents written by `eval`.

use hdfa_core::harness::{EpisodeMetrics, StageAccuracy};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub classes: usize,
    pub accuracy: f64,
    pub first_stage_accuracy: f64,
}

impl From<&StageAccuracy> for StageRecord {
    fn from(s: &StageAccuracy) -> Self {
        Self {
            stage: s.stage,
            classes: s.classes,
            accuracy: s.accuracy,
            first_stage_accuracy: s.first_stage_accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub protocol: &'static str,
    pub mode: String,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub ways: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    pub mean_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci95: Option<f64>,
    /// Accuracy with synthesized classes left in the argmax.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_acc_all: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci95_all: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_stage: Option<Vec<StageRecord>>,
}

impl Metrics {
    pub fn episodes(m: &EpisodeMetrics) -> Self {
        Self {
            protocol: "episodes",
            mode: m.mode.name().into(),
            ways: Some(m.spec.ways),
            shots: Some(m.spec.shots),
            queries: Some(m.spec.queries),
            episodes: Some(m.spec.episodes),
            mean_acc: m.mean_acc,
            ci95: Some(m.ci95),
            mean_acc_all: Some(m.mean_acc_all),
            ci95_all: Some(m.ci95_all),
            seed: m.spec.seed,
            buffer_per_class: None,
            per_stage: None,
        }
    }

    /// `mean_acc` is the accuracy after the last stage.
    pub fn replay(mode: &str, seed: u64, buffer: usize, stages: &[StageAccuracy]) -> Self {
        Self {
            protocol: "replay",
            mode: mode.into(),
            ways: None,
            shots: None,
            queries: None,
            episodes: None,
            mean_acc: stages.last().map_or(f64::NAN, |s| s.accuracy),
            ci95: None,
            mean_acc_all: None,
            ci95_all: None,
            seed,
            buffer_per_class: Some(buffer),
            per_stage: Some(stages.iter().map(StageRecord::from).collect()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}
