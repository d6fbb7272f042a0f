use super::{generate_tree_data, EpisodeSpec, FeatureTable, SyntheticTreeSpec};
use crate::error::Result;
use crate::estimator::{BankConfig, EstimatorBank};
use crate::trainer::{InnerConfig, MetaConfig, MetaDataset, SplitRatio};
use alloc::vec;

/// The default synthetic few-shot benchmark.
///
/// Evaluation episodes come from an 8-leaf tree (`d = 16`); meta-training
/// uses a separately seeded 16-leaf tree with the same spreads, so no class
/// is shared between the two.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub eval: SyntheticTreeSpec,
    pub base: SyntheticTreeSpec,
    pub episodes: EpisodeSpec,
    pub bank: BankConfig,
    pub bank_seed: u64,
    pub inner: InnerConfig,
}

impl Default for Benchmark {
    fn default() -> Self {
        let eval = SyntheticTreeSpec {
            seed: 1,
            ..SyntheticTreeSpec::default()
        };
        let base = SyntheticTreeSpec {
            branching: vec![4, 4],
            leaves: 16,
            seed: 2,
            ..eval.clone()
        };
        Self {
            eval,
            base,
            episodes: EpisodeSpec {
                seed: 5,
                ..EpisodeSpec::default()
            },
            bank: BankConfig::default(),
            bank_seed: 0,
            inner: InnerConfig::default(),
        }
    }
}

impl Benchmark {
    pub fn eval_table(&self) -> Result<FeatureTable> {
        generate_tree_data(&self.eval)
    }

    pub fn base_table(&self) -> Result<FeatureTable> {
        generate_tree_data(&self.base)
    }

    pub fn base_dataset(&self) -> Result<MetaDataset> {
        let (labels, tangents) = self.base_table()?.grouped().into_iter().unzip();
        MetaDataset::new(labels, tangents)
    }

    pub fn initial_bank(&self) -> Result<EstimatorBank> {
        EstimatorBank::new(self.eval.dim, &self.bank, self.bank_seed)
    }

    /// Episodic meta-training matched to the evaluation episodes: 5-way
    /// tasks with one training sample per fifteen validation samples.
    fn episodic(&self) -> MetaConfig {
        MetaConfig {
            iterations: 1000,
            split: SplitRatio {
                train: 1,
                validation: 15,
            },
            ways: Some(self.episodes.ways),
            seed: 3,
            inner: self.inner,
            ..MetaConfig::default()
        }
    }

    /// Meta-training used for the accuracy comparison of the three modes.
    pub fn accuracy_meta_config(&self) -> MetaConfig {
        MetaConfig {
            lr: 0.05,
            beta: 1.0,
            ..self.episodic()
        }
    }

    /// Meta-training with the default regularizer weights `beta = 10`,
    /// `gamma = 0.1`.
    pub fn hierarchy_meta_config(&self) -> MetaConfig {
        MetaConfig {
            lr: 0.005,
            ..self.episodic()
        }
    }
}
