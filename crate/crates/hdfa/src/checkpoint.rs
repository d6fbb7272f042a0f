//! JSON checkpoints of an [`EstimatorBank`].

use crate::error::{CliError, Result};
use crate::features::write_text;
use hdfa_core::diff::{Activation, DenseLayer, SelfAttentionLayer, Tensor};
use hdfa_core::estimator::{EstimatorBank, FlowKind, GradientFlowNet};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: String,
    /// Row-major `outputs x inputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub query: DenseRecord,
    pub key: DenseRecord,
    pub value: DenseRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub name: String,
    pub f1: DenseRecord,
    pub f2: Option<AttentionRecord>,
    pub f3: DenseRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dim: usize,
    pub horizon: f64,
    pub steps: usize,
    pub c0: f64,
    pub networks: Vec<NetworkRecord>,
}

fn dense_record(l: &DenseLayer) -> DenseRecord {
    DenseRecord {
        inputs: l.inputs(),
        outputs: l.outputs(),
        activation: l.activation().name().into(),
        weight: l.weight().data().to_vec(),
        bias: l.bias().data().to_vec(),
    }
}

fn dense_layer(r: &DenseRecord) -> Result<DenseLayer> {
    let activation = Activation::from_name(&r.activation)
        .ok_or_else(|| CliError::usage(format!("unknown activation `{}`", r.activation)))?;
    let weight = Tensor::new(r.outputs, r.inputs, r.weight.clone())?;
    let bias = Tensor::new(1, r.outputs, r.bias.clone())?;
    Ok(DenseLayer::new(weight, bias, activation)?)
}

impl Checkpoint {
    pub fn from_bank(bank: &EstimatorBank) -> Self {
        let networks = FlowKind::ALL
            .iter()
            .map(|&k| {
                let net = bank.network(k);
                NetworkRecord {
                    name: k.name().into(),
                    f1: dense_record(net.f1()),
                    f2: net.f2().map(|a| {
                        let [q, k, v] = a.projections();
                        AttentionRecord {
                            query: dense_record(q),
                            key: dense_record(k),
                            value: dense_record(v),
                        }
                    }),
                    f3: dense_record(net.f3()),
                }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            dim: bank.dim(),
            horizon: bank.horizon(),
            steps: bank.steps(),
            c0: bank.c0().value(),
            networks,
        }
    }

    pub fn to_bank(&self) -> Result<EstimatorBank> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.networks.len() != FlowKind::ALL.len() {
            return Err(CliError::usage(format!("checkpoint holds {} networks, expected 6", self.networks.len())));
        }
        let mut nets = Vec::with_capacity(6);
        for (rec, kind) in self.networks.iter().zip(FlowKind::ALL) {
            if rec.name != kind.name() {
                return Err(CliError::usage(format!("network `{}` found where `{}` belongs", rec.name, kind.name())));
            }
            let f2 = rec
                .f2
                .as_ref()
                .map(|a| -> Result<SelfAttentionLayer> {
                    Ok(SelfAttentionLayer::new(dense_layer(&a.query)?, dense_layer(&a.key)?, dense_layer(&a.value)?)?)
                })
                .transpose()?;
            nets.push(GradientFlowNet::new(dense_layer(&rec.f1)?, f2, dense_layer(&rec.f3)?)?);
        }
        Ok(EstimatorBank::from_parts(nets, self.dim, self.horizon, self.steps, self.c0)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("malformed checkpoint: {e}")))
    }
}

pub fn save_bank(bank: &EstimatorBank, path: &Path) -> Result<()> {
    if !bank.params().iter().all(|t| t.is_finite()) {
        return Err(CliError::Numeric("refusing to save non-finite weights".into()));
    }
    write_text(path, &Checkpoint::from_bank(bank).to_json())
}

pub fn load_bank(path: &Path) -> Result<EstimatorBank> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::from_json(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        .to_bank()
}
