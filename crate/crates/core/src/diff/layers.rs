use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::ChaCha8Rng;
use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Fully connected layer `activation(x W^T + b)` with `W: [out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    weight: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if bias.shape() != [1, weight.rows()] {
            return Err(Error::Shape(format!(
                "bias {:?} for weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor::zeros(outputs, inputs),
            bias: Tensor::zeros(1, outputs),
            activation,
        }
    }

    /// Uniform Glorot initialization scaled by `gain`, zero bias.
    pub fn glorot(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let limit = gain * math::sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weight: Tensor::from_parts(outputs, inputs, data),
            bias: Tensor::zeros(1, outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn bind<'g>(&self, g: &'g Graph) -> BoundDense<'g> {
        BoundDense {
            weight: g.leaf(self.weight.clone()),
            bias: g.leaf(self.bias.clone()),
            activation: self.activation,
        }
    }

    /// Row-wise forward pass over an `n x in` batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs(),
                found: x.cols(),
            });
        }
        let g = Graph::new();
        let input = g.constant(x.clone());
        Ok(self.bind(&g).forward(input).value())
    }
}

/// A [`DenseLayer`] whose parameters are leaves of a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundDense<'g> {
    pub weight: Var<'g>,
    pub bias: Var<'g>,
    pub activation: Activation,
}

impl<'g> BoundDense<'g> {
    pub fn forward(&self, x: Var<'g>) -> Var<'g> {
        let z = x.matmul_t(self.weight) + self.bias;
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    pub fn params(&self) -> [Var<'g>; 2] {
        [self.weight, self.bias]
    }
}

/// Single-head self-attention `softmax(Q K^T / sqrt(h)) V` where the query,
/// key and value are linear projections of the same rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttentionLayer {
    query: DenseLayer,
    key: DenseLayer,
    value: DenseLayer,
}

impl SelfAttentionLayer {
    pub fn new(query: DenseLayer, key: DenseLayer, value: DenseLayer) -> Result<Self> {
        let width = query.inputs();
        for p in [&query, &key, &value] {
            if p.inputs() != width || p.outputs() != width {
                return Err(Error::Shape(format!(
                    "attention projection {:?} in a width-{width} layer",
                    p.weight().shape()
                )));
            }
            if p.activation() != Activation::Identity {
                return Err(Error::InvalidParameter(
                    "attention projections must be linear".into(),
                ));
            }
        }
        Ok(Self { query, key, value })
    }

    pub fn glorot(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut proj = || DenseLayer::glorot(width, width, Activation::Identity, 1.0, rng);
        Self {
            query: proj(),
            key: proj(),
            value: proj(),
        }
    }

    pub fn identity(width: usize) -> Self {
        let proj = || DenseLayer {
            weight: Tensor::identity(width),
            bias: Tensor::zeros(1, width),
            activation: Activation::Identity,
        };
        Self {
            query: proj(),
            key: proj(),
            value: proj(),
        }
    }

    pub fn width(&self) -> usize {
        self.query.inputs()
    }

    pub fn projections(&self) -> [&DenseLayer; 3] {
        [&self.query, &self.key, &self.value]
    }

    pub(crate) fn params(&self) -> Vec<&Tensor> {
        self.projections().into_iter().flat_map(|p| p.params()).collect()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(6);
        for p in [&mut self.query, &mut self.key, &mut self.value] {
            out.extend(p.params_mut());
        }
        out
    }

    pub fn bind<'g>(&self, g: &'g Graph) -> BoundAttention<'g> {
        BoundAttention {
            query: self.query.bind(g),
            key: self.key.bind(g),
            value: self.value.bind(g),
        }
    }

    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        if xs.cols() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                found: xs.cols(),
            });
        }
        let g = Graph::new();
        let input = g.constant(xs.clone());
        Ok(self.bind(&g).forward(input).value())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundAttention<'g> {
    pub query: BoundDense<'g>,
    pub key: BoundDense<'g>,
    pub value: BoundDense<'g>,
}

impl<'g> BoundAttention<'g> {
    /// Attention across all rows of `xs`.
    pub fn forward(&self, xs: Var<'g>) -> Var<'g> {
        let q = self.query.forward(xs);
        let k = self.key.forward(xs);
        let v = self.value.forward(xs);
        let scale = 1.0 / math::sqrt(xs.cols() as f64);
        q.matmul_t(k).scale(scale).softmax_rows().matmul(v)
    }

    /// Every row attends only to itself, which reduces to the value projection.
    pub fn forward_independent(&self, xs: Var<'g>) -> Var<'g> {
        self.value.forward(xs)
    }

    pub fn params(&self) -> Vec<Var<'g>> {
        [self.query, self.key, self.value]
            .iter()
            .flat_map(|p| p.params())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;

    fn naive_dense(layer: &DenseLayer, x: &Tensor) -> Tensor {
        let (n, inp, out) = (x.rows(), layer.inputs(), layer.outputs());
        let mut data = vec![0.0; n * out];
        for i in 0..n {
            for o in 0..out {
                let mut acc = layer.bias().get(0, o);
                for k in 0..inp {
                    acc += layer.weight().get(o, k) * x.get(i, k);
                }
                data[i * out + o] = match layer.activation() {
                    Activation::Tanh => math::tanh(acc),
                    Activation::Identity => acc,
                };
            }
        }
        Tensor::from_parts(n, out, data)
    }

    fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_parts(rows, cols, rng::standard_normal(rng, rows * cols))
    }

    #[test]
    fn identity_dense_is_passthrough() {
        let layer = DenseLayer::new(Tensor::identity(3), Tensor::zeros(1, 3), Activation::Identity)
            .unwrap();
        let x = Tensor::new(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weight_dense_returns_bias() {
        let bias = Tensor::row(&[0.25, -4.0]);
        let layer =
            DenseLayer::new(Tensor::zeros(2, 3), bias.clone(), Activation::Identity).unwrap();
        let x = Tensor::new(1, 3, vec![9.0, 8.0, 7.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), bias);
    }

    #[test]
    fn dense_matches_triple_loop() {
        let mut r = rng::seeded(11);
        for act in [Activation::Tanh, Activation::Identity] {
            let layer = DenseLayer::new(random_tensor(4, 5, &mut r), random_tensor(1, 4, &mut r), act)
                .unwrap();
            let x = random_tensor(3, 5, &mut r);
            let got = layer.forward(&x).unwrap();
            let want = naive_dense(&layer, &x);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let layer = DenseLayer::zeros(5, 4, Activation::Tanh);
        assert!(layer.forward(&Tensor::zeros(1, 3)).is_err());
    }

    #[test]
    fn single_row_attention_is_value_projection() {
        let mut r = rng::seeded(3);
        let att = SelfAttentionLayer::glorot(4, &mut r);
        let x = random_tensor(1, 4, &mut r);
        let got = att.forward(&x).unwrap();
        let want = att.projections()[2].forward(&x).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_rows_stay_identical() {
        let att = SelfAttentionLayer::identity(3);
        let x = Tensor::from_rows(&[[0.1, 0.2, 0.3], [0.1, 0.2, 0.3], [0.1, 0.2, 0.3]]).unwrap();
        let out = att.forward(&x).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((out.get(r, c) - x.get(r, c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_row_attention_matches_hand_formula() {
        let mut r = rng::seeded(5);
        let att = SelfAttentionLayer::glorot(3, &mut r);
        let x = random_tensor(2, 3, &mut r);
        let [qp, kp, vp] = att.projections();
        let q = naive_dense(qp, &x);
        let k = naive_dense(kp, &x);
        let v = naive_dense(vp, &x);
        let got = att.forward(&x).unwrap();
        for i in 0..2 {
            let s: Vec<f64> = (0..2)
                .map(|j| (0..3).map(|c| q.get(i, c) * k.get(j, c)).sum::<f64>() / math::sqrt(3.0))
                .collect();
            let m = s[0].max(s[1]);
            let w: Vec<f64> = s.iter().map(|v| math::exp(v - m)).collect();
            let z = w[0] + w[1];
            for c in 0..3 {
                let want = (w[0] * v.get(0, c) + w[1] * v.get(1, c)) / z;
                assert!((got.get(i, c) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn attention_rejects_nonlinear_projection() {
        let p = DenseLayer::zeros(2, 2, Activation::Identity);
        let bad = DenseLayer::zeros(2, 2, Activation::Tanh);
        assert!(SelfAttentionLayer::new(p.clone(), p.clone(), bad).is_err());
        assert!(SelfAttentionLayer::new(p.clone(), p.clone(), DenseLayer::zeros(2, 3, Activation::Identity)).is_err());
    }
}
