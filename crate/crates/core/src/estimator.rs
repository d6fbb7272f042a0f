//! Distribution estimation with gradient-flow networks.
//!
//! Six networks drive fixed-step RK4 integrations of distribution
//! parameters: F1 the shared curvature, F2 the class means, F3 the packed
//! scale factors, and F4-F6 the prototype, mean and scale perturbations that
//! turn a pair of seen classes into an unseen one. Each network maps
//! `[state, context, t]` through a tanh dense layer, an optional
//! self-attention layer and a linear output layer.
//!
//! Class features are handled as tangent vectors at the origin, so the
//! estimated curvature re-maps prototypes (and, downstream, queries) through
//! `expm_0` without changing their tangent images.

use crate::diff::{
    rk4_solve_graph, Activation, BoundAttention, BoundDense, DenseLayer, Graph, SelfAttentionLayer,
    Tensor, Var,
};
use crate::error::{Error, Result};
use crate::geometry::graph::{self as ggraph, CurvatureVar};
use crate::geometry::{raw, BallPoint, Curvature};
use crate::rng::{self, ChaCha8Rng};
use crate::wrapped_normal::{
    flat_diagonal, pack_lower, packed_len, unpack_index, WrappedNormal, SIGMA_MIN,
};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

/// Admissible range of the estimated curvature.
pub const CURVATURE_RANGE: (f64, f64) = (-10.0, -1e-3);
pub const DEFAULT_HIDDEN: usize = 64;
/// Glorot gain of every output layer; keeps initial flows small.
pub const OUTPUT_GAIN: f64 = 0.1;

/// Whether a class came from data or from pair synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Seen,
    Unseen,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Self::Seen => "seen",
            Self::Unseen => "unseen",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution {
    pub label: String,
    pub dist: WrappedNormal,
    pub provenance: Provenance,
}

/// Per-class wrapped normals sharing one curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistributions {
    curvature: Curvature,
    classes: Vec<ClassDistribution>,
}

impl ClassDistributions {
    pub fn new(curvature: Curvature, classes: Vec<ClassDistribution>) -> Result<Self> {
        let dim = classes.first().map(|c| c.dist.dim());
        for (i, class) in classes.iter().enumerate() {
            if class.dist.curvature() != curvature {
                return Err(Error::CurvatureMismatch {
                    left: curvature.value(),
                    right: class.dist.curvature().value(),
                });
            }
            if Some(class.dist.dim()) != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    found: class.dist.dim(),
                });
            }
            if classes[..i].iter().any(|c| c.label == class.label) {
                return Err(Error::DuplicateLabel(class.label.clone()));
            }
        }
        Ok(Self { curvature, classes })
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn classes(&self) -> &[ClassDistribution] {
        &self.classes
    }

    pub fn into_classes(self) -> Vec<ClassDistribution> {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.classes.first().map(|c| c.dist.dim())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }

    pub fn get(&self, label: &str) -> Option<&ClassDistribution> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub fn with_provenance(&self, p: Provenance) -> impl Iterator<Item = &ClassDistribution> {
        self.classes.iter().filter(move |c| c.provenance == p)
    }

    /// Concatenate two collections over the same curvature.
    pub fn concat(mut self, other: ClassDistributions) -> Result<Self> {
        if other.curvature != self.curvature {
            return Err(Error::CurvatureMismatch {
                left: self.curvature.value(),
                right: other.curvature.value(),
            });
        }
        self.classes.extend(other.classes);
        Self::new(self.curvature, self.classes)
    }
}

/// The six networks in bank order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    Curvature,
    Mean,
    Scale,
    PrototypeShift,
    MeanShift,
    ScaleShift,
}

impl FlowKind {
    pub const ALL: [FlowKind; 6] = [
        FlowKind::Curvature,
        FlowKind::Mean,
        FlowKind::Scale,
        FlowKind::PrototypeShift,
        FlowKind::MeanShift,
        FlowKind::ScaleShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Curvature => "F1",
            Self::Mean => "F2",
            Self::Scale => "F3",
            Self::PrototypeShift => "F4",
            Self::MeanShift => "F5",
            Self::ScaleShift => "F6",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Width of the integrated state.
    pub fn state_dim(self, d: usize) -> usize {
        match self {
            Self::Curvature => 1,
            Self::Mean | Self::PrototypeShift | Self::MeanShift => d,
            Self::Scale | Self::ScaleShift => packed_len(d),
        }
    }

    /// Width of `[state, context, t]`.
    pub fn input_dim(self, d: usize) -> usize {
        match self {
            Self::Curvature => 3,
            _ => self.state_dim(d) + d + 1,
        }
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, Self::Curvature)
    }
}

/// `f3(f2(f1(input)))` with `f2` optional.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientFlowNet {
    f1: DenseLayer,
    f2: Option<SelfAttentionLayer>,
    f3: DenseLayer,
}

impl GradientFlowNet {
    pub fn new(f1: DenseLayer, f2: Option<SelfAttentionLayer>, f3: DenseLayer) -> Result<Self> {
        let h = f1.outputs();
        if let Some(att) = &f2 {
            if att.width() != h {
                return Err(Error::DimensionMismatch {
                    expected: h,
                    found: att.width(),
                });
            }
        }
        if f3.inputs() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                found: f3.inputs(),
            });
        }
        Ok(Self { f1, f2, f3 })
    }

    pub fn glorot(
        inputs: usize,
        hidden: usize,
        outputs: usize,
        attention: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let f1 = DenseLayer::glorot(inputs, hidden, Activation::Tanh, 1.0, rng);
        let f2 = attention.then(|| SelfAttentionLayer::glorot(hidden, rng));
        let f3 = DenseLayer::glorot(hidden, outputs, Activation::Identity, OUTPUT_GAIN, rng);
        Self { f1, f2, f3 }
    }

    pub fn f1(&self) -> &DenseLayer {
        &self.f1
    }

    pub fn f2(&self) -> Option<&SelfAttentionLayer> {
        self.f2.as_ref()
    }

    pub fn f3(&self) -> &DenseLayer {
        &self.f3
    }

    pub fn inputs(&self) -> usize {
        self.f1.inputs()
    }

    pub fn hidden(&self) -> usize {
        self.f1.outputs()
    }

    pub fn outputs(&self) -> usize {
        self.f3.outputs()
    }

    /// Replace the output layer by `W = 0`, `b = bias`, making the flow the
    /// constant `bias`.
    pub fn set_constant_output(&mut self, bias: &[f64]) -> Result<()> {
        let f3 = DenseLayer::new(
            Tensor::zeros(self.outputs(), self.hidden()),
            Tensor::new(1, self.outputs(), bias.to_vec())?,
            Activation::Identity,
        )?;
        self.f3 = f3;
        Ok(())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.f1.params().into();
        if let Some(a) = &self.f2 {
            out.extend(a.params());
        }
        out.extend(self.f3.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.f1.params_mut().into();
        if let Some(a) = &mut self.f2 {
            out.extend(a.params_mut());
        }
        out.extend(self.f3.params_mut());
        out
    }

    pub fn bind<'g>(&self, g: &'g Graph) -> BoundFlowNet<'g> {
        BoundFlowNet {
            f1: self.f1.bind(g),
            f2: self.f2.as_ref().map(|a| a.bind(g)),
            f3: self.f3.bind(g),
        }
    }

    /// Evaluate on an `n x inputs` batch. `joint` lets the rows attend to
    /// each other; otherwise every row is processed alone.
    pub fn forward(&self, input: &Tensor, joint: bool) -> Result<Tensor> {
        if input.cols() != self.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs(),
                found: input.cols(),
            });
        }
        let g = Graph::new();
        Ok(self.bind(&g).forward(g.constant(input.clone()), joint).value())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundFlowNet<'g> {
    pub f1: BoundDense<'g>,
    pub f2: Option<BoundAttention<'g>>,
    pub f3: BoundDense<'g>,
}

impl<'g> BoundFlowNet<'g> {
    pub fn forward(&self, input: Var<'g>, joint: bool) -> Var<'g> {
        let h = self.f1.forward(input);
        let h = match &self.f2 {
            Some(a) if joint => a.forward(h),
            Some(a) => a.forward_independent(h),
            None => h,
        };
        self.f3.forward(h)
    }

    pub fn params(&self) -> Vec<Var<'g>> {
        let mut out: Vec<Var<'g>> = self.f1.params().into();
        if let Some(a) = &self.f2 {
            out.extend(a.params());
        }
        out.extend(self.f3.params());
        out
    }
}

/// Estimation hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BankConfig {
    pub hidden: usize,
    /// ODE horizon `T`.
    pub horizon: f64,
    pub steps: usize,
    /// Initial curvature `c^0`.
    pub c0: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            horizon: 1.0,
            steps: 10,
            c0: -1.0,
        }
    }
}

/// The six flow networks plus integration settings.
#[derive(Debug)]
pub struct EstimatorBank {
    nets: Vec<GradientFlowNet>,
    dim: usize,
    horizon: f64,
    steps: usize,
    c0: Curvature,
    calls: AtomicU64,
}

impl Clone for EstimatorBank {
    fn clone(&self) -> Self {
        Self {
            nets: self.nets.clone(),
            dim: self.dim,
            horizon: self.horizon,
            steps: self.steps,
            c0: self.c0,
            calls: AtomicU64::new(self.calls()),
        }
    }
}

impl PartialEq for EstimatorBank {
    fn eq(&self, other: &Self) -> bool {
        self.nets == other.nets
            && self.dim == other.dim
            && self.horizon == other.horizon
            && self.steps == other.steps
            && self.c0 == other.c0
    }
}

impl EstimatorBank {
    /// Randomly initialized bank for features of dimension `dim`.
    pub fn new(dim: usize, cfg: &BankConfig, seed: u64) -> Result<Self> {
        if dim == 0 || cfg.hidden == 0 {
            return Err(Error::InvalidParameter("dimension and hidden width must be positive".into()));
        }
        let mut nets = Vec::with_capacity(6);
        for kind in FlowKind::ALL {
            let mut r = rng::substream(seed, kind.index() as u64);
            nets.push(GradientFlowNet::glorot(
                kind.input_dim(dim),
                cfg.hidden,
                kind.state_dim(dim),
                kind.has_attention(),
                &mut r,
            ));
        }
        Self::from_parts(nets, dim, cfg.horizon, cfg.steps, cfg.c0)
    }

    /// Assemble a bank from networks in [`FlowKind::ALL`] order.
    pub fn from_parts(
        nets: Vec<GradientFlowNet>,
        dim: usize,
        horizon: f64,
        steps: usize,
        c0: f64,
    ) -> Result<Self> {
        if nets.len() != 6 {
            return Err(Error::InvalidParameter(format!("expected 6 networks, got {}", nets.len())));
        }
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::InvalidParameter(
                "horizon must be positive and steps at least 1".into(),
            ));
        }
        for (net, kind) in nets.iter().zip(FlowKind::ALL) {
            if net.inputs() != kind.input_dim(dim) || net.outputs() != kind.state_dim(dim) {
                return Err(Error::Shape(format!(
                    "{} must map {} -> {}, got {} -> {}",
                    kind.name(),
                    kind.input_dim(dim),
                    kind.state_dim(dim),
                    net.inputs(),
                    net.outputs()
                )));
            }
        }
        Ok(Self {
            nets,
            dim,
            horizon,
            steps,
            c0: Curvature::new(c0)?,
            calls: AtomicU64::new(0),
        })
    }

    pub fn network(&self, kind: FlowKind) -> &GradientFlowNet {
        &self.nets[kind.index()]
    }

    pub fn network_mut(&mut self, kind: FlowKind) -> &mut GradientFlowNet {
        &mut self.nets[kind.index()]
    }

    pub fn networks(&self) -> &[GradientFlowNet] {
        &self.nets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn c0(&self) -> Curvature {
        self.c0
    }

    /// Same networks with a different initial curvature.
    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        self.c0 = Curvature::new(c0)?;
        Ok(self)
    }

    /// Number of network evaluations requested through this bank (one per
    /// estimation or synthesis call, including graph binds).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Zero every output layer so all flows vanish.
    pub fn zero_outputs(&mut self) {
        for net in &mut self.nets {
            let zeros = vec![0.0; net.outputs()];
            net.set_constant_output(&zeros).expect("shape preserved");
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Every parameter tensor, F1 first, in [`BoundBank::params`] order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.nets.iter().flat_map(|n| n.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.nets.iter_mut().flat_map(|n| n.params_mut()).collect()
    }

    /// Plain gradient step `theta <- theta - lr * grad` over all parameters
    /// in [`BoundBank::params`] order.
    pub fn apply_gradient(&mut self, grads: &[Tensor], lr: f64) -> Result<()> {
        let params = self.params_mut();
        if params.len() != grads.len() {
            return Err(Error::InvalidParameter("gradient count mismatch".into()));
        }
        for (p, g) in params.into_iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape("gradient shape mismatch".into()));
            }
            for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                *x -= lr * d;
            }
        }
        Ok(())
    }

    /// Record every parameter as a graph leaf.
    pub fn bind<'g>(&self, g: &'g Graph) -> BoundBank<'g> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        BoundBank {
            nets: self.nets.iter().map(|n| n.bind(g)).collect(),
            dim: self.dim,
            horizon: self.horizon,
            steps: self.steps,
            c0: self.c0,
            graph: g,
        }
    }

    /// Refine the moment fits of the given classes by integrating F1-F3.
    pub fn estimate_seen(&self, features_by_class: &[(String, Vec<BallPoint>)]) -> Result<ClassDistributions> {
        let input = EstimationInput::new(features_by_class, self.c0)?;
        self.estimate_prepared(&input)
    }

    pub fn estimate_prepared(&self, input: &EstimationInput) -> Result<ClassDistributions> {
        let g = Graph::new();
        self.bind(&g).estimate_seen(input)?.to_distributions()
    }

    /// All `n(n-1)/2` pair-perturbed classes of `seen`.
    pub fn synthesize_unseen(&self, seen: &ClassDistributions) -> Result<ClassDistributions> {
        let g = Graph::new();
        let batch = DistBatch::constant(&g, seen)?;
        self.bind(&g).synthesize_unseen(&batch)?.to_distributions()
    }

    /// Seen estimates followed by their synthesized pairs.
    pub fn estimate_dual(&self, features_by_class: &[(String, Vec<BallPoint>)]) -> Result<ClassDistributions> {
        let input = EstimationInput::new(features_by_class, self.c0)?;
        let g = Graph::new();
        let bank = self.bind(&g);
        let seen = bank.estimate_seen(&input)?;
        let unseen = bank.synthesize_unseen(&seen)?;
        seen.concat(&unseen).to_distributions()
    }
}

/// Per-class statistics feeding the estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationInput {
    labels: Vec<String>,
    /// Features as tangent vectors at the origin, per class.
    tangents: Vec<Vec<Vec<f64>>>,
    /// Tangent-space class means, `n x d`.
    class_means: Tensor,
    /// Moment fits in the ball of curvature `c0`.
    fits: Vec<WrappedNormal>,
    c0: Curvature,
}

impl EstimationInput {
    pub fn new(features_by_class: &[(String, Vec<BallPoint>)], c0: Curvature) -> Result<Self> {
        let tangents = features_by_class
            .iter()
            .map(|(_, xs)| {
                xs.iter()
                    .map(|x| raw::logm0(x.coords(), x.curvature().value()))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let labels = features_by_class.iter().map(|(l, _)| l.clone()).collect();
        Self::from_tangents(labels, tangents, c0)
    }

    /// Build from tangent vectors directly.
    pub fn from_tangents(labels: Vec<String>, tangents: Vec<Vec<Vec<f64>>>, c0: Curvature) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::TooFewClasses { needed: 1, found: 0 });
        }
        if labels.len() != tangents.len() {
            return Err(Error::InvalidParameter("one feature list per label".into()));
        }
        let mut d = None;
        let mut rows = Vec::with_capacity(labels.len());
        let mut fits = Vec::with_capacity(labels.len());
        for (i, (label, xs)) in labels.iter().zip(&tangents).enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
            if xs.is_empty() {
                return Err(Error::EmptyClass(label.clone()));
            }
            for x in xs {
                let want = *d.get_or_insert(x.len());
                if x.len() != want {
                    return Err(Error::DimensionMismatch {
                        expected: want,
                        found: x.len(),
                    });
                }
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite(format!("feature of {label}")));
                }
            }
            let n = xs.len() as f64;
            let mean: Vec<f64> = (0..xs[0].len())
                .map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n)
                .collect();
            rows.push(mean);
            let pts: Vec<BallPoint> = xs
                .iter()
                .map(|x| BallPoint::from_raw(raw::expm0(x, c0.value()), c0))
                .collect();
            fits.push(WrappedNormal::fit_initial(&pts)?);
        }
        Ok(Self {
            labels,
            tangents,
            class_means: Tensor::from_rows(&rows)?,
            fits,
            c0,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tangents(&self) -> &[Vec<Vec<f64>>] {
        &self.tangents
    }

    pub fn class_means(&self) -> &Tensor {
        &self.class_means
    }

    pub fn fits(&self) -> &[WrappedNormal] {
        &self.fits
    }

    pub fn dim(&self) -> usize {
        self.class_means.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The moment fits themselves, without any refinement.
    pub fn initial_distributions(&self) -> Result<ClassDistributions> {
        ClassDistributions::new(
            self.c0,
            self.labels
                .iter()
                .zip(&self.fits)
                .map(|(label, dist)| ClassDistribution {
                    label: label.clone(),
                    dist: dist.clone(),
                    provenance: Provenance::Seen,
                })
                .collect(),
        )
    }
}

/// Distribution parameters of several classes on the tape.
#[derive(Clone, Debug)]
pub struct DistBatch<'g> {
    pub k: CurvatureVar<'g>,
    /// Prototypes, `n x d`.
    pub protos: Var<'g>,
    /// Tangent means, `n x d`.
    pub means: Var<'g>,
    /// Packed lower-triangular scale factors, `n x d(d+1)/2`.
    pub packed: Var<'g>,
    /// Flat scale factors with floored diagonal, `n x d*d`.
    pub scales: Var<'g>,
    pub labels: Vec<String>,
    pub provenance: Vec<Provenance>,
    /// Source pair `(i, j)` of each synthesized row, indices into the seen
    /// batch it came from.
    pub pairs: Vec<Option<(usize, usize)>>,
}

/// Unpack `n` packed rows into flat `d x d` factors and floor the diagonal.
fn unpack_rows<'g>(packed: Var<'g>, d: usize) -> (Var<'g>, Var<'g>) {
    let n = packed.rows();
    let p = packed_len(d);
    let base = unpack_index(d);
    let index = (0..n)
        .flat_map(|r| base.iter().map(move |i| i.map(|i| r * p + i)))
        .collect();
    let flat = packed.gather(n, d * d, index).clamp_min_cols(&flat_diagonal(d), SIGMA_MIN);
    let packed_index: Vec<usize> = (0..d).flat_map(|i| (0..=i).map(move |j| i * d + j)).collect();
    let repacked = flat.gather(
        n,
        p,
        (0..n)
            .flat_map(|r| packed_index.iter().map(move |&k| Some(r * d * d + k)))
            .collect(),
    );
    (flat, repacked)
}

impl<'g> DistBatch<'g> {
    /// Constant batch holding the given distributions.
    pub fn constant(g: &'g Graph, dists: &ClassDistributions) -> Result<Self> {
        let d = dists
            .dim()
            .ok_or(Error::TooFewClasses { needed: 1, found: 0 })?;
        let cls = dists.classes();
        let protos = Tensor::from_rows(&cls.iter().map(|c| c.dist.prototype().coords().to_vec()).collect::<Vec<_>>())?;
        let means = Tensor::from_rows(&cls.iter().map(|c| c.dist.mean().to_vec()).collect::<Vec<_>>())?;
        let packed = Tensor::from_rows(&cls.iter().map(|c| pack_lower(c.dist.scale())).collect::<Vec<_>>())?;
        let (scales, packed) = unpack_rows(g.constant(packed), d);
        Ok(Self {
            k: CurvatureVar::constant(g, dists.curvature().value()),
            protos: g.constant(protos),
            means: g.constant(means),
            packed,
            scales,
            labels: dists.labels().map(String::from).collect(),
            provenance: cls.iter().map(|c| c.provenance).collect(),
            pairs: vec![None; cls.len()],
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.protos.cols()
    }

    /// `logm_0(p_j) + mu_j` per row.
    pub fn anchors(&self) -> Var<'g> {
        ggraph::logm0(self.protos, self.k) + self.means
    }

    /// Per-class `d x d` scale factors.
    pub fn scale_matrices(&self) -> Vec<Var<'g>> {
        let d = self.dim();
        (0..self.len()).map(|j| self.scales.row(j).reshape(d, d)).collect()
    }

    /// Stack `self` over `other` (same curvature node).
    pub fn concat(&self, other: &DistBatch<'g>) -> DistBatch<'g> {
        let g = self.protos.graph();
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut provenance = self.provenance.clone();
        provenance.extend(other.provenance.iter().copied());
        let mut pairs = self.pairs.clone();
        pairs.extend(other.pairs.iter().copied());
        DistBatch {
            k: self.k,
            protos: g.concat_rows(&[self.protos, other.protos]),
            means: g.concat_rows(&[self.means, other.means]),
            packed: g.concat_rows(&[self.packed, other.packed]),
            scales: g.concat_rows(&[self.scales, other.scales]),
            labels,
            provenance,
            pairs,
        }
    }

    /// Read the current values back into plain distributions.
    pub fn to_distributions(&self) -> Result<ClassDistributions> {
        let c = Curvature::new(self.k.c.scalar()?)?;
        let d = self.dim();
        let protos = self.protos.value();
        let means = self.means.value();
        let scales = self.scales.value();
        let mut classes = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let p = BallPoint::new(protos.row_slice(j).to_vec(), c)?;
            let l = Tensor::new(d, d, scales.row_slice(j).to_vec())?;
            classes.push(ClassDistribution {
                label: self.labels[j].clone(),
                dist: WrappedNormal::with_floor(p, means.row_slice(j).to_vec(), l)?,
                provenance: self.provenance[j],
            });
        }
        ClassDistributions::new(c, classes)
    }
}

/// An [`EstimatorBank`] whose parameters are leaves of one graph.
#[derive(Clone, Debug)]
pub struct BoundBank<'g> {
    nets: Vec<BoundFlowNet<'g>>,
    dim: usize,
    horizon: f64,
    steps: usize,
    c0: Curvature,
    graph: &'g Graph,
}

impl<'g> BoundBank<'g> {
    /// Leaves in the order expected by [`EstimatorBank::apply_gradient`].
    pub fn params(&self) -> Vec<Var<'g>> {
        self.nets.iter().flat_map(|n| n.params()).collect()
    }

    fn net(&self, kind: FlowKind) -> &BoundFlowNet<'g> {
        &self.nets[kind.index()]
    }

    fn integrate(&self, kind: FlowKind, state0: Var<'g>, context: Var<'g>, joint: bool) -> Result<Var<'g>> {
        let g = self.graph;
        let net = *self.net(kind);
        let rows = state0.rows();
        rk4_solve_graph(
            state0,
            |state, t| {
                let time = g.constant(Tensor::filled(rows, 1, t));
                net.forward(g.concat_cols(&[state, context, time]), joint)
            },
            self.horizon,
            self.steps,
        )
    }

    /// Integrate F1-F3 from the moment fits in `input`.
    pub fn estimate_seen(&self, input: &EstimationInput) -> Result<DistBatch<'g>> {
        if input.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: input.dim(),
            });
        }
        if input.c0 != self.c0 {
            return Err(Error::CurvatureMismatch {
                left: self.c0.value(),
                right: input.c0.value(),
            });
        }
        let g = self.graph;
        let d = self.dim;
        let n = input.len();
        let means = input.class_means();
        let summary = (0..n)
            .map(|i| crate::math::norm_sq(means.row_slice(i)))
            .sum::<f64>()
            / n as f64;

        let net = *self.net(FlowKind::Curvature);
        let summary_v = g.scalar(summary);
        let c_t = rk4_solve_graph(
            g.scalar(self.c0.value()),
            |c, t| net.forward(g.concat_cols(&[c, summary_v, g.scalar(t)]), false),
            self.horizon,
            self.steps,
        )?;
        let k = CurvatureVar::new(c_t.clamp(CURVATURE_RANGE.0, CURVATURE_RANGE.1));

        let context = g.constant(means.clone());
        let mu0 = Tensor::from_rows(&input.fits.iter().map(|f| f.mean().to_vec()).collect::<Vec<_>>())?;
        let mu_t = self.integrate(FlowKind::Mean, g.constant(mu0), context, true)?;
        let l0 = Tensor::from_rows(&input.fits.iter().map(|f| pack_lower(f.scale())).collect::<Vec<_>>())?;
        let l_t = self.integrate(FlowKind::Scale, g.constant(l0), context, true)?;
        let (scales, packed) = unpack_rows(l_t, d);

        let p_hat = Tensor::from_rows(
            &input
                .fits
                .iter()
                .map(|f| raw::logm0(f.prototype().coords(), self.c0.value()))
                .collect::<Vec<_>>(),
        )?;
        let protos = ggraph::expm0(g.constant(p_hat), k);
        Ok(DistBatch {
            k,
            protos,
            means: mu_t,
            packed,
            scales,
            labels: input.labels.clone(),
            provenance: vec![Provenance::Seen; n],
            pairs: vec![None; n],
        })
    }

    /// One synthesized class per unordered pair `i < j` of `seen` rows:
    /// `p_k = proj(p_i + delta_p)`, `mu_k = mu_i + delta_mu`,
    /// `L_k = L_i + delta_L`, with each `delta` integrated by F4-F6 from
    /// the pair difference.
    pub fn synthesize_unseen(&self, seen: &DistBatch<'g>) -> Result<DistBatch<'g>> {
        let n = seen.len();
        if n < 2 {
            return Err(Error::TooFewClasses { needed: 2, found: n });
        }
        if seen.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: seen.dim(),
            });
        }
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let first: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let second: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let pick = |v: Var<'g>| (v.select_rows(&first), v.select_rows(&second));
        let k = seen.k;
        let (pi, pj) = pick(seen.protos);
        let (mi, mj) = pick(seen.means);
        let (li, lj) = pick(seen.packed);
        let tangent = ggraph::logm0(seen.protos, k);
        let (ti, tj) = pick(tangent);
        let context = (ti + tj).scale(0.5);

        let dp = self.integrate(FlowKind::PrototypeShift, pj - pi, context, false)?;
        let dm = self.integrate(FlowKind::MeanShift, mj - mi, context, false)?;
        let dl = self.integrate(FlowKind::ScaleShift, lj - li, context, false)?;
        let (scales, packed) = unpack_rows(li + dl, self.dim);
        Ok(DistBatch {
            k,
            protos: ggraph::project(pi + dp, k),
            means: mi + dm,
            packed,
            scales,
            labels: pairs
                .iter()
                .map(|&(i, j)| format!("{}+{}", seen.labels[i], seen.labels[j]))
                .collect(),
            provenance: vec![Provenance::Unseen; pairs.len()],
            pairs: pairs.into_iter().map(Some).collect(),
        })
    }
}

#[cfg(test)]
mod tests;
