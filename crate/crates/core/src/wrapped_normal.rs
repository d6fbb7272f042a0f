//! Wrapped normal distributions on the ball.
//!
//! A sample is drawn in three steps: `v = mu + L eps` in the tangent space
//! at the origin, transport `v` to the prototype `p`, then map it onto the
//! ball with `expm_p`. `mu` is therefore an offset around `p`, expressed in
//! origin coordinates.

use crate::diff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::graph::{self as ggraph, CurvatureVar};
use crate::geometry::{raw, BallPoint, Curvature};
use crate::math;
use crate::rng::{self, ChaCha8Rng};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Floor on the diagonal of every scale factor.
pub const SIGMA_MIN: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of free entries of a `d x d` lower-triangular matrix.
pub fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Row-major packing of the lower triangle: `(0,0), (1,0), (1,1), (2,0), ...`.
pub fn pack_lower(l: &Tensor) -> Vec<f64> {
    let d = l.rows();
    let mut out = Vec::with_capacity(packed_len(d));
    for i in 0..d {
        for j in 0..=i {
            out.push(l.get(i, j));
        }
    }
    out
}

pub fn unpack_lower(packed: &[f64], d: usize) -> Tensor {
    let index = unpack_index(d);
    let data = index.iter().map(|i| i.map_or(0.0, |i| packed[i])).collect();
    Tensor::from_parts(d, d, data)
}

/// Gather index mapping a packed vector to a flat `d x d` lower-triangular
/// matrix (`None` above the diagonal).
pub fn unpack_index(d: usize) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push((j <= i).then(|| i * (i + 1) / 2 + j));
        }
    }
    out
}

/// Positions of the diagonal inside a packed vector.
pub fn packed_diagonal(d: usize) -> Vec<usize> {
    (0..d).map(|i| i * (i + 1) / 2 + i).collect()
}

/// Positions of the diagonal inside a flat `d x d` matrix.
pub fn flat_diagonal(d: usize) -> Vec<usize> {
    (0..d).map(|i| i * d + i).collect()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Tensor) -> Result<Tensor> {
    let d = a.rows();
    if a.cols() != d {
        return Err(Error::Shape(alloc::format!("cholesky of {:?}", a.shape())));
    }
    let mut l = Tensor::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            let v = if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::InvalidParameter(
                        "matrix is not positive definite".into(),
                    ));
                }
                math::sqrt(s)
            } else {
                s / l.get(j, j)
            };
            l.data_mut()[i * d + j] = v;
        }
    }
    Ok(l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WrappedNormal {
    prototype: BallPoint,
    mean: Vec<f64>,
    scale: Tensor,
}

impl WrappedNormal {
    /// Validating constructor: `scale` must be lower triangular with a
    /// diagonal of at least [`SIGMA_MIN`].
    pub fn new(prototype: BallPoint, mean: Vec<f64>, scale: Tensor) -> Result<Self> {
        let d = prototype.dim();
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mean.len(),
            });
        }
        if scale.shape() != [d, d] {
            return Err(Error::Shape(alloc::format!(
                "scale must be {d}x{d}, got {:?}",
                scale.shape()
            )));
        }
        if !mean.iter().all(|v| v.is_finite()) || !scale.is_finite() {
            return Err(Error::NonFinite("wrapped normal parameters".into()));
        }
        for i in 0..d {
            if scale.get(i, i) < SIGMA_MIN {
                return Err(Error::InvalidParameter(alloc::format!(
                    "scale diagonal {} below floor",
                    scale.get(i, i)
                )));
            }
            if (i + 1..d).any(|j| scale.get(i, j) != 0.0) {
                return Err(Error::InvalidParameter("scale is not lower triangular".into()));
            }
        }
        Ok(Self {
            prototype,
            mean,
            scale,
        })
    }

    /// Zero the upper triangle and floor the diagonal before validating.
    pub fn with_floor(prototype: BallPoint, mean: Vec<f64>, mut scale: Tensor) -> Result<Self> {
        let d = scale.rows();
        if scale.cols() == d {
            for i in 0..d {
                for j in 0..d {
                    let v = &mut scale.data_mut()[i * d + j];
                    if j > i {
                        *v = 0.0;
                    } else if j == i && !(*v >= SIGMA_MIN) && v.is_finite() {
                        *v = SIGMA_MIN;
                    }
                }
            }
        }
        Self::new(prototype, mean, scale)
    }

    /// `mu = 0`, `L = SIGMA_MIN * I`.
    pub fn degenerate(prototype: BallPoint) -> Self {
        let d = prototype.dim();
        let mut scale = Tensor::identity(d);
        scale.data_mut().iter_mut().for_each(|v| *v *= SIGMA_MIN);
        Self {
            prototype,
            mean: vec![0.0; d],
            scale,
        }
    }

    pub fn curvature(&self) -> Curvature {
        self.prototype.curvature()
    }

    pub fn dim(&self) -> usize {
        self.prototype.dim()
    }

    pub fn prototype(&self) -> &BallPoint {
        &self.prototype
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &Tensor {
        &self.scale
    }

    /// `Sigma = L L^T`.
    pub fn covariance(&self) -> Tensor {
        crate::diff::tensor::matmul_nt_raw(&self.scale, &self.scale)
    }

    /// Same offset distribution around the prototype re-expressed in the
    /// ball of curvature `to`.
    pub fn rewrap(&self, to: Curvature) -> Self {
        Self {
            prototype: self.prototype.rewrap(to),
            mean: self.mean.clone(),
            scale: self.scale.clone(),
        }
    }

    /// Tangent offset `mu + L eps` at the origin.
    fn offset(&self, eps: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.scale.get(i, j) * eps[j]).sum::<f64>())
            .collect()
    }

    /// Reparameterized sample `expm_p(PT_{0->p}(mu + L eps))`.
    pub fn sample(&self, eps: &[f64]) -> Result<BallPoint> {
        if eps.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: eps.len(),
            });
        }
        let c = self.curvature();
        let p = self.prototype.coords();
        let v = raw::transport_from_origin(p, &self.offset(eps), c.value());
        let x = raw::expm(p, &v, c.value());
        if x.iter().all(|v| v.is_finite()) {
            Ok(BallPoint::from_raw(x, c))
        } else {
            Err(Error::NonFinite("sample".into()))
        }
    }

    pub fn sample_n(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<BallPoint>> {
        (0..n)
            .map(|_| self.sample(&rng::standard_normal(rng, self.dim())))
            .collect()
    }

    /// Log density of the sampler's output with respect to the Riemannian
    /// volume of the ball:
    ///
    /// `log N(v | mu, Sigma) - d ln 2 + (d-1) ln(s r / sinh(s r))`
    ///
    /// with `v = (lambda_p / 2) logm_p(x)`, `r = d(p, x)`, `s = sqrt|c|`. The
    /// `- d ln 2` accounts for the metric factor `lambda_0 = 2` of origin
    /// coordinates. The sinh ratio is taken as 1 when `s r < 1e-12`.
    pub fn log_density(&self, x: &BallPoint) -> Result<f64> {
        self.check_point(x)?;
        let c = self.curvature().value();
        let d = self.dim() as f64;
        let p = self.prototype.coords();
        let lp = raw::conformal_factor(p, c);
        let v: Vec<f64> = raw::logm(p, x.coords(), c)
            .into_iter()
            .map(|u| u * lp / 2.0)
            .collect();
        let sr = raw::sqrt_abs(c) * raw::distance(p, x.coords(), c);
        let ratio = if sr < 1e-12 { 1.0 } else { math::z_over_sinh(sr) };
        Ok(self.log_normal(&v) - d * core::f64::consts::LN_2 + (d - 1.0) * math::ln(ratio))
    }

    /// Log density with respect to Lebesgue measure on ball coordinates:
    /// [`log_density`](Self::log_density) plus `d ln lambda_x`.
    pub fn log_density_ambient(&self, x: &BallPoint) -> Result<f64> {
        let base = self.log_density(x)?;
        let lx = raw::conformal_factor(x.coords(), self.curvature().value());
        Ok(base + self.dim() as f64 * math::ln(lx))
    }

    fn check_point(&self, x: &BallPoint) -> Result<()> {
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

    /// Gaussian log density of an origin-frame offset.
    pub fn log_normal(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = v[i] - self.mean[i];
            for j in 0..i {
                s -= self.scale.get(i, j) * z[j];
            }
            z[i] = s / self.scale.get(i, i);
        }
        let log_det: f64 = (0..d).map(|i| math::ln(self.scale.get(i, i))).sum();
        -0.5 * math::norm_sq(&z) - log_det - 0.5 * d as f64 * LN_2PI
    }

    /// Moment fit of a class.
    ///
    /// The prototype is `expm_0` of the tangent mean. The offsets
    /// `(lambda_p / 2) logm_p(x_i)` give `mu` (their mean) and `L` (Cholesky
    /// factor of their covariance plus `SIGMA_MIN^2 I`). One sample yields
    /// `mu = 0` and `L = SIGMA_MIN I`.
    pub fn fit_initial(features: &[BallPoint]) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::EmptyClass(String::from("no features to fit")))?;
        let c = first.curvature();
        let d = first.dim();
        for f in features {
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: f.dim(),
                });
            }
            if f.curvature() != c {
                return Err(Error::CurvatureMismatch {
                    left: c.value(),
                    right: f.curvature().value(),
                });
            }
        }
        let n = features.len() as f64;
        let mut tangent_mean = vec![0.0; d];
        for f in features {
            for (m, v) in tangent_mean.iter_mut().zip(raw::logm0(f.coords(), c.value())) {
                *m += v / n;
            }
        }
        let p = raw::expm0(&tangent_mean, c.value());
        if features.len() == 1 {
            return Ok(Self::degenerate(BallPoint::from_raw(p, c)));
        }
        let lp = raw::conformal_factor(&p, c.value());
        let offsets: Vec<Vec<f64>> = features
            .iter()
            .map(|f| {
                raw::logm(&p, f.coords(), c.value())
                    .into_iter()
                    .map(|u| u * lp / 2.0)
                    .collect()
            })
            .collect();
        let mut mean = vec![0.0; d];
        for o in &offsets {
            for (m, v) in mean.iter_mut().zip(o) {
                *m += v / n;
            }
        }
        let mut cov = Tensor::zeros(d, d);
        for o in &offsets {
            for i in 0..d {
                for j in 0..d {
                    cov.data_mut()[i * d + j] += (o[i] - mean[i]) * (o[j] - mean[j]) / n;
                }
            }
        }
        for i in 0..d {
            cov.data_mut()[i * d + i] += SIGMA_MIN * SIGMA_MIN;
        }
        let scale = cholesky(&cov)?;
        Self::with_floor(BallPoint::from_raw(p, c), mean, scale)
    }
}

/// Batched reparameterized sampler on the tape: `n` draws from one
/// distribution with prototype `p` (`1 x d`), mean `mu` (`1 x d`) and flat
/// scale `l` (`d x d`), driven by fixed noise `eps` (`n x d`).
pub fn sample_graph<'g>(
    p: Var<'g>,
    mu: Var<'g>,
    l: Var<'g>,
    eps: &Tensor,
    k: CurvatureVar<'g>,
) -> Var<'g> {
    let g = p.graph();
    let v = mu + g.constant(eps.clone()).matmul_t(l);
    let u = ggraph::transport_from_origin(p, v, k);
    ggraph::expm(p, u, k)
}
