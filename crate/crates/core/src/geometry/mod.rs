//! Poincaré-ball primitives.
//!
//! The ball of curvature `c < 0` is `{x : -c ||x||^2 < 1}` with radius
//! `1 / sqrt(|c|)`. Every operation returning a [`BallPoint`] radially
//! projects the result to norm at most `(1 - BALL_EPS) / sqrt(|c|)`, which
//! keeps `atanh` and `acosh` away from their singularities.

pub mod graph;
pub mod raw;

use crate::error::{Error, Result};
use crate::math;
use alloc::vec::Vec;

/// Relative boundary margin applied by every projection.
pub const BALL_EPS: f64 = 1e-5;

/// Strictly negative, finite curvature.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c < 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::InvalidCurvature(c))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn sqrt_abs(self) -> f64 {
        math::sqrt(-self.0)
    }

    /// Ball radius `1 / sqrt(|c|)`.
    pub fn radius(self) -> f64 {
        1.0 / self.sqrt_abs()
    }

    pub fn max_norm(self) -> f64 {
        raw::max_norm(self.0, BALL_EPS)
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;
    fn try_from(c: f64) -> Result<Self> {
        Self::new(c)
    }
}

/// A point strictly inside the ball.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

impl BallPoint {
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_finite(&coords, "ball point")?;
        let n2 = math::norm_sq(&coords);
        if -curvature.value() * n2 >= 1.0 {
            return Err(Error::OutsideBall {
                norm: math::sqrt(n2),
                radius: curvature.radius(),
            });
        }
        Ok(Self { coords, curvature })
    }

    pub(crate) fn from_raw(coords: Vec<f64>, curvature: Curvature) -> Self {
        debug_assert!(-curvature.value() * math::norm_sq(&coords) < 1.0);
        Self { coords, curvature }
    }

    pub fn origin(dim: usize, curvature: Curvature) -> Self {
        Self::from_raw(alloc::vec![0.0; dim], curvature)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.coords)
    }

    /// Möbius inverse `-x`.
    pub fn neg(&self) -> Self {
        Self::from_raw(raw::neg(&self.coords), self.curvature)
    }

    /// The same tangent vector at the origin, re-mapped into the ball of
    /// curvature `to`.
    pub fn rewrap(&self, to: Curvature) -> Self {
        Self::from_raw(
            raw::rewrap(&self.coords, self.curvature.value(), to.value()),
            to,
        )
    }
}

/// A vector in the tangent space at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    coords: Vec<f64>,
    base: BallPoint,
}

impl TangentVector {
    pub fn new(coords: Vec<f64>, base: BallPoint) -> Result<Self> {
        check_finite(&coords, "tangent vector")?;
        if coords.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                found: coords.len(),
            });
        }
        Ok(Self { coords, base })
    }

    pub fn at_origin(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        let base = BallPoint::origin(coords.len(), curvature);
        Self::new(coords, base)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn base(&self) -> &BallPoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.coords)
    }
}

fn same_space(x: &BallPoint, y: &BallPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    if x.curvature != y.curvature {
        return Err(Error::CurvatureMismatch {
            left: x.curvature.value(),
            right: y.curvature.value(),
        });
    }
    Ok(())
}

pub fn mobius_add(x: &BallPoint, y: &BallPoint) -> Result<BallPoint> {
    same_space(x, y)?;
    let c = x.curvature;
    Ok(BallPoint::from_raw(raw::mobius_add(&x.coords, &y.coords, c.value()), c))
}

pub fn distance(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    same_space(x, y)?;
    Ok(raw::distance(&x.coords, &y.coords, x.curvature.value()))
}

/// Distance through `||(-x) + y||`; agrees with [`distance`] and serves as
/// its cross-check.
pub fn distance_via_mobius(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    same_space(x, y)?;
    Ok(raw::distance_via_mobius(&x.coords, &y.coords, x.curvature.value()))
}

pub fn expm(base: &BallPoint, u: &TangentVector) -> Result<BallPoint> {
    same_space(base, &u.base)?;
    if u.base.coords != base.coords {
        return Err(Error::InvalidParameter(
            "tangent vector is based at a different point".into(),
        ));
    }
    let c = base.curvature;
    Ok(BallPoint::from_raw(raw::expm(&base.coords, &u.coords, c.value()), c))
}

pub fn logm(base: &BallPoint, y: &BallPoint) -> Result<TangentVector> {
    same_space(base, y)?;
    let coords = raw::logm(&base.coords, &y.coords, base.curvature.value());
    Ok(TangentVector {
        coords,
        base: base.clone(),
    })
}

/// `expm` at the origin: `tanh(sqrt|c| ||u||) u / (sqrt|c| ||u||)`.
pub fn expm0(u: &[f64], c: Curvature) -> Result<BallPoint> {
    check_finite(u, "tangent vector")?;
    Ok(BallPoint::from_raw(raw::expm0(u, c.value()), c))
}

/// `logm` at the origin: `atanh(sqrt|c| ||y||) y / (sqrt|c| ||y||)`.
pub fn logm0(y: &BallPoint) -> Vec<f64> {
    raw::logm0(&y.coords, y.curvature.value())
}

/// `lambda_x = 2 / (1 + c ||x||^2)`.
pub fn conformal_factor(x: &BallPoint) -> f64 {
    raw::conformal_factor(&x.coords, x.curvature.value())
}

/// Transport a vector from the tangent space at the origin to the one at `p`.
pub fn parallel_transport_from_origin(p: &BallPoint, v: &TangentVector) -> Result<TangentVector> {
    same_space(p, &v.base)?;
    if v.base.coords.iter().any(|x| *x != 0.0) {
        return Err(Error::InvalidParameter(
            "transport source must be the origin".into(),
        ));
    }
    Ok(TangentVector {
        coords: raw::transport_from_origin(&p.coords, &v.coords, p.curvature.value()),
        base: p.clone(),
    })
}

pub fn project_to_ball(x: &[f64], c: Curvature) -> Result<BallPoint> {
    check_finite(x, "projection input")?;
    Ok(BallPoint::from_raw(raw::project(x, c.value()), c))
}
