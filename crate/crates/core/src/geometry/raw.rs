//! Unchecked slice kernels behind the typed geometry API.
//!
//! `c` is the (negative) curvature. Callers guarantee matching lengths and
//! points inside the ball. Every function returning a point projects it to
//! the `BALL_EPS` margin.

use super::BALL_EPS;
use crate::math::{self, dot, norm, norm_sq};
use alloc::vec::Vec;

#[inline]
pub fn sqrt_abs(c: f64) -> f64 {
    math::sqrt(-c)
}

/// Largest admissible norm, `(1 - margin) / sqrt(|c|)`.
#[inline]
pub fn max_norm(c: f64, margin: f64) -> f64 {
    (1.0 - margin) / sqrt_abs(c)
}

pub fn project_with_margin(x: &[f64], c: f64, margin: f64) -> Vec<f64> {
    let n = norm(x);
    let limit = max_norm(c, margin);
    if n >= limit {
        let s = limit / n;
        x.iter().map(|v| v * s).collect()
    } else {
        x.to_vec()
    }
}

pub fn project(x: &[f64], c: f64) -> Vec<f64> {
    project_with_margin(x, c, BALL_EPS)
}

/// Möbius addition without the final projection.
pub fn mobius_add_unprojected(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let a = 1.0 - 2.0 * c * xy - c * y2;
    let b = 1.0 + c * x2;
    let den = 1.0 - 2.0 * c * xy + c * c * x2 * y2;
    x.iter().zip(y).map(|(xi, yi)| (a * xi + b * yi) / den).collect()
}

pub fn mobius_add(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    project(&mobius_add_unprojected(x, y, c), c)
}

pub fn neg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| -v).collect()
}

pub fn conformal_factor(x: &[f64], c: f64) -> f64 {
    2.0 / (1.0 + c * norm_sq(x))
}

/// Closed-form distance via `acosh`.
pub fn distance(x: &[f64], y: &[f64], c: f64) -> f64 {
    let diff: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let z = 1.0 - 2.0 * c * diff / ((1.0 + c * norm_sq(x)) * (1.0 + c * norm_sq(y)));
    math::acosh_clamped(z) / sqrt_abs(c)
}

/// Gyrovector form `2/sqrt|c| * atanh(sqrt|c| * ||(-x) + y||)`.
pub fn distance_via_mobius(x: &[f64], y: &[f64], c: f64) -> f64 {
    let s = sqrt_abs(c);
    let w = mobius_add_unprojected(&neg(x), y, c);
    2.0 / s * math::atanh(s * norm(&w))
}

/// Distance to the origin, `2/sqrt|c| * atanh(sqrt|c| * ||x||)`.
pub fn distance_to_origin(x: &[f64], c: f64) -> f64 {
    let s = sqrt_abs(c);
    2.0 / s * math::atanh(s * norm(x))
}

pub fn expm0(u: &[f64], c: f64) -> Vec<f64> {
    let f = math::tanh_ratio(sqrt_abs(c) * norm(u));
    project(&u.iter().map(|v| v * f).collect::<Vec<_>>(), c)
}

pub fn logm0(y: &[f64], c: f64) -> Vec<f64> {
    let f = math::atanh_ratio(sqrt_abs(c) * norm(y));
    y.iter().map(|v| v * f).collect()
}

pub fn expm(x: &[f64], u: &[f64], c: f64) -> Vec<f64> {
    let lambda = conformal_factor(x, c);
    let f = lambda / 2.0 * math::tanh_ratio(sqrt_abs(c) * lambda * norm(u) / 2.0);
    let step = project(&u.iter().map(|v| v * f).collect::<Vec<_>>(), c);
    mobius_add(x, &step, c)
}

pub fn logm(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let w = mobius_add(&neg(x), y, c);
    let f = 2.0 / conformal_factor(x, c) * math::atanh_ratio(sqrt_abs(c) * norm(&w));
    w.iter().map(|v| v * f).collect()
}

/// `(lambda_0 / lambda_p) v = (1 + c ||p||^2) v`.
pub fn transport_from_origin(p: &[f64], v: &[f64], c: f64) -> Vec<f64> {
    let s = 1.0 + c * norm_sq(p);
    v.iter().map(|x| x * s).collect()
}

/// Inverse of [`transport_from_origin`].
pub fn transport_to_origin(p: &[f64], v: &[f64], c: f64) -> Vec<f64> {
    let s = 1.0 / (1.0 + c * norm_sq(p));
    v.iter().map(|x| x * s).collect()
}

/// Re-express a point of the `from` ball in the `to` ball through the
/// shared tangent space at the origin.
pub fn rewrap(x: &[f64], from: f64, to: f64) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    expm0(&logm0(x, from), to)
}
