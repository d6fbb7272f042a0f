//! Row-batched geometry on the autodiff tape.
//!
//! Points are rows of an `n x d` node. Curvature is a `1 x 1` node so that
//! gradients flow into it. Every function mirrors one in [`super::raw`].

use super::BALL_EPS;
use crate::diff::{Graph, Var};
use alloc::vec::Vec;

/// Curvature node bundled with `sqrt(|c|)`.
#[derive(Clone, Copy, Debug)]
pub struct CurvatureVar<'g> {
    pub c: Var<'g>,
    pub sqrt_abs: Var<'g>,
}

impl<'g> CurvatureVar<'g> {
    pub fn new(c: Var<'g>) -> Self {
        assert_eq!(c.shape(), [1, 1], "curvature must be 1x1");
        Self {
            c,
            sqrt_abs: (-c).sqrt(),
        }
    }

    pub fn constant(g: &'g Graph, c: f64) -> Self {
        Self::new(g.scalar(c))
    }

    pub fn graph(&self) -> &'g Graph {
        self.c.graph()
    }
}

pub fn project_with_margin<'g>(x: Var<'g>, k: CurvatureVar<'g>, margin: f64) -> Var<'g> {
    let limit = k.sqrt_abs.recip().scale(1.0 - margin);
    let n = x.row_norm();
    x * (limit / n.maximum(limit))
}

pub fn project<'g>(x: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    project_with_margin(x, k, BALL_EPS)
}

/// Row-wise Möbius addition. `y` may be a single row broadcast over `x`.
pub fn mobius_add<'g>(x: Var<'g>, y: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    let c = k.c;
    let xy = (x * y).row_sums();
    let x2 = x.row_norm_sq();
    let y2 = y.row_norm_sq();
    let a = 1.0 - (xy.scale(2.0) + y2) * c;
    let b = 1.0 + c * x2;
    let den = 1.0 - xy.scale(2.0) * c + c * c * x2 * y2;
    project((a * x + b * y) / den, k)
}

/// `lambda_x` per row, `n x 1`.
pub fn conformal_factor<'g>(x: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    (1.0 + k.c * x.row_norm_sq()).recip().scale(2.0)
}

/// Row-wise distance between equally shaped (or broadcast) batches, `n x 1`.
pub fn distance<'g>(x: Var<'g>, y: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    let c = k.c;
    let diff = (x - y).row_norm_sq();
    let den = (1.0 + c * x.row_norm_sq()) * (1.0 + c * y.row_norm_sq());
    let z = 1.0 - (c * diff / den).scale(2.0);
    z.acosh_clamped() / k.sqrt_abs
}

/// All distances between rows of `x` (`q x d`) and rows of `w` (`m x d`),
/// returned as `q x m`.
pub fn pairwise_distance<'g>(x: Var<'g>, w: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    let [q, d] = x.shape();
    let m = w.rows();
    let xi: Vec<usize> = (0..q).flat_map(|i| core::iter::repeat_n(i, m)).collect();
    let wi: Vec<usize> = (0..q).flat_map(|_| 0..m).collect();
    debug_assert_eq!(w.cols(), d);
    distance(x.select_rows(&xi), w.select_rows(&wi), k).reshape(q, m)
}

/// `2/sqrt|c| * atanh(sqrt|c| ||x||)` per row.
pub fn distance_to_origin<'g>(x: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    (k.sqrt_abs * x.row_norm()).atanh().scale(2.0) / k.sqrt_abs
}

pub fn expm0<'g>(u: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    project(u * (k.sqrt_abs * u.row_norm()).tanh_ratio(), k)
}

pub fn logm0<'g>(y: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    y * (k.sqrt_abs * y.row_norm()).atanh_ratio()
}

pub fn expm<'g>(x: Var<'g>, u: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    let lambda = conformal_factor(x, k);
    let arg = (k.sqrt_abs * lambda * u.row_norm()).scale(0.5);
    let step = project(u * lambda.scale(0.5) * arg.tanh_ratio(), k);
    mobius_add(x, step, k)
}

pub fn logm<'g>(x: Var<'g>, y: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    let w = mobius_add(-x, y, k);
    let f = (k.sqrt_abs * w.row_norm()).atanh_ratio() / conformal_factor(x, k);
    w * f.scale(2.0)
}

pub fn transport_from_origin<'g>(p: Var<'g>, v: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    v * (1.0 + k.c * p.row_norm_sq())
}

pub fn transport_to_origin<'g>(p: Var<'g>, v: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    v / (1.0 + k.c * p.row_norm_sq())
}
