//! Tape versions of the objectives.

use crate::diff::Var;
use crate::geometry::graph::{self as ggraph, CurvatureVar};
use alloc::vec::Vec;

/// `-d(x_q, w_j)` for every query row and weight row, `q x m`.
pub fn logits<'g>(x: Var<'g>, w: Var<'g>, k: CurvatureVar<'g>) -> Var<'g> {
    -ggraph::pairwise_distance(x, w, k)
}

/// Mean cross-entropy of row-wise logits against integer targets.
pub fn cross_entropy<'g>(logits: Var<'g>, targets: &[usize]) -> Var<'g> {
    (logits.logsumexp_rows() - logits.pick_per_row(targets)).mean()
}

/// Bound value together with its analytic gradient in the weights.
#[derive(Clone, Copy, Debug)]
pub struct BoundGraph<'g> {
    pub loss: Var<'g>,
    /// `N x d`, one row per weight.
    pub gradient: Var<'g>,
}

/// Closed-form bound for `N` classes whose weights (`w`), anchors
/// `a_j = logm_0(p_j) + mu_j` and scale factors `scales[j]` (`d x d`) are
/// aligned by row.
///
/// The gradient is assembled from tape operations rather than by a backward
/// pass, so an unrolled descent on the bound remains differentiable with a
/// first-order tape. With `D_j = W - w_j`, `R_j = D_j Sigma_j` and `Pi` the
/// row softmax of the exponents:
///
/// `N grad_k = (Pi^T A)_k + 2 w_k colsum(Pi)_k + sum_j Pi_jk R_j[k]
///             - a_k - 2 w_k - Pi_k. R_k`.
pub fn upper_bound<'g>(w: Var<'g>, a: Var<'g>, scales: &[Var<'g>]) -> BoundGraph<'g> {
    let n = w.rows();
    assert_eq!(scales.len(), n, "one scale factor per class");
    let g = w.graph();
    let wn = w.row_norm_sq();
    let own = (a * w).row_sums();
    let mut quad_rows = Vec::with_capacity(n);
    let mut sigma_d = Vec::with_capacity(n);
    for (j, &l) in scales.iter().enumerate() {
        let dl = (w - w.row(j)).matmul(l);
        quad_rows.push(dl.row_norm_sq().transpose());
        sigma_d.push(dl.matmul_t(l));
    }
    let quad = g.concat_rows(&quad_rows);
    let e = a.matmul_t(w) - own + wn.transpose() - wn + quad.scale(0.5);
    let terms = e.logsumexp_rows();
    let loss = terms.mean();
    let pi = (e - terms).exp();
    let mut spread = None;
    let mut own_rows = Vec::with_capacity(n);
    for (j, &r) in sigma_d.iter().enumerate() {
        let pj = pi.row(j);
        let part = pj.transpose() * r;
        spread = Some(match spread {
            None => part,
            Some(acc) => acc + part,
        });
        own_rows.push(pj.matmul(r));
    }
    let spread = spread.expect("at least one class");
    let own_spread = g.concat_rows(&own_rows);
    let gradient = (pi.transpose().matmul(a) + w * pi.col_sums().transpose().scale(2.0) + spread
        - a
        - w.scale(2.0)
        - own_spread)
        .scale(1.0 / n as f64);
    BoundGraph { loss, gradient }
}

/// Row-wise hierarchy penalty from origin distances (`m x 1` each).
pub fn hierarchy<'g>(di: Var<'g>, dj: Var<'g>, dk: Var<'g>, gamma: f64) -> Var<'g> {
    dk.scale(2.0) - di - dj + ((di + dj).scale(gamma) - dk).relu()
}
