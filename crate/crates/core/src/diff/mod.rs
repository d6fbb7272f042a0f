//! Minimal differentiable computation: a reverse-mode tape over small dense
//! matrices, the layers built on it, and an RK4 integrator.
//!
//! Every [`Tensor`] is a row-major matrix; vectors are single rows. A
//! [`Graph`] records operations on [`Var`] handles and [`Graph::backward`]
//! returns exact gradients of a scalar output with respect to every node.

mod graph;
mod layers;
mod ode;
pub(crate) mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, BoundAttention, BoundDense, DenseLayer, SelfAttentionLayer};
pub use ode::{rk4_solve, rk4_solve_graph};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec::Vec;

/// Value and gradient of `loss` at `params`.
///
/// `loss` receives the graph and one leaf per parameter (in order) and must
/// return a 1x1 node.
pub fn value_and_grad<F>(loss: F, params: &[Tensor]) -> Result<(f64, Vec<Tensor>)>
where
    F: for<'g> FnOnce(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let leaves: Vec<Var<'_>> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = loss(&g, &leaves)?;
    let value = out.scalar()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss value {value}")));
    }
    let grads = g.backward(out)?;
    Ok((value, leaves.iter().map(|v| grads.get(*v)).collect()))
}

/// Gradient of `loss` at `params`; see [`value_and_grad`].
pub fn grad<F>(loss: F, params: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: for<'g> FnOnce(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    value_and_grad(loss, params).map(|(_, g)| g)
}
