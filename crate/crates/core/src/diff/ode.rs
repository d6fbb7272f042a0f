//! Classical fourth-order Runge-Kutta with a uniform step.

use super::{Tensor, Var};
use crate::error::{Error, Result};

fn check_horizon(t_end: f64, steps: usize) -> Result<()> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidParameter("ODE horizon must be positive".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("ODE needs at least one step".into()));
    }
    Ok(())
}

fn axpy(y: &Tensor, a: f64, x: &Tensor) -> Tensor {
    let data = y.data().iter().zip(x.data()).map(|(p, q)| p + a * q).collect();
    Tensor::from_parts(y.rows(), y.cols(), data)
}

/// Integrate `dh/dt = flow(h, t)` from `t = 0` to `t_end` in `steps` equal steps.
pub fn rk4_solve<F>(state0: &Tensor, mut flow: F, t_end: f64, steps: usize) -> Result<Tensor>
where
    F: FnMut(&Tensor, f64) -> Result<Tensor>,
{
    check_horizon(t_end, steps)?;
    let h = t_end / steps as f64;
    let mut state = state0.clone();
    for step in 0..steps {
        let t = step as f64 * h;
        let k1 = flow(&state, t)?;
        let k2 = flow(&axpy(&state, h / 2.0, &k1), t + h / 2.0)?;
        let k3 = flow(&axpy(&state, h / 2.0, &k2), t + h / 2.0)?;
        let k4 = flow(&axpy(&state, h, &k3), t + h)?;
        for (shape_ok, k) in [&k1, &k2, &k3, &k4].iter().map(|k| (k.shape() == state.shape(), k)) {
            if !shape_ok {
                return Err(Error::Shape(alloc::format!(
                    "flow returned {:?} for state {:?}",
                    k.shape(),
                    state.shape()
                )));
            }
        }
        let data = (0..state.len())
            .map(|i| {
                state.data()[i]
                    + h / 6.0
                        * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i])
            })
            .collect();
        state = Tensor::from_parts(state.rows(), state.cols(), data);
        if !state.is_finite() {
            return Err(Error::Integration { step });
        }
    }
    Ok(state)
}

/// [`rk4_solve`] recorded on a graph; gradients flow through every stage.
pub fn rk4_solve_graph<'g, F>(
    state0: Var<'g>,
    mut flow: F,
    t_end: f64,
    steps: usize,
) -> Result<Var<'g>>
where
    F: FnMut(Var<'g>, f64) -> Var<'g>,
{
    check_horizon(t_end, steps)?;
    let h = t_end / steps as f64;
    let mut state = state0;
    for step in 0..steps {
        let t = step as f64 * h;
        let k1 = flow(state, t);
        let k2 = flow(state + k1 * (h / 2.0), t + h / 2.0);
        let k3 = flow(state + k2 * (h / 2.0), t + h / 2.0);
        let k4 = flow(state + k3 * h, t + h);
        state = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !state.is_finite() {
            return Err(Error::Integration { step });
        }
    }
    Ok(state)
}
