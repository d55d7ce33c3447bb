//! Shared critic plumbing: evaluation, squared-error regression and
//! action gradients for `Q(s, a, g)` networks.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::approx::{Gradients, Network};
use crate::error::{Error, Result};
use crate::features::{critic_inputs, POLICY_INPUT_DIM};

pub fn q_values(q: &Network, inputs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
    let out = q.forward_batch(critic_inputs(inputs, actions).view())?;
    Ok(out.column(0).to_owned())
}

/// Mean squared error `mean_i (Q(x_i) - y_i)^2` over critic input rows.
pub fn regression(q: &Network, critic_in: ArrayView2<f64>, targets: ArrayView1<f64>, context: &'static str) -> Result<(f64, Gradients)> {
    regression_weighted(q, critic_in, targets, None, context)
}

/// `sum_i c_i (Q(x_i) - y_i)^2` with per-row coefficients `c_i` (default `1/N`).
pub fn regression_weighted(
    q: &Network,
    critic_in: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    coeffs: Option<ArrayView1<f64>>,
    context: &'static str,
) -> Result<(f64, Gradients)> {
    let n = critic_in.nrows();
    let tape = q.forward_tape(critic_in)?;
    let pred = tape.output().column(0);
    let resid = &pred - &targets;
    if let Some(index) = resid.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context, index });
    }
    let coeffs = coeffs.map_or_else(|| Array1::from_elem(n, 1.0 / n as f64), |c| c.to_owned());
    let loss = (&resid * &resid * &coeffs).sum();
    let d_out = (resid * &coeffs * 2.0).insert_axis(Axis(1));
    let (grads, _) = q.backward(&tape, d_out, true);
    Ok((loss, grads.expect("requested")))
}

/// Critic values and their gradient with respect to the normalized action.
pub fn action_gradient(q: &Network, inputs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let x = critic_inputs(inputs, actions);
    let tape = q.forward_tape(x.view())?;
    let values = tape.output().column(0).to_owned();
    let (_, dx) = q.backward(&tape, Array2::ones((x.nrows(), 1)), false);
    Ok((values, dx.slice(s![.., POLICY_INPUT_DIM..]).to_owned()))
}
