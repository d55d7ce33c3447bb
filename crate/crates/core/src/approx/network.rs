use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiplies `delta` in place by the derivative, expressed through the
    /// activation output `y`.
    fn backprop(self, y: &Array2<f64>, delta: &mut Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(delta).and(y).for_each(|d, &y| {
                if y <= 0.0 {
                    *d = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(delta).and(y).for_each(|d, &y| *d *= 1.0 - y * y),
            Activation::Identity => {}
        }
    }
}

/// Dense layer computing `act(x · W + b)` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Activations recorded by a batched forward pass: `values[0]` is the input,
/// `values[i + 1]` the output of layer `i`.
pub struct Tape {
    values: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("tape holds the input at least")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.values.pop().expect("tape holds the input at least")
    }
}

/// Parameter-shaped buffer: gradients, optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            *w *= k;
            *b *= k;
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.scaled_add(k, ow);
            b.scaled_add(k, ob);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Network {
    /// Builds an MLP with layer widths `dims` (input first). Hidden layers use
    /// `hidden`; the last layer uses `output`. Parameters are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output widths");
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound)),
                    bias: Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound)),
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Network { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Validates that adjacent layer shapes compose.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::Shape {
                    expected: pair[0].weight.ncols(),
                    actual: pair[1].weight.nrows(),
                });
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::Shape {
                    expected: l.weight.ncols(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut x = input.to_owned();
        for l in &self.layers {
            x = self.affine(l, x.view());
        }
        Ok(x)
    }

    pub fn forward_tape(&self, input: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(input.ncols())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_owned());
        for l in &self.layers {
            let y = self.affine(l, values.last().unwrap().view());
            values.push(y);
        }
        Ok(Tape { values })
    }

    fn affine(&self, l: &Layer, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&l.weight);
        z += &l.bias;
        l.activation.apply(&mut z);
        z
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: got,
            });
        }
        Ok(())
    }

    /// Reverse pass. `d_output` is the gradient of the (already batch-reduced)
    /// loss with respect to the network output. Returns parameter gradients
    /// (when requested) and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, d_output: Array2<f64>, param_grads: bool) -> (Option<Gradients>, Array2<f64>) {
        let mut grads = param_grads.then(|| Vec::with_capacity(self.layers.len()));
        let mut delta = d_output;
        for (i, l) in self.layers.iter().enumerate().rev() {
            l.activation.backprop(&tape.values[i + 1], &mut delta);
            if let Some(g) = grads.as_mut() {
                let gw = tape.values[i].t().dot(&delta);
                let gb = delta.sum_axis(Axis(0));
                g.push((gw, gb));
            }
            delta = delta.dot(&l.weight.t());
        }
        let grads = grads.map(|mut g| {
            g.reverse();
            Gradients { layers: g }
        });
        (grads, delta)
    }

    /// Mean-loss gradient. `loss` maps the batch output to per-sample losses
    /// and per-sample derivatives with respect to each output row.
    pub fn grad<F>(&self, input: ArrayView2<f64>, loss: F) -> Result<(f64, Gradients)>
    where
        F: FnOnce(&Array2<f64>) -> (Array1<f64>, Array2<f64>),
    {
        let tape = self.forward_tape(input)?;
        let (per_sample, mut d_out) = loss(tape.output());
        if let Some(index) = per_sample.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "network loss",
                index,
            });
        }
        let n = per_sample.len().max(1) as f64;
        d_out /= n;
        let (grads, _) = self.backward(&tape, d_out, true);
        Ok((per_sample.sum() / n, grads.expect("requested")))
    }

    /// Elementwise `self <- self + k * g`.
    pub fn add_scaled(&mut self, g: &Gradients, k: f64) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(&g.layers) {
            l.weight.scaled_add(k, gw);
            l.bias.scaled_add(k, gb);
        }
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&mut Array2<f64>, &mut Array1<f64>)> {
        self.layers.iter_mut().map(|l| (&mut l.weight, &mut l.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    fn single(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Network {
        Network {
            layers: vec![Layer {
                weight,
                bias,
                activation,
            }],
        }
    }

    #[test]
    fn identity_layer() {
        let net = single(Array2::eye(3), Array1::zeros(3), Activation::Identity);
        assert_eq!(net.forward(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn zero_weights_constant_bias() {
        let net = single(Array2::zeros((4, 1)), array![0.3], Activation::Identity);
        for x in [[0.0; 4], [1.0, -5.0, 2.0, 9.0]] {
            assert_eq!(net.forward(&x).unwrap(), vec![0.3]);
        }
    }

    #[test]
    fn relu_layer() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Relu);
        assert_eq!(net.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Relu);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 2, actual: 1 })));
    }

    #[test]
    fn quadratic_loss_closed_form() {
        // Linear net y = Xw + b; loss mean (y - t)^2; dL/dw = 2/N X^T (Xw + b - t).
        let w = array![[0.5], [-1.0], [2.0]];
        let b = array![0.1];
        let net = single(w.clone(), b.clone(), Activation::Identity);
        let x = array![[1.0, 2.0, 3.0], [0.5, -1.0, 0.0], [2.0, 0.0, -1.0], [0.0, 1.0, 1.0]];
        let t = array![1.0, -2.0, 0.5, 3.0];
        let (loss, g) = net
            .grad(x.view(), |y| {
                let r = &y.column(0) - &t;
                (r.mapv(|v| v * v), (&r * 2.0).insert_axis(Axis(1)))
            })
            .unwrap();
        let resid = x.dot(&w).column(0).to_owned() + b[0] - &t;
        let expected_w = x.t().dot(&resid) * (2.0 / 4.0);
        for (a, e) in g.layers[0].0.column(0).iter().zip(expected_w.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!((g.layers[0].1[0] - resid.sum() * 0.5).abs() < 1e-12);
        assert!((loss - resid.mapv(|v| v * v).mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_zero_gradient() {
        let mut rng = seeded(1);
        let net = Network::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let (loss, g) = net
            .grad(x.view(), |y| (Array1::zeros(y.nrows()), Array2::zeros(y.raw_dim())))
            .unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn non_finite_loss_reports_index() {
        let mut rng = seeded(1);
        let net = Network::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng);
        let x = Array2::zeros((4, 2));
        let err = net
            .grad(x.view(), |y| {
                let mut l = Array1::zeros(y.nrows());
                l[2] = f64::NAN;
                (l, Array2::zeros(y.raw_dim()))
            })
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2, .. }));
    }

    #[test]
    fn layer_shapes_compose() {
        let mut rng = seeded(0);
        let mut net = Network::new(&[4, 8, 8, 2], Activation::Relu, Activation::Tanh, &mut rng);
        assert_eq!((net.input_dim(), net.output_dim(), net.param_count()), (4, 2, 4 * 8 + 8 + 64 + 8 + 16 + 2));
        net.validate().unwrap();
        net.layers[1].weight = Array2::zeros((7, 8));
        assert!(net.validate().is_err());
    }
}
