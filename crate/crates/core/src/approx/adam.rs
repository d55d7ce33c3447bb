use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
}

impl Adam {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }

    /// Applies one descent step along `grads`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let layers = net
            .params_mut()
            .zip(&grads.layers)
            .zip(self.first_moment.layers.iter_mut().zip(self.second_moment.layers.iter_mut()));
        for (((w, b), (gw, gb)), ((mw, mb), (vw, vb))) in layers {
            let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            Zip::from(w).and(gw).and(mw).and(vw).for_each(update);
            Zip::from(b).and(gb).and(mb).and(vb).for_each(update);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{Activation, Layer};
    use ndarray::{array, Array1, Array2};

    fn scalar(w: f64) -> Network {
        Network {
            layers: vec![Layer {
                weight: array![[w]],
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            }],
        }
    }

    fn grad_of(g: f64) -> Gradients {
        Gradients {
            layers: vec![(array![[g]], Array1::zeros(1))],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar(0.7);
        let mut opt = Adam::new(&net, AdamConfig::default());
        opt.step(&mut net, &grad_of(0.0));
        assert_eq!(net.layers[0].weight[[0, 0]], 0.7);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        // m1 = 0.1, v1 = 0.001; bias-corrected m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
        let mut net = scalar(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut opt = Adam::new(&net, cfg);
        opt.step(&mut net, &grad_of(1.0));
        assert!((net.layers[0].weight[[0, 0]] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        for g in [2.0, -0.3] {
            let mut net = scalar(1.0);
            let mut opt = Adam::new(&net, AdamConfig::default());
            let mut prev = 1.0;
            for _ in 0..50 {
                opt.step(&mut net, &grad_of(g));
                let w = net.layers[0].weight[[0, 0]];
                assert!((w - prev) * g < 0.0);
                prev = w;
            }
        }
    }

    #[test]
    fn moments_match_parameter_shapes() {
        let mut rng = crate::rng::seeded(0);
        let net = Network::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let opt = Adam::new(&net, AdamConfig::default());
        let shapes = |g: &Gradients| g.layers.iter().map(|(w, b)| (w.dim(), b.dim())).collect::<Vec<_>>();
        let expected: Vec<_> = net.layers.iter().map(|l| (l.weight.dim(), l.bias.dim())).collect();
        assert_eq!(shapes(&opt.first_moment), expected);
        assert_eq!(shapes(&opt.second_moment), expected);
        let _: Array2<f64> = opt.first_moment.layers[0].0.clone();
    }
}
