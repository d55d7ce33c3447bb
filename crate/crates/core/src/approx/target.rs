use ndarray::Zip;

use super::network::Network;
use crate::error::{Error, Result};

/// Slow-moving copy of a network used for bootstrapped targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTracker {
    pub shadow: Network,
    pub rho: f64,
}

impl TargetTracker {
    pub fn new(source: &Network, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("polyak coefficient {rho} outside [0,1]")));
        }
        Ok(TargetTracker {
            shadow: source.clone(),
            rho,
        })
    }

    /// `shadow <- rho * shadow + (1 - rho) * source`.
    pub fn update(&mut self, source: &Network) {
        let rho = self.rho;
        for (s, src) in self.shadow.layers.iter_mut().zip(&source.layers) {
            debug_assert_eq!(s.weight.dim(), src.weight.dim());
            Zip::from(&mut s.weight)
                .and(&src.weight)
                .for_each(|a, &b| *a = rho * *a + (1.0 - rho) * b);
            Zip::from(&mut s.bias)
                .and(&src.bias)
                .for_each(|a, &b| *a = rho * *a + (1.0 - rho) * b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{Activation, Layer};
    use ndarray::array;

    fn scalar(w: f64) -> Network {
        Network {
            layers: vec![Layer {
                weight: array![[w]],
                bias: array![w],
                activation: Activation::Identity,
            }],
        }
    }

    #[test]
    fn polyak_extremes_and_mix() {
        let src = scalar(1.0);
        let mut t = TargetTracker::new(&scalar(0.0), 0.0).unwrap();
        t.update(&src);
        assert_eq!(t.shadow, src);

        let mut t = TargetTracker::new(&scalar(0.0), 1.0).unwrap();
        t.update(&src);
        assert_eq!(t.shadow, scalar(0.0));

        let mut t = TargetTracker::new(&scalar(0.0), 0.9).unwrap();
        t.update(&src);
        assert!((t.shadow.layers[0].weight[[0, 0]] - 0.1).abs() < 1e-15);
        assert!((t.shadow.layers[0].bias[0] - 0.1).abs() < 1e-15);

        assert!(TargetTracker::new(&src, 1.5).is_err());
    }
}
