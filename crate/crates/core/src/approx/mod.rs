//! Feed-forward function approximation: batched forward/backward passes,
//! Adam, Polyak-averaged targets and JSON checkpoints.

mod adam;
mod checkpoint;
mod network;
mod target;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use network::{Activation, Gradients, Layer, Network, Tape};
pub use target::TargetTracker;

use serde::{Deserialize, Serialize};

/// Architecture and optimizer settings shared by every network in a trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    /// Polyak coefficient for target networks.
    pub polyak: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: vec![256, 256],
            adam: AdamConfig::default(),
            polyak: 0.995,
        }
    }
}

impl NetConfig {
    pub fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect()
    }
}
