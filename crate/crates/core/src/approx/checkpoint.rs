//! JSON checkpoints: `{"layers":[{"w":[[...]],"b":[...],"act":"relu"},...],"optimizer":{...}}`.
//! `w` rows index the layer input. Floats are written in shortest
//! round-trip form, so save/load is exact.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::network::{Activation, Gradients, Layer, Network};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

#[derive(Serialize, Deserialize)]
struct MomentRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AdamRepr {
    #[serde(flatten)]
    config: AdamConfig,
    step: u64,
    m: Vec<MomentRepr>,
    v: Vec<MomentRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointRepr {
    layers: Vec<LayerRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<AdamRepr>,
}

/// A network plus (optionally) its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub optimizer: Option<Adam>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, what: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("ragged matrix in `{what}`")));
    }
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Config(format!("bad matrix in `{what}`: {e}")))
}

fn moments_repr(g: &Gradients) -> Vec<MomentRepr> {
    g.layers
        .iter()
        .map(|(w, b)| MomentRepr {
            w: rows(w),
            b: b.to_vec(),
        })
        .collect()
}

fn moments_from(reprs: Vec<MomentRepr>) -> Result<Gradients> {
    let layers = reprs
        .into_iter()
        .map(|m| Ok((from_rows(m.w, "optimizer moment")?, Array1::from(m.b))))
        .collect::<Result<_>>()?;
    Ok(Gradients { layers })
}

impl Checkpoint {
    pub fn new(network: Network, optimizer: Option<Adam>) -> Self {
        Checkpoint { network, optimizer }
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = CheckpointRepr {
            layers: self
                .network
                .layers
                .iter()
                .map(|l| LayerRepr {
                    w: rows(&l.weight),
                    b: l.bias.to_vec(),
                    act: l.activation,
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| AdamRepr {
                config: o.config,
                step: o.step,
                m: moments_repr(&o.first_moment),
                v: moments_repr(&o.second_moment),
            }),
        };
        Ok(serde_json::to_string(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: CheckpointRepr = serde_json::from_str(text)?;
        let layers = repr
            .layers
            .into_iter()
            .map(|l| {
                Ok(Layer {
                    weight: from_rows(l.w, "w")?,
                    bias: Array1::from(l.b),
                    activation: l.act,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let network = Network { layers };
        network.validate()?;
        let optimizer = repr
            .optimizer
            .map(|o| -> Result<Adam> {
                Ok(Adam {
                    config: o.config,
                    step: o.step,
                    first_moment: moments_from(o.m)?,
                    second_moment: moments_from(o.v)?,
                })
            })
            .transpose()?;
        Ok(Checkpoint { network, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Checkpoint::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn exact_round_trip_with_optimizer() {
        let mut rng = seeded(5);
        let mut net = Network::new(&[3, 7, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let mut opt = Adam::new(&net, AdamConfig::default());
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].0.fill(0.123_456_789_012_345_6);
        g.layers[1].1.fill(-3.3e-7);
        opt.step(&mut net, &g);
        let ck = Checkpoint::new(net, Some(opt));
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json().unwrap(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["layers"][0]["act"], "relu");
        assert_eq!(v["layers"][0]["w"].as_array().unwrap().len(), 3);
        assert_eq!(v["layers"][1]["b"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn rejects_mismatched_layers() {
        let bad = r#"{"layers":[{"w":[[1.0,2.0]],"b":[0.0,0.0],"act":"relu"},{"w":[[1.0]],"b":[0.0],"act":"identity"}]}"#;
        assert!(Checkpoint::from_json(bad).is_err());
        let ragged = r#"{"layers":[{"w":[[1.0,2.0],[1.0]],"b":[0.0,0.0],"act":"relu"}]}"#;
        assert!(Checkpoint::from_json(ragged).is_err());
    }
}
