use std::path::Path;

use super::variational::VariationalParams;
use crate::error::{check_len, Error, Result};
use crate::kv::{KvFile, KvWriter};
use crate::model::{DgmrfParams, LayerParams};
use crate::scalar::Scalar;

const HEADER: &str = "dgmrf-checkpoint v1";

/// Trained model and variational parameters with the graph they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub graph_hash: String,
    pub n_nodes: usize,
    pub seed: u64,
    pub iteration: usize,
    pub params: DgmrfParams<T>,
    pub vp: VariationalParams<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new(HEADER);
        w.put("layers", self.params.n_layers())
            .put("vi_layers", self.vp.vi_layers.len())
            .put("n", self.n_nodes)
            .put("graph_hash", &self.graph_hash)
            .put("seed", self.seed)
            .put("iteration", self.iteration);
        for (l, p) in self.params.layers.iter().enumerate() {
            w.put(&format!("layer.{l}.theta1"), p.theta1)
                .put(&format!("layer.{l}.theta2"), p.theta2)
                .put(&format!("layer.{l}.theta3"), p.theta3)
                .put(&format!("layer.{l}.bias"), p.bias);
        }
        w.put("theta_sigma", self.params.theta_sigma);
        for (l, p) in self.vp.vi_layers.iter().enumerate() {
            w.put(&format!("vi_layer.{l}.theta1"), p.theta1)
                .put(&format!("vi_layer.{l}.theta2"), p.theta2)
                .put(&format!("vi_layer.{l}.theta3"), p.theta3);
        }
        w.put_vec("nu", &self.vp.nu)
            .put_vec("log_xi", &self.vp.log_xi)
            .put_vec("log_tau", &self.vp.log_tau);
        w.finish().to_string()
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let n: usize = kv.require("n")?;
        let n_layers: usize = kv.require("layers")?;
        let n_vi: usize = kv.require("vi_layers")?;
        let layers = (0..n_layers)
            .map(|l| {
                Ok(LayerParams {
                    theta1: kv.require(&format!("layer.{l}.theta1"))?,
                    theta2: kv.require(&format!("layer.{l}.theta2"))?,
                    theta3: kv.require(&format!("layer.{l}.theta3"))?,
                    bias: kv.require(&format!("layer.{l}.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let vi_layers = (0..n_vi)
            .map(|l| {
                Ok(LayerParams {
                    theta1: kv.require(&format!("vi_layer.{l}.theta1"))?,
                    theta2: kv.require(&format!("vi_layer.{l}.theta2"))?,
                    theta3: kv.require(&format!("vi_layer.{l}.theta3"))?,
                    bias: T::zero(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let vec = |key: &str| -> Result<Vec<T>> {
            let v: Vec<T> = kv
                .get_vec(key)?
                .ok_or_else(|| Error::Validation(format!("checkpoint is missing '{key}'")))?;
            check_len(n, v.len())?;
            Ok(v)
        };
        Ok(Checkpoint {
            graph_hash: kv.require("graph_hash")?,
            n_nodes: n,
            seed: kv.require("seed")?,
            iteration: kv.require("iteration")?,
            params: DgmrfParams::new(layers, kv.require("theta_sigma")?)?,
            vp: VariationalParams {
                nu: vec("nu")?,
                log_xi: vec("log_xi")?,
                log_tau: vec("log_tau")?,
                vi_layers,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvFile::load(path)?)
    }
}
