use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::prg::FusionMode;

/// Hyper-parameters of the model and its training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Width of every learned representation.
    pub d_shared: usize,
    /// Propagation depth on the connectivity graph and on the player–game graph.
    pub k_layers: usize,
    /// Propagation depth on each strict graph.
    pub sgc_layers: usize,
    /// Layer decay: layer `l` of `k` is pre-scaled by `1 − (k − l)·beta`.
    pub beta: f64,
    /// Negative-score reweighting intensity.
    pub m_nsr: f64,
    /// Weight of the squared-norm penalty over all parameters.
    pub lambda_norm: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Standard deviation of the initial embedding tables.
    pub init_std: f64,
    /// Description fusion; `None` trains without description embeddings.
    pub fusion: Option<FusionMode>,
    /// Hidden width of the alignment and integration MLPs.
    pub d_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_shared: 64,
            k_layers: 3,
            sgc_layers: 1,
            beta: 0.1,
            m_nsr: 1.0,
            lambda_norm: 1e-4,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 1024,
            seed: 0,
            init_std: 0.1,
            fusion: None,
            d_hidden: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.d_shared >= 1, InvalidArgument, "d_shared must be at least 1");
        ensure!(self.k_layers >= 1, InvalidArgument, "k_layers must be at least 1");
        ensure!(self.sgc_layers >= 1, InvalidArgument, "sgc_layers must be at least 1");
        layer_weights(self.k_layers, self.beta)?;
        ensure!(
            self.m_nsr >= 0.0 && self.m_nsr.is_finite(),
            InvalidArgument,
            "m_nsr must be finite and >= 0"
        );
        ensure!(
            self.lambda_norm >= 0.0 && self.lambda_norm.is_finite(),
            InvalidArgument,
            "lambda_norm must be finite and >= 0"
        );
        ensure!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            InvalidArgument,
            "learning_rate must be finite and >= 0"
        );
        ensure!(self.batch_size >= 1, InvalidArgument, "batch_size must be at least 1");
        ensure!(
            self.init_std > 0.0 && self.init_std.is_finite(),
            InvalidArgument,
            "init_std must be positive"
        );
        ensure!(self.d_hidden >= 1, InvalidArgument, "d_hidden must be at least 1");
        Ok(())
    }
}

/// `w_l = 1 − (k − l)·beta` for `l = 1..=k`; every weight must stay positive.
pub fn layer_weights(k: usize, beta: f64) -> Result<Vec<f64>> {
    ensure!(k >= 1, InvalidArgument, "at least one layer is required");
    ensure!(beta.is_finite() && beta >= 0.0, InvalidArgument, "beta must be finite and >= 0, got {beta}");
    let w: Vec<f64> = (1..=k).map(|l| 1.0 - (k - l) as f64 * beta).collect();
    ensure!(
        w[0] > 0.0,
        InvalidArgument,
        "beta = {beta} with k = {k} makes the first layer weight {} <= 0",
        w[0]
    );
    Ok(w)
}
