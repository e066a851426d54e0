//! Stochastic policy network over the inventory-days grid.

pub mod features;
mod net;
mod sample;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use features::{build_features, forecast_target, FeatureConfig, FeatureVector, Standardizer};
pub use net::{argmax, kl_standard_normal, log_softmax, softmax, Cache, Dense, Input, Layout, NetConfig, PolicyNet, Seeds, STREAM_NAMES};
pub use sample::{categorical_kl, draw_noise, sample_action, ActionSample};
pub use train::{
    batch_gradient, example_losses, grad_check, pretrain, Example, GradCheckReport, LossWeights, Rmsprop, Stage,
    StageConfig, TrainLogRow, TrainSchedule,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged in {stage:?} epoch {epoch}: {detail}")]
    Diverged { stage: Stage, epoch: usize, detail: String },
    #[error("model file: {0}")]
    Model(String),
}

pub const MODEL_FORMAT: &str = "replen-policy";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    param_count: usize,
    net: PolicyNet,
}

impl PolicyNet {
    /// Serializes config, standardization constants and parameters.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            param_count: self.params.len(),
            net: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    /// Loads a model, failing on any format, version or shape mismatch.
    pub fn from_json(text: &str) -> Result<PolicyNet, PolicyError> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| PolicyError::Model(e.to_string()))?;
        let format = probe.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if format != MODEL_FORMAT {
            return Err(PolicyError::Model(format!("format `{format}` is not `{MODEL_FORMAT}`")));
        }
        let version = probe.get("version").and_then(|v| v.as_u64());
        if version != Some(MODEL_VERSION as u64) {
            return Err(PolicyError::Model(format!("version {version:?} unsupported, expected {MODEL_VERSION}")));
        }
        let file: ModelFile = serde_json::from_value(probe).map_err(|e| PolicyError::Model(e.to_string()))?;
        let mut net = file.net;
        crate::sim::CandidateGrid::new(net.config.grid.min_days, net.config.grid.max_days)
            .map_err(|e| PolicyError::Model(e.to_string()))?;
        if [net.config.hidden, net.config.embed, net.config.forecast_hidden, net.config.latent].contains(&0)
            || net.config.hidden.max(net.config.embed).max(net.config.latent).max(net.config.forecast_hidden) > 4096
            || net.config.grid.len() > 4096
        {
            return Err(PolicyError::Model("network dimensions out of range".into()));
        }
        let expected = Layout::new(&net.config).total;
        if net.params.len() != expected || file.param_count != expected {
            return Err(PolicyError::Model(format!(
                "{} parameters stored ({} declared), config needs {expected}",
                net.params.len(),
                file.param_count
            )));
        }
        if net.params.iter().any(|x| !x.is_finite()) {
            return Err(PolicyError::Model("non-finite parameter".into()));
        }
        for s in 0..3 {
            let w = features::STREAM_WIDTHS[s];
            if net.stats.mean[s].len() != w || net.stats.std[s].len() != w {
                return Err(PolicyError::Model(format!("standardizer for stream {} has wrong width", STREAM_NAMES[s])));
            }
            if net.stats.std[s].iter().chain(&net.stats.mean[s]).any(|x| !x.is_finite()) || net.stats.std[s].contains(&0.0) {
                return Err(PolicyError::Model("invalid standardizer constants".into()));
            }
        }
        net.rebuild_layout();
        Ok(net)
    }

    /// SHA-256 of the parameter bytes.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_range(&self, range: std::ops::Range<usize>) -> String {
        let mut h = Sha256::new();
        for p in &self.params[range] {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
