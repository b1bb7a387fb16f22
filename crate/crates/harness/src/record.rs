use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikeforce::metrics::{self, MetricRecord};
use spikeforce::{Procedure, TrainConfig, TrainReport};

use crate::error::{HarnessError, Result};

/// Convergence threshold on the per-epoch MSE.
pub const TTC_THRESHOLD: f64 = 0.25;

/// Hex SHA-256 of the canonical JSON form of a resolved config.
pub fn fingerprint(config: &TrainConfig) -> String {
    let json = serde_json::to_vec(config).expect("configs serialise");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// One training run as stored in suite outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub procedure: Procedure,
    pub system: String,
    pub neurons: usize,
    pub coding: String,
    pub noise: f64,
    pub epochs: usize,
    #[serde(flatten)]
    pub metrics: MetricRecord,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

impl ResultRecord {
    pub fn from_report(config: &TrainConfig, report: &TrainReport) -> Result<Self> {
        let ttc = metrics::time_to_converge(&report.epoch_mse, TTC_THRESHOLD, true)?;
        let spikes: u64 = report.epoch_spikes.iter().sum();
        let duration = config.signal.duration * config.epochs as f64;
        let rate = metrics::avg_spike_rate(&[spikes], config.network.neurons, duration)?;
        Ok(Self {
            procedure: config.procedure,
            system: config.signal.kind.name().to_string(),
            neurons: config.network.neurons,
            coding: config.procedure.coding().name().to_string(),
            noise: config.input_noise,
            epochs: config.epochs,
            metrics: MetricRecord {
                mse: report.final_mse,
                ttc_epochs: ttc,
                avg_spike_rate: rate,
                fingerprint: fingerprint(config),
                seed: config.seed,
            },
            timestamp: chrono::Utc::now().to_rfc3339(),
        })
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| HarnessError::Run(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_every_field() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        b.network.ttfs.window += 1e-3;
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
    }
}
