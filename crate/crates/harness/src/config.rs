//! Experiment configuration files.
//!
//! A config is a TOML document with up to five sections:
//!
//! ```toml
//! [experiment]          # repeats, noise, output_dir, trace, notes_file
//! [train]               # procedure, epochs, alpha, seed, ...
//! [network]             # partial; merged over the defaults of the coding
//! [neuron]
//! [signal]              # kind, duration, start, ...
//! ```
//!
//! Every section is optional and unknown keys are rejected with their
//! line and column.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikeforce::network::NetworkParams;
use spikeforce::signals::parse_notes;
use spikeforce::trainer::EpochScoring;
use spikeforce::{Coding, NeuronParams, Procedure, SignalKind, SignalSpec, TrainConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Seeds per suite cell.
    pub repeats: usize,
    /// Gaussian input noise as a fraction of the input range.
    pub noise: f64,
    pub output_dir: PathBuf,
    /// Write the evaluation trace next to checkpoints and reports.
    pub trace: bool,
    /// Ode-to-Joy note sequence, one `<pitch> <quarter|half>` per line.
    pub notes_file: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { repeats: 5, noise: 0.0, output_dir: PathBuf::from("results"), trace: true, notes_file: None }
    }
}

/// Training settings; anything left out falls back to the procedure's
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub procedure: Option<Procedure>,
    pub epochs: Option<usize>,
    pub update_interval: Option<usize>,
    pub alpha: Option<f64>,
    pub alpha_recurrent: Option<f64>,
    pub seed: Option<u64>,
    pub warmup_fraction: Option<f64>,
    pub epoch_scoring: Option<EpochScoring>,
    pub divergence_factor: Option<f64>,
}

/// Shape of a config file, used for schema validation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    #[allow(dead_code)]
    network: Option<NetworkParams>,
    #[serde(default)]
    neuron: NeuronParams,
    #[serde(default)]
    signal: SignalSpec,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub repeats: Option<usize>,
    pub noise: Option<f64>,
    pub procedure: Option<Procedure>,
    pub system: Option<SignalKind>,
    pub neurons: Option<usize>,
    pub epochs: Option<usize>,
    pub coding: Option<Coding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub train: TrainSection,
    /// Keys given under `[network]`, applied over per-coding defaults.
    network: toml::Table,
    pub neuron: NeuronParams,
    pub signal: SignalSpec,
    /// Network size forced from the command line.
    neurons: Option<usize>,
    /// Whether the signal kind was chosen explicitly.
    system_set: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentSection::default(),
            train: TrainSection::default(),
            network: toml::Table::new(),
            neuron: NeuronParams::default(),
            signal: SignalSpec::default(),
            neurons: None,
            system_set: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path.display(), e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(notes) = cfg.experiment.notes_file.clone() {
            let notes = if notes.is_relative() { path.parent().unwrap_or(Path::new(".")).join(notes) } else { notes };
            let text = fs::read_to_string(&notes).map_err(|e| HarnessError::io(notes.display(), e))?;
            cfg.signal.notes = parse_notes(&text)?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: Document = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let network = match table.get("network") {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => toml::Table::new(),
        };
        let system_set = table.get("signal").and_then(|s| s.get("kind")).is_some();
        let cfg = Self {
            experiment: doc.experiment,
            train: doc.train,
            network,
            neuron: doc.neuron,
            signal: doc.signal,
            neurons: None,
            system_set,
        };
        cfg.check().map_err(|e| locate(e, text))?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.train.seed = Some(seed);
        }
        if let Some(out) = &o.out {
            self.experiment.output_dir = out.clone();
        }
        if let Some(r) = o.repeats {
            self.experiment.repeats = r;
        }
        if let Some(noise) = o.noise {
            self.experiment.noise = noise;
        }
        if let Some(p) = o.procedure {
            self.train.procedure = Some(p);
        }
        if let Some(coding) = o.coding {
            let current = self.procedure();
            if current.coding() != coding {
                self.train.procedure = Some(match coding {
                    Coding::Ttfs => Procedure::FullForceTtfs,
                    Coding::Rate => Procedure::FullForceRate,
                });
            }
        }
        if let Some(kind) = o.system {
            self.signal.kind = kind;
            self.system_set = true;
        }
        if let Some(n) = o.neurons {
            self.neurons = Some(n);
        }
        if let Some(e) = o.epochs {
            self.train.epochs = Some(e);
        }
        self.check()
    }

    pub fn procedure(&self) -> Procedure {
        self.train.procedure.unwrap_or(Procedure::FullForceRate)
    }

    pub fn seed(&self) -> u64 {
        self.train.seed.unwrap_or(0)
    }

    pub fn system_set(&self) -> bool {
        self.system_set
    }

    pub fn neurons_override(&self) -> Option<usize> {
        self.neurons
    }

    pub fn epochs_override(&self) -> Option<usize> {
        self.train.epochs
    }

    /// Network parameters for `coding`: its defaults, then `[network]`,
    /// then the command-line size.
    pub fn network_for(&self, coding: Coding) -> Result<NetworkParams> {
        let defaults = NetworkParams::for_coding(coding);
        let mut params = if self.network.is_empty() {
            defaults
        } else {
            let mut merged = toml::Table::try_from(defaults).map_err(|e| HarnessError::Config(e.to_string()))?;
            merge(&mut merged, &self.network);
            merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(format!("[network]: {e}")))?
        };
        if let Some(n) = self.neurons {
            params.neurons = n;
        }
        Ok(params)
    }

    /// The resolved training configuration for `procedure`.
    pub fn train_config_for(&self, procedure: Procedure) -> Result<TrainConfig> {
        let base = TrainConfig::for_procedure(procedure);
        let t = &self.train;
        let cfg = TrainConfig {
            procedure,
            epochs: t.epochs.unwrap_or(base.epochs),
            update_interval: t.update_interval.unwrap_or(base.update_interval),
            alpha: t.alpha.unwrap_or(base.alpha),
            alpha_recurrent: t.alpha_recurrent.or(base.alpha_recurrent),
            seed: t.seed.unwrap_or(base.seed),
            warmup_fraction: t.warmup_fraction.unwrap_or(base.warmup_fraction),
            epoch_scoring: t.epoch_scoring.unwrap_or(base.epoch_scoring),
            input_noise: self.experiment.noise,
            divergence_factor: t.divergence_factor.unwrap_or(base.divergence_factor),
            network: self.network_for(procedure.coding())?,
            neuron: self.neuron,
            signal: self.signal.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved training configuration of the configured procedure.
    pub fn train_config(&self) -> Result<TrainConfig> {
        self.train_config_for(self.procedure())
    }

    fn check(&self) -> Result<()> {
        if self.experiment.repeats == 0 {
            return Err(HarnessError::Config("experiment.repeats must be at least 1".into()));
        }
        if !(self.experiment.noise.is_finite() && self.experiment.noise >= 0.0) {
            return Err(HarnessError::Config(format!(
                "experiment.noise must be non-negative, got {}",
                self.experiment.noise
            )));
        }
        for coding in [Coding::Rate, Coding::Ttfs] {
            self.network_for(coding)?;
        }
        self.train_config()?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Adds the position of the first key named in a validation error.
fn locate(err: HarnessError, text: &str) -> HarnessError {
    let HarnessError::Config(msg) = err else { return err };
    let words = msg.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'));
    for word in words.filter(|w| !w.is_empty()) {
        let leaf = word.rsplit('.').next().unwrap_or(word);
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim_start();
            if let Some(rest) = trimmed.strip_prefix(leaf) {
                if rest.trim_start().starts_with('=') {
                    let col = line.len() - trimmed.len() + 1;
                    return HarnessError::Config(format!("{msg} (line {}, column {col})", i + 1));
                }
            }
        }
    }
    HarnessError::Config(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_uses_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.experiment.repeats, 5);
        let t = cfg.train_config().unwrap();
        assert_eq!(t, TrainConfig::for_procedure(Procedure::FullForceRate));
    }

    #[test]
    fn partial_network_merges_over_coding_defaults() {
        let cfg = ExperimentConfig::parse("[train]\nprocedure = \"full-force-ttfs\"\n[network]\nbias = 0.4\n[network.ttfs]\nwindow = 0.04\n").unwrap();
        let t = cfg.train_config().unwrap();
        let d = NetworkParams::for_coding(Coding::Ttfs);
        assert_eq!(t.network.bias, 0.4);
        assert_eq!(t.network.ttfs.window, 0.04);
        assert_eq!(t.network.ttfs.activity, d.ttfs.activity);
        assert_eq!(t.network.neurons, d.neurons);
        assert_eq!(t.network.rate_tau, d.rate_tau);
    }

    #[test]
    fn unknown_key_reports_position() {
        let err = ExperimentConfig::parse("[train]\nepochs = 3\nepoch = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 1);
        let err = ExperimentConfig::parse("[network]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected_with_position() {
        let err = ExperimentConfig::parse("[experiment]\nrepeats = 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = ExperimentConfig::parse("[train]\n\nepochs = 0\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ExperimentConfig::parse("[experiment]\nnoise = -0.1\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = ExperimentConfig::parse("[train]\nseed = 4\nepochs = 9\n[signal]\nkind = \"sine\"\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(11),
            epochs: Some(2),
            neurons: Some(50),
            system: Some(SignalKind::Triangle),
            coding: Some(Coding::Ttfs),
            ..Default::default()
        })
        .unwrap();
        let t = cfg.train_config().unwrap();
        assert_eq!((t.seed, t.epochs, t.network.neurons), (11, 2, 50));
        assert_eq!(t.signal.kind, SignalKind::Triangle);
        assert_eq!(t.procedure, Procedure::FullForceTtfs);
    }
}
