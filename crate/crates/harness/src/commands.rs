use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spikeforce::checkpoint;
use spikeforce::trainer::{final_evaluation, final_noisy_evaluation, Evaluation, Model};
use spikeforce::{train, TrainConfig, TrainReport};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output;
use crate::record::{self, ResultRecord};
use crate::suites::{self, BenchOptions, Suite, SuiteFiles, SuiteResult};

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub report: PathBuf,
    pub trace: Option<PathBuf>,
    pub record: ResultRecord,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    record: &'a ResultRecord,
    report: &'a TrainReport,
    config: &'a TrainConfig,
}

fn stem(config: &TrainConfig) -> String {
    format!("{}-{}-n{}-s{}", config.procedure.key(), config.signal.kind.name(), config.network.neurons, config.seed)
}

/// Trains once and writes a checkpoint, a JSON report and the closed-loop
/// evaluation trace.
pub fn train_cmd(cfg: &ExperimentConfig) -> Result<TrainOutputs> {
    let config = cfg.train_config()?;
    let trained = train(&config)?;
    let record = ResultRecord::from_report(&config, &trained.report)?;
    let dir = &cfg.experiment.output_dir;
    let stamp = output::timestamp();
    let stem = stem(&config);

    let (ckpt, file) = output::create_unique(dir, &stem, &stamp, ".ckpt")?;
    checkpoint::write(&trained.model, file)?;
    let json = record::to_json(&ReportFile { record: &record, report: &trained.report, config: &config })?;
    let report = output::write_new(dir, &stem, &stamp, "-report.json", json.as_bytes())?;
    let trace = if cfg.experiment.trace {
        let eval = final_evaluation(&config, &trained.model)?;
        let (path, file) = output::create_unique(dir, &stem, &stamp, "-trace.csv")?;
        output::write_trace(&eval, file)?;
        Some(path)
    } else {
        None
    };
    Ok(TrainOutputs { checkpoint: ckpt, report, trace, record })
}

/// Evaluates a checkpoint on the window that follows training under `cfg`.
pub fn evaluate_checkpoint(path: &Path, cfg: &ExperimentConfig) -> Result<(Model, Evaluation)> {
    let model = checkpoint::load(path)?;
    let mut config = cfg.train_config_for(procedure_of(&model))?;
    config.network = model.network;
    config.neuron = model.neuron;
    config.input_noise = cfg.experiment.noise;
    let eval = if config.input_noise > 0.0 {
        final_noisy_evaluation(&config, &model)?
    } else {
        final_evaluation(&config, &model)?
    };
    Ok((model, eval))
}

fn procedure_of(model: &Model) -> spikeforce::Procedure {
    use spikeforce::network::Architecture;
    use spikeforce::{Coding, Procedure};
    match (model.weights.architecture, model.coding) {
        (Architecture::Force, _) => Procedure::ForceRate,
        (Architecture::FullForce, Coding::Rate) => Procedure::FullForceRate,
        (Architecture::FullForce, Coding::Ttfs) => Procedure::FullForceTtfs,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub checkpoint: PathBuf,
    pub system: String,
    pub mse: f64,
    pub spikes: u64,
    pub noise: f64,
    pub seed: u64,
}

pub fn eval_cmd(path: &Path, cfg: &ExperimentConfig) -> Result<EvalSummary> {
    let (_, eval) = evaluate_checkpoint(path, cfg)?;
    Ok(EvalSummary {
        checkpoint: path.to_path_buf(),
        system: cfg.signal.kind.name().to_string(),
        mse: eval.mse,
        spikes: eval.spikes,
        noise: cfg.experiment.noise,
        seed: cfg.seed(),
    })
}

/// Writes the `t,f_out_*,z_*` trace of a checkpoint to `out`.
pub fn export_trace_cmd(path: &Path, cfg: &ExperimentConfig, out: &Path) -> Result<f64> {
    let (_, eval) = evaluate_checkpoint(path, cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent.display(), e))?;
    }
    let file = fs::File::create(out).map_err(|e| HarnessError::io(out.display(), e))?;
    output::write_trace(&eval, file)?;
    Ok(eval.mse)
}

pub fn bench_cmd(suite: Suite, opts: &BenchOptions) -> Result<(SuiteResult, SuiteFiles)> {
    let result = suites::run(suite, opts)?;
    let files = suites::write(&result, &opts.config.experiment.output_dir)?;
    Ok((result, files))
}
