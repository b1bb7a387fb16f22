//! FORCE and full-FORCE training loops and closed-loop evaluation.
//!
//! Training walks one continuous signal timeline: epoch `k` covers
//! `[start + k·duration, start + (k+1)·duration)`. Trial-based tasks
//! (interval matching) instead replay the same trial every epoch, preceded
//! by a silent lead-in.
//!
//! Rate-coded readouts are fitted in the drive domain: the RLS error is
//! `Wᵀ·a - G⁻¹(f)`, which keeps the regression linear. Targets at the
//! bottom of the range only ask for a drive safely below rheobase.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics;
use crate::network::{init_weights, Architecture, Network, NetworkParams, Readout, TargetDrive, WeightSet};
use crate::neuron::{Coding, NeuronParams};
use crate::rls::RlsState;
use crate::seeds::derive_seed;
use crate::signals::{self, SignalKind, SignalSpec, SignalTrace};

const WEIGHT_STREAM: u64 = 1;
const STATE_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    ForceRate,
    FullForceRate,
    FullForceTtfs,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::ForceRate, Procedure::FullForceRate, Procedure::FullForceTtfs];

    pub fn architecture(&self) -> Architecture {
        match self {
            Procedure::ForceRate => Architecture::Force,
            _ => Architecture::FullForce,
        }
    }

    pub fn coding(&self) -> Coding {
        match self {
            Procedure::FullForceTtfs => Coding::Ttfs,
            _ => Coding::Rate,
        }
    }

    /// Identifier used in configs and on the command line.
    pub fn key(&self) -> &'static str {
        match self {
            Procedure::ForceRate => "force-rate",
            Procedure::FullForceRate => "full-force-rate",
            Procedure::FullForceTtfs => "full-force-ttfs",
        }
    }

    /// Column label used in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            Procedure::ForceRate => "FORCE-LIF-Rate",
            Procedure::FullForceRate => "full-FORCE-LIF-Rate",
            Procedure::FullForceTtfs => "full-FORCE-LIF-TTFS",
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Procedure::ALL
            .into_iter()
            .find(|p| p.key() == norm || p.label().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::config(format!("unknown procedure '{s}'")))
    }
}

/// How the per-epoch MSE is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EpochScoring {
    /// A fresh closed-loop evaluation after every epoch.
    #[default]
    ClosedLoop,
    /// The output recorded during the training pass itself.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub procedure: Procedure,
    pub epochs: usize,
    /// Simulation steps between RLS updates (rate coding).
    pub update_interval: usize,
    /// Regulariser of the readout RLS, `P(0) = I/α`.
    pub alpha: f64,
    /// Regulariser of the recurrent RLS; defaults to `alpha`, in which case
    /// both share one `P`.
    pub alpha_recurrent: Option<f64>,
    pub seed: u64,
    /// Leading fraction of every epoch run without weight updates.
    pub warmup_fraction: f64,
    pub epoch_scoring: EpochScoring,
    /// Gaussian input noise, as a fraction of the input range.
    pub input_noise: f64,
    /// Abort once any |Z| exceeds this multiple of the target range.
    pub divergence_factor: f64,
    pub network: NetworkParams,
    pub neuron: NeuronParams,
    pub signal: SignalSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            procedure: Procedure::FullForceRate,
            epochs: 50,
            update_interval: 2,
            alpha: 0.003,
            alpha_recurrent: None,
            seed: 0,
            warmup_fraction: 0.1,
            epoch_scoring: EpochScoring::ClosedLoop,
            input_noise: 0.0,
            divergence_factor: 1e3,
            network: NetworkParams::default(),
            neuron: NeuronParams::default(),
            signal: SignalSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for `procedure`, with network settings tuned for its coding.
    pub fn for_procedure(procedure: Procedure) -> Self {
        Self { procedure, network: NetworkParams::for_coding(procedure.coding()), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.update_interval == 0 {
            return Err(Error::config("update_interval must be at least 1"));
        }
        for (name, a) in [("alpha", Some(self.alpha)), ("alpha_recurrent", self.alpha_recurrent)] {
            if let Some(a) = a {
                if !(a.is_finite() && a > 0.0) {
                    return Err(Error::config(format!("{name} must be positive, got {a}")));
                }
            }
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config(format!("warmup_fraction must lie in [0, 1), got {}", self.warmup_fraction)));
        }
        if !(self.input_noise.is_finite() && self.input_noise >= 0.0) {
            return Err(Error::config(format!("input_noise must be non-negative, got {}", self.input_noise)));
        }
        if !(self.divergence_factor > 0.0) {
            return Err(Error::config("divergence_factor must be positive"));
        }
        self.neuron.validate()?;
        self.network.validate(&self.neuron)?;
        self.signal.validate()
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            warmup_fraction: self.warmup_fraction,
            input_noise: self.input_noise,
            divergence_factor: self.divergence_factor,
        }
    }

    /// Signal window of epoch `k`; `k = epochs` is the continuation used
    /// for the final evaluation.
    pub fn epoch_spec(&self, k: usize) -> SignalSpec {
        let mut spec = self.signal.clone();
        if spec.kind != SignalKind::IntervalMatch {
            spec.start += k as f64 * spec.duration;
        }
        spec
    }

    fn separate_recurrent_rls(&self) -> bool {
        matches!(self.alpha_recurrent, Some(a) if a != self.alpha)
    }
}

/// Everything needed to run a trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub weights: WeightSet,
    pub network: NetworkParams,
    pub neuron: NeuronParams,
    pub coding: Coding,
    /// Target range the rate readout is normalised to.
    pub target_range: (f64, f64),
    pub dt: f64,
}

impl Model {
    pub fn readout_map(&self) -> Result<Readout> {
        Readout::for_coding(self.coding, self.target_range, self.network.readout_rate_max, &self.neuron)
    }

    pub fn build(&self, state_seed: u64) -> Result<Network> {
        Network::new(
            self.weights.clone(),
            &self.network,
            &self.neuron,
            self.coding,
            self.readout_map()?,
            self.dt,
            state_seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub procedure: Procedure,
    pub system: SignalKind,
    pub neurons: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Per-epoch MSE under the configured scoring.
    pub epoch_mse: Vec<f64>,
    /// Per-epoch MSE of the training pass itself.
    pub epoch_training_mse: Vec<f64>,
    /// Task-network spikes per epoch.
    pub epoch_spikes: Vec<u64>,
    /// Target-network spikes per epoch (zero for FORCE).
    pub epoch_target_spikes: Vec<u64>,
    /// Closed-loop MSE of the trained network on the window after training.
    pub final_mse: f64,
    pub rls_updates: u64,
    /// Updates whose a-posteriori error failed to shrink.
    pub contraction_violations: u64,
    /// TTFS windows in which a neuron spiked more than once.
    pub window_violations: u64,
    pub target_range: (f64, f64),
    pub wall_time_s: f64,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub report: TrainReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub warmup_fraction: f64,
    pub input_noise: f64,
    pub divergence_factor: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { warmup_fraction: 0.1, input_noise: 0.0, divergence_factor: 1e3 }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Network output on the scored window; `f_out` holds Z.
    pub response: SignalTrace,
    /// The scored target window.
    pub target: SignalTrace,
    pub mse: f64,
    /// Task-network spikes over the scored window.
    pub spikes: u64,
}

/// Trains the readout of a fixed sparse reservoir with output feedback.
pub fn train_force(config: &TrainConfig) -> Result<Trained> {
    if config.procedure != Procedure::ForceRate {
        return Err(Error::config(format!("train_force cannot run {}", config.procedure)));
    }
    train(config)
}

/// Trains readout and recurrent weights against a target-generating
/// reservoir.
pub fn train_full_force(config: &TrainConfig) -> Result<Trained> {
    if config.procedure == Procedure::ForceRate {
        return Err(Error::config("train_full_force cannot run force-rate"));
    }
    train(config)
}

/// Runs whichever procedure `config` names.
pub fn train(config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let started = Instant::now();
    let traces = (0..config.epochs)
        .map(|k| epoch_trace(config, k))
        .collect::<Result<Vec<_>>>()?;
    let final_spec = config.epoch_spec(config.epochs);
    let target_range = {
        let mut range = signals::generate(&final_spec)?.target_range();
        for tr in &traces {
            let (lo, hi) = tr.target_range();
            range = (range.0.min(lo), range.1.max(hi));
        }
        range
    };
    let d_in = traces[0].input_channels();
    let d_out = traces[0].output_channels();

    let weights = init_weights(
        config.network.neurons,
        d_in,
        d_out,
        config.network.gain,
        config.network.sparsity,
        config.procedure.architecture(),
        derive_seed(config.seed, WEIGHT_STREAM),
    )?;
    let mut model = Model {
        weights,
        network: config.network,
        neuron: config.neuron,
        coding: config.procedure.coding(),
        target_range,
        dt: config.signal.dt,
    };
    let mut net = model.build(derive_seed(config.seed, STATE_STREAM))?;
    let mut trainer = Trainer::new(config, &net)?;

    let n = config.network.neurons;
    let mut report = TrainReport {
        procedure: config.procedure,
        system: config.signal.kind,
        neurons: n,
        epochs: config.epochs,
        seed: config.seed,
        epoch_mse: Vec::with_capacity(config.epochs),
        epoch_training_mse: Vec::with_capacity(config.epochs),
        epoch_spikes: Vec::with_capacity(config.epochs),
        epoch_target_spikes: Vec::with_capacity(config.epochs),
        final_mse: f64::NAN,
        rls_updates: 0,
        contraction_violations: 0,
        window_violations: 0,
        target_range,
        wall_time_s: 0.0,
    };

    let settings = EvalSettings { input_noise: 0.0, ..config.eval_settings() };
    for (k, trace) in traces.iter().enumerate() {
        let before = (net.task().total_spikes(), net.target().map_or(0, |t| t.total_spikes()));
        let training_mse = trainer.run_epoch(&mut net, trace)?;
        report.epoch_training_mse.push(training_mse);
        report.epoch_spikes.push(net.task().total_spikes() - before.0);
        report.epoch_target_spikes.push(net.target().map_or(0, |t| t.total_spikes()) - before.1);
        let scored = match config.epoch_scoring {
            EpochScoring::Training => training_mse,
            EpochScoring::ClosedLoop => {
                model.weights = net.weights();
                let spec = config.epoch_spec(k + 1);
                evaluate_with(&model, &spec, &settings, derive_seed(config.seed, EVAL_STREAM))?.mse
            }
        };
        report.epoch_mse.push(scored);
    }

    model.weights = net.weights();
    report.final_mse = match (config.epoch_scoring, report.epoch_mse.last()) {
        (EpochScoring::ClosedLoop, Some(&m)) => m,
        _ => final_evaluation(config, &model)?.mse,
    };
    report.rls_updates = trainer.updates;
    report.contraction_violations = trainer.contraction_violations;
    report.window_violations =
        net.task().window_violations() + net.target().map_or(0, |t| t.window_violations());
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(Trained { model, report })
}

/// Input/target trace of training epoch `k`, noise included.
pub fn epoch_trace(config: &TrainConfig, k: usize) -> Result<SignalTrace> {
    let spec = config.epoch_spec(k);
    let mut trace = signals::generate(&spec)?;
    if spec.kind == SignalKind::IntervalMatch {
        let lead = warmup_steps(config.warmup_fraction, trace.len());
        trace = prepend_silence(&trace, lead);
    }
    signals::add_noise(&trace, config.input_noise, derive_seed(config.seed, NOISE_STREAM + k as u64))
}

fn warmup_steps(fraction: f64, samples: usize) -> usize {
    (fraction * samples as f64).round() as usize
}

fn prepend_silence(trace: &SignalTrace, steps: usize) -> SignalTrace {
    if steps == 0 {
        return trace.clone();
    }
    let dt = trace.dt().max(f64::MIN_POSITIVE);
    let n = trace.len() + steps;
    let t0 = trace.t[0] - steps as f64 * dt;
    let shift = |m: &Matrix| Matrix::from_fn(n, m.cols(), |k, c| if k < steps { 0.0 } else { m.get(k - steps, c) });
    SignalTrace {
        t: (0..n).map(|k| t0 + k as f64 * dt).collect(),
        f_in: shift(&trace.f_in),
        f_out: shift(&trace.f_out),
    }
}

struct Trainer {
    procedure: Procedure,
    target_drive: TargetDrive,
    update_interval: usize,
    warmup_fraction: f64,
    divergence_limit: f64,
    readout_rls: RlsState,
    recurrent_rls: Option<RlsState>,
    updates: u64,
    contraction_violations: u64,
    // scratch
    teach: Vec<f64>,
    err_j: Vec<f64>,
    err_w: Vec<f64>,
    held_task: Vec<f64>,
    held_target: Vec<f64>,
    window_f: Vec<f64>,
    window_drive: Vec<f64>,
    window_len: usize,
}

impl Trainer {
    fn new(config: &TrainConfig, net: &Network) -> Result<Self> {
        let n = net.neurons();
        let d_out = net.output_dim();
        let full = config.procedure.architecture() == Architecture::FullForce;
        let recurrent_rls = if full && config.separate_recurrent_rls() {
            Some(RlsState::new(n, config.alpha_recurrent.unwrap_or(config.alpha))?)
        } else {
            None
        };
        Ok(Self {
            procedure: config.procedure,
            target_drive: config.network.target_drive,
            update_interval: config.update_interval,
            warmup_fraction: config.warmup_fraction,
            divergence_limit: config.divergence_factor * range_width(net),
            readout_rls: RlsState::new(n, config.alpha)?,
            recurrent_rls,
            updates: 0,
            contraction_violations: 0,
            teach: vec![0.0; n],
            err_j: vec![0.0; n],
            err_w: vec![0.0; d_out],
            held_task: net.task().activity().to_vec(),
            held_target: net.target().map_or_else(Vec::new, |t| t.activity().to_vec()),
            window_f: vec![0.0; d_out],
            window_drive: vec![0.0; d_out],
            window_len: 0,
        })
    }

    fn full_force(&self) -> bool {
        self.procedure.architecture() == Architecture::FullForce
    }

    /// One pass over `trace`; returns the MSE of the post-warm-up output.
    fn run_epoch(&mut self, net: &mut Network, trace: &SignalTrace) -> Result<f64> {
        let samples = trace.len();
        let warm = warmup_steps(self.warmup_fraction, samples);
        let ttfs = net.holds_latency_code();
        let d_out = net.output_dim();
        let mut sq_err = 0.0;
        let mut scored = 0usize;
        let mut since_update = 0usize;
        let mut drive = vec![0.0; d_out];

        for k in 0..samples {
            let f_in = trace.f_in.row(k);
            let f = trace.f_out.row(k);
            if self.full_force() {
                match self.target_drive {
                    TargetDrive::Fout => drive.copy_from_slice(f),
                    TargetDrive::Z => drive.copy_from_slice(net.z()),
                }
                net.step_target(f_in, &drive)?;
                net.step_task(f_in, false)?;
            } else {
                net.step_task(f_in, true)?;
            }
            check_divergence(net, self.divergence_limit)?;

            let training = k >= warm;
            if training {
                for (z, t) in net.z().iter().zip(f) {
                    sq_err += (z - t) * (z - t);
                }
                scored += d_out;
            }

            if ttfs {
                for o in 0..d_out {
                    self.window_f[o] += f[o];
                    self.window_drive[o] += drive[o];
                }
                self.window_len += 1;
                if net.window_closed() {
                    if training {
                        self.ttfs_update(net)?;
                    }
                    self.held_task.copy_from_slice(net.task().activity());
                    if let Some(t) = net.target() {
                        self.held_target.copy_from_slice(t.activity());
                    }
                    self.window_f.iter_mut().for_each(|v| *v = 0.0);
                    self.window_drive.iter_mut().for_each(|v| *v = 0.0);
                    self.window_len = 0;
                }
            } else if training {
                since_update += 1;
                if since_update == self.update_interval {
                    since_update = 0;
                    self.rate_update(net, f, &drive)?;
                }
            }
        }
        if scored == 0 {
            return Ok(f64::NAN);
        }
        Ok(sq_err / scored as f64)
    }

    fn rate_update(&mut self, net: &mut Network, f: &[f64], drive: &[f64]) -> Result<()> {
        let map = *net.readout_map();
        for (o, e) in self.err_w.iter_mut().enumerate() {
            *e = map.drive_error(net.readout_drive()[o], f[o]);
        }
        if self.full_force() {
            net.teaching_input(drive, &mut self.teach)?;
            for ((e, r), t) in self.err_j.iter_mut().zip(net.task().recurrent_input()).zip(&self.teach) {
                *e = r - t;
            }
        }
        let y = net.task().activity().to_vec();
        self.apply(net, &y)
    }

    fn ttfs_update(&mut self, net: &mut Network) -> Result<()> {
        let len = self.window_len.max(1) as f64;
        let map = *net.readout_map();
        let w = net.readout_weights();
        for o in 0..self.err_w.len() {
            let mean_f = self.window_f[o] / len;
            self.err_w[o] = map.drive_error(crate::neuron::dot(w.row(o), &self.held_task), mean_f);
        }
        if self.full_force() {
            let mean_drive: Vec<f64> = self.window_drive.iter().map(|d| d / len).collect();
            net.recurrent_product(&self.held_task, &mut self.err_j)?;
            net.target_recurrent_product(&self.held_target, &mut self.teach)?;
            let p = net.params();
            if p.recurrent_gain != 0.0 {
                net.feedback_weights()
                    .mul_vec_add(&mean_drive, p.feedback_gain / p.recurrent_gain, &mut self.teach);
            }
            for (e, t) in self.err_j.iter_mut().zip(&self.teach) {
                *e -= t;
            }
        }
        let y = self.held_task.clone();
        self.apply(net, &y)
    }

    fn apply(&mut self, net: &mut Network, y: &[f64]) -> Result<()> {
        let gain = self.readout_rls.update(y)?;
        if gain.denom < 1.0 && y.iter().any(|v| *v != 0.0) {
            self.contraction_violations += 1;
        }
        net.update_readout(&gain.gain, &self.err_w)?;
        if self.full_force() {
            match self.recurrent_rls.as_mut() {
                Some(rls) => {
                    let g = rls.update(y)?;
                    net.update_recurrent(&g.gain, &self.err_j)?;
                }
                None => net.update_recurrent(&gain.gain, &self.err_j)?,
            }
        }
        self.updates += 1;
        Ok(())
    }
}

fn range_width(net: &Network) -> f64 {
    match net.readout_map().range() {
        Some((lo, hi)) if hi > lo => hi - lo,
        _ => 1.0,
    }
}

fn check_divergence(net: &Network, limit: f64) -> Result<()> {
    for &z in net.z() {
        if !z.is_finite() || z.abs() > limit {
            return Err(Error::Divergence { time: net.time(), magnitude: z.abs(), limit });
        }
    }
    Ok(())
}

/// The closed-loop evaluation behind `TrainReport::final_mse`: the window
/// following the last training epoch, without input noise.
pub fn final_evaluation(config: &TrainConfig, model: &Model) -> Result<Evaluation> {
    let settings = EvalSettings { input_noise: 0.0, ..config.eval_settings() };
    evaluate_with(model, &config.epoch_spec(config.epochs), &settings, derive_seed(config.seed, EVAL_STREAM))
}

/// Like [`final_evaluation`] but with the configured input noise applied.
pub fn final_noisy_evaluation(config: &TrainConfig, model: &Model) -> Result<Evaluation> {
    evaluate_with(model, &config.epoch_spec(config.epochs), &config.eval_settings(), derive_seed(config.seed, EVAL_STREAM))
}

/// Closed-loop evaluation with default settings.
pub fn evaluate(model: &Model, spec: &SignalSpec, seed: u64) -> Result<Evaluation> {
    evaluate_with(model, spec, &EvalSettings::default(), seed)
}

/// Runs the trained task network on `spec`.
///
/// A lead-in of `warmup_fraction·duration` precedes the scored window. For
/// continuous signals it is the stretch of signal just before the window,
/// for trial tasks it is silence. During the lead-in the network is
/// teacher-forced: FORCE networks receive the target as feedback and
/// full-FORCE networks receive the target network's input in place of
/// their own recurrent input. Afterwards the network runs on its own, with
/// output feedback for FORCE and without for full-FORCE.
pub fn evaluate_with(model: &Model, spec: &SignalSpec, settings: &EvalSettings, seed: u64) -> Result<Evaluation> {
    if !model.weights.is_finite() {
        return Err(Error::numeric("model weights contain non-finite entries"));
    }
    let target = signals::generate(spec)?;
    let samples = target.len();
    let lead = warmup_steps(settings.warmup_fraction, samples);
    let lead_trace = if lead == 0 {
        None
    } else if spec.kind == SignalKind::IntervalMatch || spec.start < lead as f64 * spec.dt - 1e-12 {
        // trial tasks, and windows at the very start of the timeline, get a
        // silent lead-in
        let t0 = target.t[0] - lead as f64 * spec.dt;
        Some(SignalTrace {
            t: (0..lead).map(|k| t0 + k as f64 * spec.dt).collect(),
            f_in: Matrix::zeros(lead, target.input_channels()),
            f_out: Matrix::zeros(lead, target.output_channels()),
        })
    } else {
        let before = SignalSpec { start: spec.start - lead as f64 * spec.dt, duration: lead as f64 * spec.dt, ..spec.clone() };
        Some(signals::generate(&before)?)
    };

    let mut net = model.build(derive_seed(seed, STATE_STREAM))?;
    let limit = settings.divergence_factor * range_width(&net);
    let full = model.weights.architecture == Architecture::FullForce;
    let noise_seed = derive_seed(seed, NOISE_STREAM);

    if let Some(lead_trace) = lead_trace {
        let lead_trace = signals::add_noise(&lead_trace, settings.input_noise, noise_seed ^ 1)?;
        let mut teach = vec![0.0; net.neurons()];
        for k in 0..lead_trace.len() {
            let f_in = lead_trace.f_in.row(k);
            let f = lead_trace.f_out.row(k);
            if full {
                net.teaching_input(f, &mut teach)?;
                net.step_target(f_in, f)?;
                net.step_task_with(f_in, None, Some(&teach))?;
            } else {
                net.step_task_with(f_in, Some(f), None)?;
            }
            check_divergence(&net, limit)?;
        }
    }

    let input = signals::add_noise(&target, settings.input_noise, noise_seed)?;
    let spikes_before = net.task().total_spikes();
    let mut z = Matrix::zeros(samples, target.output_channels());
    for k in 0..samples {
        net.step_task(input.f_in.row(k), !full)?;
        check_divergence(&net, limit)?;
        z.row_mut(k).copy_from_slice(net.z());
    }
    let mse = metrics::mse(&z, &target.f_out)?;
    let response = SignalTrace { t: target.t.clone(), f_in: input.f_in, f_out: z };
    Ok(Evaluation { response, target, mse, spikes: net.task().total_spikes() - spikes_before })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(procedure: Procedure, kind: SignalKind) -> TrainConfig {
        TrainConfig {
            procedure,
            epochs: 2,
            seed: 3,
            epoch_scoring: EpochScoring::Training,
            network: NetworkParams { neurons: 60, ..Default::default() },
            signal: SignalSpec { duration: 1.0, ..SignalSpec::new(kind) },
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig { epochs: 0, ..small_config(Procedure::ForceRate, SignalKind::Sine) };
        assert!(matches!(train(&cfg), Err(Error::Config(_))));
        let cfg = TrainConfig { update_interval: 0, ..small_config(Procedure::ForceRate, SignalKind::Sine) };
        assert!(matches!(train(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn procedure_entry_points_check_procedure() {
        assert!(train_force(&small_config(Procedure::FullForceRate, SignalKind::Sine)).is_err());
        assert!(train_full_force(&small_config(Procedure::ForceRate, SignalKind::Sine)).is_err());
    }

    #[test]
    fn force_trains_only_the_readout() {
        let cfg = small_config(Procedure::ForceRate, SignalKind::Sine);
        let initial = init_weights(60, 1, 1, 1.5, 0.1, Architecture::Force, derive_seed(cfg.seed, WEIGHT_STREAM)).unwrap();
        let trained = train_force(&cfg).unwrap();
        let w = &trained.model.weights;
        assert_eq!(w.recurrent, initial.recurrent);
        assert_eq!(w.input, initial.input);
        assert_eq!(w.feedback, initial.feedback);
        assert_eq!(w.target_recurrent, initial.target_recurrent);
        assert_ne!(w.readout, initial.readout);
        assert_eq!(trained.report.epoch_mse.len(), 2);
        assert_eq!(trained.report.epoch_spikes.len(), 2);
        assert_eq!(trained.report.contraction_violations, 0);
    }

    #[test]
    fn full_force_trains_readout_and_recurrent_only() {
        let cfg = small_config(Procedure::FullForceRate, SignalKind::Sine);
        let initial = init_weights(60, 1, 1, 1.5, 0.1, Architecture::FullForce, derive_seed(cfg.seed, WEIGHT_STREAM)).unwrap();
        let trained = train_full_force(&cfg).unwrap();
        let w = &trained.model.weights;
        assert_eq!(w.input, initial.input);
        assert_eq!(w.feedback, initial.feedback);
        assert_eq!(w.target_recurrent, initial.target_recurrent);
        assert_ne!(w.recurrent, initial.recurrent);
        assert_ne!(w.readout, initial.readout);
        assert!(trained.report.epoch_target_spikes.iter().all(|s| *s > 0));
    }

    #[test]
    fn separate_recurrent_regulariser_is_supported() {
        let cfg = TrainConfig { alpha_recurrent: Some(5.0), ..small_config(Procedure::FullForceRate, SignalKind::Sine) };
        assert!(cfg.separate_recurrent_rls());
        train(&cfg).unwrap();
    }

    #[test]
    fn ttfs_training_respects_window_limit() {
        let cfg = small_config(Procedure::FullForceTtfs, SignalKind::SumOfSines);
        let trained = train(&cfg).unwrap();
        let r = &trained.report;
        assert_eq!(r.window_violations, 0);
        let windows = (1.0 / cfg.network.ttfs.window).round() as u64;
        for &s in &r.epoch_spikes {
            assert!(s <= windows * 60);
        }
        // one update per window after warm-up
        assert_eq!(r.rls_updates, 2 * (windows - 5));
    }

    #[test]
    fn filtered_ttfs_defaults_respect_window_limit() {
        let mut cfg = TrainConfig::for_procedure(Procedure::FullForceTtfs);
        cfg.epochs = 2;
        cfg.network.neurons = 60;
        cfg.signal = SignalSpec { duration: 1.0, ..SignalSpec::new(SignalKind::Sine) };
        let r = train(&cfg).unwrap().report;
        assert_eq!(r.window_violations, 0);
        // staggered windows: each neuron sees at most one extra partial window
        let windows = (2.0 / cfg.network.ttfs.window).round() as u64 + 1;
        assert!(r.epoch_spikes.iter().sum::<u64>() <= windows * 60);
        assert!(r.epoch_target_spikes.iter().sum::<u64>() <= windows * 60);
        // RLS runs on the rate-mode cadence
        assert_eq!(r.rls_updates, 2 * (900 / 2));
    }

    #[test]
    fn rate_update_count() {
        let cfg = small_config(Procedure::ForceRate, SignalKind::Sine);
        let r = train(&cfg).unwrap().report;
        assert_eq!(r.rls_updates, 2 * (900 / 2));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_config(Procedure::FullForceRate, SignalKind::ProductOfSines);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.report.epoch_mse, b.report.epoch_mse);
        assert_eq!(a.report.epoch_spikes, b.report.epoch_spikes);
    }

    #[test]
    fn untrained_rate_model_outputs_range_minimum() {
        let weights = init_weights(40, 1, 1, 1.5, 0.1, Architecture::Force, 1).unwrap();
        let model = Model {
            weights,
            network: NetworkParams { neurons: 40, ..Default::default() },
            neuron: NeuronParams::default(),
            coding: Coding::Rate,
            target_range: (-1.0, 1.0),
            dt: 1e-3,
        };
        let spec = SignalSpec::new(SignalKind::Sine);
        let ev = evaluate(&model, &spec, 4).unwrap();
        assert!(ev.response.f_out.as_slice().iter().all(|z| *z == -1.0));
        let expected: f64 =
            ev.target.f_out.as_slice().iter().map(|f| (f + 1.0).powi(2)).sum::<f64>() / ev.target.len() as f64;
        assert!((ev.mse - expected).abs() < 1e-12);
        assert_eq!(ev.response.len(), 5000);
    }

    #[test]
    fn untrained_linear_model_scores_target_power() {
        let weights = init_weights(40, 1, 1, 1.5, 0.1, Architecture::FullForce, 1).unwrap();
        let model = Model {
            weights,
            network: NetworkParams { neurons: 40, ..Default::default() },
            neuron: NeuronParams::default(),
            coding: Coding::Ttfs,
            target_range: (-1.0, 1.0),
            dt: 1e-3,
        };
        let ev = evaluate(&model, &SignalSpec::new(SignalKind::Sine), 4).unwrap();
        let power: f64 = ev.target.f_out.as_slice().iter().map(|f| f * f).sum::<f64>() / ev.target.len() as f64;
        assert!((ev.mse - power).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let trained = train(&small_config(Procedure::FullForceRate, SignalKind::Sine)).unwrap();
        let spec = trained_spec();
        let a = evaluate(&trained.model, &spec, 9).unwrap();
        let b = evaluate(&trained.model, &spec, 9).unwrap();
        assert_eq!(a.mse, b.mse);
        assert_eq!(a.response, b.response);
    }

    fn trained_spec() -> SignalSpec {
        SignalSpec { duration: 1.0, start: 2.0, ..SignalSpec::new(SignalKind::Sine) }
    }

    #[test]
    fn divergence_is_reported() {
        let mut weights = init_weights(30, 1, 1, 1.5, 0.1, Architecture::FullForce, 1).unwrap();
        weights.readout = Matrix::from_fn(1, 30, |_, _| 1e9);
        let model = Model {
            weights,
            network: NetworkParams { neurons: 30, ..Default::default() },
            neuron: NeuronParams::default(),
            coding: Coding::Ttfs,
            target_range: (-1.0, 1.0),
            dt: 1e-3,
        };
        let r = evaluate(&model, &SignalSpec::new(SignalKind::Sine), 0);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn interval_epochs_have_silent_lead_in() {
        let cfg = TrainConfig {
            signal: SignalSpec { interval: 0.1, ..SignalSpec::new(SignalKind::IntervalMatch) },
            ..small_config(Procedure::ForceRate, SignalKind::IntervalMatch)
        };
        let tr = epoch_trace(&cfg, 0).unwrap();
        let trial = signals::interval_task(0.1, &cfg.signal).unwrap();
        assert_eq!(tr.len(), trial.len() + 500);
        assert!(tr.f_in.as_slice()[..500].iter().all(|v| *v == 0.0));
        assert_eq!(tr.f_out.get(500 + 400, 0), trial.f_out.get(400, 0));
    }

    #[test]
    fn procedure_names_round_trip() {
        for p in Procedure::ALL {
            assert_eq!(p.key().parse::<Procedure>().unwrap(), p);
            assert_eq!(p.label().parse::<Procedure>().unwrap(), p);
        }
        assert!("backprop".parse::<Procedure>().is_err());
    }
}
