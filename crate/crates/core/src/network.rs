//! Task-performing and target-generating LIF reservoirs.
//!
//! Every neuron receives, in units of its rheobase,
//!
//! ```text
//! bias + recurrent_gain·(J·a) + feedback_gain·(U_o·z) + input_gain·(U_i·f_in)
//! ```
//!
//! where `a` is the activity vector. Under rate coding `a` is the
//! exponentially filtered spike rate times a fixed 1 ms reference interval;
//! under TTFS coding it is the latency code of the last completed window.
//!
//! `J·a` is maintained incrementally: rate activity only decays and jumps at
//! spikes, so each step costs one decay plus one column add per spike rather
//! than a dense product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, Matrix, SparseColumns};
use crate::neuron::{self, dot, Coding, NeuronParams, NeuronState, TtfsActivity, TtfsParams};

/// Reference interval converting rates (Hz) to dimensionless activity.
pub const ACTIVITY_INTERVAL: f64 = 1e-3;

/// Drive below rheobase (in rheobase units) asked of a silent rate readout.
pub const SILENCE_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Fixed sparse reservoir; only the readout is trained.
    Force,
    /// Dense trained reservoir taught by a target-generating network.
    FullForce,
}

/// Signal that drives the target-generating network through `U_o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetDrive {
    /// The target trace itself.
    #[default]
    Fout,
    /// The task network's live output.
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub neurons: usize,
    /// Spectral scale of the random recurrent weights.
    pub gain: f64,
    /// Connection probability of the fixed FORCE reservoir.
    pub sparsity: f64,
    /// Constant drive in units of rheobase.
    pub bias: f64,
    pub recurrent_gain: f64,
    pub feedback_gain: f64,
    pub input_gain: f64,
    /// Rate-estimator time constant (s).
    pub rate_tau: f64,
    /// Readout rate that corresponds to the top of the target range (Hz).
    pub readout_rate_max: f64,
    pub target_drive: TargetDrive,
    pub ttfs: TtfsParams,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            neurons: 1000,
            gain: 1.5,
            sparsity: 0.1,
            bias: 1.0,
            recurrent_gain: 15.0,
            feedback_gain: 2.0,
            input_gain: 1.0,
            rate_tau: 0.05,
            readout_rate_max: 250.0,
            target_drive: TargetDrive::Fout,
            ttfs: TtfsParams::default(),
        }
    }
}

impl NetworkParams {
    /// Defaults tuned for each coding. TTFS runs on a smaller network with
    /// staggered 50 ms windows, a slower rate filter and a weaker bias.
    pub fn for_coding(coding: Coding) -> Self {
        match coding {
            Coding::Rate => Self::default(),
            Coding::Ttfs => Self {
                neurons: 200,
                bias: 0.2,
                rate_tau: 0.25,
                ttfs: TtfsParams {
                    window: 0.05,
                    reset_membrane: false,
                    activity: TtfsActivity::Filtered,
                    ..TtfsParams::default()
                },
                ..Self::default()
            },
        }
    }

    pub fn validate(&self, neuron: &NeuronParams) -> Result<()> {
        if self.neurons == 0 {
            return Err(Error::config("network needs at least one neuron"));
        }
        check_gain_sparsity(self.gain, self.sparsity)?;
        let finite = [
            ("bias", self.bias),
            ("recurrent_gain", self.recurrent_gain),
            ("feedback_gain", self.feedback_gain),
            ("input_gain", self.input_gain),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("network {name} must be finite, got {v}")));
            }
        }
        if !(self.rate_tau.is_finite() && self.rate_tau > 0.0) {
            return Err(Error::config(format!("rate_tau must be positive, got {}", self.rate_tau)));
        }
        if !(self.readout_rate_max > 0.0 && self.readout_rate_max < neuron.max_rate()) {
            return Err(Error::config(format!(
                "readout_rate_max must lie in (0, {}) Hz, got {}",
                neuron.max_rate(),
                self.readout_rate_max
            )));
        }
        self.ttfs.validate()
    }
}

fn check_gain_sparsity(gain: f64, sparsity: f64) -> Result<()> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::config(format!("gain must be positive, got {gain}")));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::config(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    Ok(())
}

/// All weight blocks of one experiment.
///
/// `recurrent` and `target_recurrent` are N×N with row `i` holding the
/// incoming weights of neuron `i`. `readout` is stored as d_out×N so each
/// output's weights are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub architecture: Architecture,
    pub seed: u64,
    /// U_i, N×d_in.
    pub input: Matrix,
    /// J, N×N.
    pub recurrent: Matrix,
    /// J_D, N×N, never trained.
    pub target_recurrent: Matrix,
    /// Wᵀ, d_out×N.
    pub readout: Matrix,
    /// U_o, N×d_out.
    pub feedback: Matrix,
}

impl WeightSet {
    pub fn neurons(&self) -> usize {
        self.recurrent.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.readout.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.neurons();
        check_dim("J columns", n, self.recurrent.cols())?;
        check_dim("J_D rows", n, self.target_recurrent.rows())?;
        check_dim("J_D columns", n, self.target_recurrent.cols())?;
        check_dim("U_i rows", n, self.input.rows())?;
        check_dim("readout columns", n, self.readout.cols())?;
        check_dim("U_o rows", n, self.feedback.rows())?;
        check_dim("U_o columns", self.output_dim(), self.feedback.cols())?;
        if !self.is_finite() {
            return Err(Error::numeric("weight set contains non-finite entries"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        [&self.input, &self.recurrent, &self.target_recurrent, &self.readout, &self.feedback]
            .iter()
            .all(|m| m.is_finite())
    }
}

/// Draws a fresh weight set. Each block uses its own stream of the seed so
/// that changing one block's shape leaves the others untouched.
pub fn init_weights(
    n: usize,
    d_in: usize,
    d_out: usize,
    gain: f64,
    sparsity: f64,
    architecture: Architecture,
    seed: u64,
) -> Result<WeightSet> {
    if n == 0 || d_in == 0 || d_out == 0 {
        return Err(Error::config(format!("weight dimensions must be positive, got n={n} d_in={d_in} d_out={d_out}")));
    }
    check_gain_sparsity(gain, sparsity)?;
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        rng
    };
    let uniform = Uniform::new_inclusive(-1.0, 1.0).expect("valid bounds");
    let mut rng = stream(1);
    let input = Matrix::from_fn(n, d_in, |_, _| uniform.sample(&mut rng));
    let mut rng = stream(2);
    let feedback = Matrix::from_fn(n, d_out, |_, _| uniform.sample(&mut rng));

    let dense = Normal::new(0.0, gain / (n as f64).sqrt()).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = stream(3);
    let target_recurrent = Matrix::from_fn(n, n, |_, _| dense.sample(&mut rng));

    let mut rng = stream(4);
    let recurrent = match architecture {
        Architecture::FullForce => Matrix::from_fn(n, n, |_, _| dense.sample(&mut rng)),
        Architecture::Force => {
            let sparse = Normal::new(0.0, gain / (sparsity * n as f64).sqrt())
                .map_err(|e| Error::config(e.to_string()))?;
            Matrix::from_fn(n, n, |_, _| {
                let keep = rng.random::<f64>() < sparsity;
                let w = sparse.sample(&mut rng);
                if keep { w } else { 0.0 }
            })
        }
    };

    Ok(WeightSet {
        architecture,
        seed,
        input,
        recurrent,
        target_recurrent,
        readout: Matrix::zeros(d_out, n),
        feedback,
    })
}

/// Map between the readout drive `Wᵀ·a` and the output `Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Readout {
    /// `Z = Wᵀ·a`.
    Linear,
    /// `Z = lo + (hi - lo)·G(I_rh·Wᵀ·a)/rate_max`: a rate-coded readout
    /// neuron whose silence maps to the bottom of the target range.
    Rate { lo: f64, hi: f64, rate_max: f64, neuron: NeuronParams },
}

impl Readout {
    pub fn for_coding(coding: Coding, target_range: (f64, f64), rate_max: f64, neuron: &NeuronParams) -> Result<Self> {
        match coding {
            Coding::Ttfs => Ok(Readout::Linear),
            Coding::Rate => {
                let (lo, mut hi) = target_range;
                if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                    return Err(Error::numeric(format!("invalid target range ({lo}, {hi})")));
                }
                if hi == lo {
                    hi = lo + 1.0;
                }
                if !(rate_max > 0.0 && rate_max < neuron.max_rate()) {
                    return Err(Error::config(format!("readout rate_max {rate_max} outside (0, {})", neuron.max_rate())));
                }
                Ok(Readout::Rate { lo, hi, rate_max, neuron: *neuron })
            }
        }
    }

    /// Output for readout drive `u`.
    pub fn output(&self, u: f64) -> f64 {
        match *self {
            Readout::Linear => u,
            Readout::Rate { lo, hi, rate_max, neuron } => {
                let i_rh = neuron.rheobase();
                let rate = neuron::firing_rate(u * i_rh, &neuron).unwrap_or(f64::NAN);
                lo + (hi - lo) * rate / rate_max
            }
        }
    }

    /// Drive whose output equals `f`, clamped into the representable range.
    pub fn drive_for(&self, f: f64) -> f64 {
        match *self {
            Readout::Linear => f,
            Readout::Rate { lo, hi, rate_max, neuron } => {
                let rate = (rate_max * (f - lo) / (hi - lo)).clamp(0.0, rate_max);
                neuron::current_for_rate(rate, &neuron).expect("rate below saturation") / neuron.rheobase()
            }
        }
    }

    /// RLS error of drive `u` against target `f`.
    ///
    /// A rate readout is silent for any drive below rheobase, so a target
    /// at the bottom of the range is one-sided: drives under
    /// `1 - SILENCE_MARGIN` cost nothing. Near rheobase the rate curve is
    /// nearly vertical and a two-sided fit there turns small errors into
    /// spurious output.
    pub fn drive_error(&self, u: f64, f: f64) -> f64 {
        match *self {
            Readout::Rate { lo, .. } if f <= lo => (u - (1.0 - SILENCE_MARGIN)).max(0.0),
            _ => u - self.drive_for(f),
        }
    }

    /// `(lo, hi)` of the normalised output, if any.
    pub fn range(&self) -> Option<(f64, f64)> {
        match *self {
            Readout::Linear => None,
            Readout::Rate { lo, hi, .. } => Some((lo, hi)),
        }
    }
}

#[derive(Debug, Clone)]
enum Coupling {
    /// Row `j` holds column `j` of the weight matrix.
    Dense(Matrix),
    Sparse(SparseColumns),
}

impl Coupling {
    fn from_matrix(m: &Matrix, sparse: bool) -> Self {
        if sparse {
            Coupling::Sparse(SparseColumns::from_dense(m))
        } else {
            Coupling::Dense(m.transpose())
        }
    }

    fn to_matrix(&self) -> Matrix {
        match self {
            Coupling::Dense(t) => t.transpose(),
            Coupling::Sparse(s) => s.to_dense(),
        }
    }

    fn add_column(&self, j: usize, scale: f64, out: &mut [f64]) {
        match self {
            Coupling::Dense(t) => axpy(scale, t.row(j), out),
            Coupling::Sparse(s) => s.add_column(j, scale, out),
        }
    }

    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Coupling::Dense(t) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        axpy(xj, t.row(j), out);
                    }
                }
            }
            Coupling::Sparse(s) => s.mul_vec_into(x, out),
        }
    }
}

/// Neuron states plus rate and activity traces of one reservoir.
#[derive(Debug, Clone)]
pub struct Population {
    neurons: Vec<NeuronState>,
    /// Exponentially filtered spike rate (Hz).
    rates: Vec<f64>,
    activity: Vec<f64>,
    /// `J·a`, kept in step with `activity`.
    recurrent: Vec<f64>,
    spike_counts: Vec<u64>,
    window_spikes: Vec<u32>,
    window_violations: u64,
    /// Per-neuron TTFS window clock at rest; all zero unless windows are staggered.
    phases: Vec<f64>,
    spiked: Vec<usize>,
    steps: u64,
    window_closed: bool,
}

impl Population {
    fn new(n: usize, neuron: &NeuronParams, phases: Vec<f64>, rng: &mut ChaCha8Rng) -> Self {
        // Up to twice threshold so part of the population fires at once.
        let span = Uniform::new(neuron.v_rest, 2.0 * neuron.v_th - neuron.v_rest).expect("v_th > v_rest");
        let neurons = phases
            .iter()
            .map(|&phase| NeuronState { window_clock: phase, ..NeuronState::with_voltage(span.sample(rng)) })
            .collect();
        Self {
            neurons,
            rates: vec![0.0; n],
            activity: vec![0.0; n],
            recurrent: vec![0.0; n],
            spike_counts: vec![0; n],
            window_spikes: vec![0; n],
            window_violations: 0,
            phases,
            spiked: Vec::new(),
            steps: 0,
            window_closed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn neurons(&self) -> &[NeuronState] {
        &self.neurons
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn activity(&self) -> &[f64] {
        &self.activity
    }

    /// Current recurrent input `J·a`.
    pub fn recurrent_input(&self) -> &[f64] {
        &self.recurrent
    }

    pub fn spike_counts(&self) -> &[u64] {
        &self.spike_counts
    }

    pub fn total_spikes(&self) -> u64 {
        self.spike_counts.iter().sum()
    }

    /// Indices of neurons that spiked during the last step.
    pub fn last_spikes(&self) -> &[usize] {
        &self.spiked
    }

    /// Spikes emitted by a neuron that had already fired in its current window.
    pub fn window_violations(&self) -> u64 {
        self.window_violations
    }

    /// Puts every neuron at rest with zero rate and activity.
    pub fn reset_to_rest(&mut self, neuron: &NeuronParams) {
        for (s, &phase) in self.neurons.iter_mut().zip(&self.phases) {
            *s = NeuronState { window_clock: phase, ..NeuronState::at_rest(neuron) };
        }
        for v in [&mut self.rates, &mut self.activity, &mut self.recurrent] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.window_spikes.iter_mut().for_each(|c| *c = 0);
        self.spiked.clear();
    }

    pub fn reset_counters(&mut self) {
        self.spike_counts.iter_mut().for_each(|c| *c = 0);
        self.window_violations = 0;
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        currents: &[f64],
        dt: f64,
        neuron: &NeuronParams,
        ttfs: Option<(&TtfsParams, u64)>,
        rate_tau: f64,
        coupling: &Coupling,
    ) -> Result<()> {
        self.spiked.clear();
        let code = ttfs.map(|(p, _)| p);
        for (i, (state, &current)) in self.neurons.iter_mut().zip(currents).enumerate() {
            if code.is_some_and(|p| state.window_clock >= p.window - 0.5 * dt) {
                self.window_spikes[i] = 0;
            }
            if state.step(current, dt, neuron, code)? {
                self.spiked.push(i);
            }
        }
        self.steps += 1;

        let decay = (-dt / rate_tau).exp();
        let jump = 1.0 / rate_tau;
        let filtered = match ttfs {
            None => true,
            Some((p, _)) => p.activity == TtfsActivity::Filtered,
        };
        for r in &mut self.rates {
            *r *= decay;
        }
        let weight = |s: &NeuronState| match ttfs {
            Some((p, _)) if filtered => neuron::latency_code(s.first_spike, p),
            _ => 1.0,
        };
        for &i in &self.spiked {
            self.rates[i] += jump * weight(&self.neurons[i]);
            self.spike_counts[i] += 1;
        }

        if let Some((params, window_steps)) = ttfs {
            for &i in &self.spiked {
                self.window_spikes[i] += 1;
                if self.window_spikes[i] > 1 {
                    self.window_violations += 1;
                }
            }
            self.window_closed = self.steps % window_steps == 0;
            if self.window_closed {
                if !filtered {
                    for (a, s) in self.activity.iter_mut().zip(&self.neurons) {
                        *a = neuron::latency_code(s.first_spike, params);
                    }
                    coupling.mul_vec_into(&self.activity, &mut self.recurrent);
                }
            }
        } else {
            self.window_closed = false;
        }

        if filtered {
            for (a, r) in self.activity.iter_mut().zip(&self.rates) {
                *a = r * ACTIVITY_INTERVAL;
            }
            for v in &mut self.recurrent {
                *v *= decay;
            }
            for &i in &self.spiked {
                coupling.add_column(i, jump * weight(&self.neurons[i]) * ACTIVITY_INTERVAL, &mut self.recurrent);
            }
        }
        Ok(())
    }
}

/// The reservoir(s) of one experiment together with their weights.
#[derive(Debug, Clone)]
pub struct Network {
    params: NetworkParams,
    neuron: NeuronParams,
    coding: Coding,
    readout_map: Readout,
    dt: f64,
    window_steps: u64,
    architecture: Architecture,
    seed: u64,
    input: Matrix,
    feedback: Matrix,
    readout: Matrix,
    target_recurrent: Matrix,
    coupling: Coupling,
    target_coupling: Option<Coupling>,
    task: Population,
    target: Option<Population>,
    drive: Vec<f64>,
    z: Vec<f64>,
    currents: Vec<f64>,
    t: f64,
}

impl Network {
    /// Builds both reservoirs at random initial voltages drawn from
    /// `state_seed`. The target-generating reservoir only exists for the
    /// full-FORCE architecture.
    pub fn new(
        weights: WeightSet,
        params: &NetworkParams,
        neuron: &NeuronParams,
        coding: Coding,
        readout_map: Readout,
        dt: f64,
        state_seed: u64,
    ) -> Result<Self> {
        weights.validate()?;
        neuron.validate()?;
        params.validate(neuron)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let window_steps = match coding {
            Coding::Rate => 1,
            Coding::Ttfs => {
                let ratio = params.ttfs.window / dt;
                let steps = ratio.round();
                if steps < 1.0 || (ratio - steps).abs() > 1e-6 * steps {
                    return Err(Error::config(format!(
                        "TTFS window {} must be a whole number of {dt} s steps",
                        params.ttfs.window
                    )));
                }
                steps as u64
            }
        };
        let n = weights.neurons();
        let mut rng = ChaCha8Rng::seed_from_u64(state_seed);
        // Filtered TTFS staggers window starts across neurons; both
        // reservoirs share the offsets so neuron i keeps one clock.
        let phases: Vec<f64> = if coding == Coding::Ttfs && params.ttfs.activity == TtfsActivity::Filtered {
            rng.set_stream(3);
            (0..n).map(|_| rng.random_range(0..window_steps) as f64 * dt).collect()
        } else {
            vec![0.0; n]
        };
        rng.set_stream(1);
        let task = Population::new(n, neuron, phases.clone(), &mut rng);
        rng.set_stream(2);
        let target = (weights.architecture == Architecture::FullForce).then(|| Population::new(n, neuron, phases, &mut rng));
        let coupling = Coupling::from_matrix(&weights.recurrent, weights.architecture == Architecture::Force);
        let target_coupling = target.as_ref().map(|_| Coupling::from_matrix(&weights.target_recurrent, false));
        let d_out = weights.output_dim();
        let mut net = Self {
            params: *params,
            neuron: *neuron,
            coding,
            readout_map,
            dt,
            window_steps,
            architecture: weights.architecture,
            seed: weights.seed,
            input: weights.input,
            feedback: weights.feedback,
            readout: weights.readout,
            target_recurrent: weights.target_recurrent,
            coupling,
            target_coupling,
            task,
            target,
            drive: vec![0.0; d_out],
            z: vec![0.0; d_out],
            currents: vec![0.0; n],
            t: 0.0,
        };
        net.refresh_readout();
        Ok(net)
    }

    pub fn neurons(&self) -> usize {
        self.task.len()
    }

    pub fn output_dim(&self) -> usize {
        self.z.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input.cols()
    }

    pub fn coding(&self) -> Coding {
        self.coding
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn neuron_params(&self) -> &NeuronParams {
        &self.neuron
    }

    pub fn readout_map(&self) -> &Readout {
        &self.readout_map
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn task(&self) -> &Population {
        &self.task
    }

    pub fn task_mut(&mut self) -> &mut Population {
        &mut self.task
    }

    pub fn target(&self) -> Option<&Population> {
        self.target.as_ref()
    }

    pub fn target_mut(&mut self) -> Option<&mut Population> {
        self.target.as_mut()
    }

    /// Output vector Z.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Readout drive `Wᵀ·a` before the output map.
    pub fn readout_drive(&self) -> &[f64] {
        &self.drive
    }

    pub fn readout_weights(&self) -> &Matrix {
        &self.readout
    }

    pub fn feedback_weights(&self) -> &Matrix {
        &self.feedback
    }

    /// True if the last task step closed a TTFS coding window. Always true
    /// under rate coding.
    pub fn window_closed(&self) -> bool {
        match self.coding {
            Coding::Rate => true,
            Coding::Ttfs => self.task.window_closed,
        }
    }

    /// Whether the activity vector is a per-window held latency code.
    pub fn holds_latency_code(&self) -> bool {
        self.coding == Coding::Ttfs && self.params.ttfs.activity == TtfsActivity::Held
    }

    pub fn window_steps(&self) -> u64 {
        self.window_steps
    }

    /// Advances the task reservoir by one step. With `feedback_on` the
    /// previous output Z is fed back through `U_o`.
    pub fn step_task(&mut self, f_in: &[f64], feedback_on: bool) -> Result<()> {
        let z = feedback_on.then(|| self.z.clone());
        self.step_task_with(f_in, z.as_deref(), None)
    }

    /// Advances the task reservoir with an explicit feedback signal and,
    /// optionally, a replacement for its recurrent input `J·a` (used for
    /// teacher forcing).
    pub fn step_task_with(&mut self, f_in: &[f64], feedback: Option<&[f64]>, recurrent: Option<&[f64]>) -> Result<()> {
        check_dim("task input", self.input.cols(), f_in.len())?;
        if let Some(fb) = feedback {
            check_dim("task feedback", self.feedback.cols(), fb.len())?;
        }
        if let Some(r) = recurrent {
            check_dim("task recurrent override", self.task.len(), r.len())?;
        }
        let rec = recurrent.unwrap_or(&self.task.recurrent);
        fill_currents(&mut self.currents, &self.params, &self.neuron, rec, &self.input, f_in, &self.feedback, feedback);
        let ttfs = (self.coding == Coding::Ttfs).then_some((&self.params.ttfs, self.window_steps));
        self.task
            .step(&self.currents, self.dt, &self.neuron, ttfs, self.params.rate_tau, &self.coupling)?;
        self.t += self.dt;
        self.refresh_readout();
        Ok(())
    }

    /// Advances the target-generating reservoir, driven through `U_o` by
    /// `drive`.
    pub fn step_target(&mut self, f_in: &[f64], drive: &[f64]) -> Result<()> {
        check_dim("target input", self.input.cols(), f_in.len())?;
        check_dim("target drive", self.feedback.cols(), drive.len())?;
        let (Some(target), Some(coupling)) = (self.target.as_mut(), self.target_coupling.as_ref()) else {
            return Err(Error::config("target-generating reservoir exists only for full-FORCE"));
        };
        fill_currents(
            &mut self.currents,
            &self.params,
            &self.neuron,
            &target.recurrent,
            &self.input,
            f_in,
            &self.feedback,
            Some(drive),
        );
        let ttfs = (self.coding == Coding::Ttfs).then_some((&self.params.ttfs, self.window_steps));
        target.step(&self.currents, self.dt, &self.neuron, ttfs, self.params.rate_tau, coupling)
    }

    /// Recurrent input the task reservoir should receive to reproduce the
    /// target reservoir's current: `J_D·a_D + (feedback_gain/recurrent_gain)·U_o·drive`.
    pub fn teaching_input(&self, drive: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("teaching drive", self.feedback.cols(), drive.len())?;
        check_dim("teaching output", self.task.len(), out.len())?;
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| Error::config("target-generating reservoir exists only for full-FORCE"))?;
        out.copy_from_slice(&target.recurrent);
        if self.params.recurrent_gain != 0.0 {
            let ratio = self.params.feedback_gain / self.params.recurrent_gain;
            self.feedback.mul_vec_add(drive, ratio, out);
        }
        Ok(())
    }

    /// Recomputes `Wᵀ·a` and Z from the current activity.
    pub fn refresh_readout(&mut self) {
        self.readout.mul_vec_into(&self.task.activity, &mut self.drive);
        for (z, &u) in self.z.iter_mut().zip(&self.drive) {
            *z = self.readout_map.output(u);
        }
    }

    /// `W[o] -= error[o]·gain` for every output, followed by a readout
    /// refresh.
    pub fn update_readout(&mut self, gain: &[f64], error: &[f64]) -> Result<()> {
        crate::rls::apply_gain(gain, error, &mut self.readout)?;
        self.refresh_readout();
        Ok(())
    }

    /// `J -= error·gainᵀ`, keeping the cached `J·a` consistent.
    pub fn update_recurrent(&mut self, gain: &[f64], error: &[f64]) -> Result<()> {
        let n = self.task.len();
        check_dim("recurrent gain", n, gain.len())?;
        check_dim("recurrent error", n, error.len())?;
        let Coupling::Dense(t) = &mut self.coupling else {
            return Err(Error::config("the sparse FORCE reservoir is not trainable"));
        };
        for (j, &gj) in gain.iter().enumerate() {
            if gj != 0.0 {
                axpy(-gj, error, t.row_mut(j));
            }
        }
        let ga = dot(gain, &self.task.activity);
        axpy(-ga, error, &mut self.task.recurrent);
        Ok(())
    }

    /// `J·x` for an arbitrary activity vector.
    pub fn recurrent_product(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("recurrent product input", self.task.len(), x.len())?;
        check_dim("recurrent product output", self.task.len(), out.len())?;
        self.coupling.mul_vec_into(x, out);
        Ok(())
    }

    /// `J_D·x` for an arbitrary activity vector.
    pub fn target_recurrent_product(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("target product input", self.task.len(), x.len())?;
        check_dim("target product output", self.task.len(), out.len())?;
        self.target_recurrent.mul_vec_into(x, out);
        Ok(())
    }

    /// Puts both reservoirs at rest.
    pub fn reset_to_rest(&mut self) {
        self.task.reset_to_rest(&self.neuron);
        if let Some(target) = self.target.as_mut() {
            target.reset_to_rest(&self.neuron);
        }
        self.refresh_readout();
    }

    /// Recomputes the cached recurrent inputs from scratch.
    pub fn resync(&mut self) {
        self.coupling.mul_vec_into(&self.task.activity, &mut self.task.recurrent);
        if let (Some(target), Some(coupling)) = (self.target.as_mut(), self.target_coupling.as_ref()) {
            coupling.mul_vec_into(&target.activity, &mut target.recurrent);
        }
        self.refresh_readout();
    }

    /// Snapshot of the current weights.
    pub fn weights(&self) -> WeightSet {
        WeightSet {
            architecture: self.architecture,
            seed: self.seed,
            input: self.input.clone(),
            recurrent: self.coupling.to_matrix(),
            target_recurrent: self.target_recurrent.clone(),
            readout: self.readout.clone(),
            feedback: self.feedback.clone(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fill_currents(
    out: &mut [f64],
    params: &NetworkParams,
    neuron: &NeuronParams,
    recurrent: &[f64],
    input: &Matrix,
    f_in: &[f64],
    feedback: &Matrix,
    fb: Option<&[f64]>,
) {
    let i_rh = neuron.rheobase();
    for (i, o) in out.iter_mut().enumerate() {
        let mut u = params.bias + params.recurrent_gain * recurrent[i];
        if params.input_gain != 0.0 {
            u += params.input_gain * dot(input.row(i), f_in);
        }
        if let Some(fb) = fb {
            u += params.feedback_gain * dot(feedback.row(i), fb);
        }
        *o = u * i_rh;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate_readout() -> Readout {
        Readout::for_coding(Coding::Rate, (-1.0, 1.0), 250.0, &NeuronParams::default()).unwrap()
    }

    fn network(weights: WeightSet, params: &NetworkParams, coding: Coding) -> Network {
        let readout = match coding {
            Coding::Rate => rate_readout(),
            Coding::Ttfs => Readout::Linear,
        };
        Network::new(weights, params, &NeuronParams::default(), coding, readout, 1e-3, 7).unwrap()
    }

    fn zero_weights(n: usize, arch: Architecture) -> WeightSet {
        WeightSet {
            architecture: arch,
            seed: 0,
            input: Matrix::zeros(n, 1),
            recurrent: Matrix::zeros(n, n),
            target_recurrent: Matrix::zeros(n, n),
            readout: Matrix::zeros(1, n),
            feedback: Matrix::zeros(n, 1),
        }
    }

    fn variance(values: &[f64]) -> f64 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
    }

    #[test]
    fn initial_readout_is_zero() {
        let w = init_weights(50, 1, 2, 1.5, 0.1, Architecture::FullForce, 3).unwrap();
        assert_eq!(w.readout.count_nonzero(), 0);
        let net = network(w, &NetworkParams { neurons: 50, ..Default::default() }, Coding::Ttfs);
        assert_eq!(net.z(), &[0.0, 0.0]);
    }

    #[test]
    fn target_weight_variance() {
        let n = 1000;
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::FullForce, 11).unwrap();
        let var = variance(w.target_recurrent.as_slice());
        let expected = 1.5 * 1.5 / n as f64;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
        let var_j = variance(w.recurrent.as_slice());
        assert!((var_j / expected - 1.0).abs() < 0.05);
        assert_ne!(w.recurrent, w.target_recurrent);
    }

    #[test]
    fn force_reservoir_sparsity() {
        let n = 1000;
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::Force, 5).unwrap();
        let frac = w.recurrent.count_nonzero() as f64 / (n * n) as f64;
        assert!((0.09..=0.11).contains(&frac), "{frac}");
        let nz: Vec<f64> = w.recurrent.as_slice().iter().copied().filter(|v| *v != 0.0).collect();
        let expected = 1.5 * 1.5 / (0.1 * n as f64);
        assert!((variance(&nz) / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn feedforward_weights_are_uniform() {
        let w = init_weights(400, 3, 2, 1.5, 0.1, Architecture::Force, 9).unwrap();
        for m in [&w.input, &w.feedback] {
            assert!(m.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
            // uniform on [-1, 1] has variance 1/3
            assert!((variance(m.as_slice()) - 1.0 / 3.0).abs() < 0.03);
        }
    }

    #[test]
    fn init_rejects_bad_parameters() {
        for (g, p) in [(0.0, 0.1), (-1.0, 0.1), (1.5, 0.0), (1.5, 1.5), (f64::NAN, 0.1)] {
            assert!(matches!(
                init_weights(10, 1, 1, g, p, Architecture::Force, 0),
                Err(Error::Config(_))
            ));
        }
        assert!(init_weights(0, 1, 1, 1.5, 0.1, Architecture::Force, 0).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_weights(30, 1, 1, 1.5, 0.1, Architecture::Force, 4).unwrap();
        let b = init_weights(30, 1, 1, 1.5, 0.1, Architecture::Force, 4).unwrap();
        let c = init_weights(30, 1, 1, 1.5, 0.1, Architecture::Force, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn silent_network_stays_at_initial_state() {
        let params = NetworkParams { neurons: 20, bias: 0.0, ..Default::default() };
        let mut net = network(zero_weights(20, Architecture::FullForce), &params, Coding::Rate);
        net.reset_to_rest();
        let initial = net.task().neurons().to_vec();
        for _ in 0..2000 {
            net.step_task(&[0.0], true).unwrap();
            net.step_target(&[0.0], &[0.0]).unwrap();
        }
        assert_eq!(net.task().total_spikes(), 0);
        assert!(net.task().rates().iter().all(|r| *r == 0.0));
        assert!(net.target().unwrap().rates().iter().all(|r| *r == 0.0));
        assert_eq!(net.z(), &[-1.0]);
        assert_eq!(net.task().neurons(), &initial[..]);
    }

    #[test]
    fn single_neuron_steady_state_rate() {
        let neuron = NeuronParams::default();
        for drive in [1.5, 2.0, 4.0] {
            let params = NetworkParams { neurons: 1, bias: drive, ..Default::default() };
            let dt = 1e-4;
            let mut net = Network::new(
                zero_weights(1, Architecture::Force),
                &params,
                &neuron,
                Coding::Rate,
                rate_readout(),
                dt,
                1,
            )
            .unwrap();
            let steps = 40_000;
            let mut acc = 0.0;
            for k in 0..steps {
                net.step_task(&[0.0], false).unwrap();
                if k >= steps / 2 {
                    acc += net.task().rates()[0];
                }
            }
            let measured = acc / (steps / 2) as f64;
            let expected = neuron::firing_rate(drive * neuron.rheobase(), &neuron).unwrap();
            assert!((measured / expected - 1.0).abs() < 0.05, "{measured} vs {expected}");
        }
    }

    #[test]
    fn rates_never_exceed_saturation() {
        let neuron = NeuronParams::default();
        for dt in [1e-3, 1e-4] {
            let params = NetworkParams { neurons: 3, bias: 1e6, ..Default::default() };
            let mut net = Network::new(
                zero_weights(3, Architecture::Force),
                &params,
                &neuron,
                Coding::Rate,
                rate_readout(),
                dt,
                1,
            )
            .unwrap();
            for _ in 0..(1.0 / dt) as usize {
                net.step_task(&[0.0], false).unwrap();
                assert!(net.task().rates().iter().all(|r| *r <= neuron.max_rate() && *r >= 0.0));
            }
        }
    }

    #[test]
    fn spontaneous_activity() {
        let n = 1000;
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::FullForce, 21).unwrap();
        let mut net = network(w, &NetworkParams::default(), Coding::Rate);
        for _ in 0..500 {
            net.step_target(&[0.0], &[0.0]).unwrap();
        }
        let before = net.target().unwrap().total_spikes();
        for _ in 0..1000 {
            net.step_target(&[0.0], &[0.0]).unwrap();
        }
        let mean_rate = (net.target().unwrap().total_spikes() - before) as f64 / n as f64;
        assert!(mean_rate > 0.0);
    }

    #[test]
    fn incremental_recurrent_input_matches_direct_product() {
        let n = 200;
        for arch in [Architecture::Force, Architecture::FullForce] {
            let w = init_weights(n, 1, 1, 1.5, 0.1, arch, 8).unwrap();
            let j = w.recurrent.clone();
            let mut net = network(w, &NetworkParams { neurons: n, ..Default::default() }, Coding::Rate);
            for k in 0..3000 {
                net.step_task(&[(k as f64 * 1e-3).sin()], true).unwrap();
            }
            let direct = j.mul_vec(net.task().activity()).unwrap();
            for (a, b) in direct.iter().zip(net.task().recurrent_input()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn recurrent_update_keeps_cache_consistent() {
        let n = 100;
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::FullForce, 2).unwrap();
        let mut net = network(w, &NetworkParams { neurons: n, ..Default::default() }, Coding::Rate);
        for _ in 0..300 {
            net.step_task(&[0.0], false).unwrap();
        }
        let gain: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 1e-2).collect();
        let err: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let j_before = net.weights().recurrent;
        net.update_recurrent(&gain, &err).unwrap();
        let j_after = net.weights().recurrent;
        for r in 0..n {
            for c in 0..n {
                let expected = j_before.get(r, c) - err[r] * gain[c];
                assert!((j_after.get(r, c) - expected).abs() < 1e-14);
            }
        }
        let direct = j_after.mul_vec(net.task().activity()).unwrap();
        for (a, b) in direct.iter().zip(net.task().recurrent_input()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn readout_matches_naive_loop() {
        let n = 64;
        let mut w = init_weights(n, 1, 3, 1.5, 0.1, Architecture::FullForce, 12).unwrap();
        w.readout = Matrix::from_fn(3, n, |o, i| ((o * n + i) as f64 * 0.731).sin());
        let mut net = network(w.clone(), &NetworkParams { neurons: n, ..Default::default() }, Coding::Ttfs);
        for _ in 0..100 {
            net.step_task(&[0.5], false).unwrap();
        }
        let a = net.task().activity();
        assert!(a.iter().any(|v| *v > 0.0));
        for o in 0..3 {
            let mut naive = 0.0;
            for i in 0..n {
                naive += w.readout.get(o, i) * a[i];
            }
            assert!(((net.z()[o] - naive) / naive).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_readout_reads_single_neuron() {
        let n = 10;
        let mut w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::FullForce, 1).unwrap();
        w.readout.set(0, 4, 1.0);
        let mut net = network(w, &NetworkParams { neurons: n, ..Default::default() }, Coding::Ttfs);
        for _ in 0..60 {
            net.step_task(&[0.0], false).unwrap();
            assert_eq!(net.z()[0], net.task().activity()[4]);
        }
    }

    #[test]
    fn rate_readout_maps_silence_to_range_minimum() {
        let map = rate_readout();
        assert_eq!(map.output(0.0), -1.0);
        assert_eq!(map.output(-5.0), -1.0);
        for f in [-0.9, -0.3, 0.0, 0.5, 1.0] {
            assert!((map.output(map.drive_for(f)) - f).abs() < 1e-9);
        }
        assert_eq!(map.drive_for(-1.0), 1.0);
    }

    #[test]
    fn silent_target_error_is_one_sided() {
        let map = rate_readout();
        assert_eq!(map.drive_error(0.3, -1.0), 0.0);
        assert_eq!(map.drive_error(1.0 - SILENCE_MARGIN, -1.0), 0.0);
        assert!((map.drive_error(1.0, -1.0) - SILENCE_MARGIN).abs() < 1e-12);
        let u = map.drive_for(0.5);
        assert_eq!(map.drive_error(u + 0.25, 0.5), 0.25);
        assert_eq!(map.drive_error(u - 0.25, 0.5), -0.25);
        assert_eq!(Readout::Linear.drive_error(-3.0, -1.0), -2.0);
    }

    #[test]
    fn zero_readout_ignores_feedback() {
        let n = 50;
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::Force, 6).unwrap();
        let params = NetworkParams { neurons: n, ..Default::default() };
        let mut on = network(w.clone(), &params, Coding::Ttfs);
        let mut off = network(w, &params, Coding::Ttfs);
        for _ in 0..500 {
            on.step_task(&[0.2], true).unwrap();
            off.step_task(&[0.2], false).unwrap();
        }
        assert_eq!(on.task().activity(), off.task().activity());
    }

    #[test]
    fn ttfs_activity_is_held_within_window() {
        let n = 40;
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::FullForce, 3).unwrap();
        let mut net = network(w, &NetworkParams { neurons: n, ..Default::default() }, Coding::Ttfs);
        let window = net.window_steps();
        let mut held = net.task().activity().to_vec();
        for k in 1..=10 * window {
            net.step_task(&[0.3], false).unwrap();
            if k % window == 0 {
                assert!(net.window_closed());
                held = net.task().activity().to_vec();
                assert!(held.iter().all(|a| (0.0..=1.0).contains(a)));
            } else {
                assert!(!net.window_closed());
                assert_eq!(net.task().activity(), &held[..]);
            }
        }
        assert_eq!(net.task().window_violations(), 0);
        assert!(net.task().total_spikes() <= 10 * n as u64);
    }

    #[test]
    fn filtered_ttfs_keeps_cache_and_window_limit() {
        let n = 120;
        let params = NetworkParams { neurons: n, ..NetworkParams::for_coding(Coding::Ttfs) };
        let w = init_weights(n, 1, 1, 1.5, 0.1, Architecture::FullForce, 5).unwrap();
        let j = w.recurrent.clone();
        let mut net = network(w, &params, Coding::Ttfs);
        let window = net.window_steps();
        let starts: Vec<f64> = net.task().neurons().iter().map(|s| s.window_clock).collect();
        assert!(starts.iter().any(|c| *c != starts[0]), "window starts should be staggered");
        let rounds = 20;
        for k in 0..rounds * window {
            net.step_task(&[(k as f64 * 2e-3).sin()], false).unwrap();
        }
        let direct = j.mul_vec(net.task().activity()).unwrap();
        for (a, b) in direct.iter().zip(net.task().recurrent_input()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(net.task().window_violations(), 0);
        for &c in net.task().spike_counts() {
            assert!(c <= rounds + 1);
        }
        assert!(net.task().total_spikes() > 0);
    }

    #[test]
    fn ttfs_window_must_divide_step() {
        let params = NetworkParams {
            neurons: 4,
            ttfs: TtfsParams { window: 0.0125, ..TtfsParams::default() },
            ..Default::default()
        };
        let w = init_weights(4, 1, 1, 1.5, 0.1, Architecture::FullForce, 3).unwrap();
        let r = Network::new(w, &params, &NeuronParams::default(), Coding::Ttfs, Readout::Linear, 1e-3, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let w = init_weights(100, 1, 1, 1.5, 0.1, Architecture::FullForce, 77).unwrap();
            let mut net = network(w, &NetworkParams { neurons: 100, ..Default::default() }, Coding::Rate);
            for k in 0..1000 {
                let f = (k as f64 * 6e-3).sin();
                net.step_target(&[0.0], &[f]).unwrap();
                net.step_task(&[0.0], false).unwrap();
            }
            (net.task().rates().to_vec(), net.target().unwrap().rates().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn linear_readout_step_matches_hand_computation() {
        // Two neurons, rate coding, identity readout: the drive is
        // bias + J·a + U_o·z + U_i·f_in with z = Wᵀ·a.
        let neuron = NeuronParams::default();
        let params = NetworkParams { neurons: 2, bias: 0.0, recurrent_gain: 1.0, feedback_gain: 1.0, ..Default::default() };
        let w = WeightSet {
            architecture: Architecture::FullForce,
            seed: 0,
            input: Matrix::from_vec(2, 1, vec![0.5, -0.25]).unwrap(),
            recurrent: Matrix::from_vec(2, 2, vec![0.0, 3.0, -2.0, 0.0]).unwrap(),
            target_recurrent: Matrix::zeros(2, 2),
            readout: Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap(),
            feedback: Matrix::from_vec(2, 1, vec![1.0, 0.5]).unwrap(),
        };
        let mut net = Network::new(w, &params, &neuron, Coding::Rate, Readout::Linear, 1e-3, 3).unwrap();
        for _ in 0..200 {
            net.step_task(&[1.5], true).unwrap();
        }
        let a = net.task().activity().to_vec();
        let z = 2.0 * a[0] - a[1];
        assert!((net.z()[0] - z).abs() < 1e-15);
        let v_before: Vec<f64> = net.task().neurons().iter().map(|s| s.v).collect();
        let refractory: Vec<bool> = net.task().neurons().iter().map(|s| s.refractory_remaining > 0.0).collect();
        let u = [3.0 * a[1] + z + 0.75, -2.0 * a[0] + 0.5 * z - 0.375];
        net.step_task(&[1.5], true).unwrap();
        let decay = (-1e-3 / neuron.tau).exp();
        for i in 0..2 {
            if refractory[i] || net.task().last_spikes().contains(&i) {
                continue;
            }
            let expected = v_before[i] * decay + u[i] * neuron.rheobase() * neuron.resistance * (1.0 - decay);
            assert!((net.task().neurons()[i].v - expected).abs() < 1e-12);
        }
    }
}
