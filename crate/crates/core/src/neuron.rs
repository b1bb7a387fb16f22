//! Leaky integrate-and-fire neuron.
//!
//! The membrane obeys `τ dV/dt = -V + R (I_bias + I)` with `τ = R·C`. Between
//! samples the current is held constant, so each step uses the exact
//! exponential update
//!
//! ```text
//! V <- V·exp(-Δt/τ) + R·(I_bias + I)·(1 - exp(-Δt/τ))
//! ```
//!
//! Under constant drive the closed-form inter-spike interval is
//! `-τ ln(1 - I_rh/I)` and the firing rate is `1 / (τ_ref + isi)`.
//!
//! Time-to-first-spike (TTFS) mode adds an exponentially decaying threshold
//! and allows at most one spike per coding window.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// Constants shared by every neuron in a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuronParams {
    /// Membrane time constant (s).
    pub tau: f64,
    pub capacitance: f64,
    pub resistance: f64,
    pub v_th: f64,
    pub v_rest: f64,
    /// Absolute refractory period (s).
    pub tau_ref: f64,
    pub i_bias: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        let tau = 0.02;
        let capacitance = 1.0;
        Self {
            tau,
            capacitance,
            resistance: tau / capacitance,
            v_th: 1.0,
            v_rest: 0.0,
            tau_ref: 0.002,
            i_bias: 0.0,
        }
    }
}

impl NeuronParams {
    /// Builds a parameter set from `τ` and `R`, deriving `C = τ/R`.
    pub fn from_tau_resistance(tau: f64, resistance: f64, v_th: f64, tau_ref: f64) -> Self {
        Self {
            tau,
            capacitance: tau / resistance,
            resistance,
            v_th,
            v_rest: 0.0,
            tau_ref,
            i_bias: 0.0,
        }
    }

    /// Rheobase current `I_rh = V_th / R`.
    pub fn rheobase(&self) -> f64 {
        self.v_th / self.resistance
    }

    /// Saturation rate `1/τ_ref`.
    pub fn max_rate(&self) -> f64 {
        1.0 / self.tau_ref
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("capacitance", self.capacitance),
            ("resistance", self.resistance),
            ("tau_ref", self.tau_ref),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("neuron {name} must be positive, got {value}")));
            }
        }
        if !(self.v_th.is_finite() && self.v_rest.is_finite() && self.v_th > self.v_rest) {
            return Err(Error::config(format!(
                "neuron v_th ({}) must exceed v_rest ({})",
                self.v_th, self.v_rest
            )));
        }
        let rc = self.resistance * self.capacitance;
        if ((rc - self.tau) / self.tau).abs() > 1e-9 {
            return Err(Error::config(format!(
                "neuron tau ({}) must equal resistance*capacitance ({rc})",
                self.tau
            )));
        }
        check_finite("neuron i_bias", self.i_bias).map_err(|e| Error::config(e.to_string()))
    }
}

/// Parameters of the time-to-first-spike code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtfsParams {
    /// Threshold at the start of a window.
    pub theta0: f64,
    /// Threshold decay constant (s).
    pub tau_threshold: f64,
    /// Spike-weight decay constant (s).
    pub tau_inhibit: f64,
    /// Coding window length (s).
    pub window: f64,
    /// Return the membrane to rest at the start of every window.
    pub reset_membrane: bool,
    pub activity: TtfsActivity,
}

/// What a TTFS population exposes as its activity vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TtfsActivity {
    /// Latency code of the last completed window, held for the next one.
    #[default]
    Held,
    /// First spikes scaled by their latency weight, passed through the
    /// rate filter.
    Filtered,
}

impl TtfsParams {
    /// `θ0 = V_th`, `τ_th = τ_s = τ`.
    pub fn for_neuron(params: &NeuronParams, window: f64) -> Self {
        Self {
            theta0: params.v_th,
            tau_threshold: params.tau,
            tau_inhibit: params.tau,
            window,
            reset_membrane: true,
            activity: TtfsActivity::Held,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("theta0", self.theta0),
            ("tau_threshold", self.tau_threshold),
            ("tau_inhibit", self.tau_inhibit),
            ("window", self.window),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("ttfs {name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

impl Default for TtfsParams {
    fn default() -> Self {
        Self::for_neuron(&NeuronParams::default(), 0.02)
    }
}

/// Spike coding scheme of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    Rate,
    Ttfs,
}

impl Coding {
    pub fn name(&self) -> &'static str {
        match self {
            Coding::Rate => "rate",
            Coding::Ttfs => "ttfs",
        }
    }
}

impl std::str::FromStr for Coding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rate" => Ok(Coding::Rate),
            "ttfs" => Ok(Coding::Ttfs),
            other => Err(Error::config(format!("unknown coding '{other}'"))),
        }
    }
}

/// Per-neuron simulation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    pub v: f64,
    pub refractory_remaining: f64,
    /// Time elapsed in the current TTFS window.
    pub window_clock: f64,
    /// First-spike time within the current TTFS window, if any.
    pub first_spike: Option<f64>,
}

impl NeuronState {
    pub fn at_rest(params: &NeuronParams) -> Self {
        Self::with_voltage(params.v_rest)
    }

    pub fn with_voltage(v: f64) -> Self {
        Self {
            v,
            refractory_remaining: 0.0,
            window_clock: 0.0,
            first_spike: None,
        }
    }

    pub fn has_spiked_this_window(&self) -> bool {
        self.first_spike.is_some()
    }

    /// Advances the membrane by `dt` under constant `current` and reports
    /// whether a spike was emitted. `ttfs = None` selects rate coding.
    ///
    /// Refractory steps emit nothing and hold the membrane at reset.
    pub fn step(
        &mut self,
        current: f64,
        dt: f64,
        params: &NeuronParams,
        ttfs: Option<&TtfsParams>,
    ) -> Result<bool> {
        check_finite("membrane current", current)?;
        if !(dt > 0.0) {
            return Err(Error::numeric(format!("time step must be positive, got {dt}")));
        }

        if let Some(code) = ttfs {
            if self.window_clock >= code.window - 0.5 * dt {
                self.window_clock = 0.0;
                self.first_spike = None;
                if code.reset_membrane {
                    self.v = params.v_rest;
                    self.refractory_remaining = 0.0;
                }
            }
            self.window_clock += dt;
        }

        if self.refractory_remaining > 1e-9 * dt {
            self.refractory_remaining = (self.refractory_remaining - dt).max(0.0);
            if self.refractory_remaining <= 1e-9 * dt {
                self.refractory_remaining = 0.0;
            }
            return Ok(false);
        }

        let v_prev = self.v;
        let decay = (-dt / params.tau).exp();
        self.v = self.v * decay + (params.i_bias + current) * params.resistance * (1.0 - decay);

        let (threshold, blocked) = match ttfs {
            Some(code) => (ttfs_threshold_unchecked(self.window_clock, code), self.first_spike.is_some()),
            None => (params.v_th, false),
        };

        if self.v >= threshold && !blocked {
            let v = self.v;
            self.v = params.v_rest;
            self.refractory_remaining = params.tau_ref;
            if let Some(code) = ttfs {
                // Place the spike where the linearly interpolated membrane
                // meets the threshold inside this step.
                let start = (self.window_clock - dt).max(0.0);
                let below = v_prev - ttfs_threshold_unchecked(start, code);
                let above = v - threshold;
                let frac = if below < 0.0 { below / (below - above) } else { 0.0 };
                self.first_spike = Some(start + frac * (self.window_clock - start));
            }
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Steady-state firing rate `G(I)` in Hz for constant current `I`.
pub fn firing_rate(current: f64, params: &NeuronParams) -> Result<f64> {
    check_finite("firing_rate current", current)?;
    let i_rh = params.rheobase();
    if current <= i_rh {
        return Ok(0.0);
    }
    let log_term = (-i_rh / current).ln_1p();
    Ok(1.0 / (params.tau_ref - params.tau * log_term))
}

/// Time from reset to threshold under constant current; `f64::INFINITY`
/// when the current is at or below rheobase.
pub fn isi(current: f64, params: &NeuronParams) -> Result<f64> {
    check_finite("isi current", current)?;
    let i_rh = params.rheobase();
    if current <= i_rh {
        return Ok(f64::INFINITY);
    }
    Ok(-params.tau * (-i_rh / current).ln_1p())
}

/// Inverse of [`firing_rate`] on `(0, 1/τ_ref)`. Rates at or below zero map
/// to the rheobase.
pub fn current_for_rate(rate: f64, params: &NeuronParams) -> Result<f64> {
    check_finite("target rate", rate)?;
    let i_rh = params.rheobase();
    if rate <= 0.0 {
        return Ok(i_rh);
    }
    let isi = 1.0 / rate - params.tau_ref;
    if isi <= 0.0 {
        return Err(Error::numeric(format!(
            "rate {rate} Hz is at or above the saturation rate {} Hz",
            params.max_rate()
        )));
    }
    Ok(i_rh / -(-isi / params.tau).exp_m1())
}

/// Decaying TTFS threshold `θ0·exp(-t/τ_th)`.
pub fn ttfs_threshold(t_in_window: f64, ttfs: &TtfsParams) -> Result<f64> {
    check_finite("window time", t_in_window)?;
    if t_in_window < 0.0 {
        return Err(Error::numeric(format!("window time must be non-negative, got {t_in_window}")));
    }
    Ok(ttfs_threshold_unchecked(t_in_window, ttfs))
}

fn ttfs_threshold_unchecked(t: f64, ttfs: &TtfsParams) -> f64 {
    ttfs.theta0 * (-t / ttfs.tau_threshold).exp()
}

/// Latency weight `exp(-t/τ_s)` of a first spike at `t` after window start.
pub fn spike_weight(t_first_spike: f64, ttfs: &TtfsParams) -> f64 {
    (-t_first_spike / ttfs.tau_inhibit).exp()
}

/// Latency weight of an optional first spike; silent neurons weigh zero.
pub fn latency_code(first_spike: Option<f64>, ttfs: &TtfsParams) -> f64 {
    first_spike.map_or(0.0, |t| spike_weight(t, ttfs))
}

/// Synaptic current `Σ_i w_i R_i Δt`.
pub fn synaptic_current(weights: &[f64], rates: &[f64], dt: f64) -> Result<f64> {
    check_dim("synaptic_current", weights.len(), rates.len())?;
    Ok(dot(weights, rates) * dt)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight independent accumulators let the compiler vectorise without
    // reassociating the sum.
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn rate_is_monotone_and_bounded(a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let p = NeuronParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let rl = firing_rate(lo, &p).unwrap();
            let rh = firing_rate(hi, &p).unwrap();
            prop_assert!(rl <= rh);
            if lo > p.rheobase() && hi > lo * (1.0 + 1e-9) {
                prop_assert!(rl < rh);
            }
            prop_assert!(rh < p.max_rate());
        }

        #[test]
        fn ttfs_threshold_strictly_decreasing(a in 0.0f64..0.2, b in 0.0f64..0.2) {
            prop_assume!((a - b).abs() > 1e-9);
            let code = TtfsParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let tl = ttfs_threshold(lo, &code).unwrap();
            let th = ttfs_threshold(hi, &code).unwrap();
            prop_assert!(tl > th && th > 0.0);
        }

        #[test]
        fn earlier_spike_weighs_more(a in 0.0f64..0.2, b in 0.0f64..0.2) {
            prop_assume!((a - b).abs() > 1e-9);
            let code = TtfsParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(spike_weight(lo, &code) > spike_weight(hi, &code));
            prop_assert!(spike_weight(hi, &code) > 0.0);
        }
    }
}
