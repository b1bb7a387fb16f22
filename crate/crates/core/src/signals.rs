//! Benchmark waveforms, the interval-matching task, input noise and Poisson
//! input encoding.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Onset of the first interval-task pulse, relative to trial start.
pub const INTERVAL_FIRST_ONSET: f64 = 0.1;
/// Width of every interval-task pulse.
pub const INTERVAL_PULSE_WIDTH: f64 = 0.05;
pub const INTERVAL_MIN: f64 = 0.1;
pub const INTERVAL_MAX: f64 = 2.1;
/// Accordian sweep period.
pub const ACCORDIAN_PERIOD: f64 = 2.0;
/// Van der Pol output is scaled by its peak over at least this horizon.
pub const VDP_NORMALIZATION_HORIZON: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Sine,
    SumOfSines,
    ProductOfSines,
    Accordian,
    OdeToJoy,
    Triangle,
    VanDerPolHarmonic,
    VanDerPolRelaxed,
    IntervalMatch,
}

impl SignalKind {
    /// The eight autonomous benchmark systems, in table order.
    pub const BENCHMARKS: [SignalKind; 8] = [
        SignalKind::Sine,
        SignalKind::SumOfSines,
        SignalKind::ProductOfSines,
        SignalKind::Accordian,
        SignalKind::OdeToJoy,
        SignalKind::Triangle,
        SignalKind::VanDerPolHarmonic,
        SignalKind::VanDerPolRelaxed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SignalKind::Sine => "sine",
            SignalKind::SumOfSines => "sum-of-sines",
            SignalKind::ProductOfSines => "product-of-sines",
            SignalKind::Accordian => "accordian",
            SignalKind::OdeToJoy => "ode-to-joy",
            SignalKind::Triangle => "triangle",
            SignalKind::VanDerPolHarmonic => "van-der-pol-harmonic",
            SignalKind::VanDerPolRelaxed => "van-der-pol-relaxed",
            SignalKind::IntervalMatch => "interval-match",
        }
    }

    /// Van der Pol damping, if this is a Van der Pol system.
    pub fn damping(&self) -> Option<f64> {
        match self {
            SignalKind::VanDerPolHarmonic => Some(0.3),
            SignalKind::VanDerPolRelaxed => Some(0.5),
            _ => None,
        }
    }

    pub fn output_channels(&self) -> usize {
        match self {
            SignalKind::OdeToJoy => PITCHES.len(),
            _ => 1,
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        SignalKind::BENCHMARKS
            .iter()
            .chain(std::iter::once(&SignalKind::IntervalMatch))
            .find(|k| k.name() == norm)
            .copied()
            .ok_or_else(|| Error::config(format!("unknown signal kind '{s}'")))
    }
}

/// What the network receives on its input channel(s) for the autonomous
/// benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputSignal {
    /// A single constant-zero channel; the network runs autonomously.
    #[default]
    Silent,
    /// The target itself, channel for channel.
    Target,
}

const PITCHES: [char; 5] = ['C', 'D', 'E', 'F', 'G'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteLength {
    Quarter,
    Half,
}

impl NoteLength {
    /// Positive half of a 2 Hz (quarter) or 1 Hz (half) sine.
    pub fn pulse_frequency(&self) -> f64 {
        match self {
            NoteLength::Quarter => 2.0,
            NoteLength::Half => 1.0,
        }
    }

    pub fn duration(&self) -> f64 {
        0.5 / self.pulse_frequency()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    /// Channel index, C=0 .. G=4.
    pub pitch: usize,
    pub length: NoteLength,
}

impl Note {
    pub fn parse(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let (Some(p), Some(l), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::config(format!("note line must be '<pitch> <quarter|half>', got '{line}'")));
        };
        let mut chars = p.chars();
        let pitch_char = match (chars.next(), chars.next()) {
            (Some(c), None) => c.to_ascii_uppercase(),
            _ => return Err(Error::config(format!("invalid pitch '{p}'"))),
        };
        let pitch = PITCHES
            .iter()
            .position(|c| *c == pitch_char)
            .ok_or_else(|| Error::config(format!("pitch '{p}' outside C..G")))?;
        let length = match l.to_ascii_lowercase().as_str() {
            "quarter" => NoteLength::Quarter,
            "half" => NoteLength::Half,
            other => return Err(Error::config(format!("invalid note length '{other}'"))),
        };
        Ok(Note { pitch, length })
    }
}

/// Parses a note file: one `<pitch> <quarter|half>` per line; blank lines
/// and `#` comments are skipped.
pub fn parse_notes(text: &str) -> Result<Vec<Note>> {
    let mut notes = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let note = Note::parse(line).map_err(|e| Error::config(format!("note file line {}: {e}", lineno + 1)))?;
        notes.push(note);
    }
    if notes.is_empty() {
        return Err(Error::config("note file contains no notes"));
    }
    Ok(notes)
}

/// E E F G G F E D C C D E E D D, the last two as half notes.
pub fn default_ode_to_joy() -> Vec<Note> {
    let pitches = "EEFGGFEDCCDEEDD";
    let n = pitches.len();
    pitches
        .chars()
        .enumerate()
        .map(|(i, c)| Note {
            pitch: PITCHES.iter().position(|p| *p == c).unwrap(),
            length: if i + 2 >= n { NoteLength::Half } else { NoteLength::Quarter },
        })
        .collect()
}

/// Declarative description of one input/target trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSpec {
    pub kind: SignalKind,
    /// Angular frequency of `Sine` (rad/s).
    pub omega: f64,
    /// Component frequencies of the sum/product systems (Hz).
    pub component_frequencies: [f64; 2],
    /// Triangle amplitude.
    pub amplitude: f64,
    /// Triangle period (s).
    pub period: f64,
    /// Van der Pol initial `(x, dx/dt)`.
    pub vdp_initial: [f64; 2],
    /// Interval-task pulse spacing (s).
    pub interval: f64,
    pub notes: Vec<Note>,
    pub input: InputSignal,
    /// Trace length (s).
    pub duration: f64,
    /// Sample step (s).
    pub dt: f64,
    /// Time of the first sample (s). Trial-based tasks ignore it.
    pub start: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self {
            kind: SignalKind::Sine,
            omega: 2.0 * PI,
            component_frequencies: [4.0, 6.0],
            amplitude: 1.0,
            period: 1.0,
            vdp_initial: [1.0, 0.0],
            interval: 0.6,
            notes: default_ode_to_joy(),
            input: InputSignal::Silent,
            duration: 5.0,
            dt: 1e-3,
            start: 0.0,
        }
    }
}

impl SignalSpec {
    pub fn new(kind: SignalKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn interval_match(interval: f64) -> Self {
        Self { kind: SignalKind::IntervalMatch, interval, ..Self::default() }
    }

    /// Number of samples `duration/dt`.
    pub fn samples(&self) -> Result<usize> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::config(format!("signal duration must be positive, got {}", self.duration)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("signal step must be positive, got {}", self.dt)));
        }
        let ratio = self.duration / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::config(format!(
                "duration {} is not an integer multiple of step {}",
                self.duration, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.samples()?;
        if !self.start.is_finite() || self.start < 0.0 {
            return Err(Error::config(format!("signal start must be non-negative, got {}", self.start)));
        }
        match self.kind {
            SignalKind::Sine if !self.omega.is_finite() => Err(Error::config("omega must be finite")),
            SignalKind::Triangle if !(self.period > 0.0 && self.amplitude.is_finite()) => {
                Err(Error::config("triangle period must be positive and amplitude finite"))
            }
            SignalKind::OdeToJoy if self.notes.is_empty() => Err(Error::config("ode-to-joy needs notes")),
            SignalKind::SumOfSines | SignalKind::ProductOfSines
                if !self.component_frequencies.iter().all(|f| f.is_finite()) =>
            {
                Err(Error::config("component frequencies must be finite"))
            }
            SignalKind::IntervalMatch => self.interval_layout().map(|_| ()),
            _ => Ok(()),
        }
    }

    fn interval_layout(&self) -> Result<IntervalLayout> {
        let interval = self.interval;
        if !(interval.is_finite() && interval >= INTERVAL_MIN - 1e-9 && interval <= INTERVAL_MAX + 1e-9) {
            return Err(Error::config(format!(
                "interval must lie in [{INTERVAL_MIN}, {INTERVAL_MAX}] s, got {interval}"
            )));
        }
        let first_end = INTERVAL_FIRST_ONSET + INTERVAL_PULSE_WIDTH;
        let second_onset = first_end + interval;
        let second_end = second_onset + INTERVAL_PULSE_WIDTH;
        let target_onset = second_end + interval;
        let target_end = target_onset + INTERVAL_PULSE_WIDTH;
        if target_end > self.duration + 1e-9 {
            return Err(Error::config(format!(
                "interval {interval} s needs a {target_end:.3} s trial but duration is {} s",
                self.duration
            )));
        }
        Ok(IntervalLayout { first_onset: INTERVAL_FIRST_ONSET, second_onset, target_onset })
    }
}

#[derive(Debug, Clone, Copy)]
struct IntervalLayout {
    first_onset: f64,
    second_onset: f64,
    target_onset: f64,
}

/// Uniformly sampled input and target channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub t: Vec<f64>,
    /// samples × input channels
    pub f_in: Matrix,
    /// samples × output channels
    pub f_out: Matrix,
}

impl SignalTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn input_channels(&self) -> usize {
        self.f_in.cols()
    }

    pub fn output_channels(&self) -> usize {
        self.f_out.cols()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// `(min, max)` over every target sample.
    pub fn target_range(&self) -> (f64, f64) {
        min_max(self.f_out.as_slice())
    }

    pub fn input_range(&self) -> (f64, f64) {
        min_max(self.f_in.as_slice())
    }

    /// Writes `t,f_in_0..,f_out_0..` with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((0..self.input_channels()).map(|c| format!("f_in_{c}")));
        header.extend((0..self.output_channels()).map(|c| format!("f_out_{c}")));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut line = format!("{}", self.t[k]);
            for v in self.f_in.row(k).iter().chain(self.f_out.row(k)) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let table = read_numeric_csv(r)?;
        let n_in = table.header.iter().filter(|h| h.starts_with("f_in_")).count();
        let n_out = table.header.iter().filter(|h| h.starts_with("f_out_")).count();
        if table.header.first().map(String::as_str) != Some("t") || 1 + n_in + n_out != table.header.len() {
            return Err(Error::config(format!("unexpected trace header {:?}", table.header)));
        }
        let mut t = Vec::with_capacity(table.rows.len());
        let mut f_in = Vec::new();
        let mut f_out = Vec::new();
        for row in &table.rows {
            t.push(row[0]);
            f_in.extend_from_slice(&row[1..1 + n_in]);
            f_out.extend_from_slice(&row[1 + n_in..]);
        }
        let n = t.len();
        Ok(Self { t, f_in: Matrix::from_vec(n, n_in, f_in)?, f_out: Matrix::from_vec(n, n_out, f_out)? })
    }
}

/// Header plus numeric rows of a simple comma-separated file.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_numeric_csv<R: BufRead>(r: R) -> Result<NumericTable> {
    let mut lines = r.lines();
    let header: Vec<String> = match lines.next() {
        Some(line) => line?.trim().split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::config("empty csv")),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::config(format!("csv line {}: {e}", i + 2)))?;
        if row.len() != header.len() {
            return Err(Error::config(format!("csv line {} has {} fields, expected {}", i + 2, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Deterministic input/target trace for `spec`.
pub fn generate(spec: &SignalSpec) -> Result<SignalTrace> {
    spec.validate()?;
    let n = spec.samples()?;
    let t: Vec<f64> = (0..n).map(|k| spec.start + k as f64 * spec.dt).collect();

    if spec.kind == SignalKind::IntervalMatch {
        return interval_trace(spec, t);
    }

    let channels = spec.kind.output_channels();
    let mut f_out = Matrix::zeros(n, channels);
    match spec.kind {
        SignalKind::Sine => fill(&mut f_out, &t, |t| (spec.omega * t).sin()),
        SignalKind::SumOfSines => {
            let [a, b] = spec.component_frequencies;
            fill(&mut f_out, &t, |t| (2.0 * PI * a * t).sin() + (2.0 * PI * b * t).sin())
        }
        SignalKind::ProductOfSines => {
            let [a, b] = spec.component_frequencies;
            fill(&mut f_out, &t, |t| (2.0 * PI * a * t).sin() * (2.0 * PI * b * t).sin())
        }
        SignalKind::Accordian => fill(&mut f_out, &t, |t| accordian_phase(t).sin()),
        SignalKind::Triangle => {
            let scale = 2.0 * spec.amplitude / PI;
            fill(&mut f_out, &t, |t| scale * (2.0 * PI * t / spec.period).sin().asin())
        }
        SignalKind::OdeToJoy => {
            for (k, &tk) in t.iter().enumerate() {
                if let Some((pitch, value)) = melody_value(&spec.notes, tk) {
                    f_out.set(k, pitch, value);
                }
            }
        }
        SignalKind::VanDerPolHarmonic | SignalKind::VanDerPolRelaxed => {
            let mu = spec.kind.damping().expect("van der pol kind");
            let x = van_der_pol(mu, spec.vdp_initial, spec.dt, spec.start, n);
            for (k, v) in x.into_iter().enumerate() {
                f_out.set(k, 0, v);
            }
        }
        SignalKind::IntervalMatch => unreachable!(),
    }

    let f_in = match spec.input {
        InputSignal::Silent => Matrix::zeros(n, 1),
        InputSignal::Target => f_out.clone(),
    };
    Ok(SignalTrace { t, f_in, f_out })
}

fn fill(out: &mut Matrix, t: &[f64], f: impl Fn(f64) -> f64) {
    for (k, &tk) in t.iter().enumerate() {
        out.set(k, 0, f(tk));
    }
}

/// Phase of the accordian sweep: angular frequency rises 2π→6π over the
/// first half of each period and falls back over the second half.
pub fn accordian_phase(t: f64) -> f64 {
    let half = ACCORDIAN_PERIOD / 2.0;
    let cycles = (t / ACCORDIAN_PERIOD).floor();
    let tau = t - cycles * ACCORDIAN_PERIOD;
    // 4π accumulated per half period, 8π per full period
    let per_cycle = 8.0 * PI;
    let slope = 4.0 * PI / half;
    let phase = if tau < half {
        2.0 * PI * tau + 0.5 * slope * tau * tau
    } else {
        let s = tau - half;
        4.0 * PI + 6.0 * PI * s - 0.5 * slope * s * s
    };
    cycles * per_cycle + phase
}

/// Active pitch and pulse value at time `t` of the looped melody.
fn melody_value(notes: &[Note], t: f64) -> Option<(usize, f64)> {
    let total: f64 = notes.iter().map(|n| n.length.duration()).sum();
    let mut local = t.rem_euclid(total);
    for note in notes {
        let d = note.length.duration();
        if local < d {
            let value = (2.0 * PI * note.length.pulse_frequency() * local).sin().max(0.0);
            return Some((note.pitch, value));
        }
        local -= d;
    }
    None
}

fn vdp_rhs(mu: f64, s: [f64; 2]) -> [f64; 2] {
    [s[1], mu * (1.0 - s[0] * s[0]) * s[1] - s[0]]
}

fn rk4_step(mu: f64, s: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
    let k1 = vdp_rhs(mu, s);
    let k2 = vdp_rhs(mu, add(s, k1, h / 2.0));
    let k3 = vdp_rhs(mu, add(s, k2, h / 2.0));
    let k4 = vdp_rhs(mu, add(s, k3, h));
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Fixed-step RK4 trajectory of `x'' = μ(1-x²)x' - x` sampled at `start + k·h`,
/// scaled by the peak `|x|` seen from t=0 over at least
/// [`VDP_NORMALIZATION_HORIZON`] seconds.
fn van_der_pol(mu: f64, initial: [f64; 2], h: f64, start: f64, n: usize) -> Vec<f64> {
    let first = (start / h).round() as usize;
    let last = first + n;
    let horizon = last.max((VDP_NORMALIZATION_HORIZON / h).round() as usize);
    let mut s = initial;
    let mut peak = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..horizon {
        peak = peak.max(s[0].abs());
        if k >= first && k < last {
            out.push(s[0]);
        }
        s = rk4_step(mu, s, h);
    }
    if peak > 0.0 {
        for v in &mut out {
            *v /= peak;
        }
    }
    out
}

fn interval_trace(spec: &SignalSpec, t: Vec<f64>) -> Result<SignalTrace> {
    let layout = spec.interval_layout()?;
    let n = t.len();
    let dt = spec.dt;
    let width = (INTERVAL_PULSE_WIDTH / dt).round() as usize;
    let index = |time: f64| (time / dt).round() as usize;
    let mut f_in = Matrix::zeros(n, 1);
    let mut f_out = Matrix::zeros(n, 1);
    for onset in [layout.first_onset, layout.second_onset] {
        let k0 = index(onset);
        for k in k0..(k0 + width).min(n) {
            f_in.set(k, 0, 1.0);
        }
    }
    let k0 = index(layout.target_onset);
    for j in 0..width {
        if k0 + j < n {
            f_out.set(k0 + j, 0, (PI * (j as f64 + 0.5) / width as f64).sin());
        }
    }
    Ok(SignalTrace { t, f_in, f_out })
}

/// Interval-matching trial: two 50 ms input pulses `interval` apart and a
/// 50 ms half-sine target pulse `interval` after the second one ends.
pub fn interval_task(interval: f64, spec: &SignalSpec) -> Result<SignalTrace> {
    let spec = SignalSpec { kind: SignalKind::IntervalMatch, interval, ..spec.clone() };
    generate(&spec)
}

/// Onset times `(first, second, target)` of the interval-task pulses.
pub fn interval_onsets(interval: f64, spec: &SignalSpec) -> Result<(f64, f64, f64)> {
    let spec = SignalSpec { kind: SignalKind::IntervalMatch, interval, ..spec.clone() };
    let l = spec.interval_layout()?;
    Ok((l.first_onset, l.second_onset, l.target_onset))
}

/// Adds i.i.d. Gaussian noise to every input sample. The standard deviation
/// is `level` times the input range; a constant input falls back to the
/// target range so that silent-input tasks still receive noise.
pub fn add_noise(trace: &SignalTrace, level: f64, seed: u64) -> Result<SignalTrace> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(Error::config(format!("noise level must be non-negative, got {level}")));
    }
    if level == 0.0 {
        return Ok(trace.clone());
    }
    let (lo, hi) = trace.input_range();
    let mut range = hi - lo;
    if !(range > 0.0) {
        let (lo, hi) = trace.target_range();
        range = hi - lo;
    }
    let sigma = level * range;
    let mut out = trace.clone();
    if !(sigma > 0.0) {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.f_in.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Bernoulli approximation of a Poisson spike train whose rate follows a
/// value in `[-1, 1]` mapped linearly onto `[r_min, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonEncoder {
    pub r_min: f64,
    pub r_max: f64,
    pub dt: f64,
}

impl PoissonEncoder {
    pub fn new(r_min: f64, r_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("encoder step must be positive, got {dt}")));
        }
        if !(r_min >= 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::config(format!("rate bounds must satisfy 0 <= r_min < r_max, got ({r_min}, {r_max})")));
        }
        if r_max * dt > 1.0 {
            return Err(Error::config(format!(
                "r_max*dt = {} exceeds 1; Bernoulli approximation invalid",
                r_max * dt
            )));
        }
        Ok(Self { r_min, r_max, dt })
    }

    pub fn with_default_bounds(dt: f64) -> Result<Self> {
        Self::new(0.0, 200.0, dt)
    }

    pub fn rate(&self, value: f64) -> f64 {
        let x = ((value + 1.0) / 2.0).clamp(0.0, 1.0);
        self.r_min + x * (self.r_max - self.r_min)
    }

    pub fn spike_probability(&self, value: f64) -> f64 {
        self.rate(value) * self.dt
    }

    /// Inverse of [`rate`](Self::rate) on `[r_min, r_max]`.
    pub fn decode(&self, rate: f64) -> f64 {
        2.0 * (rate - self.r_min) / (self.r_max - self.r_min) - 1.0
    }

    pub fn encode<R: Rng + ?Sized>(&self, value: f64, rng: &mut R) -> bool {
        let p = self.spike_probability(value);
        p > 0.0 && rng.random::<f64>() < p
    }
}

/// Single Bernoulli draw: 1 with probability `r·dt`.
pub fn poisson_encode<R: Rng + ?Sized>(value: f64, dt: f64, rate_bounds: (f64, f64), rng: &mut R) -> Result<u8> {
    let enc = PoissonEncoder::new(rate_bounds.0, rate_bounds.1, dt)?;
    Ok(enc.encode(value, rng) as u8)
}
