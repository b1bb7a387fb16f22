//! Benchmark grids. Each suite expands into independent cells that run in
//! parallel; results come back in plan order, so tables do not depend on
//! scheduling.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use spikeforce::seeds::derive_seed;
use spikeforce::trainer::{final_evaluation, final_noisy_evaluation, EpochScoring};
use spikeforce::{train, Procedure, SignalKind, SignalSpec, TrainConfig};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{self, Table};
use crate::record::{self, ResultRecord};

/// The eight benchmark systems in table order.
pub const SYSTEMS: [SignalKind; 8] = [
    SignalKind::Sine,
    SignalKind::SumOfSines,
    SignalKind::ProductOfSines,
    SignalKind::Accordian,
    SignalKind::OdeToJoy,
    SignalKind::Triangle,
    SignalKind::VanDerPolHarmonic,
    SignalKind::VanDerPolRelaxed,
];

pub const TTFS_NEURONS: usize = 200;
pub const RATE_NEURONS: usize = 1000;
pub const NOISE_NEURONS: usize = 600;
pub const NOISE_LEVEL: f64 = 0.1;
pub const SPIKERATE_SIZES: [usize; 2] = [200, 1000];

/// Intervals 0.1, 0.35, ..., 2.1 s.
pub fn intervals() -> Vec<f64> {
    (0..9).map(|k| 0.1 + 0.25 * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Table2,
    Table3,
    Spikerate,
    Table4Noise,
    Interval,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Table2, Suite::Table3, Suite::Spikerate, Suite::Table4Noise, Suite::Interval];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Table2 => "table2",
            Suite::Table3 => "table3",
            Suite::Spikerate => "spikerate",
            Suite::Table4Noise => "table4-noise",
            Suite::Interval => "interval",
        }
    }

    fn default_procedures(&self) -> Vec<Procedure> {
        match self {
            Suite::Spikerate => vec![Procedure::FullForceRate, Procedure::FullForceTtfs],
            _ => Procedure::ALL.to_vec(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown suite '{s}' (expected table2, table3, spikerate, table4-noise or interval)")))
    }
}

/// Which part of a suite grid to run.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub config: ExperimentConfig,
    pub procedures: Option<Vec<Procedure>>,
    pub systems: Option<Vec<SignalKind>>,
    /// Interval subset for the interval suite.
    pub intervals: Option<Vec<f64>>,
    /// Network sizes for the spikerate suite.
    pub sizes: Option<Vec<usize>>,
    /// Score every epoch in closed loop. Only convergence times need it;
    /// the final MSE is the same closed-loop evaluation either way.
    pub closed_loop_epochs: Option<bool>,
}

impl BenchOptions {
    pub fn new(config: ExperimentConfig) -> Self {
        Self { config, procedures: None, systems: None, intervals: None, sizes: None, closed_loop_epochs: None }
    }
}

/// One run of a suite.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub procedure: Procedure,
    pub system: SignalKind,
    pub neurons: usize,
    pub interval: Option<f64>,
    pub repeat: usize,
    #[serde(skip)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellOutcome {
    #[serde(flatten)]
    pub cell: Cell,
    pub record: Option<ResultRecord>,
    /// Closed-loop MSE with noise-free input (noise suite only).
    pub clean_mse: Option<f64>,
    pub epoch_mse: Vec<f64>,
    pub epoch_training_mse: Vec<f64>,
    pub total_spikes: u64,
    pub window_violations: u64,
    pub contraction_violations: u64,
    /// Training time; excluded from every table.
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn mse(&self) -> Option<f64> {
        self.record.as_ref().map(|r| r.metrics.mse)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub master_seed: u64,
    pub repeats: usize,
    pub cells: Vec<CellOutcome>,
    #[serde(skip)]
    pub table: Table,
}

impl SuiteResult {
    /// Outcomes matching a procedure and system (all repeats).
    pub fn outcomes(&self, p: Procedure, s: SignalKind) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(move |c| c.cell.procedure == p && c.cell.system == s)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Expands a suite into its cells.
pub fn plan(suite: Suite, opts: &BenchOptions) -> Result<Vec<Cell>> {
    let cfg = &opts.config;
    let procedures = opts.procedures.clone().unwrap_or_else(|| suite.default_procedures());
    let systems = match (&opts.systems, cfg.system_set()) {
        (Some(s), _) => s.clone(),
        (None, true) => vec![cfg.signal.kind],
        (None, false) => SYSTEMS.to_vec(),
    };
    let repeats = cfg.experiment.repeats;
    let master = cfg.seed();
    let closed = opts.closed_loop_epochs.unwrap_or(suite == Suite::Table3);

    let mut cells = Vec::new();
    let mut push = |procedure: Procedure, system: SignalKind, neurons: usize, interval: Option<f64>| -> Result<()> {
        for repeat in 0..repeats {
            let mut config = cfg.train_config_for(procedure)?;
            if cfg.neurons_override().is_none() {
                config.network.neurons = neurons;
            }
            config.seed = derive_seed(master, repeat as u64);
            if opts.closed_loop_epochs.is_some() || cfg.train.epoch_scoring.is_none() {
                config.epoch_scoring = if closed { EpochScoring::ClosedLoop } else { EpochScoring::Training };
            }
            match interval {
                Some(i) => config.signal = SignalSpec { interval: i, ..SignalSpec::new(SignalKind::IntervalMatch) },
                None => {
                    config.signal.kind = system;
                }
            }
            if suite == Suite::Table4Noise && config.input_noise == 0.0 {
                config.input_noise = NOISE_LEVEL;
            }
            config.validate()?;
            let neurons = config.network.neurons;
            cells.push(Cell { procedure, system: config.signal.kind, neurons, interval, repeat, config });
        }
        Ok(())
    };

    match suite {
        Suite::Table2 => {
            for &s in &systems {
                for &p in &procedures {
                    let n = if p == Procedure::FullForceTtfs { TTFS_NEURONS } else { RATE_NEURONS };
                    push(p, s, n, None)?;
                }
            }
        }
        Suite::Table3 => {
            for &s in &systems {
                for &p in &procedures {
                    push(p, s, TTFS_NEURONS, None)?;
                }
            }
        }
        Suite::Spikerate => {
            let sizes = opts.sizes.clone().unwrap_or_else(|| SPIKERATE_SIZES.to_vec());
            for &n in &sizes {
                for &s in &systems {
                    for &p in &procedures {
                        push(p, s, n, None)?;
                    }
                }
            }
        }
        Suite::Table4Noise => {
            for &s in &systems {
                for &p in &procedures {
                    push(p, s, NOISE_NEURONS, None)?;
                }
            }
        }
        Suite::Interval => {
            let intervals = opts.intervals.clone().unwrap_or_else(intervals);
            for &i in &intervals {
                for &p in &procedures {
                    let n = if p == Procedure::FullForceTtfs { TTFS_NEURONS } else { RATE_NEURONS };
                    push(p, SignalKind::IntervalMatch, n, Some(i))?;
                }
            }
        }
    }
    Ok(cells)
}

/// Trains and scores one cell. Failures are recorded, not propagated.
pub fn run_cell(suite: Suite, cell: &Cell) -> CellOutcome {
    let mut out = CellOutcome {
        cell: cell.clone(),
        record: None,
        clean_mse: None,
        epoch_mse: Vec::new(),
        epoch_training_mse: Vec::new(),
        total_spikes: 0,
        window_violations: 0,
        contraction_violations: 0,
        wall_time_s: 0.0,
        error: None,
    };
    let result = (|| -> Result<()> {
        let trained = train(&cell.config)?;
        let mut report = trained.report;
        if suite == Suite::Table4Noise {
            out.clean_mse = Some(final_evaluation(&cell.config, &trained.model)?.mse);
            report.final_mse = final_noisy_evaluation(&cell.config, &trained.model)?.mse;
        }
        out.total_spikes = report.epoch_spikes.iter().sum();
        out.window_violations = report.window_violations;
        out.contraction_violations = report.contraction_violations;
        out.wall_time_s = report.wall_time_s;
        out.epoch_mse = report.epoch_mse.clone();
        out.epoch_training_mse = report.epoch_training_mse.clone();
        out.record = Some(ResultRecord::from_report(&cell.config, &report)?);
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

pub fn run(suite: Suite, opts: &BenchOptions) -> Result<SuiteResult> {
    let cells = plan(suite, opts)?;
    let outcomes: Vec<CellOutcome> = cells.par_iter().map(|c| run_cell(suite, c)).collect();
    let mut result = SuiteResult {
        suite,
        master_seed: opts.config.seed(),
        repeats: opts.config.experiment.repeats,
        cells: outcomes,
        table: Table::default(),
    };
    result.table = tabulate(&result);
    Ok(result)
}

/// Paths of the files a suite run produced.
#[derive(Debug, Clone)]
pub struct SuiteFiles {
    pub table: PathBuf,
    pub detail: PathBuf,
}

pub fn write(result: &SuiteResult, dir: &std::path::Path) -> Result<SuiteFiles> {
    let stamp = output::timestamp();
    let table = output::write_new(dir, result.suite.name(), &stamp, ".csv", result.table.to_csv()?.as_bytes())?;
    let detail = output::write_new(dir, result.suite.name(), &stamp, ".json", record::to_json(result)?.as_bytes())?;
    Ok(SuiteFiles { table, detail })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean over repeats, or a marker when every repeat failed.
fn mean_cell<'a>(outcomes: impl Iterator<Item = &'a CellOutcome>, f: impl Fn(&CellOutcome) -> Option<f64>) -> String {
    let outs: Vec<&CellOutcome> = outcomes.collect();
    if outs.is_empty() {
        return String::new();
    }
    let vals: Vec<f64> = outs.iter().filter_map(|o| f(o)).collect();
    match mean(&vals) {
        Some(m) => fmt_num(m),
        None if outs.iter().any(|o| o.error.is_some()) => "failed".into(),
        None => "not-reached".into(),
    }
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

fn procedures_in(result: &SuiteResult) -> Vec<Procedure> {
    let mut ps: Vec<Procedure> = Vec::new();
    for c in &result.cells {
        if !ps.contains(&c.cell.procedure) {
            ps.push(c.cell.procedure);
        }
    }
    ps.sort_by_key(|p| Procedure::ALL.iter().position(|q| q == p));
    ps
}

fn systems_in(result: &SuiteResult) -> Vec<SignalKind> {
    let mut ss: Vec<SignalKind> = Vec::new();
    for c in &result.cells {
        if !ss.contains(&c.cell.system) {
            ss.push(c.cell.system);
        }
    }
    ss
}

/// Builds the suite's summary table from its outcomes.
pub fn tabulate(result: &SuiteResult) -> Table {
    let procs = procedures_in(result);
    let systems = systems_in(result);
    match result.suite {
        Suite::Table2 | Suite::Table3 => {
            let mut t = Table::new(std::iter::once("system".to_string()).chain(procs.iter().map(|p| p.label().to_string())));
            let metric = |o: &CellOutcome| -> Option<f64> {
                let r = o.record.as_ref()?;
                if result.suite == Suite::Table2 { Some(r.metrics.mse) } else { r.metrics.ttc_epochs }
            };
            for &s in &systems {
                let mut row = vec![s.name().to_string()];
                row.extend(procs.iter().map(|&p| mean_cell(result.outcomes(p, s), metric)));
                t.push(row);
            }
            if result.suite == Suite::Table2 {
                let mut row = vec!["mean".to_string()];
                for &p in &procs {
                    let per_system: Vec<f64> = systems
                        .iter()
                        .filter_map(|&s| mean(&result.outcomes(p, s).filter_map(|o| o.mse()).collect::<Vec<_>>()))
                        .collect();
                    row.push(if per_system.len() == systems.len() { fmt_num(mean(&per_system).unwrap_or(f64::NAN)) } else { "failed".into() });
                }
                t.push(row);
            }
            t
        }
        Suite::Table4Noise => {
            let mut header = vec!["system".to_string()];
            for p in &procs {
                header.push(format!("{} noisy-input", p.label()));
                header.push(format!("{} clean-input", p.label()));
            }
            let mut t = Table::new(header);
            for &s in &systems {
                let mut row = vec![s.name().to_string()];
                for &p in &procs {
                    row.push(mean_cell(result.outcomes(p, s), |o| o.mse()));
                    row.push(mean_cell(result.outcomes(p, s), |o| o.clean_mse));
                }
                t.push(row);
            }
            t
        }
        Suite::Spikerate => {
            let rate = Procedure::FullForceRate;
            let ttfs = Procedure::FullForceTtfs;
            let mut t = Table::new(["neurons", "system", "rate_spikes", "ttfs_spikes", "ratio", "rate_hz", "ttfs_hz"]);
            let mut sizes: Vec<usize> = result.cells.iter().map(|c| c.cell.neurons).collect();
            sizes.dedup();
            let mut seen = Vec::new();
            for n in sizes {
                if seen.contains(&n) {
                    continue;
                }
                seen.push(n);
                for &s in &systems {
                    let pick = |p: Procedure| -> Vec<&CellOutcome> {
                        result.cells.iter().filter(|c| c.cell.procedure == p && c.cell.system == s && c.cell.neurons == n).collect()
                    };
                    let spikes = |cells: &[&CellOutcome]| mean(&cells.iter().filter(|c| c.error.is_none()).map(|c| c.total_spikes as f64).collect::<Vec<_>>());
                    let hz = |cells: &[&CellOutcome]| mean(&cells.iter().filter_map(|c| c.record.as_ref().map(|r| r.metrics.avg_spike_rate)).collect::<Vec<_>>());
                    let (r, f) = (pick(rate), pick(ttfs));
                    let show = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), fmt_num);
                    let ratio = match (spikes(&r), spikes(&f)) {
                        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                        _ => None,
                    };
                    t.push(vec![n.to_string(), s.name().to_string(), show(spikes(&r)), show(spikes(&f)), show(ratio), show(hz(&r)), show(hz(&f))]);
                }
            }
            t
        }
        Suite::Interval => {
            let mut t = Table::new(std::iter::once("interval".to_string()).chain(procs.iter().map(|p| p.label().to_string())));
            let mut ivs: Vec<f64> = Vec::new();
            for c in &result.cells {
                if let Some(i) = c.cell.interval {
                    if !ivs.contains(&i) {
                        ivs.push(i);
                    }
                }
            }
            for &i in &ivs {
                let mut row = vec![format!("{i:.2}")];
                for &p in &procs {
                    row.push(mean_cell(result.cells.iter().filter(|c| c.cell.procedure == p && c.cell.interval == Some(i)), |o| o.mse()));
                }
                t.push(row);
            }
            let mut row = vec!["mean".to_string()];
            for &p in &procs {
                let per: Vec<f64> = ivs
                    .iter()
                    .filter_map(|&i| mean(&result.cells.iter().filter(|c| c.cell.procedure == p && c.cell.interval == Some(i)).filter_map(|o| o.mse()).collect::<Vec<_>>()))
                    .collect();
                row.push(if per.len() == ivs.len() { fmt_num(mean(&per).unwrap_or(f64::NAN)) } else { "failed".into() });
            }
            t.push(row);
            t
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(text: &str) -> BenchOptions {
        BenchOptions::new(ExperimentConfig::parse(text).unwrap())
    }

    #[test]
    fn interval_grid_has_nine_rows() {
        let iv = intervals();
        assert_eq!(iv.len(), 9);
        assert!((iv[8] - 2.1).abs() < 1e-12);
        let cells = plan(Suite::Interval, &opts("[experiment]\nrepeats = 1\n")).unwrap();
        assert_eq!(cells.len(), 27);
        assert!(cells.iter().all(|c| c.config.signal.kind == SignalKind::IntervalMatch));
    }

    #[test]
    fn noise_suite_uses_600_neurons_and_ten_percent() {
        let cells = plan(Suite::Table4Noise, &opts("[experiment]\nrepeats = 2\n")).unwrap();
        assert_eq!(cells.len(), 8 * 3 * 2);
        for c in &cells {
            assert_eq!(c.config.network.neurons, 600);
            assert_eq!(c.config.input_noise, 0.1);
            assert_eq!(c.config.epochs, 50);
        }
    }

    #[test]
    fn table2_sizes_follow_coding() {
        let cells = plan(Suite::Table2, &opts("[experiment]\nrepeats = 1\n")).unwrap();
        assert_eq!(cells.len(), 24);
        for c in &cells {
            let n = if c.procedure == Procedure::FullForceTtfs { 200 } else { 1000 };
            assert_eq!(c.config.network.neurons, n);
            assert_eq!(c.config.epoch_scoring, EpochScoring::Training);
        }
        let cells = plan(Suite::Table3, &opts("[experiment]\nrepeats = 1\n")).unwrap();
        assert!(cells.iter().all(|c| c.neurons == 200 && c.config.epoch_scoring == EpochScoring::ClosedLoop));
    }

    #[test]
    fn repeats_get_distinct_seeds_shared_across_cells() {
        let cells = plan(Suite::Table2, &opts("[experiment]\nrepeats = 3\n[train]\nseed = 9\n")).unwrap();
        let seeds: Vec<u64> = cells.iter().filter(|c| c.procedure == Procedure::ForceRate && c.system == SignalKind::Sine).map(|c| c.config.seed).collect();
        assert_eq!(seeds.len(), 3);
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
        let other: Vec<u64> = cells.iter().filter(|c| c.procedure == Procedure::FullForceRate && c.system == SignalKind::Triangle).map(|c| c.config.seed).collect();
        assert_eq!(seeds, other);
    }

    #[test]
    fn small_suite_runs_and_tabulates() {
        let mut o = opts("[experiment]\nrepeats = 1\n[train]\nepochs = 2\n[signal]\nduration = 1.0\n");
        o.systems = Some(vec![SignalKind::Sine]);
        o.sizes = Some(vec![40]);
        let r = run(Suite::Spikerate, &o).unwrap();
        assert_eq!(r.failures(), 0);
        assert_eq!(r.table.rows.len(), 1);
        let ratio: f64 = r.table.rows[0][4].parse().unwrap();
        assert!(ratio > 0.0);
    }
}
