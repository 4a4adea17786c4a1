//! Monte-Carlo experiment runner.
//!
//! Sweeps a grid of array sizes, tone counts and schemes over independent
//! channel realizations, recomputes every reported power through the
//! rectenna model (solver-internal objectives are never trusted), and
//! renders rows as CSV plus a per-cell summary. Runs are bit-reproducible
//! for a fixed spec: channel seeds derive from (spec seed, realization)
//! only, so every cell sees the same fading process and larger arrays
//! contain the smaller ones realization by realization.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{ass_solution, tone_beams};
use crate::channel::{BandPlan, Channel, TapProfile};
use crate::opt_abf::solve_abf;
use crate::opt_dc::solve_dc;
use crate::opt_rf::solve_rf_general;
use crate::rectenna::{
    dc_output_power, dc_received_rf_power, dc_total_voltage, rf_output_power, rf_received_power,
    rf_voltage, RectifierParams,
};
use crate::solution::{CombinerSolution, ReceiveCombiner, Scheme, SolveReport, SolverOpts};
use crate::{Error, Result};

fn default_power_dbm() -> f64 {
    -30.0
}
fn default_center_hz() -> f64 {
    5.18e9
}
fn default_bandwidth_hz() -> f64 {
    1e7
}
fn default_realizations() -> usize {
    100
}
fn default_epsilon() -> f64 {
    SolverOpts::default().epsilon
}
fn default_max_iterations() -> usize {
    SolverOpts::default().max_iterations
}
fn default_rectifier() -> RectifierParams {
    RectifierParams::default()
}

/// Experiment description; the JSON config file mirrors this field for
/// field. Band and tap fields default to the built-in indoor setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(rename = "M")]
    pub tx_antennas: Vec<usize>,
    #[serde(rename = "N")]
    pub tones: Vec<usize>,
    #[serde(rename = "Q")]
    pub rx_antennas: Vec<usize>,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_power_dbm")]
    pub power_dbm: f64,
    #[serde(default = "default_center_hz")]
    pub center_hz: f64,
    #[serde(default = "default_bandwidth_hz")]
    pub bandwidth_hz: f64,
    /// Relative tap powers; omitted means the built-in 18-tap profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_powers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_spacing_s: Option<f64>,
    #[serde(default = "default_rectifier")]
    pub rectifier: RectifierParams,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tx_antennas.is_empty() || self.tones.is_empty() || self.rx_antennas.is_empty() {
            return Err(Error::Invalid(
                "experiment needs at least one entry in each of M, N, Q".into(),
            ));
        }
        if self
            .tx_antennas
            .iter()
            .chain(&self.tones)
            .chain(&self.rx_antennas)
            .any(|&v| v == 0)
        {
            return Err(Error::Invalid("M, N, Q entries must be positive".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Invalid("scheme list must not be empty".into()));
        }
        if self.realizations == 0 {
            return Err(Error::Invalid("realizations must be at least 1".into()));
        }
        if !self.power_dbm.is_finite() {
            return Err(Error::Invalid("power_dbm must be finite".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) || self.max_iterations == 0 {
            return Err(Error::Invalid("solver options out of range".into()));
        }
        self.rectifier.validate()?;
        self.tap_profile()?;
        BandPlan::new(self.center_hz, self.bandwidth_hz, 1)?;
        Ok(())
    }

    pub fn power_w(&self) -> f64 {
        1e-3 * 10f64.powf(self.power_dbm / 10.0)
    }

    pub fn tap_profile(&self) -> Result<TapProfile> {
        match (&self.tap_powers, self.tap_spacing_s) {
            (None, None) => Ok(TapProfile::indoor_default()),
            (Some(p), Some(dt)) => TapProfile::new(p.clone(), dt),
            _ => Err(Error::Invalid(
                "tap_powers and tap_spacing_s must be given together".into(),
            )),
        }
    }

    pub fn solver_opts(&self) -> SolverOpts {
        SolverOpts {
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// One (cell, realization, scheme) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub tx: usize,
    pub tones: usize,
    pub rx: usize,
    pub scheme: Scheme,
    pub realization: usize,
    pub p_out_w: f64,
    pub p_rf_w: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Per-cell aggregate: means with 95% normal-approximation half-widths.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    #[serde(rename = "M")]
    pub tx: usize,
    #[serde(rename = "N")]
    pub tones: usize,
    #[serde(rename = "Q")]
    pub rx: usize,
    pub scheme: Scheme,
    pub realizations: usize,
    pub mean_p_out_w: f64,
    pub ci95_p_out_w: f64,
    pub mean_p_rf_w: f64,
    pub ci95_p_rf_w: f64,
    pub mean_iterations: f64,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<CellSummary>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Channel seed for one realization. Deliberately independent of the grid
/// cell: all cells see the same sequence of fading draws, and the
/// generator's per-antenna streams make larger arrays supersets of
/// smaller ones.
pub fn realization_seed(base: u64, realization: usize) -> u64 {
    splitmix64(splitmix64(base) ^ realization as u64)
}

/// Dispatches one scheme on one channel. Baseline schemes are wrapped in
/// the same solution shape as the optimizers, with a trivial report.
pub fn solve_scheme(
    c: &Channel,
    scheme: Scheme,
    power: f64,
    p: &RectifierParams,
    opts: &SolverOpts,
) -> Result<CombinerSolution> {
    let trivial = |objective: f64| SolveReport {
        iterations: 0,
        converged: true,
        objective_trace: vec![objective],
        relative_step: 0.0,
    };
    match scheme {
        Scheme::DcAss => {
            let ass = ass_solution(c, power)?;
            let objective = dc_total_voltage(&ass.waveform, c, p);
            Ok(CombinerSolution {
                scheme,
                waveform: ass.waveform,
                receive: ReceiveCombiner::None,
                objective,
                report: trivial(objective),
            })
        }
        Scheme::DcOpt => solve_dc(c, power, p, opts),
        Scheme::RfAss => {
            let ass = ass_solution(c, power)?;
            let combiners: Vec<_> = tone_beams(c)?.into_iter().map(|b| b.left).collect();
            let objective = rf_voltage(&ass.waveform, c, &combiners, p);
            Ok(CombinerSolution {
                scheme,
                waveform: ass.waveform,
                receive: ReceiveCombiner::PerTone(combiners),
                objective,
                report: trivial(objective),
            })
        }
        Scheme::RfOpt => solve_rf_general(c, power, p, opts),
        Scheme::RfAbf => solve_abf(c, power, p, opts),
    }
}

/// Output and received power of a solution, recomputed through the
/// rectenna model.
pub fn solution_powers(sol: &CombinerSolution, c: &Channel, p: &RectifierParams) -> (f64, f64) {
    match &sol.receive {
        ReceiveCombiner::None => (
            dc_output_power(&sol.waveform, c, p),
            dc_received_rf_power(&sol.waveform, c),
        ),
        ReceiveCombiner::PerTone(ws) => (
            rf_output_power(&sol.waveform, c, ws, p),
            rf_received_power(&sol.waveform, c, ws),
        ),
        ReceiveCombiner::Common(w) => {
            let ws: Vec<_> = vec![w.clone(); c.tones()];
            (
                rf_output_power(&sol.waveform, c, &ws, p),
                rf_received_power(&sol.waveform, c, &ws),
            )
        }
    }
}

/// Runs one scheme and reduces the outcome to the row quantities.
pub fn run_scheme(
    c: &Channel,
    scheme: Scheme,
    power: f64,
    p: &RectifierParams,
    opts: &SolverOpts,
) -> Result<(f64, f64, usize, bool)> {
    let sol = solve_scheme(c, scheme, power, p, opts)?;
    let (p_out, p_rf) = solution_powers(&sol, c, p);
    Ok((p_out, p_rf, sol.report.iterations, sol.report.converged))
}

/// Executes the full sweep. `threads` picks the parallelism degree:
/// `Some(n)` forces n workers, `None` falls back to the WPT_THREADS
/// environment variable and then to the machine default. Row order is by
/// (M, N, Q, realization, scheme) regardless of completion order.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentRun> {
    spec.validate()?;
    let profile = spec.tap_profile()?;
    let power = spec.power_w();
    let opts = spec.solver_opts();
    let params = spec.rectifier;

    struct Task {
        tx: usize,
        tones: usize,
        rx: usize,
        realization: usize,
    }
    let mut tasks = Vec::new();
    for &tx in &spec.tx_antennas {
        for &tones in &spec.tones {
            for &rx in &spec.rx_antennas {
                for realization in 0..spec.realizations {
                    tasks.push(Task {
                        tx,
                        tones,
                        rx,
                        realization,
                    });
                }
            }
        }
    }

    let run_task = |t: &Task| -> Result<Vec<ResultRow>> {
        let band = BandPlan::new(spec.center_hz, spec.bandwidth_hz, t.tones)?;
        let seed = realization_seed(spec.seed, t.realization);
        let channel = Channel::generate(t.tx, t.rx, band, &profile, seed)?;
        let mut rows = Vec::with_capacity(spec.schemes.len());
        for &scheme in &spec.schemes {
            let started = Instant::now();
            let (p_out, p_rf, iterations, converged) =
                run_scheme(&channel, scheme, power, &params, &opts)?;
            rows.push(ResultRow {
                tx: t.tx,
                tones: t.tones,
                rx: t.rx,
                scheme,
                realization: t.realization,
                p_out_w: p_out,
                p_rf_w: p_rf,
                iterations,
                converged,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }
        Ok(rows)
    };

    let nested: Vec<Result<Vec<ResultRow>>> = match resolve_threads(threads) {
        Some(1) => tasks.iter().map(run_task).collect(),
        n => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.unwrap_or(0))
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            pool.install(|| tasks.par_iter().map(run_task).collect())
        }
    };
    let mut rows = Vec::with_capacity(tasks.len() * spec.schemes.len());
    for group in nested {
        rows.extend(group?);
    }
    let summary = summarize(&rows);
    Ok(ExperimentRun { rows, summary })
}

/// --threads beats WPT_THREADS beats the default.
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("WPT_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
    })
}

type CellKey = (usize, usize, usize, Scheme);

fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut cells: Vec<(CellKey, Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        let key = (row.tx, row.tones, row.rx, row.scheme);
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row),
            None => cells.push((key, vec![row])),
        }
    }
    cells
        .into_iter()
        .map(|((tx, tones, rx, scheme), group)| {
            let n = group.len();
            let mean = |f: &dyn Fn(&ResultRow) -> f64| -> f64 {
                group.iter().map(|r| f(r)).sum::<f64>() / n as f64
            };
            let half_width = |f: &dyn Fn(&ResultRow) -> f64, mu: f64| -> f64 {
                if n < 2 {
                    return 0.0;
                }
                let var = group.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            };
            let mean_p_out = mean(&|r| r.p_out_w);
            let mean_p_rf = mean(&|r| r.p_rf_w);
            CellSummary {
                tx,
                tones,
                rx,
                scheme,
                realizations: n,
                mean_p_out_w: mean_p_out,
                ci95_p_out_w: half_width(&|r| r.p_out_w, mean_p_out),
                mean_p_rf_w: mean_p_rf,
                ci95_p_rf_w: half_width(&|r| r.p_rf_w, mean_p_rf),
                mean_iterations: mean(&|r| r.iterations as f64),
                converged_fraction: group.iter().filter(|r| r.converged).count() as f64 / n as f64,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "M,N,Q,scheme,realization,P_out_W,P_rf_W,iterations,converged,wall_time_s";

/// Writes rows as CSV. Floats carry 17 significant digits so values
/// round-trip exactly; wall_time_s is informational and excluded from
/// reproducibility comparisons.
pub fn write_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.16e},{:.16e},{},{},{:.16e}",
            r.tx,
            r.tones,
            r.rx,
            r.scheme,
            r.realization,
            r.p_out_w,
            r.p_rf_w,
            r.iterations,
            r.converged,
            r.wall_time_s
        )?;
    }
    Ok(())
}

pub fn csv_to_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv is ascii")
}

/// Drops the trailing wall-time column from every line, leaving the part
/// of the CSV that must be byte-identical across reruns.
pub fn csv_without_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(idx) => &line[..idx],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn summary_to_json(summary: &[CellSummary]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "cells": summary }))
        .expect("summary serialization cannot fail")
}
