//! Repetitions, flow sweeps and the rows they produce.

use codesleep_core::mac::{Simulation, TraceEvent};
use codesleep_core::metrics::{avg_delay, coding_gain, energy_per_bit, lifetime, Convergence, Lifetime, MetricsReport};
use codesleep_core::rng::derive_seed;
use codesleep_core::{Action, ScenarioConfig, Slot};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("scenario `{0}` names its flows explicitly; a flow sweep needs random flows")]
    SweepOnExplicitFlows(String),
    #[error("need at least one repetition")]
    NoRepetitions,
    #[error(transparent)]
    Config(#[from] codesleep_core::config::ConfigError),
}

/// What to run on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct Plan {
    /// Flow counts to sweep; empty means the scenario's own.
    pub flows: Vec<usize>,
    pub trace: bool,
    pub dump_qtable: bool,
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scenario: String,
    pub policy: String,
    pub flows: usize,
    pub nodes: usize,
    pub rep: usize,
    pub seed: u64,
    pub duration: Slot,
    pub data_transmissions: u64,
    pub coded_transmissions: u64,
    pub native_equivalent: u64,
    pub report_transmissions: u64,
    pub coding_gain: Option<f64>,
    pub total_energy_j: f64,
    pub delivered_bits: u64,
    pub energy_per_bit: Option<f64>,
    pub packets: usize,
    pub delivered: usize,
    pub delay_mean_slots: Option<f64>,
    pub lifetime_slots: Option<Slot>,
    pub deaths: usize,
    pub converged_epoch: Option<u64>,
    pub trace_hash: String,
}

/// One line of `aggregate.csv`. Column order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub policy: String,
    pub flows: usize,
    pub nodes: usize,
    pub seed_count: usize,
    pub coding_gain_mean: Option<f64>,
    pub coding_gain_sd: Option<f64>,
    pub energy_per_bit_mean: Option<f64>,
    pub delay_mean_slots: Option<f64>,
    /// Earliest death over all runs; a run nobody died in counts its length.
    pub lifetime_min_slots: Slot,
    pub converged_epoch: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub row: RunRow,
    pub report: MetricsReport,
    pub trace: Option<Vec<TraceEvent>>,
    pub qtables: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub runs: Vec<RunOutput>,
    pub aggregates: Vec<AggregateRow>,
}

impl Experiment {
    pub fn rows(&self) -> impl Iterator<Item = &RunRow> {
        self.runs.iter().map(|r| &r.row)
    }
}

pub fn run_row(config: &ScenarioConfig, rep: usize, report: &MetricsReport) -> RunRow {
    let gain = coding_gain(report);
    RunRow {
        scenario: config.name.clone(),
        policy: config.policy.label(),
        flows: report.flows,
        nodes: report.nodes,
        rep,
        seed: config.seed,
        duration: report.duration,
        data_transmissions: report.data_transmissions,
        coded_transmissions: report.coded_transmissions,
        native_equivalent: report.native_equivalent,
        report_transmissions: report.report_transmissions,
        coding_gain: gain.defined.then_some(gain.value),
        total_energy_j: report.total_energy(),
        delivered_bits: report.delivered_bits,
        energy_per_bit: energy_per_bit(report),
        packets: report.packets.len(),
        delivered: report.delivered(),
        delay_mean_slots: avg_delay(report),
        lifetime_slots: match lifetime(report) {
            Lifetime::Died(s) => Some(s),
            Lifetime::Survived => None,
        },
        deaths: report.deaths.iter().flatten().count(),
        converged_epoch: Convergence::default().epoch(report),
        trace_hash: format!("{:016x}", report.trace_hash),
    }
}

/// Q-table rows as text: `node energy degree action delay value`.
pub fn format_qtables(sim: &Simulation) -> String {
    let mut out = String::from("node energy degree action delay value\n");
    for (node, table) in sim.q_tables().into_iter().enumerate() {
        let Some(table) = table else { continue };
        for (s, a, theta, v) in table.rows() {
            let a = match a {
                Action::Overhear => "overhear",
                Action::Sleep => "sleep",
            };
            out.push_str(&format!("{node} {} {} {a} {theta} {v}\n", s.energy, s.degree));
        }
    }
    out
}

pub fn run_once(config: &ScenarioConfig, rep: usize, plan: &Plan) -> Result<RunOutput, ExperimentError> {
    let mut sim = Simulation::new(config)?;
    sim.record_trace(plan.trace);
    sim.run_to_end();
    let report = sim.report();
    let row = run_row(config, rep, &report);
    debug!(
        "{} {} flows={} rep={} gain={:?} delivered={}/{}",
        row.scenario, row.policy, row.flows, rep, row.coding_gain, row.delivered, row.packets
    );
    Ok(RunOutput {
        row,
        trace: sim.trace().map(<[TraceEvent]>::to_vec),
        qtables: plan.dump_qtable.then(|| format_qtables(&sim)),
        report,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation; zero for a single value.
fn sd(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Summary of rows that share scenario, policy and flow count. Undefined
/// per-run values are left out of the means.
pub fn aggregate(rows: &[RunRow]) -> Option<AggregateRow> {
    let first = rows.first()?;
    let gains: Vec<f64> = rows.iter().filter_map(|r| r.coding_gain).collect();
    let epb: Vec<f64> = rows.iter().filter_map(|r| r.energy_per_bit).collect();
    let delay: Vec<f64> = rows.iter().filter_map(|r| r.delay_mean_slots).collect();
    let conv: Vec<f64> = rows.iter().filter_map(|r| r.converged_epoch.map(|e| e as f64)).collect();
    Some(AggregateRow {
        scenario: first.scenario.clone(),
        policy: first.policy.clone(),
        flows: first.flows,
        nodes: first.nodes,
        seed_count: rows.len(),
        coding_gain_mean: mean(&gains),
        coding_gain_sd: sd(&gains),
        energy_per_bit_mean: mean(&epb),
        delay_mean_slots: mean(&delay),
        lifetime_min_slots: rows
            .iter()
            .map(|r| r.lifetime_slots.unwrap_or(r.duration))
            .min()
            .unwrap_or(0),
        converged_epoch: mean(&conv),
    })
}

/// Config for one sweep point and repetition: flow count applied, seed
/// derived from the master seed and the repetition index.
pub fn instance(config: &ScenarioConfig, flows: Option<usize>, rep: usize) -> ScenarioConfig {
    let mut c = config.clone();
    if let Some(f) = flows {
        c.traffic.flow_count = f;
    }
    c.seed = derive_seed(config.seed, rep as u64);
    c
}

/// Runs every repetition of every sweep point. Repetitions run in parallel;
/// results come back ordered by sweep point, then repetition.
pub fn run_experiment(config: &ScenarioConfig, plan: &Plan) -> Result<Experiment, ExperimentError> {
    config.validate()?;
    if config.repetitions == 0 {
        return Err(ExperimentError::NoRepetitions);
    }
    if !plan.flows.is_empty() && !config.traffic.flows.is_empty() {
        return Err(ExperimentError::SweepOnExplicitFlows(config.name.clone()));
    }
    let points: Vec<Option<usize>> = if plan.flows.is_empty() {
        vec![None]
    } else {
        plan.flows.iter().copied().map(Some).collect()
    };
    let jobs: Vec<(Option<usize>, usize)> = points
        .iter()
        .flat_map(|&p| (0..config.repetitions).map(move |rep| (p, rep)))
        .collect();
    info!(
        "{}: policy {}, {} sweep point(s) x {} repetition(s)",
        config.name,
        config.policy,
        points.len(),
        config.repetitions
    );
    let runs = jobs
        .par_iter()
        .map(|&(flows, rep)| run_once(&instance(config, flows, rep), rep, plan))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregates = runs
        .chunks(config.repetitions)
        .filter_map(|chunk| aggregate(&chunk.iter().map(|r| r.row.clone()).collect::<Vec<_>>()))
        .collect();
    Ok(Experiment { runs, aggregates })
}
