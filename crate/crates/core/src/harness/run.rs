use std::sync::Arc;

use super::output::{summarize, write_summary_csv, write_timing_csv, write_trace_csv, Indicators, SummaryRow, TraceRow};
use super::{Experiment, TurningMode};
use crate::control::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::flowstats::{write_estimates_csv, EstimateRow, FlowStats, TurningProbabilities};
use crate::mesosim::{SimConfig, Simulation, StepMetrics};
use crate::network::RoadNetwork;

/// Solver bookkeeping for one control instant.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub t: u64,
    pub num_spins: usize,
    pub energy: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub trace: Vec<StepMetrics>,
    pub cycles: Vec<CycleRecord>,
    pub estimates: Vec<EstimateRow>,
    /// Control decisions, one per cycle.
    pub signals: Vec<Vec<i8>>,
    /// Steps at which spawned != in network + arrived.
    pub conservation_failures: u64,
    pub spawned: u64,
    pub arrived: u64,
}

impl RunResult {
    pub fn averages(&self) -> Indicators {
        Indicators::time_average(&self.trace)
    }
}

/// Per-replication controller settings: the run seed offsets the controller
/// and solver seeds so replications use independent random streams.
pub fn controller_for_seed(config: &ControllerConfig, seed: u64) -> ControllerConfig {
    let mut c = config.clone();
    c.seed = c.seed.wrapping_add(seed);
    c.solver.seed = c.solver.seed.wrapping_add(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    c
}

/// Runs one replication: per second, a controller decision at every control
/// instant, one simulator step and an outflow update.
pub fn run_seed(
    net: &Arc<RoadNetwork>,
    sim_config: &SimConfig,
    controller: &ControllerConfig,
    turning: TurningMode,
    seed: u64,
) -> Result<RunResult> {
    let sim_config = SimConfig { seed, ..sim_config.clone() };
    let controller = controller_for_seed(controller, seed);
    let mut sim = Simulation::new(Arc::clone(net), sim_config.clone())?;
    sim.set_bias_weights(controller.weights(net)?)?;
    let mut stats = FlowStats::new(net, sim_config.saturation_flow);
    match turning {
        TurningMode::Routes => stats.set_turning(TurningProbabilities::from_routes(
            net.roads().len(),
            sim.trips().iter().map(|t| t.route.as_slice()),
        )),
        TurningMode::Online => stats.enable_online_turning(),
    }
    let mut ctrl = controller.build(Arc::clone(net))?;

    let mut sigma = vec![1i8; net.num_controlled()];
    let mut trace = Vec::with_capacity(sim_config.duration as usize);
    let mut cycles = Vec::new();
    let mut estimates = Vec::new();
    let mut signals = Vec::new();
    let mut conservation_failures = 0;
    for t in 0..sim_config.duration {
        if t % controller.tau == 0 {
            let plan = ctrl.decide(&sim.observe(), &mut stats)?;
            sigma = plan.sigma;
            if let Some(s) = plan.solve {
                cycles.push(CycleRecord { t, num_spins: s.num_spins, energy: s.energy, wall_time: s.wall_time });
            }
            estimates.push(stats.estimate_row(t));
            signals.push(sigma.clone());
        }
        let report = sim.step(&sigma)?;
        stats.update_outflow(net, &report.green, &report.departures);
        stats.record_turns(&report.turns);
        if sim.spawned() != sim.in_network() + sim.arrived() {
            conservation_failures += 1;
        }
        trace.push(report.metrics);
    }
    Ok(RunResult {
        seed,
        trace,
        cycles,
        estimates,
        signals,
        conservation_failures,
        spawned: sim.spawned(),
        arrived: sim.arrived(),
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.runs
            .iter()
            .flat_map(|r| r.trace.iter().enumerate().map(move |(t, m)| TraceRow::new(r.seed, t as u64, m)))
            .collect()
    }

    pub fn per_seed(&self) -> Vec<Indicators> {
        self.runs.iter().map(RunResult::averages).collect()
    }
}

pub(crate) fn solver_label(controller: &ControllerConfig) -> String {
    if controller.kind == ControllerKind::Ampic {
        controller.solver.kind.to_string()
    } else {
        "none".to_string()
    }
}

/// Runs every replication, then writes `trace.csv`, `summary.csv` and
/// `timing.csv` (plus per-seed estimates when enabled) into the output
/// directory. Nothing is written unless every run succeeds.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentOutcome> {
    exp.validate()?;
    let net = exp.network()?;
    let runs = exp
        .seeds
        .iter()
        .map(|&seed| run_seed(&net, &exp.sim, &exp.controller, exp.turning, seed))
        .collect::<Result<Vec<_>>>()?;
    let per_seed: Vec<Indicators> = runs.iter().map(RunResult::averages).collect();
    let summary = summarize(
        exp.controller.kind.as_str(),
        exp.sim.generation_rate,
        net.intersections().len(),
        exp.controller.horizon,
        &solver_label(&exp.controller),
        &per_seed,
    );
    let outcome = ExperimentOutcome { runs, summary };

    if let Some(dir) = &exp.output {
        if dir.exists() && !dir.is_dir() {
            return Err(Error::Config(format!("output path {} is not a directory", dir.display())));
        }
        write_trace_csv(&dir.join("trace.csv"), &outcome.trace_rows())?;
        write_summary_csv(&dir.join("summary.csv"), &outcome.summary)?;
        let timing: Vec<(u64, CycleRecord)> =
            outcome.runs.iter().flat_map(|r| r.cycles.iter().map(move |c| (r.seed, c.clone()))).collect();
        write_timing_csv(&dir.join("timing.csv"), &timing)?;
        if exp.write_estimates {
            for r in &outcome.runs {
                write_estimates_csv(dir.join(format!("estimates_seed{}.csv", r.seed)), &r.estimates)?;
            }
        }
    }
    Ok(outcome)
}
