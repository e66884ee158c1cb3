use std::path::PathBuf;
use std::time::Duration;

use ampic::control::ControllerKind;
use ampic::harness::coupling::{serve, serve_listener, CouplingOptions};
use ampic::harness::{
    controller_for_seed, run_experiment, sweep_generation_rate, sweep_horizon, sweep_network_size, Experiment,
    NetworkSpec, SummaryRow, SweepOptions, TurningMode,
};
use ampic::ising::IsingInstance;
use ampic::solvers::{self, SolverConfig, SolverKind};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ampic", version, about = "Model-predictive Ising control of traffic signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace, summary and timing CSVs.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Compare controllers across vehicle generation rates.
    SweepRate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Controllers to compare (default: all).
        #[arg(long, value_delimiter = ',')]
        controllers: Vec<ControllerKind>,
    },
    /// AMPIC against local control over lattice sizes at scaled rates.
    SweepSize {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Lattice sizes as ROWSxCOLS.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_size)]
        sizes: Vec<(usize, usize)>,
        /// Rates divided by the square root of the intersection count.
        #[arg(long, value_delimiter = ',', required = true)]
        scaled_rates: Vec<f64>,
    },
    /// Run AMPIC for several prediction horizons.
    SweepHorizon {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
    },
    /// Minimize an Ising instance given in the text format.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Serve the coupling protocol to an external simulator.
    Couple {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Listen on this TCP address for one peer; otherwise use stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
        /// Seconds to wait for each peer message (0 waits forever).
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
    },
}

#[derive(Args, Clone, Default)]
struct SolverArgs {
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    num_reads: Option<usize>,
    #[arg(long)]
    sa_sweeps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long)]
    solver_seed: Option<u64>,
}

impl SolverArgs {
    fn apply(&self, c: &mut SolverConfig) {
        if let Some(v) = self.solver {
            c.kind = v;
        }
        if let Some(v) = self.num_reads {
            c.num_reads = v;
        }
        if let Some(v) = self.sa_sweeps {
            c.sa_sweeps = v;
        }
        if let Some(v) = self.beta_start {
            c.beta_start = v;
        }
        if let Some(v) = self.beta_end {
            c.beta_end = v;
        }
        if let Some(v) = self.solver_seed {
            c.seed = v;
        }
    }
}

/// Flags override the matching fields of `--config`.
#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network file; replaces the lattice.
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    network: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Vehicles generated per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Control cycle, s.
    #[arg(long)]
    tau: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    turning: Option<String>,
    /// Disable left-turn yielding in the simulator.
    #[arg(long)]
    no_left_turn_yield: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write per-cycle flow estimates.
    #[arg(long)]
    estimates: bool,
}

impl ExperimentArgs {
    fn build(&self) -> Result<Experiment> {
        let mut exp = match &self.config {
            Some(path) => Experiment::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => Experiment::default(),
        };
        if let Some(path) = &self.network {
            exp.network = NetworkSpec::File { path: path.clone() };
        }
        if self.rows.is_some() || self.cols.is_some() {
            let (r0, c0, spacing) = match exp.network {
                NetworkSpec::Lattice { rows, cols, spacing } => (rows, cols, spacing),
                NetworkSpec::File { .. } => (5, 5, 100.0),
            };
            exp.network =
                NetworkSpec::Lattice { rows: self.rows.unwrap_or(r0), cols: self.cols.unwrap_or(c0), spacing };
        }
        if let Some(v) = self.controller {
            exp.controller.kind = v;
        }
        if let Some(v) = self.rate {
            exp.sim.generation_rate = v;
        }
        if let Some(v) = self.duration {
            exp.sim.duration = v;
        }
        if !self.seeds.is_empty() {
            exp.seeds = self.seeds.clone();
        }
        if let Some(v) = self.tau {
            exp.controller.tau = v;
        }
        if let Some(v) = self.horizon {
            exp.controller.horizon = v;
        }
        if let Some(v) = &self.turning {
            exp.turning = match v.as_str() {
                "routes" => TurningMode::Routes,
                "online" => TurningMode::Online,
                other => bail!("unknown turning mode '{other}' (expected routes or online)"),
            };
        }
        if self.no_left_turn_yield {
            exp.sim.left_turn_yield = false;
        }
        self.solver.apply(&mut exp.controller.solver);
        if let Some(v) = &self.output {
            exp.output = Some(v.clone());
        }
        exp.write_estimates |= self.estimates;
        exp.validate()?;
        Ok(exp)
    }
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Cache finished cells here and skip them on reruns.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Run cells in parallel.
    #[arg(long)]
    parallel: bool,
}

impl SweepArgs {
    fn options(&self, controllers: Vec<ControllerKind>) -> SweepOptions {
        SweepOptions { controllers, cache_dir: self.cache.clone(), parallel: self.parallel }
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got '{s}'"))?;
    Ok((r.trim().parse().map_err(|e| format!("{e}"))?, c.trim().parse().map_err(|e| format!("{e}"))?))
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<8} {:>7} {:>5} {:>4} {:<7} {:<14} {:>12} {:>10}", "ctrl", "rate", "N", "k_h", "solver", "indicator", "mean", "stderr");
    for r in rows {
        println!(
            "{:<8} {:>7.3} {:>5} {:>4} {:<7} {:<14} {:>12.5} {:>10.5}",
            r.controller, r.rate, r.n, r.k_h, r.solver, r.indicator, r.mean, r.stderr
        );
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { exp } => {
            let exp = exp.build()?;
            let outcome = run_experiment(&exp)?;
            print_summary(&outcome.summary);
            if let Some(dir) = &exp.output {
                log::info!("wrote results to {}", dir.display());
            }
        }
        Command::SweepRate { exp, sweep, rates, controllers } => {
            let rows = sweep_generation_rate(&exp.build()?, &rates, &sweep.options(controllers))?;
            print_summary(&rows);
        }
        Command::SweepSize { exp, sweep, sizes, scaled_rates } => {
            let rows = sweep_network_size(&exp.build()?, &sizes, &scaled_rates, &sweep.options(Vec::new()))?;
            println!("{:>5} {:>6} {:>7} {:<14} {:>10} {:>10} {:>9}", "N", "p~", "p", "indicator", "ampic", "local", "relative");
            for r in rows {
                println!(
                    "{:>5} {:>6.3} {:>7.3} {:<14} {:>10.4} {:>10.4} {:>9.4}",
                    r.n, r.scaled_rate, r.rate, r.indicator, r.ampic_mean, r.local_mean, r.relative
                );
            }
        }
        Command::SweepHorizon { exp, sweep, horizons } => {
            let rows = sweep_horizon(&exp.build()?, &horizons, &sweep.options(Vec::new()))?;
            print_summary(&rows);
        }
        Command::Solve { instance, solver } => {
            let inst = IsingInstance::load(&instance).with_context(|| format!("reading {}", instance.display()))?;
            let mut config = SolverConfig::default();
            solver.apply(&mut config);
            let result = solvers::solve(&inst, &config)?;
            let out = serde_json::json!({
                "solver": config.kind.to_string(),
                "num_spins": inst.num_spins(),
                "energy": result.best_energy,
                "sigma": result.best_sigma,
                "restarts_used": result.restarts_used,
                "wall_time": result.wall_time,
            });
            println!("{out}");
        }
        Command::Couple { exp, listen, timeout } => {
            let exp = exp.build()?;
            let net = exp.network()?;
            let controller = controller_for_seed(&exp.controller, exp.seeds[0]);
            let options = CouplingOptions {
                timeout: (timeout > 0.0).then(|| Duration::from_secs_f64(timeout)),
                prior_outflow: exp.sim.saturation_flow,
            };
            let report = match listen {
                Some(addr) => {
                    let listener = std::net::TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
                    log::info!("listening on {}", listener.local_addr()?);
                    serve_listener(&listener, net, &controller, &options)?
                }
                None => serve(net, &controller, &options, std::io::stdin(), std::io::stdout().lock())?,
            };
            log::info!("coupling finished after {} cycles", report.cycles);
        }
    }
    Ok(())
}
