//! Signal controllers: the predictive Ising controller and three baselines.
//!
//! Every controller is called once per control cycle and returns one signal
//! state per signalized intersection. All start from the all-`+1` state.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowstats::FlowStats;
use crate::ising::{build_internal_model, compile_ising, compute_bias_vector, split_horizon, InternalModel};
use crate::mesosim::TrafficSnapshot;
use crate::network::RoadNetwork;
use crate::solvers::{SolverConfig, SolverKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Ampic,
    Local,
    Random,
    Pattern,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] =
        [ControllerKind::Ampic, ControllerKind::Local, ControllerKind::Random, ControllerKind::Pattern];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Ampic => "ampic",
            ControllerKind::Local => "local",
            ControllerKind::Random => "random",
            ControllerKind::Pattern => "pattern",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Control cycle, s.
    pub tau: u64,
    /// Prediction horizon in control cycles.
    pub horizon: usize,
    /// Diagonal of the bias weight matrix; identity when absent.
    pub q: Option<Vec<f64>>,
    pub solver: SolverConfig,
    pub seed: u64,
    /// Per-cycle switching probability of the random controller.
    pub flip_probability: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: ControllerKind::Ampic,
            tau: 60,
            horizon: 1,
            q: None,
            solver: SolverConfig::default(),
            seed: 0,
            flip_probability: 0.5,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::Config("tau must be at least 1 s".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!("flip_probability {} outside [0, 1]", self.flip_probability)));
        }
        if let Some(q) = &self.q {
            if q.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::Config("Q weights must be positive".into()));
            }
        }
        if self.kind == ControllerKind::Ampic {
            self.solver.validate()?;
        }
        Ok(())
    }

    /// Q diagonal for `net`, checking its length.
    pub fn weights(&self, net: &RoadNetwork) -> Result<Vec<f64>> {
        let n = net.num_controlled();
        match &self.q {
            Some(q) if q.len() != n => {
                Err(Error::Config(format!("Q has {} entries but the network has {n} signals", q.len())))
            }
            Some(q) => Ok(q.clone()),
            None => Ok(vec![1.0; n]),
        }
    }

    pub fn build(&self, net: Arc<RoadNetwork>) -> Result<Box<dyn Controller>> {
        self.validate()?;
        self.weights(&net)?;
        Ok(match self.kind {
            ControllerKind::Ampic => Box::new(AmpicController::new(net, self.clone())?),
            ControllerKind::Local => Box::new(LocalController::new(net)),
            ControllerKind::Random => {
                Box::new(RandomController::new(net.num_controlled(), self.seed, self.flip_probability))
            }
            ControllerKind::Pattern => Box::new(PatternController::new(net.num_controlled())),
        })
    }
}

/// Solver diagnostics for one AMPIC decision.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub num_spins: usize,
    pub energy: f64,
    pub wall_time: f64,
}

/// Signals to apply for the coming control cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPlan {
    pub sigma: Vec<i8>,
    /// The whole optimized horizon, cycle-major (AMPIC only).
    pub horizon_plan: Option<Vec<i8>>,
    pub solve: Option<SolveStats>,
}

impl SignalPlan {
    fn fixed(sigma: Vec<i8>) -> Self {
        SignalPlan { sigma, horizon_plan: None, solve: None }
    }
}

pub trait Controller: Send {
    fn kind(&self) -> ControllerKind;

    /// Decides the signals for the next cycle. `stats` holds the outflow
    /// observed so far; controllers that model inflow refresh it in place.
    fn decide(&mut self, snapshot: &TrafficSnapshot, stats: &mut FlowStats) -> Result<SignalPlan>;
}

/// Minimizes the horizon objective of `model` from `x0`. Returns the full
/// cycle-major minimizer and solver diagnostics.
pub fn solve_horizon(model: &InternalModel, x0: &[f64], solver: &SolverConfig) -> Result<(Vec<i8>, SolveStats)> {
    let instance = compile_ising(model, x0)?;
    let result = solver.build()?.solve(&instance)?;
    let stats = SolveStats { num_spins: instance.num_spins(), energy: result.best_energy, wall_time: result.wall_time };
    Ok((result.best_sigma, stats))
}

/// One AMPIC decision: bias from the snapshot, refreshed inflow estimates,
/// internal model, Ising compilation and solve. Only the first cycle of the
/// optimized plan is applied.
pub fn ampic_step(
    snapshot: &TrafficSnapshot,
    net: &RoadNetwork,
    stats: &mut FlowStats,
    config: &ControllerConfig,
    solver: &SolverConfig,
) -> Result<SignalPlan> {
    let x = compute_bias_vector(net, &snapshot.counts);
    stats.compute_inflow(net);
    let q = config.weights(net)?;
    let model = build_internal_model(net, stats, config.tau as f64, config.horizon, Some(&q))?;
    let (plan, solve) = solve_horizon(&model, &x, solver)?;
    let n = net.num_controlled();
    let sigma = split_horizon(&plan, n, config.horizon).swap_remove(0);
    Ok(SignalPlan { sigma, horizon_plan: Some(plan), solve: Some(solve) })
}

/// Biases this close to zero count as balanced, so that rounding in the
/// weighted sum cannot flip a tie.
pub const BIAS_TIE: f64 = 1e-9;

/// Greedy bias reduction: `+1` where `x_i > 0`, `-1` where `x_i < 0`,
/// previous state where `x_i = 0` (within `BIAS_TIE`).
pub fn local_step(x: &[f64], previous: &[i8]) -> Vec<i8> {
    x.iter()
        .zip(previous)
        .map(|(&xi, &prev)| {
            if xi > BIAS_TIE {
                1
            } else if xi < -BIAS_TIE {
                -1
            } else {
                prev
            }
        })
        .collect()
}

/// Flips each state independently with probability `p`.
pub fn random_step<R: Rng + ?Sized>(previous: &[i8], rng: &mut R, p: f64) -> Vec<i8> {
    previous.iter().map(|&s| if rng.random_bool(p) { -s } else { s }).collect()
}

/// `initial * (-1)^floor(k / 2)`: all signals switch together every second
/// cycle.
pub fn pattern_step(initial: &[i8], cycle: u64) -> Vec<i8> {
    let flip = if (cycle / 2) % 2 == 1 { -1 } else { 1 };
    initial.iter().map(|&s| s * flip).collect()
}

pub struct AmpicController {
    net: Arc<RoadNetwork>,
    config: ControllerConfig,
    cycle: u64,
}

impl AmpicController {
    pub fn new(net: Arc<RoadNetwork>, config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        config.weights(&net)?;
        if config.solver.kind == SolverKind::Exact {
            let spins = net.num_controlled() * config.horizon;
            if spins > crate::solvers::EXACT_SPIN_CAP {
                return Err(Error::TooLarge { n: spins, cap: crate::solvers::EXACT_SPIN_CAP });
            }
        }
        Ok(AmpicController { net, config, cycle: 0 })
    }
}

impl Controller for AmpicController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Ampic
    }

    fn decide(&mut self, snapshot: &TrafficSnapshot, stats: &mut FlowStats) -> Result<SignalPlan> {
        // fresh solver streams each cycle, reproducible from the base seed
        let solver = SolverConfig { seed: self.config.solver.seed.wrapping_add(self.cycle), ..self.config.solver.clone() };
        self.cycle += 1;
        ampic_step(snapshot, &self.net, stats, &self.config, &solver)
    }
}

pub struct LocalController {
    net: Arc<RoadNetwork>,
    sigma: Vec<i8>,
}

impl LocalController {
    pub fn new(net: Arc<RoadNetwork>) -> Self {
        let sigma = vec![1; net.num_controlled()];
        LocalController { net, sigma }
    }
}

impl Controller for LocalController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Local
    }

    fn decide(&mut self, snapshot: &TrafficSnapshot, _stats: &mut FlowStats) -> Result<SignalPlan> {
        let x = compute_bias_vector(&self.net, &snapshot.counts);
        self.sigma = local_step(&x, &self.sigma);
        Ok(SignalPlan::fixed(self.sigma.clone()))
    }
}

/// Keeps the initial state for the first cycle, then switches each signal
/// with probability `flip_probability` per cycle.
pub struct RandomController {
    rng: ChaCha8Rng,
    p: f64,
    sigma: Vec<i8>,
    cycle: u64,
}

impl RandomController {
    pub fn new(n: usize, seed: u64, flip_probability: f64) -> Self {
        RandomController { rng: ChaCha8Rng::seed_from_u64(seed), p: flip_probability, sigma: vec![1; n], cycle: 0 }
    }
}

impl Controller for RandomController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Random
    }

    fn decide(&mut self, _snapshot: &TrafficSnapshot, _stats: &mut FlowStats) -> Result<SignalPlan> {
        if self.cycle > 0 {
            self.sigma = random_step(&self.sigma, &mut self.rng, self.p);
        }
        self.cycle += 1;
        Ok(SignalPlan::fixed(self.sigma.clone()))
    }
}

pub struct PatternController {
    initial: Vec<i8>,
    cycle: u64,
}

impl PatternController {
    pub fn new(n: usize) -> Self {
        PatternController { initial: vec![1; n], cycle: 0 }
    }
}

impl Controller for PatternController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Pattern
    }

    fn decide(&mut self, _snapshot: &TrafficSnapshot, _stats: &mut FlowStats) -> Result<SignalPlan> {
        let sigma = pattern_step(&self.initial, self.cycle);
        self.cycle += 1;
        Ok(SignalPlan::fixed(sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::generate_lattice;

    fn snapshot(net: &RoadNetwork, counts: Vec<u32>) -> TrafficSnapshot {
        TrafficSnapshot { time: 0, counts, sigma: vec![1; net.num_controlled()] }
    }

    #[test]
    fn local_rule_cases() {
        assert_eq!(local_step(&[5.0], &[-1]), vec![1]);
        assert_eq!(local_step(&[0.0], &[-1]), vec![-1]);
        assert_eq!(local_step(&[0.0], &[1]), vec![1]);
        assert_eq!(local_step(&[-0.3], &[1]), vec![-1]);
    }

    #[test]
    fn pattern_cadence() {
        let init = [1i8, 1, 1];
        let states: Vec<i8> = (0..9).map(|k| pattern_step(&init, k)[0]).collect();
        assert_eq!(states, vec![1, 1, -1, -1, 1, 1, -1, -1, 1]);
        assert!(pattern_step(&init, 2).iter().all(|&s| s == -1));
    }

    #[test]
    fn random_controller_is_reproducible_and_frozen_at_zero() {
        let net = Arc::new(generate_lattice(3, 3, 100.0).unwrap());
        let snap = snapshot(&net, vec![0; net.roads().len()]);
        let run = |seed, p| {
            let mut c = RandomController::new(net.num_controlled(), seed, p);
            (0..20).map(|_| c.decide(&snap, &mut FlowStats::new(&net, 0.5)).unwrap().sigma).collect::<Vec<_>>()
        };
        assert_eq!(run(4, 0.5), run(4, 0.5));
        assert!(run(4, 0.0).iter().all(|s| s.iter().all(|&v| v == 1)));
    }

    #[test]
    fn controller_kind_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.to_string().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("fixed".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn ampic_returns_first_block_of_plan() {
        let net = Arc::new(generate_lattice(3, 3, 100.0).unwrap());
        let config = ControllerConfig {
            horizon: 2,
            solver: SolverConfig { kind: SolverKind::Exact, ..Default::default() },
            ..Default::default()
        };
        let mut ctrl = config.build(Arc::clone(&net)).unwrap();
        let mut stats = FlowStats::new(&net, 0.5);
        let counts: Vec<u32> = (0..net.roads().len() as u32).map(|r| r % 5).collect();
        let plan = ctrl.decide(&snapshot(&net, counts), &mut stats).unwrap();
        let full = plan.horizon_plan.unwrap();
        assert_eq!(full.len(), 2 * net.num_controlled());
        assert_eq!(plan.sigma, full[..net.num_controlled()].to_vec());
        assert_eq!(plan.solve.unwrap().num_spins, 10);
    }

    #[test]
    fn exact_solver_rejects_oversized_horizon() {
        let net = Arc::new(generate_lattice(5, 5, 100.0).unwrap());
        let config = ControllerConfig {
            horizon: 2,
            solver: SolverConfig { kind: SolverKind::Exact, ..Default::default() },
            ..Default::default()
        };
        assert!(matches!(config.build(net), Err(Error::TooLarge { n: 42, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig { tau: 0, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { horizon: 0, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { flip_probability: 1.5, ..Default::default() }.validate().is_err());
        let net = generate_lattice(3, 3, 100.0).unwrap();
        assert!(ControllerConfig { q: Some(vec![1.0; 4]), ..Default::default() }.weights(&net).is_err());
    }
}
