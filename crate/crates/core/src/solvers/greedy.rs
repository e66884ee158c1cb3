use rayon::prelude::*;

use super::{best_of, random_spins, read_rng, timed, IsingSolver, SolveResult, SolverConfig};
use crate::error::Result;
use crate::ising::IsingInstance;

/// Steepest single-flip descent from `num_reads` random starts.
#[derive(Clone, Debug)]
pub struct GreedySolver {
    config: SolverConfig,
}

impl GreedySolver {
    pub fn new(config: SolverConfig) -> Self {
        GreedySolver { config }
    }
}

impl IsingSolver for GreedySolver {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn solve(&self, instance: &IsingInstance) -> Result<SolveResult> {
        let n = instance.num_spins();
        let cfg = &self.config;
        let ((best_energy, best_sigma), wall_time) = timed(|| {
            let reads: Vec<(f64, Vec<i8>)> = (0..cfg.num_reads)
                .into_par_iter()
                .map(|r| {
                    let mut rng = read_rng(cfg.seed, r);
                    let (spins, _) = greedy_descent(instance, random_spins(n, &mut rng));
                    (instance.energy(&spins), spins)
                })
                .collect();
            Ok(best_of(reads).expect("at least one read"))
        })?;
        Ok(SolveResult { best_sigma, best_energy, restarts_used: cfg.num_reads, wall_time })
    }
}

/// Repeatedly flips the spin with the most negative energy change (lowest
/// index on ties) until no flip improves. Returns the local minimum and the
/// energy after each accepted flip, starting with the initial energy.
pub fn greedy_descent(instance: &IsingInstance, mut spins: Vec<i8>) -> (Vec<i8>, Vec<f64>) {
    let n = instance.num_spins();
    let mut field: Vec<f64> = (0..n).map(|i| instance.local_field(i, &spins)).collect();
    let mut energy = instance.energy(&spins);
    let mut trace = vec![energy];
    let eps = 1e-12 * instance.max_abs_coefficient().max(1.0);
    loop {
        let mut pick = None;
        let mut best_delta = -eps;
        for i in 0..n {
            let delta = -2.0 * f64::from(spins[i]) * field[i];
            if delta < best_delta {
                best_delta = delta;
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        spins[i] = -spins[i];
        let step = 2.0 * f64::from(spins[i]);
        for &(j, v) in instance.neighbors(i) {
            field[j] += v * step;
        }
        energy += best_delta;
        trace.push(energy);
    }
    (spins, trace)
}
