use rand::Rng;
use rayon::prelude::*;

use super::{best_of, random_spins, read_rng, timed, IsingSolver, SolveResult, SolverConfig};
use crate::error::Result;
use crate::ising::IsingInstance;

/// Metropolis simulated annealing with a geometric inverse-temperature
/// schedule and independent chains.
///
/// The schedule is applied to the instance divided by its largest absolute
/// coefficient, so the same `beta_start`/`beta_end` work across scales. Each
/// chain keeps the lowest-energy state seen at the end of any sweep.
#[derive(Clone, Debug)]
pub struct SimulatedAnnealing {
    config: SolverConfig,
}

impl SimulatedAnnealing {
    pub fn new(config: SolverConfig) -> Self {
        SimulatedAnnealing { config }
    }

    pub fn schedule(&self) -> Vec<f64> {
        let c = &self.config;
        let sweeps = c.sa_sweeps;
        if sweeps == 1 {
            return vec![c.beta_end];
        }
        let ratio = c.beta_end / c.beta_start;
        (0..sweeps).map(|s| c.beta_start * ratio.powf(s as f64 / (sweeps - 1) as f64)).collect()
    }

    fn run_chain(&self, instance: &IsingInstance, betas: &[f64], read: usize) -> (f64, Vec<i8>) {
        let n = instance.num_spins();
        let mut rng = read_rng(self.config.seed, read);
        let mut spins = random_spins(n, &mut rng);
        if n == 0 {
            return (instance.energy(&spins), spins);
        }
        let mut field: Vec<f64> = (0..n).map(|i| instance.local_field(i, &spins)).collect();
        let mut energy = instance.energy(&spins);
        let mut best = spins.clone();
        let mut best_energy = energy;
        for &beta in betas {
            for i in 0..n {
                let delta = -2.0 * f64::from(spins[i]) * field[i];
                if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                    spins[i] = -spins[i];
                    let step = 2.0 * f64::from(spins[i]);
                    for &(j, v) in instance.neighbors(i) {
                        field[j] += v * step;
                    }
                    energy += delta;
                }
            }
            if energy < best_energy {
                best_energy = energy;
                best.copy_from_slice(&spins);
            }
        }
        (instance.energy(&best), best)
    }
}

impl IsingSolver for SimulatedAnnealing {
    fn name(&self) -> &'static str {
        "sa"
    }

    fn solve(&self, instance: &IsingInstance) -> Result<SolveResult> {
        let scale = instance.max_abs_coefficient();
        let norm = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        let betas: Vec<f64> = self.schedule().into_iter().map(|b| b * norm).collect();
        let reads = self.config.num_reads;
        let ((best_energy, best_sigma), wall_time) = timed(|| {
            let chains: Vec<(f64, Vec<i8>)> =
                (0..reads).into_par_iter().map(|r| self.run_chain(instance, &betas, r)).collect();
            Ok(best_of(chains).expect("at least one chain"))
        })?;
        Ok(SolveResult { best_sigma, best_energy, restarts_used: reads, wall_time })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::SolverKind;

    #[test]
    fn schedule_is_geometric() {
        let sa = SimulatedAnnealing::new(SolverConfig { sa_sweeps: 3, ..Default::default() });
        let s = sa.schedule();
        assert!((s[0] - 0.1).abs() < 1e-12);
        assert!((s[1] - 1.0).abs() < 1e-12);
        assert!((s[2] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn antiferromagnetic_ring_ground_state() {
        let n = 6;
        let couplings: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        let inst = IsingInstance::new(n, couplings, vec![0.0; n], 0.0).unwrap();
        let cfg = SolverConfig { kind: SolverKind::Sa, num_reads: 20, seed: 1, ..Default::default() };
        let res = SimulatedAnnealing::new(cfg).solve(&inst).unwrap();
        assert_eq!(res.best_energy, -6.0);
        assert_eq!(res.best_sigma, vec![-1, 1, -1, 1, -1, 1]);
    }
}
