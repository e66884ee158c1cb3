//! Ising minimizers behind a common interface. Additional backends (for
//! example a hardware annealer client) plug in by implementing
//! [`IsingSolver`].

mod exact;
mod greedy;
mod sa;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::IsingInstance;

pub use exact::{ExactSolver, EXACT_SPIN_CAP};
pub use greedy::{greedy_descent, GreedySolver};
pub use sa::SimulatedAnnealing;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub best_sigma: Vec<i8>,
    pub best_energy: f64,
    pub restarts_used: usize,
    /// Seconds spent in the solver.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Greedy,
    Sa,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Exact => "exact",
            SolverKind::Greedy => "greedy",
            SolverKind::Sa => "sa",
        })
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "greedy" => Ok(SolverKind::Greedy),
            "sa" => Ok(SolverKind::Sa),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Independent restarts (greedy) or chains (SA).
    pub num_reads: usize,
    pub sa_sweeps: usize,
    /// Inverse temperature at the first and last sweep, relative to the
    /// instance's largest absolute coefficient.
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Sa,
            num_reads: 1000,
            sa_sweeps: 100,
            beta_start: 0.1,
            beta_end: 10.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_reads == 0 {
            return Err(Error::Config("num_reads must be at least 1".into()));
        }
        if self.kind == SolverKind::Sa {
            if self.sa_sweeps == 0 {
                return Err(Error::Config("sa_sweeps must be at least 1".into()));
            }
            if !(self.beta_start > 0.0 && self.beta_start < self.beta_end && self.beta_end.is_finite()) {
                return Err(Error::Config(format!(
                    "beta schedule must satisfy 0 < beta_start < beta_end, got {} -> {}",
                    self.beta_start, self.beta_end
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn IsingSolver>> {
        self.validate()?;
        Ok(match self.kind {
            SolverKind::Exact => Box::new(ExactSolver),
            SolverKind::Greedy => Box::new(GreedySolver::new(self.clone())),
            SolverKind::Sa => Box::new(SimulatedAnnealing::new(self.clone())),
        })
    }
}

pub trait IsingSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, instance: &IsingInstance) -> Result<SolveResult>;
}

/// Solves with the solver described by `config`.
pub fn solve(instance: &IsingInstance, config: &SolverConfig) -> Result<SolveResult> {
    config.build()?.solve(instance)
}

/// Relative tolerance under which two energies count as tied.
pub(crate) fn tie_tolerance(a: f64, b: f64) -> f64 {
    1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Orders candidates by energy, then lexicographically (with -1 < +1).
pub(crate) fn is_better(energy: f64, spins: &[i8], best_energy: f64, best: &[i8]) -> bool {
    let tol = tie_tolerance(energy, best_energy);
    if energy < best_energy - tol {
        true
    } else if energy > best_energy + tol {
        false
    } else {
        spins < best
    }
}

/// Deterministic reduction of per-read results.
pub(crate) fn best_of(candidates: Vec<(f64, Vec<i8>)>) -> Option<(f64, Vec<i8>)> {
    let mut best: Option<(f64, Vec<i8>)> = None;
    for (e, s) in candidates {
        match &best {
            Some((be, bs)) if !is_better(e, &s, *be, bs) => {}
            _ => best = Some((e, s)),
        }
    }
    best
}

/// Per-read generator: stream `read` of the configured seed, so read `r`
/// draws the same numbers whatever the total number of reads.
pub(crate) fn read_rng(seed: u64, read: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(read as u64);
    rng
}

pub(crate) fn random_spins<R: Rng>(n: usize, rng: &mut R) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

pub(crate) fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { num_reads: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { beta_start: 10.0, beta_end: 0.1, ..Default::default() }.validate().is_err());
        assert_eq!("sa".parse::<SolverKind>().unwrap(), SolverKind::Sa);
        assert!("qa".parse::<SolverKind>().is_err());
    }

    #[test]
    fn tie_break_prefers_lexicographically_smaller() {
        assert!(is_better(1.0, &[-1, 1], 1.0, &[1, -1]));
        assert!(!is_better(1.0, &[1, -1], 1.0, &[-1, 1]));
        assert!(is_better(0.5, &[1, 1], 1.0, &[-1, -1]));
    }
}
