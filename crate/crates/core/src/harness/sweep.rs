use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::output::{summarize, write_atomic, Indicator, Indicators, SummaryRow};
use super::run::{run_seed, solver_label};
use super::{Experiment, NetworkSpec};
use crate::control::ControllerKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Controllers compared by the rate sweep; empty means all four.
    pub controllers: Vec<ControllerKind>,
    /// Directory of finished cells. A cell whose key is already present is
    /// loaded instead of simulated.
    pub cache_dir: Option<PathBuf>,
    /// Run cells on the rayon pool.
    pub parallel: bool,
}

/// Time-averaged result of one (configuration, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: String,
    pub seed: u64,
    pub indicators: Indicators,
    pub spawned: u64,
    pub arrived: u64,
    pub conservation_failures: u64,
}

/// Content-addressed store of finished cells.
#[derive(Clone, Debug)]
pub struct CellCache {
    dir: PathBuf,
}

impl CellCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CellCache { dir: dir.into() }
    }

    /// SHA-256 over the canonical JSON of the experiment (output path and
    /// seed list removed), the seed and the crate version.
    pub fn key(exp: &Experiment, seed: u64) -> Result<String> {
        let mut canonical = exp.clone();
        canonical.output = None;
        canonical.seeds = vec![seed];
        canonical.write_estimates = false;
        let mut hasher = Sha256::new();
        hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
        hasher.update([0]);
        hasher.update(serde_json::to_vec(&canonical)?);
        Ok(hex::encode(hasher.finalize()))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CellResult> {
        let text = std::fs::read_to_string(self.path(key)).ok()?;
        match serde_json::from_str::<CellResult>(&text) {
            Ok(cell) if cell.key == key => Some(cell),
            _ => {
                log::warn!("ignoring unreadable cache entry {key}");
                None
            }
        }
    }

    pub fn put(&self, cell: &CellResult) -> Result<()> {
        write_atomic(&self.path(&cell.key), &serde_json::to_vec_pretty(cell)?)
    }
}

fn run_cell(exp: &Experiment, seed: u64, cache: Option<&CellCache>) -> Result<CellResult> {
    let key = CellCache::key(exp, seed)?;
    if let Some(hit) = cache.and_then(|c| c.get(&key)) {
        log::debug!("cell {key} cached");
        return Ok(hit);
    }
    let net = exp.network()?;
    let run = run_seed(&net, &exp.sim, &exp.controller, exp.turning, seed)?;
    let cell = CellResult {
        key,
        seed,
        indicators: run.averages(),
        spawned: run.spawned,
        arrived: run.arrived,
        conservation_failures: run.conservation_failures,
    };
    if cell.conservation_failures > 0 {
        return Err(Error::Config(format!(
            "vehicle conservation violated in {} steps (seed {seed})",
            cell.conservation_failures
        )));
    }
    if let Some(c) = cache {
        c.put(&cell)?;
    }
    Ok(cell)
}

/// Runs every (configuration, seed) pair and returns per-seed indicators in
/// configuration order.
fn run_cells(configs: &[Experiment], options: &SweepOptions) -> Result<Vec<Vec<Indicators>>> {
    for exp in configs {
        exp.validate()?;
        exp.network()?;
    }
    let cache = options.cache_dir.as_ref().map(CellCache::new);
    let jobs: Vec<(usize, u64)> =
        configs.iter().enumerate().flat_map(|(i, e)| e.seeds.iter().map(move |&s| (i, s))).collect();
    let work = |&(i, seed): &(usize, u64)| run_cell(&configs[i], seed, cache.as_ref());
    let cells: Vec<CellResult> = if options.parallel {
        jobs.par_iter().map(work).collect::<Result<_>>()?
    } else {
        jobs.iter().map(work).collect::<Result<_>>()?
    };
    let mut out = vec![Vec::new(); configs.len()];
    for (&(i, _), cell) in jobs.iter().zip(cells) {
        out[i].push(cell.indicators);
    }
    Ok(out)
}

fn summary_rows(configs: &[Experiment], per_seed: &[Vec<Indicators>]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (exp, values) in configs.iter().zip(per_seed) {
        let n = exp.network.build()?.intersections().len();
        rows.extend(summarize(
            exp.controller.kind.as_str(),
            exp.sim.generation_rate,
            n,
            exp.controller.horizon,
            &solver_label(&exp.controller),
            values,
        ));
    }
    Ok(rows)
}

fn write_table<T: Serialize>(dir: Option<&Path>, name: &str, rows: &[T]) -> Result<()> {
    if let Some(dir) = dir {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}

/// One summary row per rate, controller and indicator. Writes
/// `sweep_rate.csv` when the base experiment has an output directory.
pub fn sweep_generation_rate(base: &Experiment, rates: &[f64], options: &SweepOptions) -> Result<Vec<SummaryRow>> {
    let controllers = if options.controllers.is_empty() { ControllerKind::ALL.to_vec() } else { options.controllers.clone() };
    let mut configs = Vec::new();
    for &rate in rates {
        for &kind in &controllers {
            let mut exp = base.clone();
            exp.sim.generation_rate = rate;
            exp.controller.kind = kind;
            configs.push(exp);
        }
    }
    let per_seed = run_cells(&configs, options)?;
    let rows = summary_rows(&configs, &per_seed)?;
    write_table(base.output.as_deref(), "sweep_rate.csv", &rows)?;
    Ok(rows)
}

/// AMPIC against local control on one lattice size and scaled rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSweepRow {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub scaled_rate: f64,
    pub rate: f64,
    pub indicator: String,
    pub ampic_mean: f64,
    pub ampic_stderr: f64,
    pub local_mean: f64,
    pub local_stderr: f64,
    /// `ampic_mean / local_mean`.
    pub relative: f64,
}

/// For every lattice size and scaled rate `p~`, runs AMPIC and local control
/// at `p = p~ * sqrt(N)` with `N` the number of intersections. Writes
/// `sweep_size.csv` when the base experiment has an output directory.
pub fn sweep_network_size(
    base: &Experiment,
    sizes: &[(usize, usize)],
    scaled_rates: &[f64],
    options: &SweepOptions,
) -> Result<Vec<SizeSweepRow>> {
    let spacing = match base.network {
        NetworkSpec::Lattice { spacing, .. } => spacing,
        NetworkSpec::File { .. } => 100.0,
    };
    let mut configs = Vec::new();
    let mut cells = Vec::new();
    for &(rows, cols) in sizes {
        let n = rows * cols;
        for &scaled in scaled_rates {
            let rate = scaled * (n as f64).sqrt();
            for kind in [ControllerKind::Ampic, ControllerKind::Local] {
                let mut exp = base.clone();
                exp.network = NetworkSpec::Lattice { rows, cols, spacing };
                exp.sim.generation_rate = rate;
                exp.controller.kind = kind;
                configs.push(exp);
            }
            cells.push((rows, cols, n, scaled, rate));
        }
    }
    let per_seed = run_cells(&configs, options)?;
    let mut out = Vec::new();
    for (c, &(rows, cols, n, scaled_rate, rate)) in cells.iter().enumerate() {
        let ampic = &per_seed[2 * c];
        let local = &per_seed[2 * c + 1];
        for ind in Indicator::ALL {
            let (am, ase) = super::mean_stderr(&ampic.iter().map(|s| s.get(ind)).collect::<Vec<_>>());
            let (lm, lse) = super::mean_stderr(&local.iter().map(|s| s.get(ind)).collect::<Vec<_>>());
            out.push(SizeSweepRow {
                rows,
                cols,
                n,
                scaled_rate,
                rate,
                indicator: ind.as_str().to_string(),
                ampic_mean: am,
                ampic_stderr: ase,
                local_mean: lm,
                local_stderr: lse,
                relative: am / lm,
            });
        }
    }
    write_table(base.output.as_deref(), "sweep_size.csv", &out)?;
    Ok(out)
}

/// Runs AMPIC once per prediction horizon. Writes `sweep_horizon.csv` when
/// the base experiment has an output directory.
pub fn sweep_horizon(base: &Experiment, horizons: &[usize], options: &SweepOptions) -> Result<Vec<SummaryRow>> {
    let configs: Vec<Experiment> = horizons
        .iter()
        .map(|&k| {
            let mut exp = base.clone();
            exp.controller.kind = ControllerKind::Ampic;
            exp.controller.horizon = k;
            exp
        })
        .collect();
    let per_seed = run_cells(&configs, options)?;
    let rows = summary_rows(&configs, &per_seed)?;
    write_table(base.output.as_deref(), "sweep_horizon.csv", &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesosim::SimConfig;

    fn small() -> Experiment {
        Experiment {
            network: NetworkSpec::Lattice { rows: 3, cols: 3, spacing: 100.0 },
            sim: SimConfig { duration: 120, generation_rate: 0.3, ..SimConfig::default() },
            seeds: vec![1, 2],
            ..Experiment::default()
        }
    }

    #[test]
    fn cache_key_ignores_output_and_tracks_config() {
        let a = small();
        let mut b = a.clone();
        b.output = Some("/tmp/x".into());
        assert_eq!(CellCache::key(&a, 1).unwrap(), CellCache::key(&b, 1).unwrap());
        assert_ne!(CellCache::key(&a, 1).unwrap(), CellCache::key(&a, 2).unwrap());
        b.sim.generation_rate = 0.4;
        assert_ne!(CellCache::key(&a, 1).unwrap(), CellCache::key(&b, 1).unwrap());
    }

    #[test]
    fn rate_sweep_shape() {
        let opts = SweepOptions { controllers: vec![ControllerKind::Local, ControllerKind::Pattern], ..Default::default() };
        let rows = sweep_generation_rate(&small(), &[0.0, 0.3], &opts).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        assert!(rows.iter().all(|r| r.seed_count == 2 && r.n == 9));
        let idle = rows.iter().find(|r| r.rate == 0.0 && r.indicator == "waiting_ratio").unwrap();
        assert_eq!(idle.mean, 0.0);
    }

    #[test]
    fn size_sweep_scales_rate() {
        let mut base = small();
        base.seeds = vec![1];
        base.controller.solver.kind = crate::solvers::SolverKind::Greedy;
        let rows = sweep_network_size(&base, &[(3, 3)], &[0.1], &SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!((rows[0].rate - 0.3).abs() < 1e-12);
        assert_eq!(rows[0].n, 9);
    }
}
