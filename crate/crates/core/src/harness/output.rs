use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::CycleRecord;
use crate::error::{Error, Result};
use crate::mesosim::StepMetrics;

/// One per-second line of the trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub t: u64,
    pub mean_velocity: f64,
    pub waiting_ratio: f64,
    pub co2_rate: f64,
    pub squared_bias: f64,
    pub vehicle_count: u64,
}

impl TraceRow {
    pub fn new(seed: u64, t: u64, m: &StepMetrics) -> Self {
        TraceRow {
            seed,
            t,
            mean_velocity: m.mean_velocity,
            waiting_ratio: m.waiting_ratio,
            co2_rate: m.co2_rate,
            squared_bias: m.squared_bias,
            vehicle_count: m.vehicle_count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Indicator {
    MeanVelocity,
    WaitingRatio,
    Co2Rate,
    SquaredBias,
}

impl Indicator {
    pub const ALL: [Indicator; 4] =
        [Indicator::MeanVelocity, Indicator::WaitingRatio, Indicator::Co2Rate, Indicator::SquaredBias];

    pub fn as_str(self) -> &'static str {
        match self {
            Indicator::MeanVelocity => "mean_velocity",
            Indicator::WaitingRatio => "waiting_ratio",
            Indicator::Co2Rate => "co2_rate",
            Indicator::SquaredBias => "squared_bias",
        }
    }
}

/// Time-averaged indicators of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub mean_velocity: f64,
    pub waiting_ratio: f64,
    pub co2_rate: f64,
    pub squared_bias: f64,
}

impl Indicators {
    pub fn time_average<'a>(trace: impl IntoIterator<Item = &'a StepMetrics>) -> Self {
        let mut sum = Indicators::default();
        let mut n = 0usize;
        for m in trace {
            sum.mean_velocity += m.mean_velocity;
            sum.waiting_ratio += m.waiting_ratio;
            sum.co2_rate += m.co2_rate;
            sum.squared_bias += m.squared_bias;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            sum.mean_velocity /= n;
            sum.waiting_ratio /= n;
            sum.co2_rate /= n;
            sum.squared_bias /= n;
        }
        sum
    }

    pub fn get(&self, indicator: Indicator) -> f64 {
        match indicator {
            Indicator::MeanVelocity => self.mean_velocity,
            Indicator::WaitingRatio => self.waiting_ratio,
            Indicator::Co2Rate => self.co2_rate,
            Indicator::SquaredBias => self.squared_bias,
        }
    }
}

/// One line of the long-format summary CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub controller: String,
    pub rate: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub k_h: usize,
    pub solver: String,
    pub seed_count: usize,
    pub indicator: String,
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Summary rows (one per indicator) over per-seed averages.
pub fn summarize(
    controller: &str,
    rate: f64,
    n: usize,
    k_h: usize,
    solver: &str,
    per_seed: &[Indicators],
) -> Vec<SummaryRow> {
    Indicator::ALL
        .into_iter()
        .map(|ind| {
            let values: Vec<f64> = per_seed.iter().map(|s| s.get(ind)).collect();
            let (mean, stderr) = mean_stderr(&values);
            SummaryRow {
                controller: controller.to_string(),
                rate,
                n,
                k_h,
                solver: solver.to_string(),
                seed_count: per_seed.len(),
                indicator: ind.as_str().to_string(),
                mean,
                stderr,
            }
        })
        .collect()
}

/// Trailing moving average over up to `window` samples, for presentation.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let mut file = fs::File::create(&tmp)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

const TRACE_HEADER: [&str; 7] =
    ["seed", "t", "mean_velocity", "waiting_ratio", "co2_rate", "squared_bias", "vehicle_count"];
const SUMMARY_HEADER: [&str; 9] = ["controller", "rate", "N", "k_h", "solver", "seed_count", "indicator", "mean", "stderr"];
const TIMING_HEADER: [&str; 5] = ["seed", "t", "num_spins", "energy", "wall_time"];

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows, &TRACE_HEADER)?)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows, &SUMMARY_HEADER)?)
}

pub fn write_timing_csv(path: &Path, rows: &[(u64, CycleRecord)]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        seed: u64,
        t: u64,
        num_spins: usize,
        energy: f64,
        wall_time: f64,
    }
    let rows: Vec<Row> = rows
        .iter()
        .map(|(seed, c)| Row { seed: *seed, t: c.t, num_spins: c.num_spins, energy: c.energy, wall_time: c.wall_time })
        .collect();
    write_atomic(path, &csv_bytes(&rows, &TIMING_HEADER)?)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<TraceRow>, _> = r.deserialize().collect();
    Ok(rows?)
}

/// Recomputes per-seed time averages from a trace CSV.
pub fn summarize_trace_csv(path: &Path) -> Result<BTreeMap<u64, Indicators>> {
    let mut by_seed: BTreeMap<u64, Vec<StepMetrics>> = BTreeMap::new();
    for row in read_trace_csv(path)? {
        by_seed.entry(row.seed).or_default().push(StepMetrics {
            mean_velocity: row.mean_velocity,
            waiting_ratio: row.waiting_ratio,
            co2_rate: row.co2_rate,
            squared_bias: row.squared_bias,
            vehicle_count: row.vehicle_count,
        });
    }
    Ok(by_seed.into_iter().map(|(seed, trace)| (seed, Indicators::time_average(&trace))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((se - (2.5f64 / 5.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn moving_average_window() {
        let ma = moving_average(&[2.0, 4.0, 6.0, 8.0], 2);
        assert_eq!(ma, vec![2.0, 3.0, 5.0, 7.0]);
        assert_eq!(moving_average(&[1.0, 3.0], 120), vec![1.0, 2.0]);
    }

    #[test]
    fn empty_csv_still_has_header() {
        let bytes = csv_bytes::<TraceRow>(&[], &TRACE_HEADER).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), TRACE_HEADER.join(",") + "\n");
    }

    #[test]
    fn summary_has_one_row_per_indicator() {
        let a = Indicators { mean_velocity: 10.0, waiting_ratio: 0.1, co2_rate: 1.0, squared_bias: 4.0 };
        let b = Indicators { mean_velocity: 12.0, waiting_ratio: 0.3, co2_rate: 3.0, squared_bias: 6.0 };
        let rows = summarize("local", 1.0, 25, 1, "none", &[a, b]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].indicator, "mean_velocity");
        assert_eq!(rows[0].mean, 11.0);
        assert_eq!(rows[0].stderr, 1.0);
        assert!(rows.iter().all(|r| r.seed_count == 2));
    }
}
