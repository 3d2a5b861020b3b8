//! Running scenarios, collecting per-iteration metrics, sweeping
//! parameters and emitting CSV and SVG.

mod emit;
mod sweep;

pub use emit::{svg_chart, Series};
pub use sweep::{sweep, Axis, SweepOptions, SweepPoint, SweepResult};

use std::fmt::Write as _;
use std::path::Path;


use crate::engine::TraceRecord;
use crate::error::{Result, SimError};
use crate::jacobi::{simulate, ChareLaunches, SimOutcome};
use crate::oracle::serial_jacobi;
use crate::runtime::RunSummary;
use crate::scalar::Scalar;
use crate::scenario::{Precision, Scenario};
use crate::time::VirtualTime;

pub const CSV_HEADER: &str = "scenario,iteration,time_s,pe_busy,gpu_busy,exposed_comm_s,launches,nic_bytes";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub iteration: u64,
    pub time_s: f64,
    /// Mean fraction of the iteration PEs spent executing entry methods.
    pub pe_busy: f64,
    /// Mean fraction of the iteration GPUs had a kernel running.
    pub gpu_busy: f64,
    /// Iteration time not covered by kernel execution.
    pub exposed_comm_s: f64,
    pub launches: u64,
    pub nic_bytes: u64,
}

/// Per-iteration results of one or more runs. Only timed iterations are
/// recorded; warmup iterations never enter the table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

/// Aggregates over the timed iterations of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub iterations: usize,
    pub mean_time_s: f64,
    pub min_time_s: f64,
    pub max_time_s: f64,
    pub pe_busy: f64,
    pub gpu_busy: f64,
    pub exposed_comm_s: f64,
    pub launches_per_iter: f64,
    pub nic_bytes_per_iter: f64,
}

impl MetricsTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:?},{},{}",
                r.scenario, r.iteration, r.time_s, r.pe_busy, r.gpu_busy, r.exposed_comm_s, r.launches, r.nic_bytes
            );
        }
        s
    }

    /// Write the table as CSV. An empty table is an error and creates no file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.is_empty() {
            return Err(SimError::config("refusing to emit an empty metrics table"));
        }
        std::fs::write(path, self.to_csv())
            .map_err(|e| SimError::Io(format!("cannot write {}: {e}", path.display())))
    }

    /// One summary per scenario, in order of first appearance.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.scenario.as_str()) {
                names.push(&r.scenario);
            }
        }
        names
            .into_iter()
            .map(|n| {
                let rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| r.scenario == n).collect();
                let k = rows.len() as f64;
                let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
                Summary {
                    scenario: n.to_string(),
                    iterations: rows.len(),
                    mean_time_s: mean(|r| r.time_s),
                    min_time_s: rows.iter().map(|r| r.time_s).fold(f64::INFINITY, f64::min),
                    max_time_s: rows.iter().map(|r| r.time_s).fold(0.0, f64::max),
                    pe_busy: mean(|r| r.pe_busy),
                    gpu_busy: mean(|r| r.gpu_busy),
                    exposed_comm_s: mean(|r| r.exposed_comm_s),
                    launches_per_iter: mean(|r| r.launches as f64),
                    nic_bytes_per_iter: mean(|r| r.nic_bytes as f64),
                }
            })
            .collect()
    }
}

/// Outcome of comparing the simulated grid against the serial reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleStatus {
    Match,
    Mismatch(String),
    /// Numerics were disabled.
    Skipped,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    pub table: MetricsTable,
    pub oracle: OracleStatus,
    pub summary: RunSummary,
    /// End time of every iteration, warmup included.
    pub iter_end: Vec<VirtualTime>,
    pub launches: Vec<ChareLaunches>,
    pub nic_peak: Vec<usize>,
    pub device_peak_running: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

impl RunReport {
    pub fn trace_hash(&self) -> u64 {
        self.summary.trace_hash
    }

    /// Mean timed iteration time, seconds.
    pub fn mean_time(&self) -> f64 {
        self.table.summaries().first().map_or(0.0, |s| s.mean_time_s)
    }
}

/// Simulate a scenario, check it against the serial reference and tabulate
/// its timed iterations.
pub fn run_scenario(s: &Scenario) -> Result<RunReport> {
    run_with_trace(s, false)
}

/// As [`run_scenario`], also keeping the full event trace.
pub fn run_with_trace(s: &Scenario, trace: bool) -> Result<RunReport> {
    let ctx = format!("scenario {}", s.name);
    match s.precision {
        Precision::F64 => run_typed::<f64>(s, trace),
        Precision::F32 => run_typed::<f32>(s, trace),
    }
    .map_err(|e| e.context(&ctx))
}

fn run_typed<T: Scalar>(s: &Scenario, trace: bool) -> Result<RunReport> {
    let out = simulate::<T>(s, trace)?;
    let oracle = match out.grid.as_ref() {
        None => OracleStatus::Skipped,
        Some(g) => compare(g, &serial_jacobi::<T>(s.grid.dims, s.grid.total_iterations())),
    };
    let table = tabulate(s, &out);
    Ok(RunReport {
        scenario: s.clone(),
        table,
        oracle,
        summary: out.summary,
        iter_end: out.iter_end,
        launches: out.launches,
        nic_peak: out.nic_peak,
        device_peak_running: out.device_peak_running,
        trace: out.trace,
    })
}

fn compare<T: Scalar>(sim: &[T], reference: &[T]) -> OracleStatus {
    if sim.len() != reference.len() {
        return OracleStatus::Mismatch(format!(
            "grid has {} elements, reference has {}",
            sim.len(),
            reference.len()
        ));
    }
    let diffs: Vec<usize> = (0..sim.len())
        .filter(|&i| sim[i].to_bits_u64() != reference[i].to_bits_u64())
        .collect();
    match diffs.first() {
        None => OracleStatus::Match,
        Some(&i) => OracleStatus::Mismatch(format!(
            "{} of {} elements differ; first at linear index {i}: {:?} vs {:?}",
            diffs.len(),
            sim.len(),
            sim[i].to_f64(),
            reference[i].to_f64()
        )),
    }
}

/// Total length of `intervals` (disjoint, sorted) inside `[a, b)`.
fn covered(intervals: &[(VirtualTime, VirtualTime)], a: VirtualTime, b: VirtualTime) -> u64 {
    let first = intervals.partition_point(|&(_, e)| e <= a);
    let mut sum = 0;
    for &(s, e) in &intervals[first..] {
        if s >= b {
            break;
        }
        sum += e.min(b).as_ps() - s.max(a).as_ps();
    }
    sum
}

fn tabulate<T>(s: &Scenario, out: &SimOutcome<T>) -> MetricsTable {
    let mut rows = Vec::new();
    let pes = out.pe_busy.len().max(1) as f64;
    let gpus = out.gpu_busy.len().max(1) as f64;
    let mut nic: Vec<(VirtualTime, u64)> = out.nic_log.iter().map(|&(t, _, b)| (t, b)).collect();
    nic.sort_by_key(|&(t, _)| t);
    for i in s.grid.warmup as usize..out.iter_end.len() {
        let a = if i == 0 { VirtualTime::ZERO } else { out.iter_end[i - 1] };
        let b = out.iter_end[i];
        let dt = (b - a).as_ps();
        let frac = |sets: &[Vec<(VirtualTime, VirtualTime)>], n: f64| {
            if dt == 0 {
                0.0
            } else {
                sets.iter().map(|v| covered(v, a, b)).sum::<u64>() as f64 / (n * dt as f64)
            }
        };
        let pe_busy = frac(&out.pe_busy, pes);
        let gpu_busy = frac(&out.gpu_busy, gpus);
        let time_s = (b - a).as_secs();
        let lo = nic.partition_point(|&(t, _)| t < a);
        let hi = nic.partition_point(|&(t, _)| t < b);
        rows.push(MetricsRow {
            scenario: s.name.clone(),
            iteration: i as u64,
            time_s,
            pe_busy,
            gpu_busy,
            exposed_comm_s: (1.0 - gpu_busy) * time_s,
            launches: out
                .launches
                .iter()
                .filter_map(|c| c.per_iter.get(i))
                .map(|l| u64::from(l.total()))
                .sum(),
            nic_bytes: nic[lo..hi].iter().map(|&(_, b)| b).sum(),
        });
    }
    MetricsTable { rows }
}
