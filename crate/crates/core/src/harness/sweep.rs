use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::geom::Dims3;
use crate::jacobi::{ExecMode, FusionStrategy, LaunchMode};
use crate::scenario::{Scaling, Scenario};

use super::{run_scenario, MetricsTable, OracleStatus, RunReport, Series, Summary};

/// A scenario parameter a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Odf,
    Nodes,
    Mode,
    Fusion,
    Launch,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Odf => "odf",
            Axis::Nodes => "nodes",
            Axis::Mode => "mode",
            Axis::Fusion => "fusion",
            Axis::Launch => "launch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "odf" => Ok(Axis::Odf),
            "nodes" => Ok(Axis::Nodes),
            "mode" => Ok(Axis::Mode),
            "fusion" => Ok(Axis::Fusion),
            "launch" => Ok(Axis::Launch),
            other => Err(SimError::config(format!(
                "unknown sweep axis '{other}', expected odf, nodes, mode, fusion or launch"
            ))),
        }
    }

    fn numeric(self) -> bool {
        matches!(self, Axis::Odf | Axis::Nodes)
    }

    /// Apply `value` to a copy of `base`. Switching mode also drops settings
    /// the new mode cannot use: MPI modes run at ODF 1, and only Charm_D
    /// keeps fusion and graph launch.
    pub fn apply(self, base: &Scenario, value: &str) -> Result<Scenario> {
        let mut s = base.clone();
        let bad = || SimError::config(format!("bad {} value '{value}'", self.name()));
        match self {
            Axis::Odf => s.odf = value.trim().parse().map_err(|_| bad())?,
            Axis::Nodes => {
                let n: u32 = value.trim().parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(bad());
                }
                s.machine.nodes = n;
                if base.scaling == Scaling::Weak {
                    s.grid.dims = weak_dims(base.grid.dims, base.machine.nodes, n)?;
                }
            }
            Axis::Mode => {
                s.mode = value.parse::<ExecMode>()?;
                if s.mode.is_mpi() {
                    s.odf = 1;
                }
                if s.mode != ExecMode::CharmD {
                    s.fusion = FusionStrategy::None;
                    s.launch = LaunchMode::Individual;
                }
            }
            Axis::Fusion => s.fusion = value.parse::<FusionStrategy>()?,
            Axis::Launch => s.launch = value.parse::<LaunchMode>()?,
        }
        Ok(s)
    }
}

/// Grow the grid with the node count, keeping volume per node fixed by
/// doubling (or tripling, ...) the smallest extent once per prime factor.
pub fn weak_dims(base: Dims3, base_nodes: u32, nodes: u32) -> Result<Dims3> {
    if !nodes.is_multiple_of(base_nodes) {
        return Err(SimError::config(format!(
            "weak scaling needs node counts that are multiples of the base ({base_nodes}), got {nodes}"
        )));
    }
    let mut f = nodes / base_nodes;
    let mut d = base.as_array();
    let mut p = 2;
    while f > 1 {
        while f.is_multiple_of(p) {
            let a = (0..3).min_by_key(|&a| (d[a], a)).expect("three axes");
            d[a] *= p as usize;
            f /= p;
        }
        p += 1;
    }
    Ok(Dims3::from_array(d))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOptions {
    /// Run every point once per series value (one curve each).
    pub series: Option<(Axis, Vec<String>)>,
    /// For Charm modes, try each ODF at every point and keep the fastest.
    pub best_odf: Option<Vec<u32>>,
    /// Worker threads; `None` reads `OVERLAPSIM_THREADS` and otherwise
    /// uses all cores.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub series: String,
    pub value: String,
    pub label: String,
    /// The run kept for this point.
    pub report: RunReport,
    pub summary: Summary,
    /// `(odf, mean time)` of every ODF tried at this point.
    pub odf_times: Vec<(u32, f64)>,
    /// Fastest point of its series.
    pub best: bool,
}

#[derive(Debug)]
pub struct SweepResult {
    pub axis: Axis,
    /// Points completed before the first failure, in sweep order.
    pub points: Vec<SweepPoint>,
    pub error: Option<SimError>,
}

impl SweepResult {
    pub fn table(&self) -> MetricsTable {
        let mut t = MetricsTable::default();
        for p in &self.points {
            t.extend(p.report.table.clone());
        }
        t
    }

    pub fn oracle_failures(&self) -> Vec<(&str, &str)> {
        self.points
            .iter()
            .filter_map(|p| match &p.report.oracle {
                OracleStatus::Mismatch(m) => Some((p.label.as_str(), m.as_str())),
                _ => None,
            })
            .collect()
    }

    /// Curves of mean time per iteration; categorical axes use 1, 2, 3, ...
    pub fn series(&self) -> Vec<Series> {
        let mut out: Vec<Series> = Vec::new();
        for p in &self.points {
            let x = if self.axis.numeric() {
                p.value.parse::<f64>().unwrap_or(f64::NAN)
            } else {
                (out.iter().find(|s| s.name == p.series).map_or(0, |s| s.points.len()) + 1) as f64
            };
            let y = p.summary.mean_time_s;
            match out.iter_mut().find(|s| s.name == p.series) {
                Some(s) => s.points.push((x, y)),
                None => out.push(Series {
                    name: p.series.clone(),
                    points: vec![(x, y)],
                }),
            }
        }
        out
    }

    /// Text report: one line per point, best marked with `*`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let odf = if p.odf_times.len() > 1 {
                format!(" odf={}", p.report.scenario.odf)
            } else {
                String::new()
            };
            s.push_str(&format!(
                "{}{} {:<40} time/iter={:.6e}s gpu_busy={:.3} pe_busy={:.3} launches/iter={:.1}{}\n",
                if p.best { "*" } else { " " },
                if matches!(p.report.oracle, OracleStatus::Mismatch(_)) { "!" } else { " " },
                p.label,
                p.summary.mean_time_s,
                p.summary.gpu_busy,
                p.summary.pe_busy,
                p.summary.launches_per_iter,
                odf
            ));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!("sweep aborted: {e}\n"));
        }
        s
    }
}

fn thread_count(opt: Option<usize>) -> usize {
    opt.or_else(|| {
        std::env::var("OVERLAPSIM_THREADS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
    })
    .filter(|&n| n > 0)
    .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `base` once per axis value (and per series value). Points are
/// independent simulations executed in parallel; results keep sweep order.
pub fn sweep(base: &Scenario, axis: Axis, values: &[String], opts: &SweepOptions) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(SimError::config("sweep needs at least one value"));
    }
    let series: Vec<(String, Scenario)> = match &opts.series {
        None => vec![(base.name.clone(), base.clone())],
        Some((sa, sv)) => sv
            .iter()
            .map(|v| Ok((format!("{}={v}", sa.name()), sa.apply(base, v)?)))
            .collect::<Result<_>>()?,
    };
    let mut jobs = Vec::new();
    for (sname, sbase) in &series {
        for v in values {
            let mut s = axis.apply(sbase, v)?;
            let label = if opts.series.is_some() {
                format!("{}/{sname}/{}={v}", base.name, axis.name())
            } else {
                format!("{}/{}={v}", base.name, axis.name())
            };
            s.name = label.clone();
            let odfs = match (&opts.best_odf, axis) {
                (Some(list), a) if a != Axis::Odf && !s.mode.is_mpi() => list.clone(),
                _ => vec![s.odf],
            };
            for odf in odfs {
                let mut t = s.clone();
                t.odf = odf;
                t.validate().map_err(|e| e.context(&label))?;
                jobs.push((sname.clone(), v.clone(), label.clone(), t));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(opts.threads))
        .build()
        .map_err(|e| SimError::config(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<RunReport>> = pool.install(|| jobs.par_iter().map(|j| run_scenario(&j.3)).collect());

    let mut points: Vec<SweepPoint> = Vec::new();
    let mut error = None;
    for (job, res) in jobs.iter().zip(results) {
        let report = match res {
            Ok(r) => r,
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        let summary = report.table.summaries().remove(0);
        let t = summary.mean_time_s;
        match points.last_mut() {
            Some(p) if p.label == job.2 => {
                p.odf_times.push((job.3.odf, t));
                if t < p.summary.mean_time_s {
                    p.report = report;
                    p.summary = summary;
                }
            }
            _ => points.push(SweepPoint {
                series: job.0.clone(),
                value: job.1.clone(),
                label: job.2.clone(),
                odf_times: vec![(job.3.odf, t)],
                report,
                summary,
                best: false,
            }),
        }
    }
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    for n in names {
        let best = points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.series == n)
            .min_by(|a, b| a.1.summary.mean_time_s.total_cmp(&b.1.summary.mean_time_s))
            .map(|(i, _)| i);
        if let Some(i) = best {
            points[i].best = true;
        }
    }
    Ok(SweepResult { axis, points, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_scaling_grows_smallest_extent() {
        let b = Dims3::cube(16);
        assert_eq!(weak_dims(b, 1, 1).unwrap(), b);
        assert_eq!(weak_dims(b, 1, 2).unwrap(), Dims3::new(32, 16, 16));
        assert_eq!(weak_dims(b, 1, 4).unwrap(), Dims3::new(32, 32, 16));
        assert_eq!(weak_dims(b, 1, 8).unwrap(), Dims3::cube(32));
        assert_eq!(weak_dims(b, 2, 6).unwrap(), Dims3::new(48, 16, 16));
        assert!(weak_dims(b, 2, 3).is_err());
    }

    #[test]
    fn axis_values_apply() {
        let base = Scenario::new(Dims3::cube(8), ExecMode::CharmD);
        assert_eq!(Axis::Odf.apply(&base, "4").unwrap().odf, 4);
        assert_eq!(Axis::Mode.apply(&base, "mpi_h").unwrap().mode, ExecMode::MpiH);
        assert!(Axis::Fusion.apply(&base, "z").is_err());
        assert!(Axis::parse("colour").is_err());
    }
}
