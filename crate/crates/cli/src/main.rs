use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use overlapsim::harness::{self, svg_chart, Axis, OracleStatus, RunReport, SweepOptions};
use overlapsim::oracle::analytic_iter_time;
use overlapsim::scenario::Scenario;
use overlapsim::SimError;

#[derive(Parser)]
#[command(name = "overlapsim", version, about = "Discrete-event simulator of an overdecomposed GPU runtime running Jacobi3D")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its summary.
    Run {
        config: PathBuf,
        /// Write per-iteration metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a scenario across values of one parameter.
    Sweep {
        config: PathBuf,
        /// odf, nodes, mode, fusion or launch.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Draw one curve per value of a second axis, e.g. `mode=charm_h,charm_d`.
        #[arg(long)]
        series: Option<String>,
        /// For Charm modes, try these ODFs at every point and keep the fastest.
        #[arg(long, value_delimiter = ',')]
        best_odf: Option<Vec<u32>>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Parallel simulations (defaults to OVERLAPSIM_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the simulated grid against the serial reference.
    Verify { config: PathBuf },
    /// Dump the event trace.
    Trace {
        config: PathBuf,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many records.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn oracle_gate(r: &RunReport) -> Result<(), SimError> {
    match &r.oracle {
        OracleStatus::Mismatch(m) => Err(SimError::OracleMismatch(format!("{}: {m}", r.scenario.name))),
        _ => Ok(()),
    }
}

fn oracle_text(s: &OracleStatus) -> &'static str {
    match s {
        OracleStatus::Match => "match",
        OracleStatus::Mismatch(_) => "MISMATCH",
        OracleStatus::Skipped => "skipped (numerics off)",
    }
}

fn write(path: &Path, text: &str) -> Result<(), SimError> {
    std::fs::write(path, text).map_err(|e| SimError::Io(format!("cannot write {}: {e}", path.display())))
}

fn dispatch(cmd: Cmd) -> Result<(), SimError> {
    match cmd {
        Cmd::Run { config, csv } => {
            let s = Scenario::load(&config)?;
            let r = harness::run_scenario(&s)?;
            let sum = r.table.summaries().remove(0);
            println!("scenario       {}", s.name);
            println!("iterations     {} timed, {} warmup", sum.iterations, s.grid.warmup);
            println!("time/iter      {:.6e} s (min {:.6e}, max {:.6e})", sum.mean_time_s, sum.min_time_s, sum.max_time_s);
            println!("pe_busy        {:.4}", sum.pe_busy);
            println!("gpu_busy       {:.4}", sum.gpu_busy);
            println!("exposed_comm   {:.6e} s", sum.exposed_comm_s);
            println!("launches/iter  {:.1}", sum.launches_per_iter);
            println!("nic bytes/iter {:.0}", sum.nic_bytes_per_iter);
            println!("trace hash     {:016x}", r.trace_hash());
            println!("oracle         {}", oracle_text(&r.oracle));
            if let Some(p) = csv {
                r.table.write_csv(&p)?;
            }
            oracle_gate(&r)
        }
        Cmd::Sweep {
            config,
            axis,
            values,
            series,
            best_odf,
            csv,
            svg,
            threads,
        } => {
            let base = Scenario::load(&config)?;
            let axis = Axis::parse(&axis)?;
            let series = match series {
                None => None,
                Some(spec) => {
                    let (a, v) = spec
                        .split_once('=')
                        .ok_or_else(|| SimError::Config(format!("--series '{spec}' must look like axis=v1,v2")))?;
                    Some((Axis::parse(a)?, v.split(',').map(str::to_string).collect()))
                }
            };
            let opts = SweepOptions {
                series,
                best_odf,
                threads,
            };
            let res = harness::sweep(&base, axis, &values, &opts)?;
            print!("{}", res.render());
            let table = res.table();
            if let Some(p) = csv {
                table.write_csv(&p)?;
            }
            if let Some(p) = svg {
                if res.points.is_empty() {
                    return Err(SimError::Config("refusing to emit an empty chart".into()));
                }
                let chart = svg_chart(&base.name, axis.name(), "time per iteration (s)", &res.series());
                write(&p, &chart)?;
            }
            if let Some(e) = res.error {
                return Err(e);
            }
            if let Some((label, m)) = res.oracle_failures().first() {
                return Err(SimError::OracleMismatch(format!("{label}: {m}")));
            }
            Ok(())
        }
        Cmd::Verify { config } => {
            let s = Scenario::load(&config)?;
            let mut checked = s.clone();
            checked.numerics = true;
            let r = harness::run_scenario(&checked)?;
            println!("grid oracle    {}", oracle_text(&r.oracle));
            if let Ok(times) = analytic_iter_time(&s) {
                let mut prev = overlapsim::VirtualTime::ZERO;
                let mut bad = None;
                for (i, (&end, want)) in r.iter_end.iter().zip(&times).enumerate() {
                    if end - prev != *want && bad.is_none() {
                        bad = Some((i, end - prev, *want));
                    }
                    prev = end;
                }
                match bad {
                    None => println!("timing oracle  match ({} iterations)", times.len()),
                    Some((i, got, want)) => {
                        println!("timing oracle  MISMATCH");
                        return Err(SimError::OracleMismatch(format!(
                            "iteration {i}: simulated {} ps, closed form {} ps",
                            got.as_ps(),
                            want.as_ps()
                        )));
                    }
                }
            } else {
                println!("timing oracle  not applicable");
            }
            oracle_gate(&r)
        }
        Cmd::Trace { config, out, limit } => {
            let s = Scenario::load(&config)?;
            let r = harness::run_with_trace(&s, true)?;
            let mut text = String::from("time_ps,seq,entity,event\n");
            for t in r.trace.iter().take(limit.unwrap_or(usize::MAX)) {
                text.push_str(&format!("{},{},{},{}\n", t.time.as_ps(), t.seq, t.entity, t.label));
            }
            text.push_str(&format!("# events={} hash={:016x}\n", r.trace.len(), r.trace_hash()));
            match out {
                Some(p) => write(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}
