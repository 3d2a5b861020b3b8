use overlapsim::geom::Dims3;
use overlapsim::harness::{
    run_scenario, svg_chart, sweep, Axis, MetricsRow, MetricsTable, OracleStatus, Series, SweepOptions,
    CSV_HEADER,
};
use overlapsim::jacobi::{ExecMode, FusionStrategy, LaunchMode, SyncPolicy};
use overlapsim::net::Protocol;
use overlapsim::scenario::{Precision, Scaling, Scenario};
use overlapsim::SimError;
use proptest::prelude::*;

fn small(mode: ExecMode) -> Scenario {
    let mut s = Scenario::new(Dims3::cube(12), mode);
    s.name = "small".into();
    s.grid.iterations = 6;
    s.grid.warmup = 2;
    s.machine.nodes = 2;
    s
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn minimal_config_gets_defaults() {
    let s = Scenario::parse("[grid]\ndims = 8\n[run]\nmode = mpi_h\n").unwrap();
    let mut want = Scenario::new(Dims3::cube(8), ExecMode::MpiH);
    want.name = s.name.clone();
    assert_eq!(s, want);
}

#[test]
fn config_errors_carry_line_numbers() {
    let err = Scenario::parse("[grid]\ndims = 8\n[run]\nmode = charm_d\nodf = 0\n").unwrap_err();
    assert!(matches!(err, SimError::Config(_)));
    let err = Scenario::parse("[grid]\ndims = 8\n\n[run]\nmode = charm_d\nbogus = 1\n").unwrap_err();
    assert!(err.to_string().contains("line 6"), "{err}");
    let err = Scenario::parse("[grid]\ndims = 8\n[run]\nmode = charm_d\nodf = two\n").unwrap_err();
    assert!(err.to_string().contains("line 5"), "{err}");
    let err = Scenario::parse("[grid]\ndims = 8\n").unwrap_err();
    assert!(err.to_string().contains("run.mode"), "{err}");
}

#[test]
fn fused_graph_combination_is_accepted() {
    let s = Scenario::parse("[grid]\ndims = 8\n[run]\nmode = charm_d\nfusion = c\nlaunch = graph\n").unwrap();
    assert_eq!((s.fusion, s.launch), (FusionStrategy::C, LaunchMode::Graph));
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    (
        (1u32..4, 1u32..3, 1u32..3, "[a-z][a-z0-9_-]{0,8}"),
        (0.0f64..1e-4, 1e6f64..1e12, 1usize..16, any::<bool>(), 0.0f64..1e-5),
        (0.0f64..1e-5, 1e8f64..1e11, 1u64..(1 << 24), 1u64..(1 << 22), 0usize..3, any::<bool>()),
        (1usize..4, 0u64..20, 0u64..5, any::<bool>()),
        (0usize..4, 0usize..4, any::<bool>(), any::<bool>(), any::<u64>(), any::<bool>(), any::<bool>()),
    )
        .prop_map(|(m, c, n, g, r)| {
            let mut s = Scenario::new(Dims3::new(12 * g.0, 12, 24), ExecMode::CharmD);
            s.machine.nodes = m.0;
            s.machine.gpus_per_node = m.1;
            s.machine.pes_per_node = m.1 * m.2;
            s.name = m.3;
            s.cost.t_launch = c.0;
            s.cost.kernel_rate = c.1;
            s.cost.slots = c.2;
            s.cost.shared_throughput = c.3;
            s.cost.t_msg = c.4;
            s.net.alpha = n.0;
            s.net.beta = n.1;
            s.net.pipeline_threshold = n.2;
            s.net.chunk_size = n.3;
            s.net.mode = [Protocol::DeviceDirect, Protocol::HostStaging, Protocol::PipelinedHostStaging][n.4];
            s.net.nic_fair_share = n.5;
            s.grid.iterations = g.1;
            s.grid.warmup = g.2;
            s.precision = if g.3 { Precision::F32 } else { Precision::F64 };
            s.mode = ExecMode::ALL[r.0];
            if s.mode == ExecMode::CharmD {
                s.fusion = FusionStrategy::ALL[r.1];
                s.launch = if r.2 { LaunchMode::Graph } else { LaunchMode::Individual };
            }
            s.manual_overlap = s.mode.is_mpi() && r.3;
            s.sync = if r.3 { SyncPolicy::Baseline2Sync } else { SyncPolicy::Optimized1Sync };
            s.seed = r.4;
            s.perturb = r.5;
            s.numerics = !r.6;
            s.scaling = if r.6 { Scaling::Strong } else { Scaling::Weak };
            s
        })
        .prop_filter("decomposable", |s| s.validate().is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(s in arb_scenario()) {
        let text = s.emit();
        let back = Scenario::parse(&text).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn trivial_single_chare_gives_constant_rows() {
    let mut s = Scenario::new(Dims3::cube(8), ExecMode::CharmD);
    s.name = "trivial".into();
    let r = run_scenario(&s).unwrap();
    assert_eq!(r.table.rows.len(), 100);
    assert_eq!(r.oracle, OracleStatus::Match);
    let t0 = r.table.rows[0].time_s;
    assert!(t0 > 0.0);
    assert!(r.table.rows.iter().all(|row| row.time_s == t0));
    assert_eq!(r.table.rows[0].iteration, 10);
}

#[test]
fn repeated_runs_are_identical() {
    let mut s = small(ExecMode::CharmH);
    s.odf = 2;
    s.perturb = true;
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.trace_hash(), b.trace_hash());
}

#[test]
fn csv_schema() {
    let r = run_scenario(&small(ExecMode::MpiD)).unwrap();
    let csv = r.table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 6);
    assert!(csv.ends_with('\n'));
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 8);
        assert_eq!(f[0], "small");
        for x in &f[2..6] {
            assert!(x.parse::<f64>().is_ok(), "{x}");
        }
        assert!(f[6].parse::<u64>().is_ok() && f[7].parse::<u64>().is_ok());
    }
}

#[test]
fn one_row_table_is_two_lines_and_empty_table_writes_nothing() {
    let row = MetricsRow {
        scenario: "x".into(),
        iteration: 0,
        time_s: 1.5e-5,
        pe_busy: 0.5,
        gpu_busy: 0.25,
        exposed_comm_s: 1e-6,
        launches: 13,
        nic_bytes: 4096,
    };
    let t = MetricsTable { rows: vec![row] };
    let csv = t.to_csv();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(csv.lines().nth(1).unwrap(), "x,0,1.5e-5,0.5,0.25,1e-6,13,4096");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("out.csv");
    t.write_csv(&p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), csv);
    let empty = dir.path().join("empty.csv");
    assert!(MetricsTable::default().write_csv(&empty).is_err());
    assert!(!empty.exists());
    assert!(t.write_csv(&dir.path().join("missing/dir/out.csv")).is_err());
}

#[test]
fn odf_sweep_marks_one_best() {
    let mut s = small(ExecMode::CharmD);
    s.grid.dims = Dims3::cube(32);
    s.numerics = false;
    let r = sweep(&s, Axis::Odf, &strings(&["1", "2", "4", "8", "16"]), &SweepOptions::default()).unwrap();
    assert!(r.error.is_none());
    assert_eq!(r.points.len(), 5);
    assert_eq!(r.points.iter().filter(|p| p.best).count(), 1);
    let best = r.points.iter().find(|p| p.best).unwrap();
    let min = r.points.iter().map(|p| p.summary.mean_time_s).fold(f64::INFINITY, f64::min);
    assert_eq!(best.summary.mean_time_s, min);
    assert!(r.render().lines().filter(|l| l.starts_with('*')).count() == 1);
}

#[test]
fn single_value_sweep_equals_run() {
    let s = small(ExecMode::CharmD);
    let r = sweep(&s, Axis::Mode, &strings(&["charm_d"]), &SweepOptions::default()).unwrap();
    let mut named = s.clone();
    named.name = r.points[0].label.clone();
    let direct = run_scenario(&named).unwrap();
    assert_eq!(r.points[0].report.table, direct.table);
    assert_eq!(r.points[0].report.trace_hash(), direct.trace_hash());
}

#[test]
fn parallel_sweep_equals_serial() {
    let s = small(ExecMode::CharmD);
    let vals = strings(&["1", "2", "4"]);
    let opts = |threads| SweepOptions {
        series: Some((Axis::Fusion, strings(&["none", "c"]))),
        threads: Some(threads),
        ..SweepOptions::default()
    };
    let a = sweep(&s, Axis::Odf, &vals, &opts(1)).unwrap();
    let b = sweep(&s, Axis::Odf, &vals, &opts(4)).unwrap();
    assert_eq!(a.table(), b.table());
    assert_eq!(a.render(), b.render());
    let ha: Vec<u64> = a.points.iter().map(|p| p.report.trace_hash()).collect();
    let hb: Vec<u64> = b.points.iter().map(|p| p.report.trace_hash()).collect();
    assert_eq!(ha, hb);
}

#[test]
fn mode_sweep_yields_one_polyline_per_series() {
    let s = small(ExecMode::CharmD);
    let r = sweep(&s, Axis::Nodes, &strings(&["2", "4"]), &SweepOptions {
        series: Some((Axis::Mode, strings(&["mpi_h", "mpi_d", "charm_h", "charm_d"]))),
        ..SweepOptions::default()
    })
    .unwrap();
    let series = r.series();
    assert_eq!(series.len(), 4);
    let svg = svg_chart("modes", "nodes", "time/iter (s)", &series);
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn best_odf_selection_per_point() {
    let s = small(ExecMode::CharmH);
    let r = sweep(&s, Axis::Nodes, &strings(&["2", "4"]), &SweepOptions {
        best_odf: Some(vec![1, 2, 4]),
        ..SweepOptions::default()
    })
    .unwrap();
    for p in &r.points {
        assert_eq!(p.odf_times.len(), 3);
        let min = p.odf_times.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        assert_eq!(p.summary.mean_time_s, min);
    }
}

#[test]
fn failed_point_keeps_earlier_results() {
    let mut s = small(ExecMode::CharmD);
    s.numerics = false;
    let first = run_scenario(&s).unwrap();
    s.event_cap = first.summary.engine.fired + 10;
    let r = sweep(&s, Axis::Odf, &strings(&["1", "8"]), &SweepOptions {
        threads: Some(1),
        ..SweepOptions::default()
    })
    .unwrap();
    assert_eq!(r.points.len(), 1);
    assert!(matches!(r.error, Some(SimError::Livelock { .. })), "{:?}", r.error);
}

#[test]
fn weak_node_scaling_grows_the_grid() {
    let s = small(ExecMode::MpiH);
    let a = Axis::Nodes.apply(&s, "4").unwrap();
    assert_eq!(a.grid.dims.count(), 2 * s.grid.dims.count());
    let mut strong = s.clone();
    strong.scaling = Scaling::Strong;
    assert_eq!(Axis::Nodes.apply(&strong, "4").unwrap().grid.dims, s.grid.dims);
}

#[test]
fn svg_handles_multiple_series() {
    let svg = svg_chart("t", "x", "y", &[
        Series { name: "a".into(), points: vec![(1.0, 1.0), (2.0, 0.5)] },
        Series { name: "b".into(), points: vec![(1.0, 2.0), (16.0, 0.1)] },
    ]);
    assert_eq!(svg.matches("class=\"series\"").count(), 2);
}

#[test]
fn mode_axis_drops_settings_the_mode_cannot_use() {
    let mut s = small(ExecMode::CharmD);
    s.odf = 4;
    s.fusion = FusionStrategy::C;
    s.launch = LaunchMode::Graph;
    let m = Axis::Mode.apply(&s, "mpi_h").unwrap();
    assert_eq!((m.odf, m.fusion, m.launch), (1, FusionStrategy::None, LaunchMode::Individual));
    let h = Axis::Mode.apply(&s, "charm_h").unwrap();
    assert_eq!((h.odf, h.fusion), (4, FusionStrategy::None));
    assert_eq!(Axis::Mode.apply(&s, "charm_d").unwrap(), s);
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = Scenario::load(&dir.path().join("nope.conf")).unwrap_err();
    assert!(matches!(err, SimError::Io(_)));
    assert_eq!(err.exit_code(), 2);
}
