use overlapsim::device::Variant;
use overlapsim::geom::{Dims3, Dir};
use overlapsim::jacobi::{
    decompose, simulate, Block, ExecMode, FusionStrategy, LaunchMode, Region, SyncPolicy,
};
use overlapsim::oracle::{enumerate_decompositions, serial_jacobi};
use overlapsim::runtime::Machine;
use overlapsim::scenario::Scenario;
use overlapsim::SimError;
use proptest::prelude::*;

fn scenario(dims: usize, mode: ExecMode, odf: u32, iterations: u64) -> Scenario {
    let mut s = Scenario::new(Dims3::cube(dims), mode);
    s.grid.iterations = iterations;
    s.grid.warmup = 0;
    s.odf = odf;
    s
}

#[test]
fn nine_mib_faces_at_1536() {
    let d = decompose(Dims3::cube(1536), 6).unwrap();
    assert_eq!(d.parts, Dims3::new(1, 2, 3));
    assert_eq!(d.block, Dims3::new(1536, 768, 512));
    assert_eq!(d.max_face() * 8, 9437184);
}

#[test]
fn single_part_is_whole_grid() {
    let d = decompose(Dims3::new(5, 7, 9), 1).unwrap();
    assert_eq!(d.block, Dims3::new(5, 7, 9));
}

#[test]
fn forty_eight_parts_match_enumeration() {
    let dims = Dims3::cube(3072);
    let d = decompose(dims, 48).unwrap();
    let best = enumerate_decompositions(dims, 48)[0];
    assert_eq!(d.parts.as_array(), best.0);
    assert_eq!(d.aggregate_surface(), best.1);
}

#[test]
fn halo_sizes_for_192_cube() {
    let d = decompose(Dims3::cube(192), 6).unwrap();
    let faces: Vec<usize> = (0..3).map(|a| d.block.face(a) * 8).collect();
    assert_eq!(d.max_face() * 8, 144 * 1024);
    assert!(faces.contains(&(96 * 1024)));
}

#[test]
fn indivisible_grid_names_dimension() {
    let err = decompose(Dims3::new(8, 8, 8), 7).unwrap_err();
    assert!(matches!(err, SimError::Config(_)));
}

proptest! {
    #[test]
    fn decomposition_matches_brute_force(
        f in prop::collection::vec(1usize..7, 3),
        scale in 1usize..5,
        n in 1usize..40,
    ) {
        let dims = Dims3::new(f[0] * scale * 2, f[1] * scale * 3, f[2] * scale);
        let all = enumerate_decompositions(dims, n);
        match decompose(dims, n) {
            Ok(d) => {
                prop_assert_eq!(d.parts.as_array(), all[0].0);
                prop_assert_eq!(d.aggregate_surface(), all[0].1);
                prop_assert_eq!(d.parts.count(), n);
            }
            Err(e) => {
                prop_assert!(all.is_empty());
                prop_assert!(matches!(e, SimError::Config(_)));
            }
        }
    }

    #[test]
    fn serial_values_stay_bounded_and_symmetric(n in 1usize..6, iters in 1u64..4) {
        // Summation order breaks exact symmetry only in the last bits.
        let g = serial_jacobi::<f64>(Dims3::cube(n), iters);
        prop_assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let dims = Dims3::cube(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let a = g[dims.linear([i, j, k])];
                    prop_assert!((a - g[dims.linear([n - 1 - i, j, k])]).abs() < 1e-15);
                    prop_assert!((a - g[dims.linear([k, i, j])]).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn two_blocks_with_manual_exchange_match_serial() {
    let dims = Dims3::new(6, 4, 5);
    let half = Dims3::new(3, 4, 5);
    let mut lo = Block::<f64>::new(half, [false, true, false, false, false, false]).unwrap();
    let mut hi = Block::<f64>::new(half, [true, false, false, false, false, false]).unwrap();
    for it in 0..4 {
        let (a, b) = (lo.pack(Dir::XPlus), hi.pack(Dir::XMinus));
        lo.unpack(Dir::XPlus, &b).unwrap();
        hi.unpack(Dir::XMinus, &a).unwrap();
        // Split the first block's update into interior and exterior.
        if it % 2 == 0 {
            lo.update(Region::Interior).unwrap();
            lo.update(Region::Exterior).unwrap();
        } else {
            lo.update(Region::Full).unwrap();
        }
        hi.update(Region::Full).unwrap();
        lo.flip();
        hi.flip();
    }
    assert_eq!(lo.flips(), 4);
    let mut got = lo.owned();
    got.extend(hi.owned());
    let want = serial_jacobi::<f64>(dims, 4);
    assert_eq!(got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), want.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn unpack_on_boundary_face_is_logic_error() {
    let mut b = Block::<f64>::new(Dims3::cube(2), [false; 6]).unwrap();
    assert!(matches!(b.unpack(Dir::ZPlus, &[0.0; 4]), Err(SimError::Logic(_))));
}

#[test]
fn buffers_alternate_each_iteration() {
    let mut b = Block::<f64>::new(Dims3::cube(3), [false; 6]).unwrap();
    let first = b.current();
    for k in 1..=5u64 {
        b.update(Region::Full).unwrap();
        b.flip();
        assert_eq!(b.flips(), k);
        assert_eq!(b.current() == first, k % 2 == 0);
    }
}

/// A 3x3x3 chare grid so the center chare has all six neighbors.
fn cube27(fusion: FusionStrategy, launch: LaunchMode) -> Scenario {
    let mut s = scenario(12, ExecMode::CharmD, 27, 6);
    s.fusion = fusion;
    s.launch = launch;
    s
}

#[test]
fn launch_counts_per_fusion_strategy() {
    for (f, want) in [
        (FusionStrategy::None, 13),
        (FusionStrategy::A, 8),
        (FusionStrategy::B, 3),
        (FusionStrategy::C, 1),
    ] {
        let out = simulate::<f64>(&cube27(f, LaunchMode::Individual), false).unwrap();
        let center = out.launches.iter().find(|c| c.neighbors == 6).unwrap();
        assert_eq!(center.per_iter.len(), 6);
        for it in &center.per_iter {
            assert_eq!((it.kernels, it.graphs), (want, 0), "fusion {f}");
        }
        let corner = out.launches.iter().find(|c| c.neighbors == 3).unwrap();
        if f == FusionStrategy::None {
            assert!(corner.per_iter.iter().all(|it| it.kernels == 7));
        }
    }
}

#[test]
fn graph_mode_launches_once_and_alternates() {
    for &f in FusionStrategy::ALL {
        let out = simulate::<f64>(&cube27(f, LaunchMode::Graph), false).unwrap();
        for c in &out.launches {
            assert!(c.per_iter.iter().all(|it| it.graphs == 1 && it.kernels == 0));
            let want: Vec<Variant> = (0..6).map(Variant::for_iteration).collect();
            assert_eq!(c.variants, want);
        }
    }
}

#[test]
fn host_modes_issue_copies() {
    let out = simulate::<f64>(&cube27(FusionStrategy::None, LaunchMode::Individual), false).unwrap();
    assert!(out.launches.iter().all(|c| c.per_iter.iter().all(|i| i.copies == 0)));
    let s = scenario(12, ExecMode::CharmH, 27, 3);
    let out = simulate::<f64>(&s, false).unwrap();
    let center = out.launches.iter().find(|c| c.neighbors == 6).unwrap();
    assert!(center.per_iter.iter().all(|i| i.copies == 12));
}

#[test]
fn every_mode_matches_serial_with_perturbation() {
    let mut s = scenario(12, ExecMode::CharmD, 4, 5);
    s.machine = Machine {
        nodes: 2,
        gpus_per_node: 1,
        pes_per_node: 2,
    };
    let want = serial_jacobi::<f64>(s.grid.dims, 5);
    let mut hashes = vec![];
    for &mode in ExecMode::ALL {
        for seed in 0..3 {
            let mut t = s.clone();
            t.mode = mode;
            if mode.is_mpi() {
                t.odf = 1;
            }
            t.perturb = seed > 0;
            t.seed = seed;
            t.jitter = 5e-6;
            let out = simulate::<f64>(&t, false).unwrap();
            assert_eq!(out.grid.unwrap(), want, "{mode} seed {seed}");
            hashes.push(out.summary.trace_hash);
        }
    }
    // Perturbation does change the schedule, in every mode.
    for m in hashes.chunks(3) {
        assert_ne!(m[0], m[1]);
        assert_ne!(m[1], m[2]);
    }
}

#[test]
fn single_precision_tracks_serial() {
    let mut s = scenario(8, ExecMode::CharmD, 2, 4);
    s.precision = overlapsim::scenario::Precision::F32;
    let out = simulate::<f32>(&s, false).unwrap();
    assert_eq!(out.grid.unwrap(), serial_jacobi::<f32>(s.grid.dims, 4));
}

#[test]
fn optimized_sync_beats_baseline_under_contention() {
    let mut s = scenario(48, ExecMode::CharmD, 4, 6);
    s.machine.nodes = 2;
    let time = |sync| {
        let mut t = s.clone();
        t.sync = sync;
        let out = simulate::<f64>(&t, false).unwrap();
        *out.iter_end.last().unwrap()
    };
    assert!(time(SyncPolicy::Optimized1Sync) < time(SyncPolicy::Baseline2Sync));
}

#[test]
fn manual_overlap_hides_exchange() {
    let mut s = scenario(96, ExecMode::MpiH, 1, 6);
    s.machine.nodes = 2;
    s.numerics = false;
    let time = |overlap| {
        let mut t = s.clone();
        t.manual_overlap = overlap;
        *simulate::<f64>(&t, false).unwrap().iter_end.last().unwrap()
    };
    assert!(time(true) < time(false));
}

#[test]
fn overlap_and_graphs_require_the_right_mode() {
    let mut s = scenario(12, ExecMode::CharmH, 1, 1);
    s.manual_overlap = true;
    assert!(s.validate().is_err());
    let mut s = scenario(12, ExecMode::MpiD, 1, 1);
    s.launch = LaunchMode::Graph;
    assert!(s.validate().is_err());
    let mut s = scenario(12, ExecMode::MpiD, 2, 1);
    s.odf = 2;
    assert!(s.validate().is_err());
    let mut s = scenario(12, ExecMode::CharmD, 1, 1);
    s.fusion = FusionStrategy::C;
    s.launch = LaunchMode::Graph;
    assert!(s.validate().is_ok());
}
