use crate::device::{DeviceGraph, GraphNode, KernelWork, OpKind, Priority, Variant};
use crate::engine::TraceRecord;
use crate::error::{Result, SimError};
use crate::geom::{Dims3, Dir};
use crate::ids::*;
use crate::net::{Location, Protocol};
use crate::runtime::{
    Application, Core, HostCtx, Message, Perturbation, RunSummary, Runtime, RuntimeOptions,
};
use crate::scalar::{elem_bytes, Scalar};
use crate::scenario::Scenario;
use crate::time::VirtualTime;

use super::{Block, ExecMode, FusionStrategy, LaunchMode, Region, SyncPolicy};

const START: EntryId = EntryId(0);
const PACKED: EntryId = EntryId(1);
const XFER: EntryId = EntryId(2);

/// Launches one chare issued while working on one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IterLaunches {
    pub kernels: u32,
    pub copies: u32,
    pub graphs: u32,
}

impl IterLaunches {
    pub fn total(&self) -> u32 {
        self.kernels + self.copies + self.graphs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChareLaunches {
    pub chare: ChareId,
    pub pe: PeId,
    pub neighbors: usize,
    pub per_iter: Vec<IterLaunches>,
    /// Graph variant launched in each iteration (graph mode only).
    pub variants: Vec<Variant>,
}

/// Everything a finished simulation reports.
#[derive(Debug, Clone)]
pub struct SimOutcome<T> {
    /// Completion time of each iteration's last update, over all chares.
    pub iter_end: Vec<VirtualTime>,
    /// Assembled global grid, x slowest. `None` when numerics were off.
    pub grid: Option<Vec<T>>,
    pub summary: RunSummary,
    pub launches: Vec<ChareLaunches>,
    pub pe_busy: Vec<Vec<(VirtualTime, VirtualTime)>>,
    pub gpu_busy: Vec<Vec<(VirtualTime, VirtualTime)>>,
    pub nic_log: Vec<(VirtualTime, NodeId, u64)>,
    pub nic_peak: Vec<usize>,
    pub device_peak_running: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

pub(crate) enum Cont {
    Xfer { count: usize },
    AfterUpdate,
    MpiPacked,
    MpiWaited,
    MpiAfterUpdate,
}

struct Nbr {
    dir: Dir,
    chan: ChannelId,
    elems: u64,
    bytes: u64,
}

#[derive(Clone, Copy)]
struct Streams {
    compute: StreamId,
    pack: StreamId,
    d2h: StreamId,
    h2d: StreamId,
}

struct ChareApp<T> {
    pos: [usize; 3],
    block: Option<Block<T>>,
    nbrs: Vec<Nbr>,
    streams: Streams,
    graphs: Option<[GraphId; 2]>,
    cb_packed: CallbackId,
    cb_xfer: CallbackId,
    outgoing: Vec<Option<Vec<T>>>,
    incoming: Vec<Option<Vec<T>>>,
    recv_sigs: Vec<SignalId>,
    unpack_sigs: Vec<SignalId>,
    update_sigs: Vec<SignalId>,
    launches: Vec<IterLaunches>,
    variants: Vec<Variant>,
    iter: u64,
    elems: u64,
    interior: u64,
    max_face: u64,
}

struct JacobiApp<T> {
    chares: Vec<ChareApp<T>>,
    first: u32,
    mode: ExecMode,
    fusion: FusionStrategy,
    launch: LaunchMode,
    sync: SyncPolicy,
    overlap: bool,
    total: u64,
    loc: Location,
}

type Ctx<'a, 'b, T> = &'a mut HostCtx<'b, Vec<T>, Cont>;

/// Run the Jacobi3D app described by `s` to completion.
pub fn simulate<T: Scalar>(s: &Scenario, trace: bool) -> Result<SimOutcome<T>> {
    s.validate()?;
    let dec = s.decomposition()?;
    let opts = RuntimeOptions {
        event_cap: s.event_cap,
        perturb: s.perturb.then(|| Perturbation {
            seed: s.seed,
            max_jitter: VirtualTime::secs_lossy(s.jitter),
        }),
        trace,
    };
    let mut core: Core<Vec<T>, Cont> = Core::new(s.machine, s.cost.clone(), s.net.clone(), &opts)?;
    let array = core.create_chare_array(dec.parts, s.machine.pes())?;
    core.declare_gated(XFER);
    let ids: Vec<ChareId> = core.array(array)?.ids().collect();
    let first = ids[0].0;
    let elem = elem_bytes::<T>();
    let loc = if s.mode.device_buffers() {
        Location::Device
    } else {
        Location::Host
    };
    let protocol = match s.mode {
        ExecMode::MpiD => s.net.mode,
        _ => Protocol::DeviceDirect,
    };

    // Channels are created once per face, from the minus side.
    let mut chans = vec![[None::<ChannelId>; 6]; ids.len()];
    for (i, &c) in ids.iter().enumerate() {
        let pos = dec.parts.unlinear(i);
        for d in [Dir::XPlus, Dir::YPlus, Dir::ZPlus] {
            if let Some(q) = d.step(pos, dec.parts) {
                let j = dec.parts.linear(q);
                let ch = core.create_channel(c, ids[j], protocol)?;
                chans[i][d.index()] = Some(ch);
                chans[j][d.opposite().index()] = Some(ch);
            }
        }
    }

    let mut chares = Vec::with_capacity(ids.len());
    for (i, &c) in ids.iter().enumerate() {
        let pos = dec.parts.unlinear(i);
        let dev = core.device_of(c)?;
        let baseline = s.sync == SyncPolicy::Baseline2Sync;
        let compute = core.create_stream(dev, Priority::Low)?;
        let streams = if baseline {
            let xfer = core.create_stream(dev, Priority::High)?;
            Streams {
                compute,
                pack: compute,
                d2h: xfer,
                h2d: xfer,
            }
        } else {
            Streams {
                compute,
                pack: core.create_stream(dev, Priority::High)?,
                d2h: core.create_stream(dev, Priority::High)?,
                h2d: core.create_stream(dev, Priority::High)?,
            }
        };
        let nbrs: Vec<Nbr> = Dir::ALL
            .iter()
            .filter_map(|&d| {
                chans[i][d.index()].map(|chan| {
                    let elems = dec.block.face(d.axis()) as u64;
                    Nbr {
                        dir: d,
                        chan,
                        elems,
                        bytes: elems * elem,
                    }
                })
            })
            .collect();
        let exchanged = Dir::ALL.map(|d| chans[i][d.index()].is_some());
        let max_face = nbrs.iter().map(|n| n.elems).max().unwrap_or(0);
        let elems = dec.block.count() as u64;
        let interior = interior_count(dec.block, exchanged);
        let graphs = if s.launch == LaunchMode::Graph {
            let nodes = graph_nodes(s.fusion, &nbrs, elems, max_face);
            let even = core.capture_graph(DeviceGraph::capture(nodes.clone(), Variant::Even)?);
            let odd = core.capture_graph(DeviceGraph::capture(nodes, Variant::Odd)?);
            Some([even, odd])
        } else {
            None
        };
        let block = if s.numerics {
            Some(Block::new(dec.block, exchanged)?)
        } else {
            None
        };
        let m = nbrs.len();
        chares.push(ChareApp {
            pos,
            block,
            nbrs,
            streams,
            graphs,
            cb_packed: core.register_callback(c, PACKED)?,
            cb_xfer: core.register_callback(c, XFER)?,
            outgoing: (0..m).map(|_| None).collect(),
            incoming: (0..m).map(|_| None).collect(),
            recv_sigs: Vec::new(),
            unpack_sigs: Vec::new(),
            update_sigs: Vec::new(),
            launches: Vec::new(),
            variants: Vec::new(),
            iter: 0,
            elems,
            interior,
            max_face,
        });
    }
    for &c in &ids {
        core.seed(c, START, 0, None)?;
    }

    let app = JacobiApp {
        chares,
        first,
        mode: s.mode,
        fusion: s.fusion,
        launch: s.launch,
        sync: s.sync,
        overlap: s.manual_overlap,
        total: s.grid.total_iterations(),
        loc,
    };
    let mut rt = Runtime::new(core, app);
    let summary = rt.run()?;
    collect(rt, dec.parts, dec.block, ids, summary)
}

fn collect<T: Scalar>(
    mut rt: Runtime<JacobiApp<T>>,
    parts: Dims3,
    block: Dims3,
    ids: Vec<ChareId>,
    summary: RunSummary,
) -> Result<SimOutcome<T>> {
    let total = rt.app.total as usize;
    let mut iter_end = vec![VirtualTime::ZERO; total];
    for (i, ch) in rt.app.chares.iter().enumerate() {
        if ch.update_sigs.len() != total {
            return Err(SimError::Deadlock(format!(
                "{} stopped after {} of {total} iterations",
                ids[i],
                ch.update_sigs.len()
            )));
        }
        for (it, &sig) in ch.update_sigs.iter().enumerate() {
            let t = rt.core.signal_time(sig).ok_or_else(|| {
                SimError::Deadlock(format!("update of {} in iteration {it} never completed", ids[i]))
            })?;
            iter_end[it] = iter_end[it].max(t);
        }
    }
    let grid = if rt.app.chares.iter().all(|c| c.block.is_some()) {
        let g = Dims3::new(parts.x * block.x, parts.y * block.y, parts.z * block.z);
        let mut out = vec![T::zero(); g.count()];
        for ch in &rt.app.chares {
            let b = ch.block.as_ref().expect("checked above");
            let vals = b.owned();
            for (n, v) in vals.into_iter().enumerate() {
                let l = block.unlinear(n);
                let at = [
                    ch.pos[0] * block.x + l[0],
                    ch.pos[1] * block.y + l[1],
                    ch.pos[2] * block.z + l[2],
                ];
                out[g.linear(at)] = v;
            }
        }
        Some(out)
    } else {
        None
    };
    let core = &rt.core;
    let machine = core.machine();
    let launches = rt
        .app
        .chares
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            Ok(ChareLaunches {
                chare: ids[i],
                pe: core.pe_of(ids[i])?,
                neighbors: ch.nbrs.len(),
                per_iter: ch.launches.clone(),
                variants: ch.variants.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pe_busy = (0..machine.pes())
        .map(|p| core.pe_busy(PeId(p)).to_vec())
        .collect();
    let gpu_busy = (0..machine.gpus())
        .map(|d| core.device_kernel_busy(DeviceId(d)).to_vec())
        .collect();
    let nic_peak = (0..machine.nodes).map(|n| core.nic_peak(NodeId(n))).collect();
    let device_peak_running = (0..machine.gpus())
        .map(|d| core.device_peak_running(DeviceId(d)))
        .collect();
    let nic_log = core.nic_log().to_vec();
    let trace = rt.take_trace();
    Ok(SimOutcome {
        iter_end,
        grid,
        summary,
        launches,
        pe_busy,
        gpu_busy,
        nic_log,
        nic_peak,
        device_peak_running,
        trace,
    })
}

fn interior_count(block: Dims3, exchanged: [bool; 6]) -> u64 {
    let d = block.as_array();
    (0..3)
        .map(|a| {
            let cut = usize::from(exchanged[2 * a]) + usize::from(exchanged[2 * a + 1]);
            d[a].saturating_sub(cut) as u64
        })
        .product()
}

/// One iteration as a DAG: unpacks, then update, then the next packs.
fn graph_nodes(fusion: FusionStrategy, nbrs: &[Nbr], elems: u64, max_face: u64) -> Vec<GraphNode> {
    let kernel = |w: KernelWork, deps: Vec<usize>| GraphNode {
        kind: OpKind::Kernel(w),
        deps,
    };
    let m = nbrs.len();
    if m == 0 {
        return vec![kernel(KernelWork::stencil(elems), vec![])];
    }
    let mut nodes = Vec::new();
    match fusion {
        FusionStrategy::C => {
            nodes.push(kernel(
                KernelWork {
                    stencil: elems,
                    pack: 2 * max_face,
                },
                vec![],
            ));
        }
        FusionStrategy::B => {
            nodes.push(kernel(KernelWork::pack(max_face), vec![]));
            nodes.push(kernel(KernelWork::stencil(elems), vec![0]));
            nodes.push(kernel(KernelWork::pack(max_face), vec![1]));
        }
        FusionStrategy::None | FusionStrategy::A => {
            for n in nbrs {
                nodes.push(kernel(KernelWork::pack(n.elems), vec![]));
            }
            nodes.push(kernel(KernelWork::stencil(elems), (0..m).collect()));
            if fusion == FusionStrategy::A {
                nodes.push(kernel(KernelWork::pack(max_face), vec![m]));
            } else {
                for n in nbrs {
                    nodes.push(kernel(KernelWork::pack(n.elems), vec![m]));
                }
            }
        }
    }
    nodes
}

impl<T: Scalar> JacobiApp<T> {
    fn slot(&self, c: ChareId) -> usize {
        (c.0 - self.first) as usize
    }

    fn count(&mut self, k: usize, iter: Option<u64>, f: impl FnOnce(&mut IterLaunches)) {
        if let Some(i) = iter {
            let l = &mut self.chares[k].launches;
            if l.len() <= i as usize {
                l.resize(i as usize + 1, IterLaunches::default());
            }
            f(&mut l[i as usize]);
        }
    }

    fn kernel(
        &mut self,
        ctx: Ctx<'_, '_, T>,
        k: usize,
        stream: StreamId,
        w: KernelWork,
        deps: &[SignalId],
        iter: Option<u64>,
    ) -> Result<SignalId> {
        let s = ctx.enqueue(stream, OpKind::Kernel(w), deps)?;
        self.count(k, iter, |l| l.kernels += 1);
        Ok(s)
    }

    fn copy(
        &mut self,
        ctx: Ctx<'_, '_, T>,
        k: usize,
        stream: StreamId,
        kind: OpKind,
        deps: &[SignalId],
        iter: Option<u64>,
    ) -> Result<SignalId> {
        let s = ctx.enqueue(stream, kind, deps)?;
        self.count(k, iter, |l| l.copies += 1);
        Ok(s)
    }

    fn host_staged(&self) -> bool {
        self.loc == Location::Host
    }

    /// Pack the halos for the next exchange. Returns the op whose
    /// completion means every outgoing buffer is ready.
    fn pack_phase(
        &mut self,
        ctx: Ctx<'_, '_, T>,
        k: usize,
        deps: &[SignalId],
        iter: Option<u64>,
    ) -> Result<Option<SignalId>> {
        let ch = &mut self.chares[k];
        if ch.nbrs.is_empty() {
            return Ok(None);
        }
        if let Some(b) = ch.block.as_ref() {
            for (n, out) in ch.nbrs.iter().zip(ch.outgoing.iter_mut()) {
                *out = Some(b.pack(n.dir));
            }
        }
        let st = ch.streams;
        let faces: Vec<(u64, u64)> = ch.nbrs.iter().map(|n| (n.elems, n.bytes)).collect();
        let max_face = ch.max_face;
        let mut packs = Vec::new();
        if self.fusion == FusionStrategy::None {
            for &(elems, _) in &faces {
                packs.push(self.kernel(ctx, k, st.pack, KernelWork::pack(elems), deps, iter)?);
            }
        } else {
            let p = self.kernel(ctx, k, st.pack, KernelWork::pack(max_face), deps, iter)?;
            packs = vec![p; faces.len()];
        }
        let mut last = *packs.last().expect("has neighbors");
        if self.host_staged() {
            for (p, &(_, bytes)) in packs.iter().zip(&faces) {
                last = self.copy(ctx, k, st.d2h, OpKind::CopyD2H(bytes), &[*p], iter)?;
            }
        }
        Ok(Some(last))
    }

    fn start(&mut self, ctx: Ctx<'_, '_, T>, k: usize) -> Result<()> {
        if self.mode.is_mpi() {
            return self.mpi_begin(ctx, k, 0);
        }
        match self.pack_phase(ctx, k, &[], None)? {
            Some(sig) => {
                let cb = self.chares[k].cb_packed;
                ctx.on_complete(sig, cb, 0, 0)
            }
            None => self.compute_phase(ctx, k, 0),
        }
    }

    /// Halos for iteration `i` are packed: exchange them.
    fn exchange(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64) -> Result<()> {
        let ch = &mut self.chares[k];
        ch.iter = i;
        let m = ch.nbrs.len();
        if m == 0 {
            return self.compute_phase(ctx, k, i);
        }
        let cb = ch.cb_xfer;
        for (t, n) in ch.nbrs.iter().enumerate() {
            let r = ctx.channel_recv(n.chan, self.loc, n.bytes)?;
            ctx.on_complete(r, cb, i, t as u32)?;
        }
        for (t, n) in ch.nbrs.iter().enumerate() {
            let s = ctx.channel_send(n.chan, self.loc, n.bytes, ch.outgoing[t].take())?;
            ctx.on_complete(s, cb, i, (m + t) as u32)?;
        }
        ctx.when(XFER, i, Cont::Xfer { count: 0 })
    }

    fn fused_unpack(&self) -> bool {
        self.launch == LaunchMode::Graph || matches!(self.fusion, FusionStrategy::B | FusionStrategy::C)
    }

    fn recv_arrived(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64, t: usize, payload: Option<Vec<T>>) -> Result<()> {
        let numerics = self.chares[k].block.is_some();
        let payload = match (numerics, payload) {
            (true, None) => {
                return Err(SimError::logic(format!(
                    "halo {t} for iteration {i} arrived without data"
                )))
            }
            (_, p) => p,
        };
        let st = self.chares[k].streams;
        let (dir, elems, bytes) = {
            let n = &self.chares[k].nbrs[t];
            (n.dir, n.elems, n.bytes)
        };
        let mut deps = Vec::new();
        if self.host_staged() {
            deps.push(self.copy(ctx, k, st.h2d, OpKind::CopyH2D(bytes), &[], Some(i))?);
        }
        if self.fused_unpack() {
            self.chares[k].incoming[t] = payload;
            return Ok(());
        }
        let u = self.kernel(ctx, k, st.pack, KernelWork::pack(elems), &deps, Some(i))?;
        let ch = &mut self.chares[k];
        ch.unpack_sigs.push(u);
        if let (Some(b), Some(p)) = (ch.block.as_mut(), payload) {
            b.unpack(dir, &p)?;
        }
        Ok(())
    }

    fn unpack_stored(&mut self, k: usize) -> Result<()> {
        let ch = &mut self.chares[k];
        if let Some(b) = ch.block.as_mut() {
            for (n, slot) in ch.nbrs.iter().zip(ch.incoming.iter_mut()) {
                let data = slot.take().ok_or_else(|| {
                    SimError::logic(format!("unpack of {:?} before its halo arrived", n.dir))
                })?;
                b.unpack(n.dir, &data)?;
            }
        }
        Ok(())
    }

    fn update_data(&mut self, k: usize, region: Region) -> Result<()> {
        if let Some(b) = self.chares[k].block.as_mut() {
            b.update(region)?;
        }
        Ok(())
    }

    fn flip(&mut self, k: usize, repack: bool) {
        let ch = &mut self.chares[k];
        if let Some(b) = ch.block.as_mut() {
            b.flip();
            if repack {
                for (n, out) in ch.nbrs.iter().zip(ch.outgoing.iter_mut()) {
                    *out = Some(b.pack(n.dir));
                }
            }
        }
    }

    /// All halos of iteration `i` are in: update the block.
    fn compute_phase(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64) -> Result<()> {
        self.chares[k].iter = i;
        let ch = &self.chares[k];
        let st = ch.streams;
        let (elems, max_face) = (ch.elems, ch.max_face);
        let has_nbrs = !ch.nbrs.is_empty();
        let u = if let Some(graphs) = ch.graphs {
            let v = Variant::for_iteration(i);
            let g = graphs[(i % 2) as usize];
            if ctx.core().graph(g)?.variant() != v {
                return Err(SimError::logic(format!("iteration {i} picked graph variant {v:?} mismatch")));
            }
            if let Some(b) = ch.block.as_ref() {
                let bound = if b.current() == 0 { Variant::Even } else { Variant::Odd };
                if bound != v {
                    return Err(SimError::logic(format!(
                        "iteration {i} launches the {v:?} graph but the current buffer is {}",
                        b.current()
                    )));
                }
            }
            self.unpack_stored(k)?;
            let sig = ctx.graph_launch(g, st.compute, &[])?;
            self.count(k, Some(i), |l| l.graphs += 1);
            self.chares[k].variants.push(v);
            sig
        } else {
            match self.fusion {
                FusionStrategy::None | FusionStrategy::A => {
                    let deps = std::mem::take(&mut self.chares[k].unpack_sigs);
                    self.kernel(ctx, k, st.compute, KernelWork::stencil(elems), &deps, Some(i))?
                }
                FusionStrategy::B => {
                    self.unpack_stored(k)?;
                    let deps = if has_nbrs {
                        vec![self.kernel(ctx, k, st.pack, KernelWork::pack(max_face), &[], Some(i))?]
                    } else {
                        Vec::new()
                    };
                    self.kernel(ctx, k, st.compute, KernelWork::stencil(elems), &deps, Some(i))?
                }
                FusionStrategy::C => {
                    self.unpack_stored(k)?;
                    let w = KernelWork {
                        stencil: elems,
                        pack: 2 * max_face,
                    };
                    self.kernel(ctx, k, st.compute, w, &[], Some(i))?
                }
            }
        };
        self.update_data(k, Region::Full)?;
        let whole_iteration = self.chares[k].graphs.is_some() || self.fusion == FusionStrategy::C;
        self.flip(k, whole_iteration);
        self.chares[k].update_sigs.push(u);
        match self.sync {
            SyncPolicy::Baseline2Sync => ctx.synchronize(&[u], Cont::AfterUpdate),
            SyncPolicy::Optimized1Sync => self.post_update(ctx, k, i),
        }
    }

    /// Prepare the next iteration's halos and wait for them without blocking.
    fn post_update(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64) -> Result<()> {
        let u = *self.chares[k].update_sigs.last().expect("update issued");
        let next = i + 1;
        let whole_iteration = self.chares[k].graphs.is_some() || self.fusion == FusionStrategy::C;
        let ready = if whole_iteration {
            Some(u)
        } else {
            self.pack_phase(ctx, k, &[u], Some(i))?
        };
        if next < self.total {
            let cb = self.chares[k].cb_packed;
            ctx.on_complete(ready.unwrap_or(u), cb, next, 0)?;
        }
        Ok(())
    }

    fn mpi_begin(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64) -> Result<()> {
        self.chares[k].iter = i;
        let deps: Vec<SignalId> = self.chares[k].update_sigs.last().copied().into_iter().collect();
        match self.pack_phase(ctx, k, &deps, Some(i))? {
            Some(sig) => ctx.synchronize(&[sig], Cont::MpiPacked),
            None => self.mpi_compute(ctx, k, i),
        }
    }

    fn mpi_exchange(&mut self, ctx: Ctx<'_, '_, T>, k: usize) -> Result<()> {
        let i = self.chares[k].iter;
        let ch = &mut self.chares[k];
        let mut all = Vec::with_capacity(2 * ch.nbrs.len());
        ch.recv_sigs.clear();
        for n in &ch.nbrs {
            let r = ctx.channel_recv(n.chan, self.loc, n.bytes)?;
            ch.recv_sigs.push(r);
            all.push(r);
        }
        for (t, n) in ch.nbrs.iter().enumerate() {
            all.push(ctx.channel_send(n.chan, self.loc, n.bytes, ch.outgoing[t].take())?);
        }
        if self.overlap {
            let (st, n) = (ch.streams, ch.interior);
            self.kernel(ctx, k, st.compute, KernelWork::stencil(n), &[], Some(i))?;
            self.update_data(k, Region::Interior)?;
        }
        ctx.synchronize(&all, Cont::MpiWaited)
    }

    fn mpi_unpack(&mut self, ctx: Ctx<'_, '_, T>, k: usize) -> Result<()> {
        let i = self.chares[k].iter;
        let recvs = std::mem::take(&mut self.chares[k].recv_sigs);
        for (t, r) in recvs.into_iter().enumerate() {
            let p = ctx.take_payload(r)?;
            self.recv_arrived(ctx, k, i, t, p)?;
        }
        self.mpi_compute(ctx, k, i)
    }

    fn mpi_compute(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64) -> Result<()> {
        let ch = &mut self.chares[k];
        let st = ch.streams;
        let deps = std::mem::take(&mut ch.unpack_sigs);
        let (work, region) = if self.overlap {
            (ch.elems - ch.interior, Region::Exterior)
        } else {
            (ch.elems, Region::Full)
        };
        let u = self.kernel(ctx, k, st.compute, KernelWork::stencil(work), &deps, Some(i))?;
        self.update_data(k, region)?;
        self.flip(k, false);
        self.chares[k].update_sigs.push(u);
        match self.sync {
            SyncPolicy::Baseline2Sync => ctx.synchronize(&[u], Cont::MpiAfterUpdate),
            SyncPolicy::Optimized1Sync => self.mpi_next(ctx, k, i),
        }
    }

    fn mpi_next(&mut self, ctx: Ctx<'_, '_, T>, k: usize, i: u64) -> Result<()> {
        if i + 1 < self.total {
            self.mpi_begin(ctx, k, i + 1)
        } else {
            Ok(())
        }
    }
}

impl<T: Scalar> Application for JacobiApp<T> {
    type Payload = Vec<T>;
    type Cont = Cont;

    fn on_message(&mut self, ctx: &mut HostCtx<'_, Vec<T>, Cont>, msg: Message<Vec<T>>) -> Result<()> {
        let k = self.slot(msg.target);
        match msg.entry {
            START => self.start(ctx, k),
            PACKED => self.exchange(ctx, k, msg.refnum),
            e => Err(SimError::logic(format!("unexpected entry {e} on {}", msg.target))),
        }
    }

    fn on_resume(
        &mut self,
        ctx: &mut HostCtx<'_, Vec<T>, Cont>,
        chare: ChareId,
        cont: Cont,
        msg: Option<Message<Vec<T>>>,
    ) -> Result<()> {
        let k = self.slot(chare);
        match cont {
            Cont::Xfer { count } => {
                let msg = msg.ok_or_else(|| SimError::logic("halo continuation resumed without a message"))?;
                let i = msg.refnum;
                if i != self.chares[k].iter {
                    return Err(SimError::logic(format!(
                        "{chare} in iteration {} matched a message for iteration {i}",
                        self.chares[k].iter
                    )));
                }
                let m = self.chares[k].nbrs.len();
                let t = msg.tag as usize;
                if t < m {
                    self.recv_arrived(ctx, k, i, t, msg.payload)?;
                }
                if count + 1 < 2 * m {
                    ctx.when(XFER, i, Cont::Xfer { count: count + 1 })
                } else {
                    self.compute_phase(ctx, k, i)
                }
            }
            Cont::AfterUpdate => {
                let i = self.chares[k].iter;
                self.post_update(ctx, k, i)
            }
            Cont::MpiPacked => self.mpi_exchange(ctx, k),
            Cont::MpiWaited => self.mpi_unpack(ctx, k),
            Cont::MpiAfterUpdate => {
                let i = self.chares[k].iter;
                self.mpi_next(ctx, k, i)
            }
        }
    }
}
