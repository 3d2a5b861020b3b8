//! Simulated GPUs: prioritized FIFO streams, a slot-limited dispatcher,
//! cost-model durations, completion signals, and captured graphs.
//!
//! An op runs in two phases: a fixed latency, then its throughput-bound
//! work on one of the device's engines (compute, D2H link, H2D link).
//! Concurrent work on an engine shares it when `shared_throughput` is set.

mod cost;
mod graph;

use std::collections::VecDeque;

pub use cost::{CostModel, KernelWork, OpCost};
pub use graph::{DeviceGraph, GraphNode, Variant};

use crate::engine::Entity;
use crate::error::{Result, SimError};
use crate::fluid::FluidResource;
use crate::ids::*;
use crate::runtime::{Core, Event, FlowKey, Res, Waiter};
use crate::time::VirtualTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Kernel(KernelWork),
    CopyD2H(u64),
    CopyH2D(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Priority {
    High,
    Low,
}

pub(crate) struct Device {
    pub streams: Vec<StreamId>,
    pub running: usize,
    loose_ready: Vec<u32>,
    pub compute: FluidResource<FlowKey>,
    pub d2h: FluidResource<FlowKey>,
    pub h2d: FluidResource<FlowKey>,
    kernels_active: usize,
    kernel_since: VirtualTime,
    pub kernel_busy: Vec<(VirtualTime, VirtualTime)>,
    pub max_running: usize,
}

impl Device {
    pub(crate) fn new(shared: bool) -> Self {
        Device {
            streams: Vec::new(),
            running: 0,
            loose_ready: Vec::new(),
            compute: FluidResource::new(shared),
            d2h: FluidResource::new(shared),
            h2d: FluidResource::new(shared),
            kernels_active: 0,
            kernel_since: VirtualTime::ZERO,
            kernel_busy: Vec::new(),
            max_running: 0,
        }
    }
}

pub(crate) struct Stream {
    pub device: DeviceId,
    pub priority: Priority,
    queue: VecDeque<u32>,
    busy: bool,
    pub last: Option<SignalId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpBody {
    Work(OpKind),
    Graph(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpStatus {
    Waiting,
    Running,
    Done,
}

pub(crate) struct OpState {
    body: OpBody,
    pub device: DeviceId,
    pub stream: Option<StreamId>,
    pub high: bool,
    pub signal: SignalId,
    pub deps_pending: u32,
    submitted: bool,
    status: OpStatus,
    work: VirtualTime,
    graph_node: Option<(u32, usize)>,
    pub start: Option<VirtualTime>,
    pub end: Option<VirtualTime>,
}

impl OpState {
    pub(crate) fn is_kernel(&self) -> bool {
        matches!(self.body, OpBody::Work(OpKind::Kernel(_)))
    }

    pub(crate) fn is_graph(&self) -> bool {
        matches!(self.body, OpBody::Graph(_))
    }
}

pub(crate) struct GraphRun {
    graph: GraphId,
    nodes: Vec<u32>,
    remaining: usize,
    op: u32,
}

impl<P, C> Core<P, C> {
    /// Create a stream on a device.
    pub fn create_stream(&mut self, device: DeviceId, priority: Priority) -> Result<StreamId> {
        let dev = self
            .devices
            .get_mut(device.index())
            .ok_or_else(|| SimError::config(format!("no such device {device}")))?;
        let id = StreamId(self.streams.len() as u32);
        dev.streams.push(id);
        self.streams.push(Stream {
            device,
            priority,
            queue: VecDeque::new(),
            busy: false,
            last: None,
        });
        Ok(id)
    }

    pub(crate) fn stream(&self, id: StreamId) -> Result<&Stream> {
        self.streams
            .get(id.index())
            .ok_or_else(|| SimError::config(format!("no such stream {id}")))
    }

    pub fn capture_graph(&mut self, graph: DeviceGraph) -> GraphId {
        self.graphs.push(graph);
        GraphId(self.graphs.len() as u32 - 1)
    }

    pub fn graph(&self, id: GraphId) -> Result<&DeviceGraph> {
        self.graphs
            .get(id.index())
            .ok_or_else(|| SimError::config(format!("no such graph {id}")))
    }

    /// Highest number of ops that ran concurrently on a device.
    pub fn device_peak_running(&self, dev: DeviceId) -> usize {
        self.devices[dev.index()].max_running
    }

    fn new_op(&mut self, body: OpBody, device: DeviceId, stream: Option<StreamId>, high: bool) -> u32 {
        let signal = self.new_signal();
        self.ops.push(OpState {
            body,
            device,
            stream,
            high,
            signal,
            deps_pending: 0,
            submitted: false,
            status: OpStatus::Waiting,
            work: VirtualTime::ZERO,
            graph_node: None,
            start: None,
            end: None,
        });
        self.ops.len() as u32 - 1
    }

    fn add_deps(&mut self, op: u32, deps: &[SignalId]) -> Result<()> {
        for &d in deps {
            if self.add_waiter(d, Waiter::Op(op))? {
                self.ops[op as usize].deps_pending += 1;
            }
        }
        Ok(())
    }

    fn issue(&mut self, stream: StreamId, body: OpBody, deps: &[SignalId], at: VirtualTime) -> Result<u32> {
        let s = self.stream(stream)?;
        let (device, high) = (s.device, s.priority == Priority::High);
        let op = self.new_op(body, device, Some(stream), high);
        self.add_deps(op, deps)?;
        self.streams[stream.index()].last = Some(self.ops[op as usize].signal);
        self.engine
            .schedule_at(at, Entity::Device(device.0), Event::Submit(op))?;
        Ok(op)
    }

    pub(crate) fn add_stream_op(
        &mut self,
        stream: StreamId,
        kind: OpKind,
        deps: &[SignalId],
        at: VirtualTime,
    ) -> Result<SignalId> {
        let op = self.issue(stream, OpBody::Work(kind), deps, at)?;
        Ok(self.ops[op as usize].signal)
    }

    pub(crate) fn add_graph_launch(
        &mut self,
        graph: GraphId,
        stream: StreamId,
        deps: &[SignalId],
        at: VirtualTime,
    ) -> Result<SignalId> {
        let run = self.graph_runs.len() as u32;
        let op = self.issue(stream, OpBody::Graph(run), deps, at)?;
        let (device, high) = {
            let o = &self.ops[op as usize];
            (o.device, o.high)
        };
        let g = &self.graphs[graph.index()];
        let specs: Vec<(OpKind, usize)> = g.nodes().iter().map(|n| (n.kind, n.deps.len())).collect();
        let mut nodes = Vec::with_capacity(specs.len());
        for (i, (kind, ndeps)) in specs.into_iter().enumerate() {
            let n = self.new_op(OpBody::Work(kind), device, None, high);
            let o = &mut self.ops[n as usize];
            // One extra pending dependency gates release on graph start.
            o.deps_pending = ndeps as u32 + 1;
            o.submitted = true;
            o.graph_node = Some((run, i));
            nodes.push(n);
        }
        let remaining = nodes.len();
        self.graph_runs.push(GraphRun {
            graph,
            nodes,
            remaining,
            op,
        });
        Ok(self.ops[op as usize].signal)
    }

    pub(crate) fn submit(&mut self, op: u32) -> Result<()> {
        let o = &mut self.ops[op as usize];
        o.submitted = true;
        let stream = o.stream.expect("submitted op without stream");
        let dev = o.device;
        self.streams[stream.index()].queue.push_back(op);
        self.dispatch(dev)
    }

    fn head_ready(&self, s: StreamId) -> Option<u32> {
        let st = &self.streams[s.index()];
        if st.busy {
            return None;
        }
        let &op = st.queue.front()?;
        let o = &self.ops[op as usize];
        (o.submitted && o.deps_pending == 0).then_some(op)
    }

    /// Mark a device for dispatch once every event at the current instant
    /// has fired, so simultaneously ready ops compete by priority.
    pub(crate) fn dispatch(&mut self, dev: DeviceId) -> Result<()> {
        self.pending_dispatch.insert(dev.0);
        Ok(())
    }

    /// Start everything that can start on a device right now.
    pub(crate) fn dispatch_now(&mut self, dev: DeviceId) -> Result<()> {
        loop {
            let streams = self.devices[dev.index()].streams.clone();
            let mut progressed = false;
            for &s in &streams {
                if let Some(op) = self.head_ready(s) {
                    if let OpBody::Graph(run) = self.ops[op as usize].body {
                        self.start_graph(op, run, s);
                        progressed = true;
                    }
                }
            }
            let slots = self.cost.slots;
            let d = &self.devices[dev.index()];
            if d.running < slots {
                let mut best: Option<(bool, u32)> = None;
                let mut consider = |op: u32, high: bool| {
                    let better = match best {
                        None => true,
                        Some((bh, bop)) => (high && !bh) || (high == bh && op < bop),
                    };
                    if better {
                        best = Some((high, op));
                    }
                };
                for &s in &streams {
                    if let Some(op) = self.head_ready(s) {
                        if matches!(self.ops[op as usize].body, OpBody::Work(_)) {
                            consider(op, self.ops[op as usize].high);
                        }
                    }
                }
                for &op in &self.devices[dev.index()].loose_ready {
                    consider(op, self.ops[op as usize].high);
                }
                if let Some((_, op)) = best {
                    self.start_work(op)?;
                    progressed = true;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn start_graph(&mut self, op: u32, run: u32, stream: StreamId) {
        let now = self.now();
        self.streams[stream.index()].busy = true;
        let o = &mut self.ops[op as usize];
        o.status = OpStatus::Running;
        o.start = Some(now);
        let dev = o.device;
        let nodes = self.graph_runs[run as usize].nodes.clone();
        for n in nodes {
            self.release_graph_node(n, dev);
        }
    }

    fn release_graph_node(&mut self, n: u32, dev: DeviceId) {
        let o = &mut self.ops[n as usize];
        o.deps_pending -= 1;
        if o.deps_pending == 0 {
            self.devices[dev.index()].loose_ready.push(n);
        }
    }

    fn start_work(&mut self, op: u32) -> Result<()> {
        let now = self.now();
        let o = &mut self.ops[op as usize];
        let OpBody::Work(kind) = o.body else {
            return Err(SimError::logic("graph op dispatched as work"));
        };
        o.status = OpStatus::Running;
        o.start = Some(now);
        let (dev, stream, graph_node) = (o.device, o.stream, o.graph_node);
        let cost = match kind {
            OpKind::Kernel(w) => self.cost.kernel(w),
            OpKind::CopyD2H(b) | OpKind::CopyH2D(b) => self.cost.copy(b),
        };
        self.ops[op as usize].work = cost.work;
        if let Some(s) = stream {
            self.streams[s.index()].busy = true;
        }
        let d = &mut self.devices[dev.index()];
        if graph_node.is_some() {
            d.loose_ready.retain(|&x| x != op);
        }
        d.running += 1;
        d.max_running = d.max_running.max(d.running);
        if matches!(kind, OpKind::Kernel(_)) {
            if d.kernels_active == 0 {
                d.kernel_since = now;
            }
            d.kernels_active += 1;
        }
        self.engine
            .schedule(cost.fixed, Entity::Device(dev.0), Event::OpFixed(op));
        Ok(())
    }

    fn op_resource(&self, op: u32) -> Res {
        let o = &self.ops[op as usize];
        match o.body {
            OpBody::Work(OpKind::Kernel(_)) | OpBody::Graph(_) => Res::Compute(o.device.0),
            OpBody::Work(OpKind::CopyD2H(_)) => Res::D2H(o.device.0),
            OpBody::Work(OpKind::CopyH2D(_)) => Res::H2D(o.device.0),
        }
    }

    pub(crate) fn resource(&mut self, r: Res) -> &mut FluidResource<FlowKey> {
        match r {
            Res::Compute(d) => &mut self.devices[d as usize].compute,
            Res::D2H(d) => &mut self.devices[d as usize].d2h,
            Res::H2D(d) => &mut self.devices[d as usize].h2d,
            Res::Nic(n) => &mut self.nics[n as usize],
        }
    }

    fn entity_of(r: Res) -> Entity {
        match r {
            Res::Compute(d) | Res::D2H(d) | Res::H2D(d) => Entity::Device(d),
            Res::Nic(n) => Entity::Nic(n),
        }
    }

    /// Add a flow to a resource and move its wake-up event.
    pub(crate) fn add_flow(&mut self, r: Res, key: FlowKey, work: VirtualTime) -> Result<()> {
        let now = self.now();
        self.resource(r).add(now, key, work);
        self.reschedule(r)
    }

    fn reschedule(&mut self, r: Res) -> Result<()> {
        if let Some(ev) = self.resource(r).pending.take() {
            self.engine.cancel(ev);
        }
        if let Some(t) = self.resource(r).next_completion() {
            let id = self.engine.schedule_at(t, Self::entity_of(r), Event::Fluid(r))?;
            self.resource(r).pending = Some(id);
        }
        Ok(())
    }

    pub(crate) fn op_fixed_done(&mut self, op: u32) -> Result<()> {
        let r = self.op_resource(op);
        let work = self.ops[op as usize].work;
        self.add_flow(r, FlowKey::Op(op), work)
    }

    pub(crate) fn fluid_wake(&mut self, r: Res) -> Result<()> {
        let now = self.now();
        self.resource(r).pending = None;
        let done = self.resource(r).take_finished(now);
        for key in done {
            match key {
                FlowKey::Op(op) => self.complete_op(op)?,
                FlowKey::Stage(x, s) => self.stage_done(x, s)?,
            }
        }
        self.reschedule(r)
    }

    fn complete_op(&mut self, op: u32) -> Result<()> {
        let now = self.now();
        let o = &mut self.ops[op as usize];
        o.status = OpStatus::Done;
        o.end = Some(now);
        let (dev, stream, graph_node, sig, kernel) =
            (o.device, o.stream, o.graph_node, o.signal, o.is_kernel());
        let d = &mut self.devices[dev.index()];
        d.running -= 1;
        if kernel {
            d.kernels_active -= 1;
            if d.kernels_active == 0 {
                let since = d.kernel_since;
                d.kernel_busy.push((since, now));
            }
        }
        if let Some(s) = stream {
            self.pop_stream(s, op)?;
        }
        if let Some((run, idx)) = graph_node {
            self.graph_node_done(run, idx)?;
        }
        self.fire(sig)?;
        self.dispatch(dev)
    }

    fn pop_stream(&mut self, s: StreamId, op: u32) -> Result<()> {
        let st = &mut self.streams[s.index()];
        if st.queue.pop_front() != Some(op) {
            return Err(SimError::logic(format!("stream {s} completed out of order")));
        }
        st.busy = false;
        Ok(())
    }

    fn graph_node_done(&mut self, run: u32, idx: usize) -> Result<()> {
        let r = &self.graph_runs[run as usize];
        let g = r.graph;
        let children: Vec<u32> = self.graphs[g.index()]
            .children(idx)
            .iter()
            .map(|&c| r.nodes[c])
            .collect();
        let dev = self.ops[r.op as usize].device;
        for c in children {
            self.release_graph_node(c, dev);
        }
        let r = &mut self.graph_runs[run as usize];
        r.remaining -= 1;
        if r.remaining == 0 {
            let gop = r.op;
            let now = self.now();
            let o = &mut self.ops[gop as usize];
            o.status = OpStatus::Done;
            o.end = Some(now);
            let (stream, sig) = (o.stream.expect("graph without stream"), o.signal);
            self.pop_stream(stream, gop)?;
            self.fire(sig)?;
        }
        Ok(())
    }
}
