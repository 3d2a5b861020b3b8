//! Message-driven tasking runtime on top of the event engine.
//!
//! PEs run one entry method at a time from a message queue ordered by
//! `(arrival, tag, seq)`. Chares live in arrays block-mapped onto PEs.
//! Entries declared as gated are matched against `when` slots by
//! `(entry, refnum)`; unmatched messages are buffered in arrival order.
//! Host handlers advance a local cursor as they pay costs; anything they
//! start (launches, sends) becomes visible at the cursor time.

mod host;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use host::HostCtx;

use crate::device::{CostModel, Device, GraphRun, OpState, Stream};
use crate::engine::{Engine, EngineStats, Entity, TraceRecord, DEFAULT_EVENT_CAP};
use crate::error::{Result, SimError};
use crate::geom::Dims3;
use crate::ids::*;
use crate::net::{Channel, NetParams, PendingPost, Transfer};
use crate::fluid::FluidResource;
use crate::time::VirtualTime;

/// Cluster shape. PEs and GPUs are numbered node-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Machine {
    pub nodes: u32,
    pub gpus_per_node: u32,
    pub pes_per_node: u32,
}

impl Default for Machine {
    fn default() -> Self {
        Machine {
            nodes: 1,
            gpus_per_node: 1,
            pes_per_node: 1,
        }
    }
}

impl Machine {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.gpus_per_node == 0 || self.pes_per_node == 0 {
            return Err(SimError::config("machine counts must all be >= 1"));
        }
        Ok(())
    }

    pub fn pes(&self) -> u32 {
        self.nodes * self.pes_per_node
    }

    pub fn gpus(&self) -> u32 {
        self.nodes * self.gpus_per_node
    }

    pub fn node_of_pe(&self, pe: PeId) -> NodeId {
        NodeId(pe.0 / self.pes_per_node)
    }

    /// PEs of a node share its GPUs in contiguous groups.
    pub fn device_of_pe(&self, pe: PeId) -> DeviceId {
        let node = pe.0 / self.pes_per_node;
        let local = pe.0 % self.pes_per_node;
        DeviceId(node * self.gpus_per_node + local * self.gpus_per_node / self.pes_per_node)
    }

    pub fn node_of_device(&self, dev: DeviceId) -> NodeId {
        NodeId(dev.0 / self.gpus_per_node)
    }
}

/// Deterministic pseudo-random jitter added to every message delivery and
/// to the wake-up of a PE blocked on device or network work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Perturbation {
    pub seed: u64,
    pub max_jitter: VirtualTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeOptions {
    pub event_cap: u64,
    pub perturb: Option<Perturbation>,
    pub trace: bool,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        RuntimeOptions {
            event_cap: DEFAULT_EVENT_CAP,
            perturb: None,
            trace: false,
        }
    }
}

/// An entry-method invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Message<P> {
    pub target: ChareId,
    /// PE that sent the message.
    pub source: PeId,
    pub entry: EntryId,
    pub refnum: u64,
    /// Secondary ordering key among messages arriving at the same instant.
    pub tag: u32,
    pub payload: Option<P>,
    pub size: u64,
    pub send_time: VirtualTime,
}

/// Application logic driven by the runtime.
pub trait Application {
    type Payload;
    /// Suspended control state resumed by `when` matches and blocking waits.
    type Cont;

    /// A message for an ungated entry method.
    fn on_message(
        &mut self,
        ctx: &mut HostCtx<'_, Self::Payload, Self::Cont>,
        msg: Message<Self::Payload>,
    ) -> Result<()>;

    /// A continuation resumed either by a matched message or by the end of a
    /// blocking wait (`msg` is `None` in that case).
    fn on_resume(
        &mut self,
        ctx: &mut HostCtx<'_, Self::Payload, Self::Cont>,
        chare: ChareId,
        cont: Self::Cont,
        msg: Option<Message<Self::Payload>>,
    ) -> Result<()>;
}

/// A throughput resource with a fluid flow set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Res {
    Compute(u32),
    D2H(u32),
    H2D(u32),
    Nic(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FlowKey {
    Op(u32),
    Stage(u32, u8),
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Event {
    PeFree(u32),
    Resume(u32),
    Deliver(u64),
    Inject(u64),
    Submit(u32),
    OpFixed(u32),
    StageFixed(u32, u8),
    Fluid(Res),
    Post(u32),
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Waiter {
    Callback {
        cb: CallbackId,
        refnum: u64,
        tag: u32,
        not_before: VirtualTime,
    },
    Pe(PeId),
    Op(u32),
}

pub(crate) struct Signal<P> {
    pub fired: Option<VirtualTime>,
    pub waiters: Vec<Waiter>,
    pub payload: Option<P>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Queued {
    arrival: VirtualTime,
    tag: u32,
    seq: u64,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.arrival, other.tag, other.seq).cmp(&(self.arrival, self.tag, self.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PeState {
    Idle,
    Busy,
    Blocked,
}

pub(crate) struct Pe {
    pub node: NodeId,
    pub device: DeviceId,
    queue: BinaryHeap<Queued>,
    pub state: PeState,
    pub busy: Vec<(VirtualTime, VirtualTime)>,
    pub busy_until: VirtualTime,
}

pub(crate) struct Blocked<C> {
    pub chare: ChareId,
    pub cont: C,
    pub remaining: usize,
    pub ready_at: VirtualTime,
}

pub(crate) struct ChareRt<P, C> {
    pub array: ArrayId,
    pub index: [usize; 3],
    pub pe: PeId,
    pub whens: HashMap<(EntryId, u64), C>,
    pub buffered: HashMap<(EntryId, u64), VecDeque<Message<P>>>,
}

/// A block-mapped, indexed collection of chares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChareArray {
    pub dims: Dims3,
    pub first: ChareId,
    pub pes: u32,
}

impl ChareArray {
    pub fn len(&self) -> usize {
        self.dims.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> impl Iterator<Item = ChareId> + '_ {
        (0..self.len() as u32).map(move |i| ChareId(self.first.0 + i))
    }
}

/// Contiguous block mapping: the first `total % pes` PEs get one extra chare.
pub fn block_map(total: usize, pes: usize) -> Vec<PeId> {
    let base = total / pes;
    let extra = total % pes;
    let mut out = Vec::with_capacity(total);
    for p in 0..pes {
        let n = base + usize::from(p < extra);
        out.extend(std::iter::repeat_n(PeId(p as u32), n));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CallbackReg {
    pub chare: ChareId,
    pub entry: EntryId,
}

/// Counters kept by the runtime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuntimeStats {
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub callbacks_invoked: u64,
    pub kernel_launches: u64,
    pub copy_launches: u64,
    pub graph_launches: u64,
    pub transfers: u64,
    pub entry_executions: u64,
}

/// Result of draining the event queue.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub end: VirtualTime,
    pub engine: EngineStats,
    pub trace_hash: u64,
    pub stats: RuntimeStats,
    /// Messages still buffered or queued at termination.
    pub leftover_messages: usize,
    pub leftover_whens: usize,
}

/// One executed device op, for metrics and invariant checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpRecord {
    pub device: DeviceId,
    pub stream: Option<StreamId>,
    pub high_priority: bool,
    pub kernel: bool,
    pub graph: bool,
    pub start: VirtualTime,
    pub end: VirtualTime,
}

/// All simulation state other than the application.
pub struct Core<P, C> {
    pub(crate) engine: Engine<Event>,
    pub(crate) machine: Machine,
    pub(crate) cost: CostModel,
    pub(crate) net: NetParams,
    pub(crate) pes: Vec<Pe>,
    pub(crate) blocked: Vec<Option<Blocked<C>>>,
    pub(crate) chares: Vec<ChareRt<P, C>>,
    pub(crate) arrays: Vec<ChareArray>,
    gated: HashSet<EntryId>,
    pub(crate) callbacks: Vec<CallbackReg>,
    pub(crate) signals: Vec<Signal<P>>,
    pub(crate) messages: HashMap<u64, Message<P>>,
    next_msg: u64,
    pub(crate) devices: Vec<Device>,
    pub(crate) streams: Vec<Stream>,
    pub(crate) ops: Vec<OpState>,
    pub(crate) graphs: Vec<crate::device::DeviceGraph>,
    pub(crate) graph_runs: Vec<GraphRun>,
    pub(crate) channels: Vec<Channel<P>>,
    pub(crate) posts: HashMap<u32, PendingPost<P>>,
    pub(crate) next_post: u32,
    pub(crate) transfers: HashMap<u32, Transfer<P>>,
    pub(crate) next_transfer: u32,
    pub(crate) nics: Vec<FluidResource<FlowKey>>,
    pub(crate) nic_log: Vec<(VirtualTime, NodeId, u64)>,
    jitter: Option<(ChaCha8Rng, u64)>,
    wake: BTreeSet<u32>,
    pub(crate) pending_dispatch: BTreeSet<u32>,
    pub(crate) stats: RuntimeStats,
}

impl<P, C> Core<P, C> {
    pub fn new(machine: Machine, cost: CostModel, net: NetParams, opts: &RuntimeOptions) -> Result<Self> {
        machine.validate()?;
        cost.validate()?;
        net.validate()?;
        let mut engine = Engine::with_cap(opts.event_cap);
        if opts.trace {
            engine.enable_trace();
        }
        let pes = (0..machine.pes())
            .map(|p| Pe {
                node: machine.node_of_pe(PeId(p)),
                device: machine.device_of_pe(PeId(p)),
                queue: BinaryHeap::new(),
                state: PeState::Idle,
                busy: Vec::new(),
                busy_until: VirtualTime::ZERO,
            })
            .collect();
        let devices = (0..machine.gpus())
            .map(|_| Device::new(cost.shared_throughput))
            .collect();
        let nics = (0..machine.nodes)
            .map(|_| FluidResource::new(net.nic_fair_share))
            .collect();
        Ok(Core {
            engine,
            machine,
            cost,
            net,
            pes,
            blocked: (0..machine.pes()).map(|_| None).collect(),
            chares: Vec::new(),
            arrays: Vec::new(),
            gated: HashSet::new(),
            callbacks: Vec::new(),
            signals: Vec::new(),
            messages: HashMap::new(),
            next_msg: 0,
            devices,
            streams: Vec::new(),
            ops: Vec::new(),
            graphs: Vec::new(),
            graph_runs: Vec::new(),
            channels: Vec::new(),
            posts: HashMap::new(),
            next_post: 0,
            transfers: HashMap::new(),
            next_transfer: 0,
            nics,
            nic_log: Vec::new(),
            jitter: opts
                .perturb
                .filter(|p| p.max_jitter > VirtualTime::ZERO)
                .map(|p| (ChaCha8Rng::seed_from_u64(p.seed), p.max_jitter.as_ps())),
            wake: BTreeSet::new(),
            pending_dispatch: BTreeSet::new(),
            stats: RuntimeStats::default(),
        })
    }

    pub fn machine(&self) -> Machine {
        self.machine
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn net(&self) -> &NetParams {
        &self.net
    }

    pub fn now(&self) -> VirtualTime {
        self.engine.now()
    }

    pub fn stats(&self) -> RuntimeStats {
        self.stats
    }

    pub fn trace_hash(&self) -> u64 {
        self.engine.trace_hash()
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.engine.take_trace()
    }

    /// Create a chare array block-mapped over PEs `0..pes`.
    pub fn create_chare_array(&mut self, dims: Dims3, pes: u32) -> Result<ArrayId> {
        dims.validate("chare array")?;
        if pes == 0 {
            return Err(SimError::config("chare array needs at least one PE"));
        }
        if pes > self.machine.pes() {
            return Err(SimError::config(format!(
                "chare array mapped over {pes} PEs but the machine has {}",
                self.machine.pes()
            )));
        }
        let id = ArrayId(self.arrays.len() as u32);
        let first = ChareId(self.chares.len() as u32);
        for (i, pe) in block_map(dims.count(), pes as usize).into_iter().enumerate() {
            self.chares.push(ChareRt {
                array: id,
                index: dims.unlinear(i),
                pe,
                whens: HashMap::new(),
                buffered: HashMap::new(),
            });
        }
        self.arrays.push(ChareArray { dims, first, pes });
        Ok(id)
    }

    pub fn array(&self, id: ArrayId) -> Result<&ChareArray> {
        self.arrays
            .get(id.index())
            .ok_or_else(|| SimError::config(format!("no chare array {id}")))
    }

    /// Chare at a 3D index of an array.
    pub fn chare_at(&self, array: ArrayId, idx: [usize; 3]) -> Result<ChareId> {
        let a = self.array(array)?;
        if !a.dims.contains(idx) {
            return Err(SimError::config(format!(
                "index {idx:?} outside chare array of {}",
                a.dims
            )));
        }
        Ok(ChareId(a.first.0 + a.dims.linear(idx) as u32))
    }

    pub fn chare_index(&self, chare: ChareId) -> Result<[usize; 3]> {
        Ok(self.chare(chare)?.index)
    }

    pub(crate) fn chare(&self, chare: ChareId) -> Result<&ChareRt<P, C>> {
        self.chares
            .get(chare.index())
            .ok_or_else(|| SimError::config(format!("no such chare {chare}")))
    }

    pub fn array_of(&self, chare: ChareId) -> Result<ArrayId> {
        Ok(self.chare(chare)?.array)
    }

    pub fn pe_of(&self, chare: ChareId) -> Result<PeId> {
        Ok(self.chare(chare)?.pe)
    }

    pub fn device_of(&self, chare: ChareId) -> Result<DeviceId> {
        Ok(self.pes[self.pe_of(chare)?.index()].device)
    }

    /// Messages for `entry` are matched against `when` slots instead of
    /// being handed to `on_message`.
    pub fn declare_gated(&mut self, entry: EntryId) {
        self.gated.insert(entry);
    }

    pub fn register_callback(&mut self, chare: ChareId, entry: EntryId) -> Result<CallbackId> {
        self.chare(chare)?;
        self.callbacks.push(CallbackReg { chare, entry });
        Ok(CallbackId(self.callbacks.len() as u32 - 1))
    }

    /// Deliver a message at time zero, before the run starts.
    pub fn seed(&mut self, chare: ChareId, entry: EntryId, refnum: u64, payload: Option<P>) -> Result<()> {
        let source = self.chare(chare)?.pe;
        let msg = Message {
            target: chare,
            source,
            entry,
            refnum,
            tag: 0,
            payload,
            size: 0,
            send_time: self.now(),
        };
        let key = self.store_message(msg);
        self.deliver(key)
    }

    /// PE busy intervals `[start, end)` of executed entry methods.
    pub fn pe_busy(&self, pe: PeId) -> &[(VirtualTime, VirtualTime)] {
        &self.pes[pe.index()].busy
    }

    /// Intervals during which at least one kernel ran on the device.
    pub fn device_kernel_busy(&self, dev: DeviceId) -> &[(VirtualTime, VirtualTime)] {
        &self.devices[dev.index()].kernel_busy
    }

    /// `(injection time, node, bytes)` of every NIC transfer.
    pub fn nic_log(&self) -> &[(VirtualTime, NodeId, u64)] {
        &self.nic_log
    }

    pub fn nic_peak(&self, node: NodeId) -> usize {
        self.nics[node.index()].peak()
    }

    pub fn nic_work(&self, node: NodeId) -> (f64, f64) {
        self.nics[node.index()].work_totals()
    }

    pub fn signal_time(&self, sig: SignalId) -> Option<VirtualTime> {
        self.signals.get(sig.index()).and_then(|s| s.fired)
    }

    pub(crate) fn new_signal(&mut self) -> SignalId {
        self.signals.push(Signal {
            fired: None,
            waiters: Vec::new(),
            payload: None,
        });
        SignalId(self.signals.len() as u32 - 1)
    }

    pub(crate) fn signal(&self, sig: SignalId) -> Result<&Signal<P>> {
        self.signals
            .get(sig.index())
            .ok_or_else(|| SimError::config(format!("no such signal {sig}")))
    }

    pub(crate) fn signal_mut(&mut self, sig: SignalId) -> Result<&mut Signal<P>> {
        self.signals
            .get_mut(sig.index())
            .ok_or_else(|| SimError::config(format!("no such signal {sig}")))
    }

    pub(crate) fn store_message(&mut self, msg: Message<P>) -> u64 {
        let key = self.next_msg;
        self.next_msg += 1;
        self.messages.insert(key, msg);
        key
    }

    fn jitter(&mut self) -> VirtualTime {
        match self.jitter.as_mut() {
            Some((rng, max)) => VirtualTime::from_ps(rng.gen_range(0..=*max)),
            None => VirtualTime::ZERO,
        }
    }

    /// Hand a stored message to its PE at `max(now, at)` plus jitter.
    pub(crate) fn deliver_at(&mut self, key: u64, at: VirtualTime) -> Result<()> {
        let when = at.max(self.now()) + self.jitter();
        if when == self.now() {
            self.deliver(key)
        } else {
            let target = self.messages[&key].target;
            let pe = self.pe_of(target)?;
            self.engine.schedule_at(when, Entity::Pe(pe.0), Event::Deliver(key))?;
            Ok(())
        }
    }

    fn deliver(&mut self, key: u64) -> Result<()> {
        let msg = self
            .messages
            .get(&key)
            .ok_or_else(|| SimError::logic(format!("message {key} vanished")))?;
        let pe = self
            .chares
            .get(msg.target.index())
            .ok_or_else(|| SimError::logic(format!("message for nonexistent chare {}", msg.target)))?
            .pe;
        let tag = msg.tag;
        let p = &mut self.pes[pe.index()];
        p.queue.push(Queued {
            arrival: self.engine.now(),
            tag,
            seq: key,
        });
        self.stats.messages_delivered += 1;
        if p.state == PeState::Idle {
            self.wake.insert(pe.0);
        }
        Ok(())
    }

    /// Fire a signal now, releasing all of its waiters.
    pub(crate) fn fire(&mut self, sig: SignalId) -> Result<()> {
        let now = self.now();
        let s = self.signal_mut(sig)?;
        if s.fired.is_some() {
            return Err(SimError::logic(format!("signal {sig} fired twice")));
        }
        s.fired = Some(now);
        let waiters = std::mem::take(&mut s.waiters);
        for w in waiters {
            self.release(sig, w)?;
        }
        Ok(())
    }

    fn release(&mut self, sig: SignalId, w: Waiter) -> Result<()> {
        match w {
            Waiter::Callback {
                cb,
                refnum,
                tag,
                not_before,
            } => {
                let payload = self.signal_mut(sig)?.payload.take();
                self.invoke_callback_at(cb, refnum, tag, payload, not_before)
            }
            Waiter::Pe(pe) => {
                let now = self.now();
                let jitter = self.jitter();
                let b = self.blocked[pe.index()]
                    .as_mut()
                    .ok_or_else(|| SimError::logic(format!("{pe} released but not blocked")))?;
                b.remaining -= 1;
                if b.remaining == 0 {
                    let at = b.ready_at.max(now + jitter);
                    self.engine.schedule_at(at, Entity::Pe(pe.0), Event::Resume(pe.0))?;
                }
                Ok(())
            }
            Waiter::Op(op) => {
                let o = &mut self.ops[op as usize];
                o.deps_pending -= 1;
                if o.deps_pending == 0 {
                    let dev = o.device;
                    self.dispatch(dev)?;
                }
                Ok(())
            }
        }
    }

    pub(crate) fn invoke_callback_at(
        &mut self,
        cb: CallbackId,
        refnum: u64,
        tag: u32,
        payload: Option<P>,
        not_before: VirtualTime,
    ) -> Result<()> {
        let reg = *self
            .callbacks
            .get(cb.index())
            .ok_or_else(|| SimError::logic(format!("invoking unregistered callback {cb}")))?;
        self.stats.callbacks_invoked += 1;
        let source = self.chares[reg.chare.index()].pe;
        let msg = Message {
            target: reg.chare,
            source,
            entry: reg.entry,
            refnum,
            tag,
            payload,
            size: 0,
            send_time: self.now(),
        };
        let key = self.store_message(msg);
        self.deliver_at(key, not_before)
    }

    /// Register a waiter, releasing it immediately if the signal already fired.
    pub(crate) fn add_waiter(&mut self, sig: SignalId, w: Waiter) -> Result<bool> {
        let s = self.signal_mut(sig)?;
        if s.fired.is_some() {
            return Ok(false);
        }
        s.waiters.push(w);
        Ok(true)
    }

    fn finish(&mut self) -> Result<RunSummary> {
        for (i, b) in self.blocked.iter().enumerate() {
            if let Some(b) = b {
                return Err(SimError::Deadlock(format!(
                    "pe{i} (chare {}) still blocked on {} unfired signal(s) after the queue drained",
                    b.chare, b.remaining
                )));
            }
        }
        let buffered: usize = self
            .chares
            .iter()
            .map(|c| c.buffered.values().map(VecDeque::len).sum::<usize>())
            .sum();
        let queued: usize = self.pes.iter().map(|p| p.queue.len()).sum();
        let whens = self.chares.iter().map(|c| c.whens.len()).sum();
        Ok(RunSummary {
            end: self.engine.now(),
            engine: self.engine.stats(),
            trace_hash: self.engine.trace_hash(),
            stats: self.stats,
            leftover_messages: buffered + queued,
            leftover_whens: whens,
        })
    }

    /// Records of all device ops that have finished.
    pub fn op_records(&self) -> Vec<OpRecord> {
        self.ops
            .iter()
            .filter_map(|o| {
                let (start, end) = (o.start?, o.end?);
                Some(OpRecord {
                    device: o.device,
                    stream: o.stream,
                    high_priority: o.high,
                    kernel: o.is_kernel(),
                    graph: o.is_graph(),
                    start,
                    end,
                })
            })
            .collect()
    }
}

enum Task<P, C> {
    Message(Message<P>),
    Resume(C, Option<Message<P>>),
}

/// A core paired with the application it drives.
pub struct Runtime<A: Application> {
    pub core: Core<A::Payload, A::Cont>,
    pub app: A,
}

impl<A: Application> Runtime<A> {
    pub fn new(core: Core<A::Payload, A::Cont>, app: A) -> Self {
        Runtime { core, app }
    }

    /// Drain the event queue.
    ///
    /// Devices dispatch and idle PEs pick their next message only after
    /// every event at the current instant has fired, so simultaneous
    /// arrivals are ordered by priority and tag rather than by internal
    /// event order.
    pub fn run(&mut self) -> Result<RunSummary> {
        loop {
            let now = self.core.engine.now();
            let next = self.core.engine.peek_time();
            let instant_done = next.is_none_or(|t| t > now);
            if instant_done && !self.core.pending_dispatch.is_empty() {
                let devs = std::mem::take(&mut self.core.pending_dispatch);
                for d in devs {
                    self.core.dispatch_now(DeviceId(d))?;
                }
                continue;
            }
            if instant_done && !self.core.wake.is_empty() {
                let wake = std::mem::take(&mut self.core.wake);
                for pe in wake {
                    self.pe_step(PeId(pe))?;
                }
                continue;
            }
            let Some((_, ev)) = self.core.engine.pop()? else {
                break;
            };
            self.handle(ev)?;
        }
        self.core.finish()
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        let core = &mut self.core;
        match ev {
            Event::PeFree(pe) => {
                let p = &mut core.pes[pe as usize];
                p.state = PeState::Idle;
                if !p.queue.is_empty() {
                    core.wake.insert(pe);
                }
                Ok(())
            }
            Event::Resume(pe) => {
                let b = core.blocked[pe as usize]
                    .take()
                    .ok_or_else(|| SimError::logic(format!("pe{pe} resumed but not blocked")))?;
                self.run_task(PeId(pe), b.chare, Task::Resume(b.cont, None), false)
            }
            Event::Deliver(key) => core.deliver(key),
            Event::Inject(key) => core.inject(key),
            Event::Submit(op) => core.submit(op),
            Event::OpFixed(op) => core.op_fixed_done(op),
            Event::StageFixed(x, s) => core.stage_fixed_done(x, s),
            Event::Fluid(r) => core.fluid_wake(r),
            Event::Post(key) => core.post_visible(key),
        }
    }

    fn pe_step(&mut self, pe: PeId) -> Result<()> {
        loop {
            let core = &mut self.core;
            let p = &mut core.pes[pe.index()];
            if p.state != PeState::Idle {
                return Ok(());
            }
            let Some(q) = p.queue.pop() else {
                return Ok(());
            };
            let msg = core
                .messages
                .remove(&q.seq)
                .ok_or_else(|| SimError::logic("queued message vanished"))?;
            let target = msg.target;
            let chare = core.chares.get_mut(target.index()).ok_or_else(|| {
                SimError::logic(format!("message for nonexistent chare {target}"))
            })?;
            if chare.pe != pe {
                return Err(SimError::logic(format!(
                    "message for {target} reached {pe}, but its home is {}",
                    chare.pe
                )));
            }
            if core.gated.contains(&msg.entry) {
                let key = (msg.entry, msg.refnum);
                if let Some(cont) = chare.whens.remove(&key) {
                    return self.run_task(pe, target, Task::Resume(cont, Some(msg)), true);
                }
                chare.buffered.entry(key).or_default().push_back(msg);
                continue;
            }
            return self.run_task(pe, target, Task::Message(msg), true);
        }
    }

    fn run_task(
        &mut self,
        pe: PeId,
        chare: ChareId,
        task: Task<A::Payload, A::Cont>,
        entry_cost: bool,
    ) -> Result<()> {
        let start = self.core.now();
        let entry = self.core.cost.entry();
        let mut ctx = HostCtx::new(&mut self.core, pe, chare, start);
        if entry_cost {
            ctx.spend(entry);
            ctx.core.stats.entry_executions += 1;
        }
        match task {
            Task::Message(m) => self.app.on_message(&mut ctx, m)?,
            Task::Resume(c, m) => self.app.on_resume(&mut ctx, chare, c, m)?,
        }
        while ctx.block.is_none() {
            let Some((c, cont, m)) = ctx.inline.pop_front() else {
                break;
            };
            ctx.chare = c;
            ctx.spend(entry);
            ctx.core.stats.entry_executions += 1;
            self.app.on_resume(&mut ctx, c, cont, Some(m))?;
        }
        if ctx.block.is_some() && !ctx.inline.is_empty() {
            return Err(SimError::logic(format!(
                "{pe} blocked while matched continuations were still pending"
            )));
        }
        let end = ctx.cursor;
        let block = ctx.block.take();
        drop(ctx);
        let core = &mut self.core;
        let p = &mut core.pes[pe.index()];
        if end > start {
            p.busy.push((start, end));
        }
        p.busy_until = p.busy_until.max(end);
        match block {
            None => {
                p.state = PeState::Busy;
                core.engine.schedule_at(end, Entity::Pe(pe.0), Event::PeFree(pe.0))?;
            }
            Some((cont, remaining)) => {
                p.state = PeState::Blocked;
                if remaining == 0 {
                    core.engine.schedule_at(end, Entity::Pe(pe.0), Event::Resume(pe.0))?;
                }
                core.blocked[pe.index()] = Some(Blocked {
                    chare,
                    cont,
                    remaining,
                    ready_at: end,
                });
            }
        }
        Ok(())
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.core.take_trace()
    }
}
