use std::collections::VecDeque;

use crate::device::OpKind;
use crate::engine::Entity;
use crate::error::{Result, SimError};
use crate::ids::*;
use crate::net::Location;
use crate::time::VirtualTime;

use super::{Core, Event, Message, Waiter};

/// Host-side view handed to an executing entry method.
///
/// Every call that costs host time advances [`HostCtx::now`]; work it
/// starts becomes visible to the rest of the simulation at that time.
pub struct HostCtx<'a, P, C> {
    pub(crate) core: &'a mut Core<P, C>,
    pe: PeId,
    pub(crate) chare: ChareId,
    pub(crate) cursor: VirtualTime,
    pub(crate) inline: VecDeque<(ChareId, C, Message<P>)>,
    pub(crate) block: Option<(C, usize)>,
}

impl<'a, P, C> HostCtx<'a, P, C> {
    pub(crate) fn new(core: &'a mut Core<P, C>, pe: PeId, chare: ChareId, start: VirtualTime) -> Self {
        HostCtx {
            core,
            pe,
            chare,
            cursor: start,
            inline: VecDeque::new(),
            block: None,
        }
    }

    pub fn pe(&self) -> PeId {
        self.pe
    }

    /// The chare whose entry method is executing.
    pub fn chare(&self) -> ChareId {
        self.chare
    }

    /// Current host time of this PE.
    pub fn now(&self) -> VirtualTime {
        self.cursor
    }

    pub fn core(&self) -> &Core<P, C> {
        self.core
    }

    /// Occupy the PE for `dt` more.
    pub fn spend(&mut self, dt: VirtualTime) {
        self.cursor += dt;
    }

    /// Asynchronously invoke an entry method, paying the per-message
    /// send overhead.
    pub fn invoke(
        &mut self,
        target: ChareId,
        entry: EntryId,
        refnum: u64,
        tag: u32,
        payload: Option<P>,
        size: u64,
    ) -> Result<()> {
        let dst_pe = self.core.pe_of(target)?;
        self.cursor += self.core.cost.msg();
        self.core.stats.messages_sent += 1;
        let msg = Message {
            target,
            source: self.pe,
            entry,
            refnum,
            tag,
            payload,
            size,
            send_time: self.cursor,
        };
        let key = self.core.store_message(msg);
        if dst_pe == self.pe {
            self.core.deliver_at(key, self.cursor)
        } else {
            self.core
                .engine
                .schedule_at(self.cursor, Entity::Pe(self.pe.0), Event::Inject(key))?;
            Ok(())
        }
    }

    /// Invoke `entry` on every element of an array.
    pub fn broadcast(&mut self, array: ArrayId, entry: EntryId, refnum: u64) -> Result<()> {
        let ids: Vec<ChareId> = self.core.array(array)?.ids().collect();
        for c in ids {
            self.invoke(c, entry, refnum, 0, None, 0)?;
        }
        Ok(())
    }

    /// Wait for a message to the current chare on `(entry, refnum)`.
    ///
    /// A buffered match is consumed at once and `cont` runs after the
    /// current handler, in the same scheduling slot.
    pub fn when(&mut self, entry: EntryId, refnum: u64, cont: C) -> Result<()> {
        if !self.core.gated.contains(&entry) {
            return Err(SimError::logic(format!(
                "when() on entry {entry}, which is not declared as gated"
            )));
        }
        let chare = self.chare;
        let key = (entry, refnum);
        let rt = &mut self.core.chares[chare.index()];
        if rt.whens.contains_key(&key) {
            return Err(SimError::logic(format!(
                "duplicate when slot on {chare} for entry {entry} refnum {refnum}"
            )));
        }
        if let Some(buf) = rt.buffered.get_mut(&key) {
            if let Some(msg) = buf.pop_front() {
                if buf.is_empty() {
                    rt.buffered.remove(&key);
                }
                self.inline.push_back((chare, cont, msg));
                return Ok(());
            }
        }
        rt.whens.insert(key, cont);
        Ok(())
    }

    pub fn invoke_callback(&mut self, cb: CallbackId, refnum: u64, tag: u32) -> Result<()> {
        self.core.invoke_callback_at(cb, refnum, tag, None, self.cursor)
    }

    /// Launch a device op on a stream, paying the launch overhead.
    /// The op also waits for every signal in `deps`.
    pub fn enqueue(&mut self, stream: StreamId, kind: OpKind, deps: &[SignalId]) -> Result<SignalId> {
        self.core.stream(stream)?;
        self.cursor += self.core.cost.launch();
        match kind {
            OpKind::Kernel(_) => self.core.stats.kernel_launches += 1,
            _ => self.core.stats.copy_launches += 1,
        }
        self.core.add_stream_op(stream, kind, deps, self.cursor)
    }

    /// Launch a captured graph on a stream, paying the graph launch overhead.
    pub fn graph_launch(&mut self, graph: GraphId, stream: StreamId, deps: &[SignalId]) -> Result<SignalId> {
        self.core.stream(stream)?;
        self.core.graph(graph)?;
        self.cursor += self.core.cost.graph_launch();
        self.core.stats.graph_launches += 1;
        self.core.add_graph_launch(graph, stream, deps, self.cursor)
    }

    /// Signal of the most recent op issued on a stream.
    pub fn stream_tail(&self, stream: StreamId) -> Result<Option<SignalId>> {
        Ok(self.core.stream(stream)?.last)
    }

    /// Invoke `cb` when `sig` fires, without blocking the PE.
    pub fn on_complete(&mut self, sig: SignalId, cb: CallbackId, refnum: u64, tag: u32) -> Result<()> {
        if cb.index() >= self.core.callbacks.len() {
            return Err(SimError::logic(format!("unregistered callback {cb}")));
        }
        let w = Waiter::Callback {
            cb,
            refnum,
            tag,
            not_before: self.cursor,
        };
        if !self.core.add_waiter(sig, w)? {
            let payload = self.core.signal_mut(sig)?.payload.take();
            self.core.invoke_callback_at(cb, refnum, tag, payload, self.cursor)?;
        }
        Ok(())
    }

    /// Block this PE until every signal in `sigs` has fired, then resume
    /// `cont`. Must be the last call of the handler.
    pub fn synchronize(&mut self, sigs: &[SignalId], cont: C) -> Result<()> {
        if self.block.is_some() {
            return Err(SimError::logic("synchronize() called twice in one handler"));
        }
        let mut remaining = 0;
        for &s in sigs {
            if self.core.add_waiter(s, Waiter::Pe(self.pe))? {
                remaining += 1;
            }
        }
        self.block = Some((cont, remaining));
        Ok(())
    }

    pub fn signal_fired(&self, sig: SignalId) -> Result<bool> {
        Ok(self.core.signal(sig)?.fired.is_some())
    }

    /// Take the data carried by a completed receive.
    pub fn take_payload(&mut self, sig: SignalId) -> Result<Option<P>> {
        Ok(self.core.signal_mut(sig)?.payload.take())
    }

    /// Post a send of `size` bytes on a channel from the current chare.
    pub fn channel_send(
        &mut self,
        chan: ChannelId,
        loc: Location,
        size: u64,
        payload: Option<P>,
    ) -> Result<SignalId> {
        self.cursor += self.core.cost.msg();
        self.core.stats.messages_sent += 1;
        self.core
            .post_send(chan, self.chare, loc, size, payload, self.cursor)
    }

    /// Post a receive of `size` bytes on a channel into the current chare.
    pub fn channel_recv(&mut self, chan: ChannelId, loc: Location, size: u64) -> Result<SignalId> {
        self.cursor += self.core.cost.msg();
        self.core.post_recv(chan, self.chare, loc, size, self.cursor)
    }
}
