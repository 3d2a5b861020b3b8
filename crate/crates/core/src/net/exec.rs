use std::collections::VecDeque;

use crate::engine::Entity;
use crate::error::{Result, SimError};
use crate::ids::*;
use crate::runtime::{Core, Event, FlowKey, Res};
use crate::time::VirtualTime;

use super::{Hop, Location, Protocol, TransferPlan};

pub(crate) struct SendPost<P> {
    size: u64,
    loc: Location,
    sig: SignalId,
    payload: Option<P>,
}

pub(crate) struct RecvPost {
    size: u64,
    loc: Location,
    sig: SignalId,
}

pub(crate) enum PendingPost<P> {
    Send(ChannelId, usize, SendPost<P>),
    Recv(ChannelId, usize, RecvPost),
}

struct DirQueue<P> {
    sends: VecDeque<SendPost<P>>,
    recvs: VecDeque<RecvPost>,
}

/// A pre-paired bidirectional channel between two chares. Direction 0
/// carries data from `a` to `b`.
pub(crate) struct Channel<P> {
    a: ChareId,
    b: ChareId,
    protocol: Protocol,
    dirs: [DirQueue<P>; 2],
}

enum Finish<P> {
    Channel {
        send: SignalId,
        recv: SignalId,
        payload: Option<P>,
    },
    Message(u64),
}

pub(crate) struct Transfer<P> {
    plan: TransferPlan,
    src_dev: DeviceId,
    dst_dev: DeviceId,
    src_node: NodeId,
    next: [u32; 3],
    done: [u32; 3],
    busy: [bool; 3],
    finish: Option<Finish<P>>,
    released: bool,
}

impl<P, C> Core<P, C> {
    /// Pair two chares with a channel.
    pub fn create_channel(&mut self, a: ChareId, b: ChareId, protocol: Protocol) -> Result<ChannelId> {
        self.chare(a)?;
        self.chare(b)?;
        if a == b {
            return Err(SimError::config(format!("channel endpoints must differ, got {a} twice")));
        }
        self.channels.push(Channel {
            a,
            b,
            protocol,
            dirs: [DirQueue::default_pair(), DirQueue::default_pair()],
        });
        Ok(ChannelId(self.channels.len() as u32 - 1))
    }

    fn channel_dir(&self, chan: ChannelId, chare: ChareId, sending: bool) -> Result<usize> {
        let c = self
            .channels
            .get(chan.index())
            .ok_or_else(|| SimError::config(format!("no such channel {chan}")))?;
        let from_a = if chare == c.a {
            true
        } else if chare == c.b {
            false
        } else {
            return Err(SimError::logic(format!("{chare} is not an endpoint of {chan}")));
        };
        Ok(if from_a == sending { 0 } else { 1 })
    }

    fn schedule_post(&mut self, post: PendingPost<P>, at: VirtualTime, chan: ChannelId) -> Result<()> {
        let key = self.next_post;
        self.next_post += 1;
        self.posts.insert(key, post);
        self.engine
            .schedule_at(at, Entity::Channel(chan.0), Event::Post(key))?;
        Ok(())
    }

    pub(crate) fn post_send(
        &mut self,
        chan: ChannelId,
        chare: ChareId,
        loc: Location,
        size: u64,
        payload: Option<P>,
        at: VirtualTime,
    ) -> Result<SignalId> {
        let dir = self.channel_dir(chan, chare, true)?;
        let sig = self.new_signal();
        let post = SendPost {
            size,
            loc,
            sig,
            payload,
        };
        self.schedule_post(PendingPost::Send(chan, dir, post), at, chan)?;
        Ok(sig)
    }

    pub(crate) fn post_recv(
        &mut self,
        chan: ChannelId,
        chare: ChareId,
        loc: Location,
        size: u64,
        at: VirtualTime,
    ) -> Result<SignalId> {
        let dir = self.channel_dir(chan, chare, false)?;
        let sig = self.new_signal();
        self.schedule_post(PendingPost::Recv(chan, dir, RecvPost { size, loc, sig }), at, chan)?;
        Ok(sig)
    }

    pub(crate) fn post_visible(&mut self, key: u32) -> Result<()> {
        let post = self
            .posts
            .remove(&key)
            .ok_or_else(|| SimError::logic("channel post vanished"))?;
        let (chan, dir) = match post {
            PendingPost::Send(c, d, s) => {
                self.channels[c.index()].dirs[d].sends.push_back(s);
                (c, d)
            }
            PendingPost::Recv(c, d, r) => {
                self.channels[c.index()].dirs[d].recvs.push_back(r);
                (c, d)
            }
        };
        self.try_match(chan, dir)
    }

    fn try_match(&mut self, chan: ChannelId, dir: usize) -> Result<()> {
        loop {
            let ch = &mut self.channels[chan.index()];
            let q = &mut ch.dirs[dir];
            if q.sends.is_empty() || q.recvs.is_empty() {
                return Ok(());
            }
            let s = q.sends.pop_front().expect("checked nonempty");
            let r = q.recvs.pop_front().expect("checked nonempty");
            let (src, dst) = if dir == 0 { (ch.a, ch.b) } else { (ch.b, ch.a) };
            let protocol = ch.protocol;
            if s.size != r.size {
                return Err(SimError::logic(format!(
                    "{chan}: send of {} bytes matched a receive of {} bytes",
                    s.size, r.size
                )));
            }
            if s.loc != r.loc {
                return Err(SimError::logic(format!(
                    "{chan}: send buffer on {:?} matched a receive buffer on {:?}",
                    s.loc, r.loc
                )));
            }
            let finish = Finish::Channel {
                send: s.sig,
                recv: r.sig,
                payload: s.payload,
            };
            self.start_transfer(src, dst, s.size, s.loc, protocol, finish)?;
        }
    }

    /// Begin moving a remotely invoked message.
    pub(crate) fn inject(&mut self, key: u64) -> Result<()> {
        let msg = &self.messages[&key];
        let (dst, size, src_pe) = (msg.target, msg.size, msg.source);
        let src_dev = self.pes[src_pe.index()].device;
        let src_node = self.pes[src_pe.index()].node;
        let dst_dev = self.device_of(dst)?;
        let plan = TransferPlan::new(size, Location::Host, Protocol::DeviceDirect, &self.net);
        self.launch_plan(plan, src_dev, dst_dev, src_node, Finish::Message(key))
    }

    fn start_transfer(
        &mut self,
        src: ChareId,
        dst: ChareId,
        size: u64,
        loc: Location,
        protocol: Protocol,
        finish: Finish<P>,
    ) -> Result<()> {
        let src_pe = self.pe_of(src)?;
        let dst_pe = self.pe_of(dst)?;
        if src_pe == dst_pe {
            return self.complete(finish);
        }
        let plan = TransferPlan::new(size, loc, protocol, &self.net);
        let src_dev = self.pes[src_pe.index()].device;
        let src_node = self.pes[src_pe.index()].node;
        let dst_dev = self.pes[dst_pe.index()].device;
        self.launch_plan(plan, src_dev, dst_dev, src_node, finish)
    }

    fn launch_plan(
        &mut self,
        plan: TransferPlan,
        src_dev: DeviceId,
        dst_dev: DeviceId,
        src_node: NodeId,
        finish: Finish<P>,
    ) -> Result<()> {
        let id = self.next_transfer;
        self.next_transfer += 1;
        self.stats.transfers += 1;
        let now = self.now();
        self.nic_log.push((now, src_node, plan.size()));
        self.transfers.insert(
            id,
            Transfer {
                plan,
                src_dev,
                dst_dev,
                src_node,
                next: [0; 3],
                done: [0; 3],
                busy: [false; 3],
                finish: Some(finish),
                released: false,
            },
        );
        self.advance_transfer(id)
    }

    fn complete(&mut self, finish: Finish<P>) -> Result<()> {
        match finish {
            Finish::Channel {
                send,
                recv,
                payload,
            } => {
                if self.signal(send)?.fired.is_none() {
                    self.fire(send)?;
                }
                self.signal_mut(recv)?.payload = payload;
                self.fire(recv)
            }
            Finish::Message(key) => {
                let now = self.now();
                self.deliver_at(key, now)
            }
        }
    }

    fn hop_res(t: &Transfer<P>, hop: Hop) -> Res {
        match hop {
            Hop::SrcPcie => Res::D2H(t.src_dev.0),
            Hop::Nic => Res::Nic(t.src_node.0),
            Hop::DstPcie => Res::H2D(t.dst_dev.0),
        }
    }

    /// Start every stage whose next chunk is available.
    fn advance_transfer(&mut self, id: u32) -> Result<()> {
        let t = self.transfers.get_mut(&id).expect("live transfer");
        let n = t.plan.chunks.len() as u32;
        let mut starts = Vec::new();
        for s in 0..t.plan.hops.len() {
            let k = t.next[s];
            if t.busy[s] || k >= n || (s > 0 && t.done[s - 1] <= k) {
                continue;
            }
            t.busy[s] = true;
            let cost = TransferPlan::hop_cost(t.plan.hops[s], t.plan.chunks[k as usize], &self.net, &self.cost);
            starts.push((s, cost.fixed));
        }
        let entity = Entity::Nic(t.src_node.0);
        for (s, fixed) in starts {
            self.engine
                .schedule(fixed, entity, Event::StageFixed(id, s as u8));
        }
        Ok(())
    }

    pub(crate) fn stage_fixed_done(&mut self, id: u32, s: u8) -> Result<()> {
        let t = &self.transfers[&id];
        let k = t.next[s as usize] as usize;
        let hop = t.plan.hops[s as usize];
        let cost = TransferPlan::hop_cost(hop, t.plan.chunks[k], &self.net, &self.cost);
        let r = Self::hop_res(t, hop);
        self.add_flow(r, FlowKey::Stage(id, s), cost.work)
    }

    pub(crate) fn stage_done(&mut self, id: u32, s: u8) -> Result<()> {
        let s = s as usize;
        let t = self.transfers.get_mut(&id).expect("live transfer");
        let n = t.plan.chunks.len() as u32;
        let last = t.plan.hops.len() - 1;
        t.busy[s] = false;
        t.done[s] += 1;
        t.next[s] += 1;
        let mut release = false;
        if s == 0 && t.done[0] == n && !t.released {
            t.released = true;
            release = true;
        }
        let finished = s == last && t.done[s] == n;
        if release {
            if let Some(Finish::Channel { send, .. }) = t.finish.as_ref() {
                let send = *send;
                self.fire(send)?;
            }
        }
        if finished {
            let t = self.transfers.remove(&id).expect("live transfer");
            let finish = t.finish.expect("unfinished transfer");
            return self.complete(finish);
        }
        self.advance_transfer(id)
    }
}

impl<P> DirQueue<P> {
    fn default_pair() -> Self {
        DirQueue {
            sends: VecDeque::new(),
            recvs: VecDeque::new(),
        }
    }
}
