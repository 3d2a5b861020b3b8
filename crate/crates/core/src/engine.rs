//! Deterministic discrete-event core: virtual clock, event queue, run loop.
//!
//! Events are ordered by `(time, seq)` where `seq` is a counter assigned at
//! scheduling, so simultaneous events fire in the order they were issued.
//! Every fired event is folded into a 64-bit FNV-1a hash of
//! `(time, seq, entity)`, which is stable across runs and platforms.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;

use crate::error::{Result, SimError};
use crate::time::VirtualTime;

/// Default cap on fired events before the watchdog reports a livelock.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

const RECENT_WINDOW: usize = 4096;

/// The simulated entity an event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entity {
    Runtime,
    Pe(u32),
    Device(u32),
    Nic(u32),
    Channel(u32),
    Chare(u32),
    User(u32),
}

impl Entity {
    fn code(self) -> u64 {
        let (tag, idx) = match self {
            Entity::Runtime => (0u64, 0u32),
            Entity::Pe(i) => (1, i),
            Entity::Device(i) => (2, i),
            Entity::Nic(i) => (3, i),
            Entity::Channel(i) => (4, i),
            Entity::Chare(i) => (5, i),
            Entity::User(i) => (6, i),
        };
        (tag << 32) | idx as u64
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Runtime => write!(f, "runtime"),
            Entity::Pe(i) => write!(f, "pe{i}"),
            Entity::Device(i) => write!(f, "gpu{i}"),
            Entity::Nic(i) => write!(f, "nic{i}"),
            Entity::Channel(i) => write!(f, "chan{i}"),
            Entity::Chare(i) => write!(f, "chare{i}"),
            Entity::User(i) => write!(f, "user{i}"),
        }
    }
}

/// Handle returned by [`Engine::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

impl EventId {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// One line of an event trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: VirtualTime,
    pub seq: u64,
    pub entity: Entity,
    pub label: String,
}

struct Pending<E> {
    time: VirtualTime,
    seq: u64,
    entity: Entity,
    event: E,
}

impl<E> PartialEq for Pending<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<E> Eq for Pending<E> {}

impl<E> PartialOrd for Pending<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Pending<E> {
    // Reversed: BinaryHeap is a max-heap, we want the smallest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineStats {
    pub scheduled: u64,
    pub fired: u64,
    pub cancelled: u64,
}

struct Fnv64(u64);

impl Fnv64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }
}

pub struct Engine<E> {
    now: VirtualTime,
    next_seq: u64,
    queue: BinaryHeap<Pending<E>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
    stats: EngineStats,
    cap: u64,
    current: Entity,
    recent: VecDeque<Entity>,
    hash: Fnv64,
    trace: Option<Vec<TraceRecord>>,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Engine {
            now: VirtualTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
            stats: EngineStats::default(),
            cap: DEFAULT_EVENT_CAP,
            current: Entity::Runtime,
            recent: VecDeque::with_capacity(RECENT_WINDOW),
            hash: Fnv64(Fnv64::OFFSET),
            trace: None,
        }
    }

    pub fn with_cap(cap: u64) -> Self {
        let mut e = Self::new();
        e.cap = cap;
        e
    }

    pub fn set_cap(&mut self, cap: u64) {
        self.cap = cap;
    }

    /// Start recording a human-readable trace of fired events.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn trace_hash(&self) -> u64 {
        self.hash.0
    }

    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending() == 0
    }

    /// Schedule `event` at `now + delay`.
    pub fn schedule(&mut self, delay: VirtualTime, entity: Entity, event: E) -> EventId {
        let time = self
            .now
            .checked_add(delay)
            .expect("virtual time overflow while scheduling");
        self.push(time, entity, event)
    }

    /// Schedule with a delay in seconds; negative or non-finite delays are
    /// configuration errors.
    pub fn schedule_secs(&mut self, delay: f64, entity: Entity, event: E) -> Result<EventId> {
        let d = VirtualTime::from_secs(delay)?;
        Ok(self.schedule(d, entity, event))
    }

    /// Schedule at an absolute time, which must not lie in the past.
    pub fn schedule_at(&mut self, time: VirtualTime, entity: Entity, event: E) -> Result<EventId> {
        if time < self.now {
            return Err(SimError::config(format!(
                "cannot schedule at {time}, clock is already at {}",
                self.now
            )));
        }
        Ok(self.push(time, entity, event))
    }

    fn push(&mut self, time: VirtualTime, entity: Entity, event: E) -> EventId {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stats.scheduled += 1;
        if self.recent.len() == RECENT_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back(self.current);
        self.live.insert(seq);
        self.queue.push(Pending {
            time,
            seq,
            entity,
            event,
        });
        EventId(seq)
    }

    /// Cancel a pending event. Returns false if it already fired or was
    /// already cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if !self.live.remove(&id.0) {
            return false;
        }
        self.cancelled.insert(id.0);
        self.stats.cancelled += 1;
        true
    }

    /// Time of the next live event, discarding cancelled entries at the head.
    pub fn peek_time(&mut self) -> Option<VirtualTime> {
        while let Some(p) = self.queue.peek() {
            if self.cancelled.contains(&p.seq) {
                let seq = p.seq;
                self.queue.pop();
                self.cancelled.remove(&seq);
                continue;
            }
            return Some(p.time);
        }
        None
    }

    /// Pop the next live event, advancing the clock.
    pub fn pop(&mut self) -> Result<Option<(Entity, E)>>
    where
        E: fmt::Debug,
    {
        while let Some(p) = self.queue.pop() {
            if self.cancelled.remove(&p.seq) {
                continue;
            }
            self.live.remove(&p.seq);
            if self.stats.fired >= self.cap {
                return Err(SimError::Livelock {
                    fired: self.stats.fired,
                    entity: self.most_active().to_string(),
                });
            }
            debug_assert!(p.time >= self.now);
            self.now = p.time;
            self.current = p.entity;
            self.stats.fired += 1;
            self.hash.write_u64(p.time.as_ps());
            self.hash.write_u64(p.seq);
            self.hash.write_u64(p.entity.code());
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    time: p.time,
                    seq: p.seq,
                    entity: p.entity,
                    label: format!("{:?}", p.event),
                });
            }
            return Ok(Some((p.entity, p.event)));
        }
        Ok(None)
    }

    fn most_active(&self) -> Entity {
        let mut counts: HashMap<Entity, usize> = HashMap::new();
        for e in &self.recent {
            *counts.entry(*e).or_default() += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(e, _)| e)
            .unwrap_or(Entity::Runtime)
    }

    /// Drain the queue, handing each event to `handler`. Returns the final
    /// clock value.
    pub fn run<S, F>(&mut self, state: &mut S, mut handler: F) -> Result<VirtualTime>
    where
        E: fmt::Debug,
        F: FnMut(&mut S, &mut Engine<E>, Entity, E) -> Result<()>,
    {
        while let Some((entity, ev)) = self.pop()? {
            handler(state, self, entity, ev)?;
        }
        Ok(self.now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq)]
    enum Ev {
        A,
        B,
        Chain(u32),
        Forever,
    }

    #[test]
    fn equal_time_fires_in_issue_order() {
        let mut e = Engine::new();
        e.schedule(VirtualTime::ZERO, Entity::User(0), Ev::A);
        e.schedule(VirtualTime::ZERO, Entity::User(0), Ev::B);
        let mut seen = vec![];
        e.run(&mut seen, |s, _, _, ev| {
            s.push(ev);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![Ev::A, Ev::B]);
    }

    #[test]
    fn delay_is_relative_to_now() {
        let mut e = Engine::new();
        e.schedule(VirtualTime::from_us(1), Entity::User(0), Ev::A);
        let mut fired_at = VirtualTime::ZERO;
        e.run(&mut fired_at, |at, eng, _, ev| {
            match ev {
                Ev::A => {
                    eng.schedule_secs(5e-6, Entity::User(0), Ev::B)?;
                }
                Ev::B => *at = eng.now(),
                _ => {}
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(fired_at, VirtualTime::from_us(6));
    }

    #[test]
    fn negative_delay_is_config_error() {
        let mut e: Engine<Ev> = Engine::new();
        assert!(matches!(
            e.schedule_secs(-1.0, Entity::User(0), Ev::A),
            Err(SimError::Config(_))
        ));
        assert_eq!(e.stats().scheduled, 0);
    }

    #[test]
    fn empty_run_returns_zero() {
        let mut e: Engine<Ev> = Engine::new();
        assert_eq!(e.now(), VirtualTime::ZERO);
        let end = e.run(&mut (), |_, _, _, _| Ok(())).unwrap();
        assert_eq!(end, VirtualTime::ZERO);
    }

    #[test]
    fn chained_events() {
        let mut e = Engine::new();
        e.schedule(VirtualTime::from_us(1), Entity::User(0), Ev::Chain(1));
        let end = e
            .run(&mut (), |_, eng, _, ev| {
                if let Ev::Chain(n) = ev {
                    if n < 2 {
                        eng.schedule(VirtualTime::from_us(1), Entity::User(0), Ev::Chain(n + 1));
                    }
                }
                Ok(())
            })
            .unwrap();
        assert_eq!(end, VirtualTime::from_us(2));
        assert_eq!(e.now(), end);
    }

    #[test]
    fn watchdog_reports_livelock_with_entity() {
        let mut e = Engine::with_cap(10_000_000);
        e.schedule(VirtualTime::ZERO, Entity::Pe(3), Ev::Forever);
        let err = e
            .run(&mut (), |_, eng, _, _| {
                eng.schedule(VirtualTime::from_ps(1), Entity::Pe(3), Ev::Forever);
                Ok(())
            })
            .unwrap_err();
        match err {
            SimError::Livelock { fired, entity } => {
                assert_eq!(fired, 10_000_000);
                assert_eq!(entity, "pe3");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cancellation_keeps_event_conservation() {
        let mut e = Engine::new();
        let a = e.schedule(VirtualTime::from_us(1), Entity::User(0), Ev::A);
        e.schedule(VirtualTime::from_us(2), Entity::User(0), Ev::B);
        assert!(e.cancel(a));
        assert!(!e.cancel(a));
        let mut seen = vec![];
        e.run(&mut seen, |s, _, _, ev| {
            s.push(ev);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![Ev::B]);
        let st = e.stats();
        assert_eq!(st.scheduled, st.fired + st.cancelled);
    }

    #[test]
    fn schedule_in_past_rejected() {
        let mut e = Engine::new();
        e.schedule(VirtualTime::from_us(3), Entity::User(0), Ev::A);
        e.pop().unwrap();
        assert!(e
            .schedule_at(VirtualTime::from_us(1), Entity::User(0), Ev::B)
            .is_err());
    }
}
