//! Progress-based fluid model of a throughput resource.
//!
//! Each flow carries an amount of work expressed as the time it would take
//! with the resource to itself. In shared mode, `n` active flows each
//! progress at `1/n` of full speed, recomputed whenever a flow joins or
//! leaves; in exclusive mode every flow progresses at full speed.
//! A lone flow with integral work finishes exactly `work` picoseconds after
//! it joins.

use crate::engine::EventId;
use crate::time::VirtualTime;

const DONE_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Flow<K> {
    key: K,
    remaining: f64,
}

#[derive(Debug, Clone)]
pub struct FluidResource<K> {
    shared: bool,
    flows: Vec<Flow<K>>,
    last: VirtualTime,
    /// Wake-up event currently scheduled for this resource.
    pub(crate) pending: Option<EventId>,
    peak: usize,
    admitted: f64,
    processed: f64,
}

impl<K: Copy + PartialEq> FluidResource<K> {
    pub fn new(shared: bool) -> Self {
        FluidResource {
            shared,
            flows: Vec::new(),
            last: VirtualTime::ZERO,
            pending: None,
            peak: 0,
            admitted: 0.0,
            processed: 0.0,
        }
    }

    pub fn active(&self) -> usize {
        self.flows.len()
    }

    /// Highest number of simultaneously active flows seen so far.
    pub fn peak(&self) -> usize {
        self.peak
    }

    /// Total work admitted and total work processed, in picoseconds of
    /// exclusive service.
    pub fn work_totals(&self) -> (f64, f64) {
        (self.admitted, self.processed)
    }

    fn rate(&self) -> f64 {
        if self.shared && !self.flows.is_empty() {
            1.0 / self.flows.len() as f64
        } else {
            1.0
        }
    }

    fn advance(&mut self, now: VirtualTime) {
        debug_assert!(now >= self.last);
        let dt = (now - self.last).as_ps() as f64;
        if dt > 0.0 && !self.flows.is_empty() {
            let step = dt * self.rate();
            for f in &mut self.flows {
                let done = step.min(f.remaining);
                f.remaining -= step;
                self.processed += done;
            }
        }
        self.last = now;
    }

    pub fn add(&mut self, now: VirtualTime, key: K, work: VirtualTime) {
        self.advance(now);
        let w = work.as_ps() as f64;
        self.admitted += w;
        self.flows.push(Flow { key, remaining: w });
        self.peak = self.peak.max(self.flows.len());
    }

    /// Time at which the next flow finishes, if any is active.
    pub fn next_completion(&self) -> Option<VirtualTime> {
        let min = self
            .flows
            .iter()
            .map(|f| f.remaining.max(0.0))
            .fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return None;
        }
        let dt = (min / self.rate()).ceil() as u64;
        Some(self.last + VirtualTime::from_ps(dt))
    }

    /// Advance to `now` and remove every flow that has finished, in the
    /// order they joined.
    pub fn take_finished(&mut self, now: VirtualTime) -> Vec<K> {
        self.advance(now);
        let mut done = Vec::new();
        self.flows.retain(|f| {
            if f.remaining <= DONE_EPS {
                done.push(f.key);
                false
            } else {
                true
            }
        });
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(v: u64) -> VirtualTime {
        VirtualTime::from_ps(v)
    }

    #[test]
    fn single_flow_is_exact() {
        let mut r = FluidResource::new(true);
        r.add(ps(10), 1u32, ps(1_234_567));
        assert_eq!(r.next_completion(), Some(ps(1_234_577)));
        assert_eq!(r.take_finished(ps(1_234_577)), vec![1]);
    }

    #[test]
    fn two_equal_flows_share() {
        let mut r = FluidResource::new(true);
        r.add(ps(0), 1u32, ps(1000));
        r.add(ps(0), 2u32, ps(1000));
        assert_eq!(r.next_completion(), Some(ps(2000)));
        assert_eq!(r.take_finished(ps(2000)), vec![1, 2]);
    }

    #[test]
    fn exclusive_mode_ignores_others() {
        let mut r = FluidResource::new(false);
        r.add(ps(0), 1u32, ps(1000));
        r.add(ps(0), 2u32, ps(3000));
        assert_eq!(r.next_completion(), Some(ps(1000)));
        assert_eq!(r.take_finished(ps(1000)), vec![1]);
        assert_eq!(r.next_completion(), Some(ps(3000)));
    }

    #[test]
    fn late_joiner_slows_first() {
        let mut r = FluidResource::new(true);
        r.add(ps(0), 1u32, ps(1000));
        r.add(ps(500), 2u32, ps(1000));
        // flow 1 has 500 left at half speed -> done at 1500
        assert_eq!(r.next_completion(), Some(ps(1500)));
        assert_eq!(r.take_finished(ps(1500)), vec![1]);
        // flow 2 got 500 of service, 500 remain alone
        assert_eq!(r.next_completion(), Some(ps(2000)));
    }

    proptest! {
        // Integral of allocated service equals admitted work once drained.
        #[test]
        fn service_is_conserved(jobs in proptest::collection::vec((0u64..5_000, 1u64..20_000), 1..12)) {
            let mut jobs = jobs;
            jobs.sort();
            let mut r = FluidResource::new(true);
            let mut now = ps(0);
            let mut finished = 0;
            let mut idx = 0;
            while finished < jobs.len() {
                let next_arrival = jobs.get(idx).map(|j| ps(j.0));
                let next_done = r.next_completion();
                match (next_arrival, next_done) {
                    (Some(a), Some(d)) if a <= d => {
                        now = a.max(now);
                        r.add(now, idx, ps(jobs[idx].1));
                        idx += 1;
                    }
                    (Some(a), None) => {
                        now = a.max(now);
                        r.add(now, idx, ps(jobs[idx].1));
                        idx += 1;
                    }
                    (_, Some(d)) => {
                        now = d;
                        finished += r.take_finished(now).len();
                    }
                    (None, None) => unreachable!(),
                }
            }
            let (admitted, processed) = r.work_totals();
            prop_assert!((admitted - processed).abs() < 1e-3 * jobs.len() as f64);
        }
    }
}
