//! Discrete-event kernel: a totally ordered event queue, the simulation clock
//! and the seeded PRNG used by randomized policies.
//!
//! Events are ordered lexicographically by `(time, seq)`. `seq` is assigned
//! from a single counter at push time, so two events at the same instant are
//! dispatched in insertion order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cluster::{NodeId, PodId};
use crate::error::{Error, Result};

/// Simulated seconds since the start of a run.
pub type SimTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PodArrival,
    PodStarted,
    PodCompleted,
    SchedulingCycle,
    MonitoringTick,
    NodeReady,
    BillingBoundary,
    PreemptionRevocation,
    ScaleOutPermitted,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::PodArrival,
        EventKind::PodStarted,
        EventKind::PodCompleted,
        EventKind::SchedulingCycle,
        EventKind::MonitoringTick,
        EventKind::NodeReady,
        EventKind::BillingBoundary,
        EventKind::PreemptionRevocation,
        EventKind::ScaleOutPermitted,
    ];
}

/// What an event is about. Pod payloads carry the placement epoch so that
/// events scheduled for an earlier placement of a requeued pod can be told
/// apart from current ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    None,
    Pod { id: PodId, epoch: u32 },
    Node { id: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Payload,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventHandle {
    pub time: SimTime,
    pub seq: u64,
}

/// Receives dispatched events. The kernel is handed back so handlers can
/// schedule follow-up events.
pub trait Handler {
    fn handle(&mut self, event: &Event, kernel: &mut Kernel) -> Result<()>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub dispatched: u64,
    pub per_kind: BTreeMap<EventKind, u64>,
}

impl RunStats {
    pub fn count(&self, kind: EventKind) -> u64 {
        self.per_kind.get(&kind).copied().unwrap_or(0)
    }

    fn merge(&mut self, other: &RunStats) {
        self.dispatched += other.dispatched;
        for (k, v) in &other.per_kind {
            *self.per_kind.entry(*k).or_default() += v;
        }
    }
}

#[derive(Debug, Default)]
pub struct Kernel {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Event>>,
    log: Vec<Event>,
    stats: RunStats,
}

impl Kernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Dispatch log of every event handled so far, in dispatch order.
    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn push(&mut self, time: SimTime, kind: EventKind, payload: Payload) -> Result<EventHandle> {
        if time < self.clock {
            return Err(Error::Causality {
                time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Event {
            time,
            seq,
            kind,
            payload,
        }));
        Ok(EventHandle { time, seq })
    }

    /// Dispatches every queued event with `time <= t_end` in `(time, seq)`
    /// order, including events pushed by handlers along the way.
    ///
    /// The clock only moves to the time of dispatched events: with an empty
    /// queue it stays where it was, and it never jumps forward to `t_end`.
    pub fn run_until<H: Handler>(&mut self, t_end: SimTime, handler: &mut H) -> Result<RunStats> {
        let mut stats = RunStats::default();
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.time > t_end {
                break;
            }
            let Reverse(event) = self.queue.pop().expect("peeked");
            debug_assert!(event.time >= self.clock);
            self.clock = event.time;
            self.log.push(event);
            stats.dispatched += 1;
            *stats.per_kind.entry(event.kind).or_default() += 1;
            handler.handle(&event, self)?;
        }
        self.stats.merge(&stats);
        Ok(stats)
    }
}

/// Seeded PRNG shared by randomized policies: ChaCha8 keyed by a 64-bit seed.
///
/// ChaCha8's output stream is specified independently of the host, and draws
/// are taken through `u64` ranges so results do not depend on pointer width.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream under the same seed, e.g. one per node.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Exponential draw with the given rate (events per unit).
    pub fn exponential(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive rate").sample(&mut self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Recorder {
        seen: Vec<(SimTime, EventKind)>,
    }

    impl Handler for Recorder {
        fn handle(&mut self, event: &Event, kernel: &mut Kernel) -> Result<()> {
            assert!(kernel.now() == event.time);
            self.seen.push((event.time, event.kind));
            Ok(())
        }
    }

    #[test]
    fn first_push_gets_seq_zero() {
        let mut k = Kernel::new();
        let h = k
            .push(0, EventKind::PodArrival, Payload::Pod { id: PodId(1), epoch: 0 })
            .unwrap();
        assert_eq!(h.seq, 0);
        assert_eq!(h.time, 0);
    }

    #[test]
    fn equal_time_dispatches_in_insertion_order() {
        let mut k = Kernel::new();
        k.push(10, EventKind::PodArrival, Payload::Pod { id: PodId(2), epoch: 0 })
            .unwrap();
        k.push(10, EventKind::SchedulingCycle, Payload::None).unwrap();
        let mut r = Recorder::default();
        k.run_until(100, &mut r).unwrap();
        assert_eq!(
            r.seen,
            vec![(10, EventKind::PodArrival), (10, EventKind::SchedulingCycle)]
        );
    }

    #[test]
    fn rejects_events_in_the_past() {
        struct PushBack;
        impl Handler for PushBack {
            fn handle(&mut self, _: &Event, kernel: &mut Kernel) -> Result<()> {
                kernel.push(5, EventKind::MonitoringTick, Payload::None)?;
                Ok(())
            }
        }
        let mut k = Kernel::new();
        k.push(7, EventKind::MonitoringTick, Payload::None).unwrap();
        let err = k.run_until(10, &mut PushBack).unwrap_err();
        assert!(matches!(err, Error::Causality { time: 5, clock: 7 }));
    }

    #[test]
    fn empty_queue_dispatches_nothing_and_keeps_clock() {
        let mut k = Kernel::new();
        let stats = k.run_until(100, &mut Recorder::default()).unwrap();
        assert_eq!(stats.dispatched, 0);
        assert_eq!(k.now(), 0);
    }

    #[test]
    fn run_until_stops_at_horizon_and_clock_is_last_event() {
        let mut k = Kernel::new();
        for t in [3, 9, 12] {
            k.push(t, EventKind::MonitoringTick, Payload::None).unwrap();
        }
        let stats = k.run_until(10, &mut Recorder::default()).unwrap();
        assert_eq!(stats.count(EventKind::MonitoringTick), 2);
        assert_eq!(k.now(), 9);
        assert_eq!(k.pending_events(), 1);
    }

    #[test]
    fn rng_is_reproducible_and_streams_differ() {
        let a: Vec<u64> = (0..8).map({
            let mut r = SimRng::new(42);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = SimRng::new(42);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        let mut s = SimRng::stream(42, 7);
        assert_ne!(s.next_u64(), a[0]);
    }

    #[test]
    fn rng_index_is_in_range() {
        let mut r = SimRng::new(1);
        for n in 1..50 {
            assert!(r.index(n) < n);
        }
    }
}
