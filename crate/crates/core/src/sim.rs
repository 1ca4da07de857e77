//! Discrete-event engine: virtual clock, ordered event queue and seeded
//! random streams.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is a per-queue
//! insertion counter, so simultaneous events fire in FIFO order.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulation timestamp in integer nanoseconds since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative or NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            SimTime(0)
        } else {
            SimTime((s * 1e9).round() as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Elapsed time since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0.saturating_add(rhs.as_nanos() as u64))
    }
}

impl Sub for SimTime {
    type Output = Duration;

    fn sub(self, rhs: SimTime) -> Duration {
        self.since(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// Cancellation handle returned by [`Scheduler::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle {
    fire_at: SimTime,
    seq: u64,
}

impl EventHandle {
    pub fn fire_at(&self) -> SimTime {
        self.fire_at
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("run_until({until}) called with the clock already at {now}")]
    RunBackwards { until: SimTime, now: SimTime },
}

/// Ordered event queue plus the virtual clock.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BTreeMap<(SimTime, u64), E>,
    dispatched: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BTreeMap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total number of events dispatched since creation.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_at: SimTime, event: E) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((fire_at, seq), event);
        Ok(EventHandle { fire_at, seq })
    }

    /// Schedules relative to the current clock; never fails.
    pub fn schedule_in(&mut self, delay: Duration, event: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, event)
            .expect("a non-negative delay is never in the past")
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.queue.remove(&(handle.fire_at, handle.seq)).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.queue.contains_key(&(handle.fire_at, handle.seq))
    }

    /// Pops the next event due at or before `until`, advancing the clock to
    /// its timestamp.
    pub fn pop_due(&mut self, until: SimTime) -> Option<(EventHandle, E)> {
        let (&(fire_at, seq), _) = self.queue.first_key_value()?;
        if fire_at > until {
            return None;
        }
        let event = self.queue.remove(&(fire_at, seq))?;
        debug_assert!(fire_at >= self.now);
        self.now = fire_at;
        self.dispatched += 1;
        Some((EventHandle { fire_at, seq }, event))
    }

    /// Dispatches every event with `fire_at <= until` in order and leaves the
    /// clock at `until`. The handler may schedule or cancel further events.
    pub fn run_until<F>(&mut self, until: SimTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Self, EventHandle, E),
    {
        if until < self.now {
            return Err(SimError::RunBackwards {
                until,
                now: self.now,
            });
        }
        let mut processed = 0;
        while let Some((handle, event)) = self.pop_due(until) {
            handler(self, handle, event);
            processed += 1;
        }
        self.now = until;
        Ok(processed)
    }
}

/// Independent random streams, one per modelling concern, all derived from
/// the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamKind {
    Placement,
    Mobility,
    MacBackoff,
    Traffic,
    Routing,
    /// Free-form stream for test harnesses (virtual links, proptests).
    Aux(u32),
}

impl StreamKind {
    fn stream_id(self) -> u64 {
        match self {
            StreamKind::Placement => 1,
            StreamKind::Mobility => 2,
            StreamKind::MacBackoff => 3,
            StreamKind::Traffic => 4,
            StreamKind::Routing => 5,
            StreamKind::Aux(n) => 0x1000 + n as u64,
        }
    }
}

/// A seeded, platform-independent random stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    kind: StreamKind,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, kind: StreamKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(kind.stream_id());
        RngStream { seed, kind, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    /// Uniform real in `[lo, hi)`; returns `lo` when `lo == hi`.
    ///
    /// Panics if `lo > hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "uniform({lo}, {hi}): empty interval");
        if lo == hi {
            return lo;
        }
        let u: f64 = self.rng.gen();
        let v = lo + (hi - lo) * u;
        // Guard against rounding up onto the open bound.
        if v >= hi {
            lo.max(hi - (hi - lo) * f64::EPSILON)
        } else {
            v
        }
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: u32, hi: u32) -> u32 {
        assert!(lo <= hi, "uniform_int({lo}, {hi}): empty interval");
        self.rng.gen_range(lo..=hi)
    }

    /// Bernoulli trial with success probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform(0.0, 1.0) < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_pops_at_fire_time() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_secs(1), "warm").unwrap();
        s.run_until(SimTime::from_secs(1), |_, _, _| {}).unwrap();
        s.schedule(SimTime::from_secs(5), "a").unwrap();
        let mut seen = vec![];
        s.run_until(SimTime::from_secs(10), |s, _, e| seen.push((s.now(), e)))
            .unwrap();
        assert_eq!(seen, vec![(SimTime::from_secs(5), "a")]);
        assert_eq!(s.now(), SimTime::from_secs(10));
    }

    #[test]
    fn simultaneous_events_are_fifo() {
        let mut s = Scheduler::new();
        for i in 0..5 {
            s.schedule(SimTime::from_secs(2), i).unwrap();
        }
        let mut seen = vec![];
        s.run_until(SimTime::from_secs(2), |_, _, e| seen.push(e))
            .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run_until(SimTime::from_secs(1), |_, _, _| {}).unwrap();
        let err = s.schedule(SimTime::from_millis(500), ()).unwrap_err();
        assert!(matches!(err, SimError::ScheduleInPast { .. }));
        assert_eq!(s.pending(), 0);
    }

    #[test]
    fn cancel_semantics() {
        let mut s = Scheduler::new();
        let h = s.schedule(SimTime::from_secs(3), ()).unwrap();
        assert!(s.cancel(h));
        assert!(!s.cancel(h));
        let h2 = s.schedule(SimTime::from_secs(1), ()).unwrap();
        let n = s.run_until(SimTime::from_secs(5), |_, _, _| {}).unwrap();
        assert_eq!(n, 1);
        assert!(!s.cancel(h2));
    }

    #[test]
    fn run_until_empty_queue_advances_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        let n = s.run_until(SimTime::from_secs(10), |_, _, _| {}).unwrap();
        assert_eq!(n, 0);
        assert_eq!(s.now(), SimTime::from_secs(10));
        assert!(s.run_until(SimTime::from_secs(9), |_, _, _| {}).is_err());
    }

    #[test]
    fn run_until_leaves_later_events_pending() {
        let mut s = Scheduler::new();
        for t in 1..=3 {
            s.schedule(SimTime::from_secs(t), t).unwrap();
        }
        let n = s.run_until(SimTime::from_secs(2), |_, _, _| {}).unwrap();
        assert_eq!(n, 2);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn child_event_fires_before_later_event() {
        // t=1 spawns a child at t=1.5, which must run before the t=2 event.
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_secs(1), "parent").unwrap();
        s.schedule(SimTime::from_secs(2), "later").unwrap();
        let mut order = vec![];
        let n = s
            .run_until(SimTime::from_secs(2), |s, _, e| {
                order.push((s.now(), e));
                if e == "parent" {
                    s.schedule(SimTime::from_millis(1500), "child").unwrap();
                }
            })
            .unwrap();
        assert_eq!(n, 3);
        assert_eq!(
            order,
            vec![
                (SimTime::from_secs(1), "parent"),
                (SimTime::from_millis(1500), "child"),
                (SimTime::from_secs(2), "later"),
            ]
        );
    }

    #[test]
    fn cancelled_events_never_dispatch() {
        let mut s = Scheduler::new();
        let handles: Vec<_> = (0..10)
            .map(|i| s.schedule(SimTime::from_millis(i * 10), i).unwrap())
            .collect();
        for h in handles.iter().step_by(2) {
            s.cancel(*h);
        }
        let mut seen = vec![];
        s.run_until(SimTime::from_secs(1), |_, _, e| seen.push(e))
            .unwrap();
        assert_eq!(seen, vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn degenerate_uniform_interval() {
        let mut r = RngStream::new(7, StreamKind::Mobility);
        assert_eq!(r.uniform(3.0, 3.0), 3.0);
    }

    #[test]
    #[should_panic]
    fn inverted_uniform_interval_panics() {
        let mut r = RngStream::new(7, StreamKind::Mobility);
        r.uniform(2.0, 1.0);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42, StreamKind::Traffic);
        let mut b = RngStream::new(42, StreamKind::Traffic);
        let xs: Vec<f64> = (0..64).map(|_| a.uniform(0.0, 10.0)).collect();
        let ys: Vec<f64> = (0..64).map(|_| b.uniform(0.0, 10.0)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_are_independent() {
        // Draws on one stream must not perturb another derived from the same seed.
        let mut a = RngStream::new(42, StreamKind::Traffic);
        let mut m = RngStream::new(42, StreamKind::Mobility);
        let first: Vec<f64> = (0..8).map(|_| a.uniform(0.0, 1.0)).collect();
        let mut a2 = RngStream::new(42, StreamKind::Traffic);
        for _ in 0..100 {
            m.uniform(0.0, 1.0);
        }
        let second: Vec<f64> = (0..8).map(|_| a2.uniform(0.0, 1.0)).collect();
        assert_eq!(first, second);
        let mut t = RngStream::new(42, StreamKind::Traffic);
        let mut p = RngStream::new(42, StreamKind::Placement);
        assert_ne!(t.uniform(0.0, 1.0), p.uniform(0.0, 1.0));
    }

    #[test]
    fn uniform_mean_converges() {
        let mut r = RngStream::new(2024, StreamKind::Aux(0));
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| r.uniform(0.0, 1.0)).sum();
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn simtime_arithmetic() {
        let t = SimTime::from_secs_f64(1.5) + Duration::from_millis(250);
        assert_eq!(t, SimTime::from_millis(1750));
        assert_eq!(t - SimTime::from_secs(1), Duration::from_millis(750));
        assert_eq!(SimTime::from_secs(1) - t, Duration::ZERO);
    }
}
