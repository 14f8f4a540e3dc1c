//! Deterministic discrete-event core.
//!
//! Events are totally ordered by `(fire_time, seq)` where `seq` is the
//! insertion counter, so two runs that schedule the same events in the same
//! order dispatch them identically. Cancellation is O(1): every sequence
//! number owns one bit that is set once the event fires or is cancelled, and
//! cancelled entries are skipped when they reach the top of the heap.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::EngineError;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle {
    seq: u64,
}

impl EventHandle {
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

struct Entry<E> {
    fire_time: SimTime,
    seq: u64,
    action: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One bit per sequence number: set once the event has fired or been cancelled.
#[derive(Default)]
struct Retired {
    words: Vec<u64>,
}

impl Retired {
    fn grow_to(&mut self, seq: u64) {
        let word = (seq / 64) as usize;
        if word >= self.words.len() {
            self.words.resize(word + 1, 0);
        }
    }

    fn test_and_set(&mut self, seq: u64) -> bool {
        self.grow_to(seq);
        let (w, b) = ((seq / 64) as usize, seq % 64);
        let was = self.words[w] & (1 << b) != 0;
        self.words[w] |= 1 << b;
        was
    }
}

/// Event queue plus simulated clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    retired: Retired,
    processed: u64,
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
            heap: BinaryHeap::new(),
            retired: Retired::default(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Total events dispatched over the scheduler's lifetime.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of queued entries, including cancelled ones not yet popped.
    pub fn queued(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(&mut self, fire_time: SimTime, action: E) -> Result<EventHandle, EngineError> {
        if fire_time < self.now {
            return Err(EngineError::ScheduleInPast {
                at: fire_time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            fire_time,
            seq,
            action,
        });
        Ok(EventHandle { seq })
    }

    /// Schedules `delay` after the current time; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, action: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, action).expect("non-negative delay")
    }

    /// Returns true if the event was still pending and will now never fire.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.seq >= self.next_seq {
            return false;
        }
        !self.retired.test_and_set(handle.seq)
    }

    /// Dispatches every event with `fire_time <= t_end` in `(time, seq)`
    /// order, then advances the clock to `t_end`. Returns the number of
    /// events dispatched by this call.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, E),
    {
        assert!(
            t_end >= self.now,
            "run_until horizon {t_end} is before now {}",
            self.now
        );
        let mut count = 0;
        while let Some(top) = self.heap.peek() {
            if top.fire_time > t_end {
                break;
            }
            let entry = self.heap.pop().expect("peeked");
            if self.retired.test_and_set(entry.seq) {
                continue;
            }
            debug_assert!(entry.fire_time >= self.now);
            self.now = entry.fire_time;
            count += 1;
            self.processed += 1;
            handler(self, entry.action);
        }
        self.now = t_end;
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn drain(s: &mut Scheduler<u32>, t_end: SimTime) -> Vec<(SimTime, u32)> {
        let mut out = Vec::new();
        s.run_until(t_end, |s, id| out.push((s.now(), id)));
        out
    }

    #[test]
    fn zero_delay_event_runs_after_current() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_ns(5), 0u32).unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime::from_ns(10), |s, id| {
            order.push(id);
            if id == 0 {
                let now = s.now();
                s.schedule(now, 1).unwrap();
                order.push(100);
            }
        });
        assert_eq!(order, vec![0, 100, 1]);
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_ns(5), 1u32).unwrap();
        s.schedule(SimTime::from_ns(5), 2).unwrap();
        let got = drain(&mut s, SimTime::from_ns(5));
        assert_eq!(got.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut s: Scheduler<u32> = Scheduler::new();
        s.run_until(SimTime::from_us(1), |_, _| {});
        let err = s.schedule(SimTime::from_ns(10), 0).unwrap_err();
        assert!(matches!(err, EngineError::ScheduleInPast { .. }));
    }

    #[test]
    fn empty_queue_advances_clock_to_horizon() {
        let mut s: Scheduler<u32> = Scheduler::new();
        let n = s.run_until(SimTime::from_ms(1000), |_, _| {});
        assert_eq!(n, 0);
        assert_eq!(s.now(), SimTime::from_ms(1000));
    }

    #[test]
    fn horizon_before_event_processes_nothing() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_us(10), 7u32).unwrap();
        assert_eq!(s.run_until(SimTime::from_us(5), |_, _| {}), 0);
        assert_eq!(s.run_until(SimTime::from_us(10), |_, _| {}), 1);
    }

    #[test]
    fn cancel_pending_and_fired() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime::from_ns(1), 1u32).unwrap();
        let b = s.schedule(SimTime::from_ns(2), 2).unwrap();
        assert!(s.cancel(b));
        assert!(!s.cancel(b));
        let got = drain(&mut s, SimTime::from_ns(10));
        assert_eq!(got, vec![(SimTime::from_ns(1), 1)]);
        assert!(!s.cancel(a));
    }

    #[test]
    fn million_random_events_match_stable_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = Scheduler::new();
        let mut reference = Vec::with_capacity(1_000_000);
        for id in 0..1_000_000u32 {
            let t = SimTime::from_ns(rng.random_range(0..10_000));
            s.schedule(t, id).unwrap();
            reference.push((t, id));
        }
        // ids are assigned in insertion order, so a stable sort by time is
        // exactly the (time, seq) order
        reference.sort_by_key(|x| x.0);
        let got = drain(&mut s, SimTime::from_ns(10_000));
        assert_eq!(got, reference);
    }

    #[test]
    fn interleaved_cancels_dispatch_set_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = Scheduler::new();
        let mut handles = Vec::new();
        let mut live = std::collections::BTreeSet::new();
        for id in 0..1000u32 {
            let t = SimTime::from_ns(rng.random_range(0..500));
            handles.push(s.schedule(t, id).unwrap());
            live.insert(id);
            if rng.random_bool(0.3) {
                let victim = rng.random_range(0..handles.len());
                if s.cancel(handles[victim]) {
                    live.remove(&(victim as u32));
                }
            }
        }
        let got: std::collections::BTreeSet<u32> = drain(&mut s, SimTime::from_ns(500))
            .into_iter()
            .map(|x| x.1)
            .collect();
        assert_eq!(got, live);
    }
}
