//! Discrete-event clock engine.
//!
//! A single-threaded event queue keyed lexicographically on
//! `(fire_at, sequence)`: events scheduled for the same cycle run in the
//! order they were scheduled (FIFO by a global insertion sequence). This
//! gives deterministic replay for identical inputs; the system model built
//! on top additionally keeps its per-cycle decisions independent of
//! same-cycle event order so that the event-driven run matches the
//! per-cycle reference simulator exactly.
//!
//! Cancellation is supported through the handle returned by
//! [`Engine::schedule`]; cancelled events are tombstoned and skipped on pop.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use crate::{Cycle, Result, SimError};

/// Handle identifying a scheduled event, usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// Event queue plus simulation clock.
#[derive(Debug)]
pub struct Engine<E> {
    now: Cycle,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: HashSet<u64>,
    finished: bool,
}

#[derive(Debug)]
struct Entry<E> {
    at: Cycle,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Engine {
            now: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            finished: false,
        }
    }

    /// Current simulation time. Advances as events are popped.
    pub fn now(&self) -> Cycle {
        self.now
    }

    /// Number of live (non-cancelled) scheduled events.
    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending() == 0
    }

    /// Schedules `payload` to fire `delay` cycles from now.
    pub fn schedule(&mut self, delay: Cycle, payload: E) -> Result<EventHandle> {
        self.schedule_at(self.now + delay, payload)
    }

    /// Schedules `payload` at absolute cycle `at` (must not be in the past).
    pub fn schedule_at(&mut self, at: Cycle, payload: E) -> Result<EventHandle> {
        if self.finished {
            return Err(SimError::Schedule(
                "engine already ran to completion".into(),
            ));
        }
        if at < self.now {
            return Err(SimError::Schedule(format!(
                "fire_at {at} is before current cycle {}",
                self.now
            )));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { at, seq, payload }));
        Ok(EventHandle(seq))
    }

    /// Cancels a previously scheduled event. Returns false if it already
    /// fired (or was already cancelled).
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        // A handle for a fired event has seq < next_seq but is absent from
        // the heap; inserting a tombstone for it would leak, so probe first.
        if self
            .heap
            .iter()
            .any(|Reverse(e)| e.seq == handle.0 && !self.cancelled.contains(&e.seq))
        {
            self.cancelled.insert(handle.0);
            true
        } else {
            false
        }
    }

    /// Earliest pending fire time, if any.
    pub fn peek_time(&mut self) -> Option<Cycle> {
        self.skim_cancelled();
        self.heap.peek().map(|Reverse(e)| e.at)
    }

    /// Pops the next event and advances the clock to its fire time.
    pub fn pop(&mut self) -> Option<(Cycle, E)> {
        self.skim_cancelled();
        let Reverse(e) = self.heap.pop()?;
        debug_assert!(e.at >= self.now, "event queue went backwards");
        self.now = e.at;
        Some((e.at, e.payload))
    }

    /// Pops the next event only if it fires at or before `limit`.
    pub fn pop_at_most(&mut self, limit: Cycle) -> Option<(Cycle, E)> {
        match self.peek_time() {
            Some(t) if t <= limit => self.pop(),
            _ => None,
        }
    }

    /// Drains and handles events up to and including cycle `limit`.
    /// Returns the clock value afterwards (`limit` if the queue ran dry
    /// earlier, so callers can treat the interval as fully elapsed).
    pub fn run_until<F>(&mut self, limit: Cycle, mut handler: F) -> Cycle
    where
        F: FnMut(&mut Self, Cycle, E),
    {
        while let Some((at, ev)) = self.pop_at_most(limit) {
            handler(self, at, ev);
        }
        if self.now < limit {
            self.now = limit;
        }
        self.now
    }

    /// Drains the queue completely, then seals the engine: further
    /// scheduling is rejected.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> Cycle
    where
        F: FnMut(&mut Self, Cycle, E),
    {
        while let Some((at, ev)) = self.pop() {
            handler(self, at, ev);
        }
        self.finished = true;
        self.now
    }

    /// Marks the run as finished; later `schedule` calls are rejected.
    pub fn finish(&mut self) {
        self.finished = true;
    }

    fn skim_cancelled(&mut self) {
        while let Some(Reverse(e)) = self.heap.peek() {
            if self.cancelled.remove(&e.seq) {
                self.heap.pop();
            } else {
                break;
            }
        }
    }
}
