//! Totally ordered event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::Vector;

/// Event kinds in tie-break order: at equal times deliveries run first so
/// that a sample taken at a delivery instant sees the new hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Deliver,
    Sample,
    DwellExpire,
    TriggerCheck,
}

#[derive(Debug, Clone)]
pub(crate) enum Payload {
    None,
    /// Sample index; `forced` sends regardless of the trigger test.
    Sample { k: u64, forced: bool },
    Deliver {
        /// New hold, or `None` when the sample was not transmitted.
        value: Option<Vector>,
        /// `xᵢ(t_k) - κ(t_k)` of the delivered sample (broadcast modes).
        tilde: Option<Vector>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct QueueEntry {
    pub time: f64,
    pub kind: EventKind,
    pub channel: usize,
    seq: u64,
    pub payload: Payload,
}

impl QueueEntry {
    fn key(&self) -> (f64, EventKind, usize, u64) {
        (self.time, self.kind, self.channel, self.seq)
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

#[derive(Debug, Default)]
pub(crate) struct EventQueue {
    heap: BinaryHeap<QueueEntry>,
    seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, kind: EventKind, channel: usize, payload: Payload) {
        self.seq += 1;
        self.heap.push(QueueEntry { time, kind, channel, seq: self.seq, payload });
    }

    pub fn pop(&mut self) -> Option<QueueEntry> {
        self.heap.pop()
    }
}
