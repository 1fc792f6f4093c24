use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;
use crate::transport::{AckFrame, DataFrame};

#[derive(Debug, Clone)]
pub enum Packet {
    Data(DataFrame),
    Ack(AckFrame),
}

impl Packet {
    pub fn flow(&self) -> u32 {
        match self {
            Packet::Data(d) => d.flow_id,
            Packet::Ack(a) => a.flow_id,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Action {
    FlowStart(usize),
    Arrival { link: usize, packet: Packet },
    Timer(usize),
    /// A paced sender may transmit again.
    SendCredit(usize),
}

#[derive(Debug)]
pub struct Event {
    pub time: SimTime,
    pub ordinal: u64,
    pub action: Action,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.ordinal) == (other.time, other.ordinal)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.ordinal).cmp(&(self.time, self.ordinal))
    }
}

/// Pending events ordered by `(time, ordinal)`, ordinals assigned in
/// scheduling order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_ordinal: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: SimTime, action: Action) {
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        self.heap.push(Event {
            time,
            ordinal,
            action,
        });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
