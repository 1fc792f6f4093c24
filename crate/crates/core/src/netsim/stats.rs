use std::time::Duration;

use crate::congestion::Variant;
use crate::time::SimTime;
use crate::transport::{FlowId, SenderCounters};

use super::link::LinkStats;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub flow_id: FlowId,
    pub variant: Variant,
    pub transfer_bytes: u64,
    pub start: SimTime,
    /// Time from flow start until the sender saw its final acknowledgement.
    pub completion_time: Option<Duration>,
    pub last_delivery: Option<SimTime>,
    pub delivered_bytes: u64,
    /// Application bits per second over `[start, last delivery]`, or over
    /// `[start, end of run]` for an unfinished transfer.
    pub goodput_bps: f64,
    pub complete: bool,
    /// Every delivered byte matched the source stream, in order.
    pub payload_verified: bool,
    pub sender: SenderCounters,
    pub frames_received: u64,
    pub acks_received: u64,
    pub p_hat: f64,
    pub decode_events: Vec<(SimTime, u64)>,
    pub cwnd_samples: Vec<(SimTime, f64)>,
    /// `(time, bytes)` for each in-order release to the application.
    pub deliveries: Vec<(SimTime, u64)>,
}

impl FlowStats {
    /// Share of transmitted bytes that did not end up as goodput: headers,
    /// coefficients, redundancy and retransmissions.
    pub fn overhead_fraction(&self) -> f64 {
        if self.sender.wire_bytes == 0 {
            return 0.0;
        }
        1.0 - self.delivered_bytes as f64 / self.sender.wire_bytes as f64
    }

    /// Application bits per second delivered within `[from, to)`.
    pub fn goodput_between(&self, from: SimTime, to: SimTime) -> f64 {
        let span = to.saturating_since(from).as_secs_f64();
        if span <= 0.0 {
            return 0.0;
        }
        let bytes: u64 = self
            .deliveries
            .iter()
            .filter(|(t, _)| *t >= from && *t < to)
            .map(|(_, b)| b)
            .sum();
        bytes as f64 * 8.0 / span
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub flows: Vec<FlowStats>,
    /// Forward (data) then reverse (ack) link.
    pub links: [LinkStats; 2],
    pub end_time: SimTime,
    pub events: u64,
    /// The duration cap stopped the run before every transfer finished.
    pub incomplete: bool,
}
