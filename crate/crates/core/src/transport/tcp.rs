//! Loss-based baseline transport.
//!
//! The stream is cut into segments of one symbol each. Acks use the same
//! framing as the coded transport: each one echoes the frame that triggered
//! it, the highest sequence number seen and the receiver's cumulative point.
//! Every sequence gap below the highest sequence seen marks that frame lost,
//! and its segment is retransmitted ahead of new data under a fresh sequence
//! number. A window reduction happens at most once per recovery episode, and
//! the window does not grow until the episode ends. A timeout requeues every
//! outstanding segment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    AckFrame, AppData, DataFrame, Delivery, FlowId, FlowReceiver, FlowSender, LossEstimator,
    RtoEstimator, SenderCounters,
};
use crate::codec::{CodedPacket, PacketKind};
use crate::congestion::{CcParams, CcState, RttSample, Variant};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy)]
struct Outstanding {
    seq: u64,
    segment: u64,
}

pub struct TcpSender {
    flow_id: FlowId,
    cc: CcState,
    rto: RtoEstimator,
    loss: LossEstimator,
    data: AppData,
    mss: usize,
    segments: u64,
    rwnd: Option<u64>,
    next_segment: u64,
    cumulative: u64,
    /// Segments acknowledged out of order, all at or above `cumulative`.
    acked_above: BTreeSet<u64>,
    retx: BTreeSet<u64>,
    outstanding: VecDeque<Outstanding>,
    next_seq: u64,
    covered_upto: u64,
    recovery_point: Option<u64>,
    timer: Option<SimTime>,
    started: bool,
    counters: SenderCounters,
}

impl TcpSender {
    /// `rwnd` bounds, in segments, how far new data may run ahead of the
    /// receiver's in-order point.
    pub fn new(
        flow_id: FlowId,
        variant: Variant,
        cc_params: CcParams,
        mss: usize,
        rwnd: Option<u64>,
        data: AppData,
    ) -> Self {
        assert!(!variant.is_coded(), "{variant} uses the coded transport");
        assert!(mss > 0);
        let segments = data.len().div_ceil(mss as u64);
        Self {
            flow_id,
            cc: CcState::new(variant, cc_params, SimTime::ZERO),
            rto: RtoEstimator::new(),
            loss: LossEstimator::default(),
            data,
            mss,
            segments,
            rwnd,
            next_segment: 0,
            cumulative: 0,
            acked_above: BTreeSet::new(),
            retx: BTreeSet::new(),
            outstanding: VecDeque::new(),
            next_seq: 0,
            covered_upto: 0,
            recovery_point: None,
            timer: None,
            started: false,
            counters: SenderCounters::default(),
        }
    }

    pub fn in_recovery(&self) -> bool {
        self.recovery_point.is_some()
    }

    pub fn retransmit_queue(&self) -> Vec<u64> {
        self.retx.iter().copied().collect()
    }

    pub fn cc_mut(&mut self) -> &mut CcState {
        &mut self.cc
    }

    fn window(&self) -> usize {
        self.cc.cwnd().ceil() as usize
    }

    fn is_acked(&self, segment: u64) -> bool {
        segment < self.cumulative || self.acked_above.contains(&segment)
    }

    fn mark_acked(&mut self, segment: u64) {
        if segment >= self.cumulative && segment < self.segments {
            self.acked_above.insert(segment);
        }
        self.retx.remove(&segment);
    }

    fn segment_frame(&self, segment: u64, seq: u64, now: SimTime, retransmission: bool) -> DataFrame {
        let payload = self.data.chunk(segment * self.mss as u64, self.mss);
        DataFrame {
            flow_id: self.flow_id,
            sequence_number: seq,
            send_timestamp: now,
            generation_size: 1,
            generation_bytes: payload.len(),
            packet: CodedPacket {
                generation_id: segment,
                kind: PacketKind::Systematic { index: 0 },
                payload,
            },
            retransmission,
        }
    }
}

impl FlowSender for TcpSender {
    fn start(&mut self, now: SimTime) {
        self.cc = CcState::new(self.cc.variant(), *self.cc.params(), now);
        self.started = true;
    }

    fn next_frame(&mut self, now: SimTime) -> Option<DataFrame> {
        if !self.started || self.outstanding.len() >= self.window() {
            return None;
        }
        let (segment, retransmission) = if let Some(s) = self.retx.pop_first() {
            (s, true)
        } else {
            let limit = self
                .rwnd
                .map_or(self.segments, |w| self.segments.min(self.cumulative + w));
            if self.next_segment >= limit {
                return None;
            }
            self.next_segment += 1;
            (self.next_segment - 1, false)
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        let frame = self.segment_frame(segment, seq, now, retransmission);
        self.outstanding.push_back(Outstanding { seq, segment });
        if self.outstanding.len() > self.window() {
            self.counters.window_violations += 1;
        }
        let c = &mut self.counters;
        c.frames_sent += 1;
        c.retransmissions += retransmission as u64;
        c.wire_bytes += frame.wire_bytes() as u64;
        c.header_bytes += frame.header_bytes() as u64;
        if self.timer.is_none() {
            self.timer = Some(now + self.rto.current());
        }
        Some(frame)
    }

    fn on_ack(&mut self, ack: &AckFrame, now: SimTime) {
        let rtt = now
            .saturating_since(ack.echo_timestamp)
            .max(std::time::Duration::from_nanos(1));
        self.rto.update(rtt);
        let flight_before = self.outstanding.len();
        let cwnd_limited = flight_before + 3 >= self.window();

        let mut lost = 0u64;
        while let Some(front) = self.outstanding.front().copied() {
            if front.seq > ack.highest_sequence_seen {
                break;
            }
            self.outstanding.pop_front();
            if front.seq != ack.echo_sequence {
                lost += 1;
                if !self.is_acked(front.segment) {
                    self.retx.insert(front.segment);
                }
            }
        }
        if ack.highest_sequence_seen >= self.covered_upto {
            let covered = ack.highest_sequence_seen + 1 - self.covered_upto;
            self.loss.record(covered, lost.min(covered));
            self.covered_upto = ack.highest_sequence_seen + 1;
        }

        self.mark_acked(ack.generation_id);
        if ack.cumulative > self.cumulative {
            self.cumulative = ack.cumulative.min(self.segments);
            self.acked_above = self.acked_above.split_off(&self.cumulative);
            let stale: Vec<u64> = self.retx.range(..self.cumulative).copied().collect();
            for s in stale {
                self.retx.remove(&s);
            }
        }
        while self.acked_above.first() == Some(&self.cumulative) {
            self.acked_above.pop_first();
            self.cumulative += 1;
        }

        let sample = RttSample::new(rtt, now);
        if lost > 0 && self.recovery_point.is_none() {
            let srtt = self.rto.srtt().expect("updated above");
            self.cc.observe_rtt(sample);
            self.cc.limit_to_flight(flight_before);
            self.cc.on_congestion_loss(srtt, now);
            self.counters.backoffs += 1;
            self.recovery_point = Some(self.next_seq);
        } else if let Some(rp) = self.recovery_point {
            self.cc.observe_rtt(sample);
            if ack.echo_sequence >= rp {
                self.recovery_point = None;
            }
        } else if cwnd_limited {
            self.cc.on_ack(sample);
        } else {
            self.cc.observe_rtt(sample);
        }

        self.timer = if self.outstanding.is_empty() {
            None
        } else {
            Some(now + self.rto.current())
        };
    }

    fn on_timeout(&mut self, now: SimTime) {
        self.counters.timeouts += 1;
        self.cc.limit_to_flight(self.outstanding.len());
        self.cc.on_timeout(now);
        self.rto.on_timeout();
        for o in std::mem::take(&mut self.outstanding) {
            if !self.is_acked(o.segment) {
                self.retx.insert(o.segment);
            }
        }
        self.recovery_point = None;
        self.timer = None;
    }

    fn timer_deadline(&self) -> Option<SimTime> {
        self.timer
    }

    fn is_done(&self) -> bool {
        self.cumulative >= self.segments
    }

    fn in_flight(&self) -> usize {
        self.outstanding.len()
    }

    fn cc(&self) -> &CcState {
        &self.cc
    }

    fn loss_estimate(&self) -> f64 {
        self.loss.p_hat()
    }

    fn counters(&self) -> SenderCounters {
        self.counters
    }
}

pub struct TcpReceiver {
    flow_id: FlowId,
    mss: usize,
    total_bytes: u64,
    next_expected: u64,
    buffer: BTreeMap<u64, Vec<u8>>,
    delivered_bytes: u64,
    highest_seq: u64,
}

impl TcpReceiver {
    pub fn new(flow_id: FlowId, mss: usize, total_bytes: u64) -> Self {
        Self {
            flow_id,
            mss,
            total_bytes,
            next_expected: 0,
            buffer: BTreeMap::new(),
            delivered_bytes: 0,
            highest_seq: 0,
        }
    }

    pub fn buffered_segments(&self) -> usize {
        self.buffer.len()
    }
}

impl FlowReceiver for TcpReceiver {
    fn on_data(&mut self, frame: &DataFrame, _now: SimTime) -> (AckFrame, Vec<Delivery>) {
        let segment = frame.generation_id();
        self.highest_seq = self.highest_seq.max(frame.sequence_number);
        if segment >= self.next_expected {
            self.buffer
                .entry(segment)
                .or_insert_with(|| frame.packet.payload.clone());
        }
        let mut out = Vec::new();
        while let Some(bytes) = self.buffer.remove(&self.next_expected) {
            self.delivered_bytes += bytes.len() as u64;
            out.push(Delivery {
                offset: self.next_expected * self.mss as u64,
                bytes,
            });
            self.next_expected += 1;
        }
        let ack = AckFrame {
            flow_id: self.flow_id,
            generation_id: segment,
            rank_seen: 1,
            dofs_needed: 0,
            echo_timestamp: frame.send_timestamp,
            echo_sequence: frame.sequence_number,
            highest_sequence_seen: self.highest_seq,
            cumulative: self.next_expected,
        };
        (ack, out)
    }

    fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    fn is_complete(&self) -> bool {
        self.delivered_bytes >= self.total_bytes
    }

    fn decode_events(&self) -> &[(SimTime, u64)] {
        &[]
    }
}
