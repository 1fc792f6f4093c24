//! Network-coded transport.
//!
//! The sender splits the stream into generations of `k` symbols, sends each
//! symbol uncoded, then a loss-dependent number of random coded symbols. Acks
//! report the receiver's rank for the acked frame's generation; whenever the
//! frames still in flight cannot be expected to close a generation's deficit,
//! repair frames are queued. The receiver decodes each generation
//! independently and releases whole generations in order.

use std::collections::{BTreeMap, VecDeque};

use log::{debug, trace};
use rand_chacha::ChaCha8Rng;

use super::{
    coding_rng, redundancy_count, repair_count, AckFrame, AppData, DataFrame, Delivery,
    FlowId, FlowReceiver, FlowSender, LossEstimator, RtoEstimator, SenderCounters,
};
use crate::codec::{encode_coded, CodedPacket, DecoderState, SourcePacket};
use crate::congestion::{CcParams, CcState, Phase, RttSample, Variant};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct CtcpConfig {
    pub generation_size: usize,
    pub symbol_size: usize,
    pub max_open_generations: usize,
    pub loss_ewma_weight: f64,
    /// Covered sequence numbers per loss-estimator update.
    pub loss_window: u64,
    /// Spread each window over one smoothed RTT instead of sending it as a
    /// burst.
    pub pacing: bool,
    /// Pacing rate as a multiple of `cwnd / srtt`, in slow start and in
    /// congestion avoidance.
    pub pacing_gain_slow_start: f64,
    pub pacing_gain_avoidance: f64,
}

impl Default for CtcpConfig {
    fn default() -> Self {
        Self {
            generation_size: 32,
            symbol_size: 1000,
            max_open_generations: 64,
            loss_ewma_weight: 0.1,
            loss_window: 100,
            pacing: true,
            pacing_gain_slow_start: 2.0,
            pacing_gain_avoidance: 1.2,
        }
    }
}

/// Layout of a transfer into generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationLayout {
    pub total_bytes: u64,
    pub k: usize,
    pub symbol_size: usize,
}

impl GenerationLayout {
    pub fn generation_bytes_max(&self) -> u64 {
        (self.k * self.symbol_size) as u64
    }

    pub fn count(&self) -> u64 {
        self.total_bytes.div_ceil(self.generation_bytes_max())
    }

    pub fn offset(&self, generation: u64) -> u64 {
        generation * self.generation_bytes_max()
    }

    pub fn bytes(&self, generation: u64) -> usize {
        let start = self.offset(generation);
        (self.total_bytes.saturating_sub(start)).min(self.generation_bytes_max()) as usize
    }

    pub fn size(&self, generation: u64) -> usize {
        self.bytes(generation).div_ceil(self.symbol_size)
    }
}

#[derive(Debug)]
struct TxGeneration {
    id: u64,
    bytes: usize,
    sources: Vec<SourcePacket>,
    next_systematic: usize,
    proactive_quota: Option<usize>,
    proactive_sent: usize,
    repair_pending: usize,
    in_flight: usize,
    rank_seen: usize,
}

impl TxGeneration {
    fn k(&self) -> usize {
        self.sources.len()
    }

    fn systematic_done(&self) -> bool {
        self.next_systematic >= self.k()
    }

    fn unsent_proactive(&self) -> usize {
        self.proactive_quota
            .map_or(0, |q| q.saturating_sub(self.proactive_sent))
    }
}

#[derive(Debug, Clone, Copy)]
struct Outstanding {
    seq: u64,
    generation_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pick {
    Repair(usize),
    Systematic(usize),
    Proactive(usize),
}

pub struct CtcpSender {
    flow_id: FlowId,
    cfg: CtcpConfig,
    cc: CcState,
    rto: RtoEstimator,
    loss: LossEstimator,
    data: AppData,
    layout: GenerationLayout,
    next_generation: u64,
    open: VecDeque<TxGeneration>,
    outstanding: VecDeque<Outstanding>,
    in_flight: usize,
    next_seq: u64,
    covered_upto: u64,
    last_backoff: Option<SimTime>,
    timer: Option<SimTime>,
    next_send: SimTime,
    wake: Option<SimTime>,
    started: bool,
    rng: ChaCha8Rng,
    counters: SenderCounters,
}

impl CtcpSender {
    pub fn new(
        flow_id: FlowId,
        variant: Variant,
        cc_params: CcParams,
        cfg: CtcpConfig,
        data: AppData,
        seed: u64,
    ) -> Self {
        assert!(variant.is_coded(), "{variant} does not use the coded transport");
        assert!(cfg.generation_size > 0 && cfg.symbol_size > 0);
        let layout = GenerationLayout {
            total_bytes: data.len(),
            k: cfg.generation_size,
            symbol_size: cfg.symbol_size,
        };
        Self {
            flow_id,
            cc: CcState::new(variant, cc_params, SimTime::ZERO),
            rto: RtoEstimator::new(),
            loss: LossEstimator::new(cfg.loss_ewma_weight, cfg.loss_window),
            cfg,
            data,
            layout,
            next_generation: 0,
            open: VecDeque::new(),
            outstanding: VecDeque::new(),
            in_flight: 0,
            next_seq: 0,
            covered_upto: 0,
            last_backoff: None,
            timer: None,
            next_send: SimTime::ZERO,
            wake: None,
            started: false,
            rng: coding_rng(seed, flow_id),
            counters: SenderCounters::default(),
        }
    }

    pub fn layout(&self) -> GenerationLayout {
        self.layout
    }

    pub fn rto(&self) -> &RtoEstimator {
        &self.rto
    }

    pub fn loss_estimator(&self) -> &LossEstimator {
        &self.loss
    }

    /// Open generations, oldest first, as `(id, repair_pending)`.
    pub fn pending_repairs(&self) -> Vec<(u64, usize)> {
        self.open.iter().map(|g| (g.id, g.repair_pending)).collect()
    }

    /// Proactive quota fixed for a generation once its systematic phase ended.
    pub fn proactive_quota(&self, generation: u64) -> Option<usize> {
        self.find(generation)
            .and_then(|i| self.open[i].proactive_quota)
    }

    pub fn open_generations(&self) -> usize {
        self.open.len()
    }

    /// Replaces the loss estimate, for driving the sender in isolation.
    pub fn set_loss_estimator(&mut self, loss: LossEstimator) {
        self.loss = loss;
    }

    pub fn cc_mut(&mut self) -> &mut CcState {
        &mut self.cc
    }

    fn find(&self, generation: u64) -> Option<usize> {
        self.open.iter().position(|g| g.id == generation)
    }

    fn open_next(&mut self) -> usize {
        let id = self.next_generation;
        self.next_generation += 1;
        let bytes = self.layout.bytes(id);
        let k = self.layout.size(id);
        let offset = self.layout.offset(id);
        let symbol = self.cfg.symbol_size;
        let sources = (0..k)
            .map(|i| {
                let mut payload = self.data.chunk(offset + (i * symbol) as u64, symbol);
                payload.resize(symbol, 0);
                SourcePacket {
                    generation_id: id,
                    index_in_generation: i,
                    payload,
                }
            })
            .collect();
        self.open.push_back(TxGeneration {
            id,
            bytes,
            sources,
            next_systematic: 0,
            proactive_quota: None,
            proactive_sent: 0,
            repair_pending: 0,
            in_flight: 0,
            rank_seen: 0,
        });
        self.open.len() - 1
    }

    fn has_work(&self) -> bool {
        self.open.iter().any(|g| g.repair_pending > 0)
            || self
                .open
                .back()
                .is_some_and(|g| !g.systematic_done() || g.unsent_proactive() > 0)
            || (self.open.len() < self.cfg.max_open_generations
                && self.next_generation < self.layout.count())
    }

    fn advance_pacing(&mut self, now: SimTime) {
        let Some(srtt) = self.rto.srtt().filter(|_| self.cfg.pacing) else {
            return;
        };
        let gain = match self.cc.phase() {
            Phase::SlowStart => self.cfg.pacing_gain_slow_start,
            Phase::CongestionAvoidance => self.cfg.pacing_gain_avoidance,
        };
        let interval = srtt.as_secs_f64() / (gain * self.cc.cwnd());
        self.next_send = self.next_send.max(now) + std::time::Duration::from_secs_f64(interval);
    }

    fn pick(&mut self) -> Option<Pick> {
        if let Some(i) = self.open.iter().position(|g| g.repair_pending > 0) {
            return Some(Pick::Repair(i));
        }
        if let Some(i) = self.open.len().checked_sub(1) {
            let g = &self.open[i];
            if !g.systematic_done() {
                return Some(Pick::Systematic(i));
            }
            if g.unsent_proactive() > 0 {
                return Some(Pick::Proactive(i));
            }
        }
        if self.open.len() < self.cfg.max_open_generations
            && self.next_generation < self.layout.count()
        {
            return Some(Pick::Systematic(self.open_next()));
        }
        None
    }

    fn window(&self) -> usize {
        self.cc.cwnd().ceil() as usize
    }

    fn schedule_repairs(&mut self) {
        let p = self.loss.p_hat();
        for g in self.open.iter_mut() {
            if !g.systematic_done() {
                continue;
            }
            let need = (g.k() - g.rank_seen.min(g.k())) as f64;
            let planned = g.in_flight + g.unsent_proactive() + g.repair_pending;
            let expected = planned as f64 * (1.0 - p);
            if need > expected + 1e-9 {
                let add = repair_count(need - expected, p);
                trace!(
                    "flow {} gen {} deficit {:.2}: +{} repair",
                    self.flow_id,
                    g.id,
                    need - expected,
                    add
                );
                g.repair_pending += add;
            }
        }
    }

    fn retire(&mut self, generation: u64) {
        if let Some(i) = self.find(generation) {
            self.open.remove(i);
        }
    }

    fn detect_loss_and_backoff(&mut self, now: SimTime) {
        let Some(srtt) = self.rto.srtt() else { return };
        if let Some(t) = self.last_backoff {
            if now.saturating_since(t) < srtt {
                return;
            }
        }
        let before = self.cc.cwnd();
        let beta = self.cc.on_congestion_loss(srtt, now);
        debug!(
            "flow {} loss at {:?}: srtt {:?} rtt_min {:?} cwnd {:.1} -> {:.1}",
            self.flow_id,
            now,
            srtt,
            self.cc.rtt_min(),
            before,
            self.cc.cwnd()
        );
        if beta < 1.0 {
            self.last_backoff = Some(now);
            self.counters.backoffs += 1;
        }
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.timer = if self.outstanding.is_empty() {
            None
        } else {
            Some(now + self.rto.current())
        };
    }
}

impl FlowSender for CtcpSender {
    fn start(&mut self, now: SimTime) {
        self.cc = CcState::new(self.cc.variant(), *self.cc.params(), now);
        self.started = true;
    }

    fn next_frame(&mut self, now: SimTime) -> Option<DataFrame> {
        self.wake = None;
        if !self.started || self.in_flight >= self.window() || !self.has_work() {
            return None;
        }
        if now < self.next_send {
            self.wake = Some(self.next_send);
            return None;
        }
        let pick = self.pick()?;
        let p_hat = self.loss.p_hat();
        let (i, retransmission) = match pick {
            Pick::Repair(i) => (i, true),
            Pick::Systematic(i) | Pick::Proactive(i) => (i, false),
        };
        let g = &mut self.open[i];
        let packet = match pick {
            Pick::Systematic(_) => {
                let pkt = CodedPacket::systematic(&g.sources[g.next_systematic]);
                g.next_systematic += 1;
                if g.systematic_done() {
                    g.proactive_quota = Some(redundancy_count(g.k(), p_hat));
                }
                pkt
            }
            Pick::Proactive(_) => {
                g.proactive_sent += 1;
                encode_coded(&g.sources, &mut self.rng).expect("well-formed generation")
            }
            Pick::Repair(_) => {
                g.repair_pending -= 1;
                encode_coded(&g.sources, &mut self.rng).expect("well-formed generation")
            }
        };
        g.in_flight += 1;
        let frame = DataFrame {
            flow_id: self.flow_id,
            sequence_number: self.next_seq,
            send_timestamp: now,
            generation_size: g.k(),
            generation_bytes: g.bytes,
            packet,
            retransmission,
        };
        self.outstanding.push_back(Outstanding {
            seq: self.next_seq,
            generation_id: g.id,
        });
        self.next_seq += 1;
        self.in_flight += 1;
        if self.in_flight > self.window() {
            self.counters.window_violations += 1;
        }
        let c = &mut self.counters;
        c.frames_sent += 1;
        c.coded_frames += frame.packet.is_coded() as u64;
        c.retransmissions += retransmission as u64;
        c.wire_bytes += frame.wire_bytes() as u64;
        c.header_bytes += frame.header_bytes() as u64;
        if self.timer.is_none() {
            self.timer = Some(now + self.rto.current());
        }
        self.advance_pacing(now);
        Some(frame)
    }

    fn wake_at(&self) -> Option<SimTime> {
        self.wake
    }

    fn on_ack(&mut self, ack: &AckFrame, now: SimTime) {
        let rtt = now.saturating_since(ack.echo_timestamp).max(std::time::Duration::from_nanos(1));
        self.rto.update(rtt);
        let cwnd_limited = self.in_flight + 3 >= self.window();

        let mut lost = 0u64;
        while let Some(front) = self.outstanding.front().copied() {
            if front.seq > ack.highest_sequence_seen {
                break;
            }
            self.outstanding.pop_front();
            self.in_flight -= 1;
            if let Some(i) = self.find(front.generation_id) {
                self.open[i].in_flight -= 1;
            }
            if front.seq != ack.echo_sequence {
                lost += 1;
            }
        }
        if ack.highest_sequence_seen >= self.covered_upto {
            let covered = ack.highest_sequence_seen + 1 - self.covered_upto;
            self.loss.record(covered, lost.min(covered));
            self.covered_upto = ack.highest_sequence_seen + 1;
        }
        if lost > 0 {
            self.detect_loss_and_backoff(now);
        }

        let sample = RttSample::new(rtt, now);
        if cwnd_limited {
            self.cc.on_ack(sample);
        } else {
            self.cc.observe_rtt(sample);
        }

        if let Some(i) = self.find(ack.generation_id) {
            let g = &mut self.open[i];
            g.rank_seen = g.rank_seen.max(ack.rank_seen);
            if g.rank_seen >= g.k() {
                self.retire(ack.generation_id);
            }
        }
        while self
            .open
            .front()
            .is_some_and(|g| g.id < ack.cumulative)
        {
            self.open.pop_front();
        }
        self.schedule_repairs();
        self.arm_timer(now);
    }

    fn on_timeout(&mut self, now: SimTime) {
        self.counters.timeouts += 1;
        self.cc.on_timeout(now);
        self.rto.on_timeout();
        self.outstanding.clear();
        self.in_flight = 0;
        for g in self.open.iter_mut() {
            g.in_flight = 0;
        }
        self.schedule_repairs();
        self.timer = None;
    }

    fn timer_deadline(&self) -> Option<SimTime> {
        self.timer
    }

    fn is_done(&self) -> bool {
        self.next_generation >= self.layout.count() && self.open.is_empty()
    }

    fn in_flight(&self) -> usize {
        self.in_flight
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

pub struct CtcpReceiver {
    flow_id: FlowId,
    symbol_size: usize,
    layout: GenerationLayout,
    decoders: BTreeMap<u64, DecoderState>,
    decoded: BTreeMap<u64, Vec<u8>>,
    delivered_up_to: u64,
    delivered_bytes: u64,
    highest_seq: Option<u64>,
    decode_events: Vec<(SimTime, u64)>,
    innovative: u64,
    redundant: u64,
}

impl CtcpReceiver {
    pub fn new(flow_id: FlowId, cfg: &CtcpConfig, total_bytes: u64) -> Self {
        Self {
            flow_id,
            symbol_size: cfg.symbol_size,
            layout: GenerationLayout {
                total_bytes,
                k: cfg.generation_size,
                symbol_size: cfg.symbol_size,
            },
            decoders: BTreeMap::new(),
            decoded: BTreeMap::new(),
            delivered_up_to: 0,
            delivered_bytes: 0,
            highest_seq: None,
            decode_events: Vec::new(),
            innovative: 0,
            redundant: 0,
        }
    }

    pub fn delivered_up_to(&self) -> u64 {
        self.delivered_up_to
    }

    pub fn innovative_frames(&self) -> u64 {
        self.innovative
    }

    pub fn redundant_frames(&self) -> u64 {
        self.redundant
    }

    /// Rank currently held for a generation (`k` once decoded).
    pub fn rank(&self, generation: u64) -> usize {
        if generation < self.delivered_up_to || self.decoded.contains_key(&generation) {
            return self.layout.size(generation);
        }
        self.decoders.get(&generation).map_or(0, |d| d.rank())
    }

    fn release(&mut self) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some(bytes) = self.decoded.remove(&self.delivered_up_to) {
            let offset = self.layout.offset(self.delivered_up_to);
            self.delivered_bytes += bytes.len() as u64;
            out.push(Delivery { offset, bytes });
            self.delivered_up_to += 1;
        }
        out
    }
}

impl FlowReceiver for CtcpReceiver {
    fn on_data(&mut self, frame: &DataFrame, now: SimTime) -> (AckFrame, Vec<Delivery>) {
        let g = frame.generation_id();
        let k = frame.generation_size;
        self.highest_seq = Some(
            self.highest_seq
                .map_or(frame.sequence_number, |h| h.max(frame.sequence_number)),
        );
        let already = g < self.delivered_up_to || self.decoded.contains_key(&g);
        let mut deliveries = Vec::new();
        let rank = if already {
            self.redundant += 1;
            k
        } else {
            let symbol = self.symbol_size;
            let dec = self
                .decoders
                .entry(g)
                .or_insert_with(|| DecoderState::new(g, k, symbol));
            match dec.add(&frame.packet) {
                Ok(crate::codec::Innovation::Innovative) => self.innovative += 1,
                Ok(crate::codec::Innovation::Redundant) => self.redundant += 1,
                Err(e) => {
                    log::warn!("flow {}: dropping malformed frame: {e}", self.flow_id);
                    self.redundant += 1;
                }
            }
            let rank = dec.rank();
            if dec.is_complete() {
                let dec = self.decoders.remove(&g).expect("present");
                let mut bytes: Vec<u8> = dec.extract().expect("full rank").concat();
                bytes.truncate(frame.generation_bytes);
                self.decoded.insert(g, bytes);
                self.decode_events.push((now, g));
                deliveries = self.release();
            }
            rank
        };
        let ack = AckFrame {
            flow_id: self.flow_id,
            generation_id: g,
            rank_seen: rank,
            dofs_needed: k - rank.min(k),
            echo_timestamp: frame.send_timestamp,
            echo_sequence: frame.sequence_number,
            highest_sequence_seen: self.highest_seq.expect("set above"),
            cumulative: self.delivered_up_to,
        };
        (ack, deliveries)
    }

    fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    fn is_complete(&self) -> bool {
        self.delivered_bytes >= self.layout.total_bytes
    }

    fn decode_events(&self) -> &[(SimTime, u64)] {
        &self.decode_events
    }
}
