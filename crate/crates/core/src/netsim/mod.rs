//! Deterministic discrete-event simulator.
//!
//! Every flow shares one forward link carrying data and one reverse link
//! carrying acks, so a single flow is a point-to-point path and several flows
//! form a dumbbell with a common bottleneck. Each link and each flow draws
//! from its own labelled random stream derived from the scenario seed.

mod event;
mod link;
mod stats;

pub use event::{Action, Event, EventQueue, Packet};
pub use link::{Link, LinkConfig, LinkConfigError, LinkStats, Transmit};
pub use stats::{FlowStats, RunResult};

use std::time::Duration;

use log::debug;

use crate::congestion::{CcParams, Variant};
use crate::rng::{stream, StreamLabel};
use crate::time::SimTime;
use crate::transport::{
    AppData, CtcpConfig, CtcpReceiver, CtcpSender, FlowReceiver, FlowSender, TcpReceiver,
    TcpSender, FRAME_HEADER_BYTES, ACK_FRAME_BYTES,
};

const FORWARD: usize = 0;
const REVERSE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub variant: Variant,
    pub bytes: u64,
    pub start: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub forward: LinkConfig,
    pub reverse: LinkConfig,
    pub flows: Vec<FlowSpec>,
    pub seed: u64,
    pub coding: CtcpConfig,
    pub cc: CcParams,
    /// Receive window of the baseline transport, in segments.
    pub tcp_rwnd: Option<u64>,
    pub duration_cap: Duration,
    /// Keep cwnd samples and per-delivery records.
    pub record_trace: bool,
    /// Check every delivered byte against the source stream.
    pub verify_payload: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario has no flows")]
    NoFlows,
    #[error("forward link: {0}")]
    Forward(LinkConfigError),
    #[error("reverse link: {0}")]
    Reverse(LinkConfigError),
    #[error("generation and symbol sizes must be positive")]
    Coding,
}

impl Scenario {
    /// Symmetric path with `rtt` split evenly between directions, erasures on
    /// the data direction only, and a queue of one bandwidth-delay product
    /// (at least one frame) at both ends.
    pub fn symmetric(rate_bps: f64, rtt: Duration, per: f64, flows: Vec<FlowSpec>, seed: u64) -> Self {
        let coding = CtcpConfig::default();
        let capacity = bdp_packets(rate_bps, rtt, coding.symbol_size + FRAME_HEADER_BYTES);
        let forward = LinkConfig {
            rate_bps,
            one_way_delay: rtt / 2,
            per,
            queue_capacity: capacity,
        };
        let reverse = LinkConfig { per: 0.0, ..forward };
        let rwnd = 2 * bdp_packets(rate_bps, rtt, coding.symbol_size + FRAME_HEADER_BYTES) as u64;
        Self {
            forward,
            reverse,
            flows,
            seed,
            coding,
            cc: CcParams::default(),
            tcp_rwnd: Some(rwnd),
            duration_cap: Duration::from_secs(600),
            record_trace: false,
            verify_payload: true,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.flows.is_empty() {
            return Err(ScenarioError::NoFlows);
        }
        self.forward.validate().map_err(ScenarioError::Forward)?;
        self.reverse.validate().map_err(ScenarioError::Reverse)?;
        if self.coding.generation_size == 0 || self.coding.symbol_size == 0 {
            return Err(ScenarioError::Coding);
        }
        Ok(())
    }

    pub fn rtt(&self) -> Duration {
        self.forward.one_way_delay + self.reverse.one_way_delay
    }
}

/// Bandwidth-delay product in frames of `frame_bytes`, at least 1.
pub fn bdp_packets(rate_bps: f64, rtt: Duration, frame_bytes: usize) -> usize {
    let bytes = rate_bps * rtt.as_secs_f64() / 8.0;
    ((bytes / frame_bytes as f64).round() as usize).max(1)
}

struct FlowRuntime {
    index: u32,
    spec: FlowSpec,
    data: AppData,
    sender: Box<dyn FlowSender>,
    receiver: Box<dyn FlowReceiver>,
    start: SimTime,
    pending_timer: Option<SimTime>,
    pending_credit: Option<SimTime>,
    next_offset: u64,
    payload_ok: bool,
    last_delivery: Option<SimTime>,
    sender_done: Option<SimTime>,
    frames_received: u64,
    acks_received: u64,
    cwnd_samples: Vec<(SimTime, f64)>,
    deliveries: Vec<(SimTime, u64)>,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    queue: EventQueue,
    links: [Link; 2],
    flows: Vec<FlowRuntime>,
    now: SimTime,
    events: u64,
}

/// Runs a scenario until every transfer finishes or the duration cap passes.
pub fn run(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    scenario.validate()?;
    let seed = scenario.seed;
    let links = [
        Link::new(scenario.forward, stream(seed, StreamLabel::Link(FORWARD as u32))),
        Link::new(scenario.reverse, stream(seed, StreamLabel::Link(REVERSE as u32))),
    ];
    let flows = scenario
        .flows
        .iter()
        .enumerate()
        .map(|(i, spec)| build_flow(scenario, i as u32, *spec))
        .collect();
    let mut sim = Sim {
        scenario,
        queue: EventQueue::new(),
        links,
        flows,
        now: SimTime::ZERO,
        events: 0,
    };
    for (i, spec) in scenario.flows.iter().enumerate() {
        sim.queue
            .schedule(SimTime::from_duration(spec.start), Action::FlowStart(i));
    }
    Ok(sim.run())
}

fn build_flow(scenario: &Scenario, index: u32, spec: FlowSpec) -> FlowRuntime {
    let data = AppData::new(scenario.seed, index, spec.bytes);
    let (sender, receiver): (Box<dyn FlowSender>, Box<dyn FlowReceiver>) = if spec.variant.is_coded()
    {
        (
            Box::new(CtcpSender::new(
                index,
                spec.variant,
                scenario.cc,
                scenario.coding.clone(),
                data.clone(),
                scenario.seed,
            )),
            Box::new(CtcpReceiver::new(index, &scenario.coding, spec.bytes)),
        )
    } else {
        let mss = scenario.coding.symbol_size;
        (
            Box::new(TcpSender::new(
                index,
                spec.variant,
                scenario.cc,
                mss,
                scenario.tcp_rwnd,
                data.clone(),
            )),
            Box::new(TcpReceiver::new(index, mss, spec.bytes)),
        )
    };
    FlowRuntime {
        index,
        spec,
        data,
        sender,
        receiver,
        start: SimTime::from_duration(spec.start),
        pending_timer: None,
        pending_credit: None,
        next_offset: 0,
        payload_ok: true,
        last_delivery: None,
        sender_done: None,
        frames_received: 0,
        acks_received: 0,
        cwnd_samples: Vec::new(),
        deliveries: Vec::new(),
    }
}

impl Sim<'_> {
    fn all_complete(&self) -> bool {
        self.flows
            .iter()
            .all(|f| f.receiver.is_complete() && f.sender_done.is_some())
    }

    fn run(mut self) -> RunResult {
        let cap = SimTime::from_duration(self.scenario.duration_cap);
        let mut capped = false;
        while !self.all_complete() {
            let Some(ev) = self.queue.pop() else { break };
            if ev.time > cap {
                capped = true;
                break;
            }
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            self.events += 1;
            match ev.action {
                Action::FlowStart(i) => {
                    let f = &mut self.flows[i];
                    f.sender.start(self.now);
                    if f.sender.is_done() {
                        f.sender_done = Some(self.now);
                    }
                    self.sample_cwnd(i);
                    self.pump(i);
                }
                Action::Arrival { link, packet } => self.on_arrival(link, packet),
                Action::Timer(i) => self.on_timer(i),
                Action::SendCredit(i) => {
                    if self.flows[i].pending_credit == Some(self.now) {
                        self.flows[i].pending_credit = None;
                        self.pump(i);
                    }
                }
            }
        }
        let incomplete = !self.flows.iter().all(|f| f.receiver.is_complete());
        let end_time = if capped || incomplete {
            cap.max(self.now)
        } else {
            self.now
        };
        if incomplete {
            debug!("run stopped at {:?} with unfinished flows", end_time);
        }
        let flows = self
            .flows
            .into_iter()
            .map(|f| finish_flow(f, end_time))
            .collect();
        RunResult {
            flows,
            links: [self.links[0].stats(), self.links[1].stats()],
            end_time,
            events: self.events,
            incomplete,
        }
    }

    fn send(&mut self, link: usize, bytes: usize, packet: Packet) {
        if let Transmit::Arrives(at) = self.links[link].transmit(bytes, self.now) {
            self.queue.schedule(at, Action::Arrival { link, packet });
        }
    }

    fn pump(&mut self, i: usize) {
        while let Some(frame) = self.flows[i].sender.next_frame(self.now) {
            let bytes = frame.wire_bytes();
            self.send(FORWARD, bytes, Packet::Data(frame));
        }
        let f = &mut self.flows[i];
        if let Some(t) = f.sender.wake_at() {
            if f.pending_credit.is_none_or(|p| t < p) {
                f.pending_credit = Some(t);
                self.queue.schedule(t, Action::SendCredit(i));
            }
        }
        self.arm_timer(i);
    }

    fn arm_timer(&mut self, i: usize) {
        let f = &mut self.flows[i];
        if let Some(d) = f.sender.timer_deadline() {
            if f.pending_timer.is_none_or(|p| d < p) {
                f.pending_timer = Some(d);
                self.queue.schedule(d, Action::Timer(i));
            }
        }
    }

    fn sample_cwnd(&mut self, i: usize) {
        if !self.scenario.record_trace {
            return;
        }
        let f = &mut self.flows[i];
        let cwnd = f.sender.cc().cwnd();
        if f.cwnd_samples.last().is_none_or(|&(_, c)| c != cwnd) {
            f.cwnd_samples.push((self.now, cwnd));
        }
    }

    fn on_arrival(&mut self, link: usize, packet: Packet) {
        let i = packet.flow() as usize;
        match packet {
            Packet::Data(frame) => {
                self.links[link].delivered(frame.wire_bytes());
                let now = self.now;
                let verify = self.scenario.verify_payload;
                let record = self.scenario.record_trace;
                let f = &mut self.flows[i];
                f.frames_received += 1;
                let (ack, deliveries) = f.receiver.on_data(&frame, now);
                for d in deliveries {
                    if d.offset != f.next_offset
                        || (verify && f.data.chunk(d.offset, d.bytes.len()) != d.bytes)
                    {
                        f.payload_ok = false;
                    }
                    f.next_offset = d.offset + d.bytes.len() as u64;
                    f.last_delivery = Some(now);
                    if record {
                        f.deliveries.push((now, d.bytes.len() as u64));
                    }
                }
                self.send(REVERSE, ACK_FRAME_BYTES, Packet::Ack(ack));
            }
            Packet::Ack(ack) => {
                self.links[link].delivered(ACK_FRAME_BYTES);
                let f = &mut self.flows[i];
                f.acks_received += 1;
                f.sender.on_ack(&ack, self.now);
                if f.sender_done.is_none() && f.sender.is_done() {
                    f.sender_done = Some(self.now);
                }
                self.sample_cwnd(i);
                self.pump(i);
            }
        }
    }

    fn on_timer(&mut self, i: usize) {
        let f = &mut self.flows[i];
        if f.pending_timer != Some(self.now) {
            return;
        }
        f.pending_timer = None;
        match f.sender.timer_deadline() {
            Some(d) if d <= self.now => {
                f.sender.on_timeout(self.now);
                self.sample_cwnd(i);
                self.pump(i);
            }
            Some(_) => self.arm_timer(i),
            None => {}
        }
    }
}

fn finish_flow(f: FlowRuntime, end_time: SimTime) -> FlowStats {
    let delivered = f.receiver.delivered_bytes();
    let complete = f.receiver.is_complete();
    let until = if complete {
        f.last_delivery.unwrap_or(f.start)
    } else {
        end_time
    };
    let span = until.saturating_since(f.start).as_secs_f64();
    let goodput_bps = if span > 0.0 {
        delivered as f64 * 8.0 / span
    } else {
        0.0
    };
    FlowStats {
        flow_id: f.index,
        variant: f.spec.variant,
        transfer_bytes: f.spec.bytes,
        start: f.start,
        completion_time: f
            .sender_done
            .filter(|_| complete)
            .map(|t| t.saturating_since(f.start)),
        last_delivery: f.last_delivery,
        delivered_bytes: delivered,
        goodput_bps,
        complete,
        payload_verified: f.payload_ok && (!complete || f.next_offset == f.spec.bytes),
        sender: f.sender.counters(),
        frames_received: f.frames_received,
        acks_received: f.acks_received,
        p_hat: f.sender.loss_estimate(),
        decode_events: f.receiver.decode_events().to_vec(),
        cwnd_samples: f.cwnd_samples,
        deliveries: f.deliveries,
    }
}

