//! Sender and receiver state machines.
//!
//! Two transports share the same framing: the network-coded one used by the
//! CTCP variants ([`ctcp`]) and a loss-based baseline with per-segment
//! retransmission ([`tcp`]) used by Reno, Cubic and Hybla. Both are driven by
//! the simulator through [`FlowSender`] and [`FlowReceiver`].

pub mod ctcp;
pub mod tcp;

use std::time::Duration;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::codec::CodedPacket;
use crate::congestion::CcState;
use crate::rng::{self, StreamLabel};
use crate::time::SimTime;

pub use ctcp::{CtcpConfig, CtcpReceiver, CtcpSender};
pub use tcp::{TcpReceiver, TcpSender};

pub type FlowId = u32;

/// Header bytes of every data frame (flow, generation, kind/index,
/// timestamps, sequence number, lengths).
pub const FRAME_HEADER_BYTES: usize = 24;
/// Wire size of an acknowledgement frame.
pub const ACK_FRAME_BYTES: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFrame {
    pub flow_id: FlowId,
    pub sequence_number: u64,
    pub send_timestamp: SimTime,
    /// Number of source symbols in this frame's generation.
    pub generation_size: usize,
    /// Application bytes carried by the whole generation, before padding.
    pub generation_bytes: usize,
    pub packet: CodedPacket,
    /// Set on frames that resend data already sent once: repair frames of
    /// the coded transport, retransmitted segments of the baseline.
    pub retransmission: bool,
}

impl DataFrame {
    pub fn header_bytes(&self) -> usize {
        if self.packet.is_coded() {
            FRAME_HEADER_BYTES + self.generation_size
        } else {
            FRAME_HEADER_BYTES
        }
    }

    pub fn wire_bytes(&self) -> usize {
        self.header_bytes() + self.packet.payload.len()
    }

    pub fn generation_id(&self) -> u64 {
        self.packet.generation_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckFrame {
    pub flow_id: FlowId,
    pub generation_id: u64,
    pub rank_seen: usize,
    pub dofs_needed: usize,
    pub echo_timestamp: SimTime,
    pub echo_sequence: u64,
    pub highest_sequence_seen: u64,
    /// First generation (segment, for the baseline) not yet delivered.
    pub cumulative: u64,
}

/// Proactive coded packets to send after a generation's systematic phase so
/// that the expected number of delivered degrees of freedom reaches `k`.
pub fn redundancy_count(k: usize, p_hat: f64) -> usize {
    let p = p_hat.clamp(0.0, LossEstimator::MAX_ESTIMATE);
    let x = k as f64 * p / (1.0 - p);
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Frames to send for a deficit of `dofs` when each frame survives with
/// probability `1 - p_hat`.
pub fn repair_count(dofs: f64, p_hat: f64) -> usize {
    if dofs <= 0.0 {
        return 0;
    }
    let p = p_hat.clamp(0.0, LossEstimator::MAX_ESTIMATE);
    (dofs / (1.0 - p) - 1e-9).ceil().max(1.0) as usize
}

/// Windowed EWMA estimate of the forward-path loss probability, fed by
/// sequence gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimator {
    p_hat: f64,
    ewma_weight: f64,
    window: u64,
    counted_sent: u64,
    counted_lost: u64,
    primed: bool,
}

impl LossEstimator {
    pub const MAX_ESTIMATE: f64 = 0.9;

    pub fn new(ewma_weight: f64, window: u64) -> Self {
        Self {
            p_hat: 0.0,
            ewma_weight,
            window: window.max(1),
            counted_sent: 0,
            counted_lost: 0,
            primed: false,
        }
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn counted_sent(&self) -> u64 {
        self.counted_sent
    }

    pub fn counted_lost(&self) -> u64 {
        self.counted_lost
    }

    /// Accounts `covered` newly covered sequence numbers, `lost` of which
    /// were never acknowledged.
    pub fn record(&mut self, covered: u64, lost: u64) {
        debug_assert!(lost <= covered);
        self.counted_sent += covered;
        self.counted_lost += lost.min(covered);
        if self.counted_sent >= self.window {
            let ratio = self.counted_lost as f64 / self.counted_sent as f64;
            self.p_hat = if self.primed {
                (1.0 - self.ewma_weight) * self.p_hat + self.ewma_weight * ratio
            } else {
                ratio
            };
            self.p_hat = self.p_hat.clamp(0.0, Self::MAX_ESTIMATE);
            self.primed = true;
            self.counted_sent = 0;
            self.counted_lost = 0;
        }
    }
}

impl Default for LossEstimator {
    fn default() -> Self {
        Self::new(0.1, 100)
    }
}

/// Smoothed RTT, RTT variance and retransmission timeout.
#[derive(Debug, Clone, PartialEq)]
pub struct RtoEstimator {
    srtt: Option<Duration>,
    rttvar: Duration,
    rto: Duration,
    backoff: u32,
}

impl RtoEstimator {
    pub const MIN_RTO: Duration = Duration::from_millis(200);
    pub const MAX_RTO: Duration = Duration::from_secs(60);
    pub const INITIAL_RTO: Duration = Duration::from_secs(1);

    pub fn new() -> Self {
        Self {
            srtt: None,
            rttvar: Duration::ZERO,
            rto: Self::INITIAL_RTO,
            backoff: 0,
        }
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.srtt
    }

    pub fn rttvar(&self) -> Duration {
        self.rttvar
    }

    /// Base timeout, without exponential back-off.
    pub fn rto(&self) -> Duration {
        self.rto
    }

    /// Timeout to arm now, including back-off.
    pub fn current(&self) -> Duration {
        let factor = 1u32 << self.backoff.min(16);
        (self.rto * factor).min(Self::MAX_RTO)
    }

    pub fn update(&mut self, rtt: Duration) {
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = rtt / 2;
            }
            Some(srtt) => {
                let err = if srtt > rtt { srtt - rtt } else { rtt - srtt };
                self.rttvar = (self.rttvar * 3 + err) / 4;
                self.srtt = Some((srtt * 7 + rtt) / 8);
            }
        }
        let srtt = self.srtt.expect("just set");
        self.rto = (srtt + self.rttvar * 4).clamp(Self::MIN_RTO, Self::MAX_RTO);
        self.backoff = 0;
    }

    pub fn on_timeout(&mut self) {
        self.backoff = (self.backoff + 1).min(16);
    }
}

impl Default for RtoEstimator {
    fn default() -> Self {
        Self::new()
    }
}

/// The application byte stream of one flow, generated on demand from a seeded
/// stream so the receiver can check every delivered byte.
#[derive(Debug, Clone)]
pub struct AppData {
    seed: u64,
    flow_index: u32,
    len: u64,
}

impl AppData {
    pub fn new(seed: u64, flow_index: u32, len: u64) -> Self {
        Self {
            seed,
            flow_index,
            len,
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bytes `[offset, offset + len)`, truncated at the end of the stream.
    pub fn chunk(&self, offset: u64, len: usize) -> Vec<u8> {
        let end = (offset + len as u64).min(self.len);
        if offset >= end {
            return Vec::new();
        }
        let mut rng: ChaCha8Rng = rng::stream(self.seed, StreamLabel::Payload(self.flow_index));
        let word = offset / 4;
        rng.set_word_pos(word as u128);
        let skip = (offset % 4) as usize;
        let mut buf = vec![0u8; (end - offset) as usize + skip];
        rng.fill_bytes(&mut buf);
        buf.drain(..skip);
        buf
    }
}

/// Counters a sender exposes for statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderCounters {
    pub frames_sent: u64,
    pub coded_frames: u64,
    pub retransmissions: u64,
    pub wire_bytes: u64,
    pub header_bytes: u64,
    pub timeouts: u64,
    pub backoffs: u64,
    pub window_violations: u64,
}

pub trait FlowSender {
    fn start(&mut self, now: SimTime);
    /// Next frame the window allows, if any.
    fn next_frame(&mut self, now: SimTime) -> Option<DataFrame>;
    /// When `next_frame` last declined only because of pacing, the instant
    /// it will accept again.
    fn wake_at(&self) -> Option<SimTime> {
        None
    }
    fn on_ack(&mut self, ack: &AckFrame, now: SimTime);
    fn on_timeout(&mut self, now: SimTime);
    fn timer_deadline(&self) -> Option<SimTime>;
    /// All data acknowledged.
    fn is_done(&self) -> bool;
    fn in_flight(&self) -> usize;
    fn cc(&self) -> &CcState;
    fn loss_estimate(&self) -> f64;
    fn counters(&self) -> SenderCounters;
}

/// Application data released by a receiver, in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub offset: u64,
    pub bytes: Vec<u8>,
}

pub trait FlowReceiver {
    fn on_data(&mut self, frame: &DataFrame, now: SimTime) -> (AckFrame, Vec<Delivery>);
    fn delivered_bytes(&self) -> u64;
    fn is_complete(&self) -> bool;
    /// Generation decode instants (coded transport only).
    fn decode_events(&self) -> &[(SimTime, u64)];
}

pub(crate) fn coding_rng(seed: u64, flow_index: u32) -> ChaCha8Rng {
    rng::stream(seed, StreamLabel::Coding(flow_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn redundancy_examples() {
        assert_eq!(redundancy_count(32, 0.0), 0);
        assert_eq!(redundancy_count(32, 0.2), 8);
        assert_eq!(redundancy_count(16, 0.5), 16);
        assert_eq!(redundancy_count(32, 0.01), 1);
    }

    #[test]
    fn repair_examples() {
        assert_eq!(repair_count(2.0, 0.0), 2);
        assert_eq!(repair_count(2.0, 0.2), 3);
        assert_eq!(repair_count(0.0, 0.2), 0);
        assert_eq!(repair_count(0.2, 0.0), 1);
    }

    #[test]
    fn rto_first_sample() {
        let mut r = RtoEstimator::new();
        r.update(Duration::from_millis(500));
        assert_eq!(r.srtt(), Some(Duration::from_millis(500)));
        assert_eq!(r.rttvar(), Duration::from_millis(250));
        assert_eq!(r.rto(), Duration::from_millis(1500));
    }

    #[test]
    fn rto_converges_on_constant_samples() {
        let mut r = RtoEstimator::new();
        for _ in 0..200 {
            r.update(Duration::from_millis(50));
        }
        assert!(r.rttvar() < Duration::from_micros(10));
        assert_eq!(r.rto(), RtoEstimator::MIN_RTO);
        let mut r = RtoEstimator::new();
        for _ in 0..200 {
            r.update(Duration::from_millis(500));
        }
        assert!(r.rto() < Duration::from_millis(501));
    }

    #[test]
    fn rto_spike_moves_srtt_by_an_eighth() {
        let mut r = RtoEstimator::new();
        r.update(Duration::from_millis(400));
        r.update(Duration::from_millis(800));
        assert_eq!(r.srtt(), Some(Duration::from_millis(450)));
    }

    #[test]
    fn rto_backoff_doubles_and_caps() {
        let mut r = RtoEstimator::new();
        r.update(Duration::from_millis(500));
        r.on_timeout();
        assert_eq!(r.current(), Duration::from_secs(3));
        for _ in 0..20 {
            r.on_timeout();
        }
        assert_eq!(r.current(), RtoEstimator::MAX_RTO);
        r.update(Duration::from_millis(500));
        assert_eq!(r.current(), r.rto());
    }

    #[test]
    fn loss_estimator_gap_counting() {
        let mut e = LossEstimator::new(0.1, 100);
        e.record(100, 3);
        assert!((e.p_hat() - 0.03).abs() < 1e-12);
        e.record(50, 0);
        assert_eq!(e.counted_sent(), 50);
        e.record(50, 10);
        assert!((e.p_hat() - (0.9 * 0.03 + 0.1 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn loss_estimator_tracks_bernoulli_rate() {
        for (p, seed) in [(0.05, 1u64), (0.1, 2), (0.2, 3)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut e = LossEstimator::default();
            for _ in 0..20_000 {
                let lost = rng.gen::<f64>() < p;
                e.record(1, lost as u64);
            }
            assert!((e.p_hat() - p).abs() <= 0.03, "p={p} p_hat={}", e.p_hat());
        }
    }

    #[test]
    fn loss_estimator_clamps() {
        let mut e = LossEstimator::new(0.1, 10);
        e.record(10, 10);
        assert_eq!(e.p_hat(), LossEstimator::MAX_ESTIMATE);
    }

    #[test]
    fn app_data_random_access_is_consistent() {
        let d = AppData::new(11, 0, 10_000);
        let whole = d.chunk(0, 10_000);
        assert_eq!(d.chunk(1000, 1000), whole[1000..2000].to_vec());
        assert_eq!(d.chunk(1001, 7), whole[1001..1008].to_vec());
        assert_eq!(d.chunk(9_990, 100).len(), 10);
        assert!(d.chunk(10_000, 5).is_empty());
    }
}
