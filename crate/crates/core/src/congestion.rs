//! Window-based congestion controllers.
//!
//! All variants share one state machine shape: acknowledgements grow the
//! window, loss events shrink it, and a retransmission timeout collapses it to
//! the floor and re-enters slow start. The window is real-valued and counted
//! in packets.
//!
//! The CTCP variants back off by `rtt_min / rtt`: a loss seen while the path
//! shows no queueing delay is treated as a random erasure and leaves the
//! window untouched, while a loss seen with an inflated RTT shrinks the window
//! by exactly the share of the RTT that is queueing. CTCPv1 grows like Reno;
//! CTCPv2 grows with the H-TCP increase function of the time since the last
//! back-off. Reno, Cubic and Hybla are window-dynamics models of the
//! respective loss-based algorithms.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    CtcpV1,
    CtcpV2,
    Reno,
    Cubic,
    Hybla,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::CtcpV1,
        Variant::CtcpV2,
        Variant::Reno,
        Variant::Cubic,
        Variant::Hybla,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::CtcpV1 => "ctcp_v1",
            Variant::CtcpV2 => "ctcp_v2",
            Variant::Reno => "reno",
            Variant::Cubic => "cubic",
            Variant::Hybla => "hybla",
        }
    }

    /// Whether the variant runs over the network-coded transport.
    pub fn is_coded(self) -> bool {
        matches!(self, Variant::CtcpV1 | Variant::CtcpV2)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown congestion control variant `{0}`")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ctcp_v1" | "ctcpv1" => Ok(Variant::CtcpV1),
            "ctcp_v2" | "ctcpv2" => Ok(Variant::CtcpV2),
            "reno" => Ok(Variant::Reno),
            "cubic" => Ok(Variant::Cubic),
            "hybla" => Ok(Variant::Hybla),
            _ => Err(UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
}

/// One per-packet round-trip measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RttSample {
    pub rtt: Duration,
    pub timestamp: SimTime,
}

impl RttSample {
    pub fn new(rtt: Duration, timestamp: SimTime) -> Self {
        debug_assert!(!rtt.is_zero(), "rtt samples must be positive");
        Self { rtt, timestamp }
    }
}

/// H-TCP increase function parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtcpParams {
    /// Low-speed regime length after a back-off.
    pub delta_l: Duration,
    pub linear: f64,
    pub quadratic: f64,
}

impl Default for HtcpParams {
    fn default() -> Self {
        Self {
            delta_l: Duration::from_secs(1),
            linear: 10.0,
            quadratic: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicParams {
    /// Scaling constant, packets per second cubed.
    pub c: f64,
    pub beta: f64,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self { c: 0.4, beta: 0.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcParams {
    pub initial_cwnd: f64,
    pub cwnd_floor: f64,
    /// A loss whose RTT is within this fraction above `rtt_min` counts as
    /// seen at `rtt_min`.
    pub rtt_equality_tolerance: f64,
    pub htcp: HtcpParams,
    pub cubic: CubicParams,
    pub hybla_rtt0: Duration,
}

impl Default for CcParams {
    fn default() -> Self {
        Self {
            initial_cwnd: 2.0,
            cwnd_floor: 2.0,
            rtt_equality_tolerance: 0.05,
            htcp: HtcpParams::default(),
            cubic: CubicParams::default(),
            hybla_rtt0: Duration::from_millis(25),
        }
    }
}

/// H-TCP additive-increase factor for a given time since the last back-off.
pub fn htcp_alpha(elapsed_since_congestion: Duration, params: &HtcpParams) -> f64 {
    if elapsed_since_congestion <= params.delta_l {
        return 1.0;
    }
    let d = (elapsed_since_congestion - params.delta_l).as_secs_f64();
    1.0 + params.linear * d + params.quadratic * d * d
}

/// Time for the cubic curve to climb back to `w_max` after a back-off.
pub fn cubic_k(w_max: f64, params: &CubicParams) -> f64 {
    (w_max * (1.0 - params.beta) / params.c).cbrt()
}

/// Window on the cubic curve anchored at `w_max`, `time_since_epoch` after
/// the back-off.
pub fn cubic_window(time_since_epoch: Duration, w_max: f64, params: &CubicParams) -> f64 {
    let k = cubic_k(w_max, params);
    let t = time_since_epoch.as_secs_f64() - k;
    params.c * t * t * t + w_max
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct CubicEpoch {
    start: Option<SimTime>,
    w_max: f64,
    k: f64,
    origin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcState {
    variant: Variant,
    params: CcParams,
    cwnd: f64,
    phase: Phase,
    rtt_min: Option<Duration>,
    srtt: Option<Duration>,
    ssthresh: f64,
    last_congestion_time: SimTime,
    cubic: CubicEpoch,
    last_beta: Option<f64>,
}

impl CcState {
    pub fn new(variant: Variant, params: CcParams, now: SimTime) -> Self {
        Self {
            variant,
            cwnd: params.initial_cwnd.max(params.cwnd_floor),
            params,
            phase: Phase::SlowStart,
            rtt_min: None,
            srtt: None,
            ssthresh: f64::INFINITY,
            last_congestion_time: now,
            cubic: CubicEpoch::default(),
            last_beta: None,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &CcParams {
        &self.params
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn rtt_min(&self) -> Option<Duration> {
        self.rtt_min
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.srtt
    }

    pub fn last_congestion_time(&self) -> SimTime {
        self.last_congestion_time
    }

    /// Back-off factor applied by the most recent loss event.
    pub fn last_beta(&self) -> Option<f64> {
        self.last_beta
    }

    /// Overrides the window, e.g. to test a specific operating point.
    pub fn set_cwnd(&mut self, cwnd: f64) {
        self.cwnd = cwnd.max(self.params.cwnd_floor);
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Shrinks the window to the amount actually in flight. Used before a
    /// reduction so that an unused window is not the base of the back-off.
    pub fn limit_to_flight(&mut self, flight: usize) {
        self.cwnd = self.cwnd.min(flight as f64).max(self.params.cwnd_floor);
    }

    /// Records an RTT measurement without growing the window.
    pub fn observe_rtt(&mut self, sample: RttSample) {
        let rtt = sample.rtt;
        self.rtt_min = Some(self.rtt_min.map_or(rtt, |m| m.min(rtt)));
        self.srtt = Some(match self.srtt {
            None => rtt,
            Some(s) => (s * 7 + rtt) / 8,
        });
    }

    fn hybla_rho(&self) -> f64 {
        let rtt = self.rtt_min.or(self.srtt).unwrap_or(self.params.hybla_rtt0);
        (rtt.as_secs_f64() / self.params.hybla_rtt0.as_secs_f64()).max(1.0)
    }

    /// Processes the acknowledgement of one packet.
    pub fn on_ack(&mut self, sample: RttSample) {
        self.observe_rtt(sample);
        let now = sample.timestamp;
        match self.phase {
            Phase::SlowStart => {
                let inc = match self.variant {
                    Variant::Hybla => 2f64.powf(self.hybla_rho()) - 1.0,
                    _ => 1.0,
                };
                self.cwnd += inc;
                if self.cwnd >= self.ssthresh {
                    self.cwnd = self.ssthresh.max(self.params.cwnd_floor);
                    self.phase = Phase::CongestionAvoidance;
                }
            }
            Phase::CongestionAvoidance => match self.variant {
                Variant::CtcpV1 | Variant::Reno => self.cwnd += 1.0 / self.cwnd,
                Variant::CtcpV2 => {
                    let elapsed = now.saturating_since(self.last_congestion_time);
                    self.cwnd += htcp_alpha(elapsed, &self.params.htcp) / self.cwnd;
                }
                Variant::Hybla => {
                    let rho = self.hybla_rho();
                    self.cwnd += rho * rho / self.cwnd;
                }
                Variant::Cubic => self.cubic_on_ack(now),
            },
        }
    }

    fn cubic_on_ack(&mut self, now: SimTime) {
        let p = self.params.cubic;
        if self.cubic.start.is_none() {
            self.cubic.start = Some(now);
            if self.cwnd < self.cubic.w_max {
                self.cubic.k = ((self.cubic.w_max - self.cwnd) / p.c).cbrt();
                self.cubic.origin = self.cubic.w_max;
            } else {
                self.cubic.k = 0.0;
                self.cubic.origin = self.cwnd;
            }
        }
        let start = self.cubic.start.expect("epoch started");
        let t = now.saturating_since(start).as_secs_f64() - self.cubic.k;
        let target = (self.cubic.origin + p.c * t * t * t).clamp(self.cwnd, 1.5 * self.cwnd);
        self.cwnd += (target - self.cwnd) / self.cwnd;
    }

    /// Reacts to a loss attributed to congestion (or, for the CTCP variants,
    /// possibly to a random erasure: the RTT decides). Returns the applied
    /// multiplicative factor.
    pub fn on_congestion_loss(&mut self, rtt_at_loss: Duration, now: SimTime) -> f64 {
        let floor = self.params.cwnd_floor;
        let beta = match self.variant {
            Variant::CtcpV1 | Variant::CtcpV2 => {
                let rtt_min = self.rtt_min.unwrap_or(rtt_at_loss);
                let rtt = rtt_at_loss.max(rtt_min);
                let threshold = rtt_min.as_secs_f64() * (1.0 + self.params.rtt_equality_tolerance);
                if rtt_min.is_zero() || rtt.as_secs_f64() <= threshold {
                    1.0
                } else {
                    rtt_min.as_secs_f64() / rtt.as_secs_f64()
                }
            }
            Variant::Reno | Variant::Hybla => 0.5,
            Variant::Cubic => self.params.cubic.beta,
        };

        if self.variant == Variant::Cubic {
            let w_max = self.cwnd;
            self.cubic = CubicEpoch {
                start: Some(now),
                w_max,
                k: cubic_k(w_max, &self.params.cubic),
                origin: w_max,
            };
        }
        if beta < 1.0 {
            self.cwnd = (self.cwnd * beta).max(floor);
            self.last_congestion_time = now;
        }
        self.ssthresh = self.cwnd;
        self.phase = Phase::CongestionAvoidance;
        self.last_beta = Some(beta);
        beta
    }

    pub fn on_timeout(&mut self, now: SimTime) {
        let floor = self.params.cwnd_floor;
        if self.variant == Variant::Cubic {
            self.cubic = CubicEpoch {
                start: None,
                w_max: self.cwnd,
                k: 0.0,
                origin: 0.0,
            };
        }
        self.ssthresh = (self.cwnd / 2.0).max(floor);
        self.cwnd = floor;
        self.phase = Phase::SlowStart;
        self.last_congestion_time = now;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    fn sample(rtt_ms: u64, at_s: f64) -> RttSample {
        RttSample::new(ms(rtt_ms), SimTime::from_secs_f64(at_s))
    }

    fn state(variant: Variant) -> CcState {
        CcState::new(variant, CcParams::default(), SimTime::ZERO)
    }

    #[test]
    fn ctcp_v1_slow_start_adds_one() {
        let mut s = state(Variant::CtcpV1);
        s.set_cwnd(10.0);
        s.on_ack(sample(500, 1.0));
        assert_eq!(s.cwnd(), 11.0);
    }

    #[test]
    fn ctcp_v1_avoidance_adds_inverse_cwnd() {
        let mut s = state(Variant::CtcpV1);
        s.set_cwnd(10.0);
        s.set_phase(Phase::CongestionAvoidance);
        s.on_ack(sample(500, 1.0));
        assert_relative_eq!(s.cwnd(), 10.1, epsilon = 1e-12);
    }

    #[test]
    fn hybla_avoidance_scales_by_rho_squared() {
        let mut s = state(Variant::Hybla);
        s.set_cwnd(100.0);
        s.set_phase(Phase::CongestionAvoidance);
        s.on_ack(sample(500, 1.0));
        assert_relative_eq!(s.cwnd(), 104.0, epsilon = 1e-9);
    }

    #[test]
    fn hybla_slow_start_increment() {
        let mut s = state(Variant::Hybla);
        s.observe_rtt(sample(50, 0.0));
        s.on_ack(sample(50, 0.1));
        // rho = 2: 2^2 - 1 = 3 per ack.
        assert_relative_eq!(s.cwnd(), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn ctcp_no_reduction_at_rtt_min() {
        let mut s = state(Variant::CtcpV1);
        s.observe_rtt(sample(500, 0.5));
        s.set_cwnd(100.0);
        let beta = s.on_congestion_loss(ms(500), SimTime::from_secs_f64(2.0));
        assert_eq!(beta, 1.0);
        assert_eq!(s.cwnd(), 100.0);
        assert_eq!(s.phase(), Phase::CongestionAvoidance);
        // A random loss is not a congestion event for the H-TCP clock.
        assert_eq!(s.last_congestion_time(), SimTime::ZERO);
    }

    #[test]
    fn ctcp_backoff_by_rtt_ratio() {
        let mut s = state(Variant::CtcpV1);
        s.observe_rtt(sample(500, 0.5));
        s.set_cwnd(100.0);
        let beta = s.on_congestion_loss(ms(1000), SimTime::from_secs_f64(2.0));
        assert_relative_eq!(beta, 0.5);
        assert_relative_eq!(s.cwnd(), 50.0);
        assert_eq!(s.ssthresh(), s.cwnd());
        assert_eq!(s.last_congestion_time(), SimTime::from_secs_f64(2.0));
    }

    #[test]
    fn ctcp_rtt_below_min_is_clamped() {
        let mut s = state(Variant::CtcpV2);
        s.observe_rtt(sample(500, 0.5));
        s.set_cwnd(40.0);
        assert_eq!(s.on_congestion_loss(ms(300), SimTime::from_secs_f64(1.0)), 1.0);
        assert_eq!(s.cwnd(), 40.0);
    }

    #[test]
    fn ctcp_within_tolerance_is_random_loss() {
        let mut s = state(Variant::CtcpV1);
        s.observe_rtt(sample(500, 0.5));
        s.set_cwnd(80.0);
        assert_eq!(s.on_congestion_loss(ms(524), SimTime::from_secs_f64(1.0)), 1.0);
        let beta = s.on_congestion_loss(ms(530), SimTime::from_secs_f64(1.0));
        assert_relative_eq!(beta, 500.0 / 530.0);
    }

    #[test]
    fn ctcp_v2_floor_preserved() {
        let mut s = state(Variant::CtcpV2);
        s.observe_rtt(sample(100, 0.1));
        s.set_cwnd(2.0);
        s.on_congestion_loss(ms(900), SimTime::from_secs_f64(1.0));
        assert_eq!(s.cwnd(), 2.0);
    }

    #[test]
    fn loss_based_backoffs() {
        for (variant, expect) in [
            (Variant::Reno, 50.0),
            (Variant::Hybla, 50.0),
            (Variant::Cubic, 70.0),
        ] {
            let mut s = state(variant);
            s.observe_rtt(sample(100, 0.1));
            s.set_cwnd(100.0);
            s.on_congestion_loss(ms(100), SimTime::from_secs_f64(1.0));
            assert_relative_eq!(s.cwnd(), expect);
            assert_eq!(s.phase(), Phase::CongestionAvoidance);
        }
    }

    #[test]
    fn timeout_collapses_to_floor() {
        let mut s = state(Variant::Reno);
        s.set_cwnd(100.0);
        s.on_timeout(SimTime::ZERO);
        assert_eq!(s.cwnd(), 2.0);
        assert_eq!(s.ssthresh(), 50.0);
        assert_eq!(s.phase(), Phase::SlowStart);
        s.on_ack(sample(100, 0.2));
        assert_eq!(s.cwnd(), 3.0);

        let mut s = state(Variant::CtcpV1);
        s.on_timeout(SimTime::ZERO);
        assert_eq!(s.cwnd(), 2.0);
        assert_eq!(s.ssthresh(), 2.0);
    }

    #[test]
    fn slow_start_stops_at_ssthresh() {
        let mut s = state(Variant::Reno);
        s.set_cwnd(40.0);
        s.on_timeout(SimTime::ZERO);
        for i in 0..30 {
            s.on_ack(sample(100, 0.1 + i as f64 * 0.001));
        }
        assert_eq!(s.phase(), Phase::CongestionAvoidance);
        assert!(s.cwnd() < 21.0 + 1.0);
    }

    #[test]
    fn htcp_alpha_examples() {
        let p = HtcpParams::default();
        assert_eq!(htcp_alpha(ms(500), &p), 1.0);
        assert_relative_eq!(htcp_alpha(ms(2000), &p), 11.25);
        assert_eq!(htcp_alpha(ms(1000), &p), 1.0);
        assert_relative_eq!(htcp_alpha(ms(1001), &p), 1.0, epsilon = 0.011);
    }

    #[test]
    fn ctcp_v2_uses_htcp_increase() {
        let mut s = state(Variant::CtcpV2);
        s.set_cwnd(10.0);
        s.set_phase(Phase::CongestionAvoidance);
        s.on_ack(sample(500, 2.0));
        assert_relative_eq!(s.cwnd(), 10.0 + 11.25 / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn cubic_window_examples() {
        let p = CubicParams::default();
        let k = cubic_k(100.0, &p);
        // Cube-root oracle: (100 * 0.3 / 0.4)^(1/3) = 75^(1/3).
        assert_relative_eq!(k, 4.217163326508746, epsilon = 1e-12);
        assert_relative_eq!(
            cubic_window(Duration::from_secs_f64(k), 100.0, &p),
            100.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(cubic_window(Duration::ZERO, 100.0, &p), 70.0, epsilon = 1e-9);
    }

    #[test]
    fn cubic_grows_back_towards_w_max() {
        let mut s = state(Variant::Cubic);
        s.observe_rtt(sample(100, 0.0));
        s.set_cwnd(100.0);
        s.on_congestion_loss(ms(100), SimTime::ZERO);
        let mut t = 0.0;
        while t < 4.2 {
            t += 0.01;
            s.on_ack(sample(100, t));
        }
        assert!(s.cwnd() > 95.0 && s.cwnd() <= 100.5, "cwnd {}", s.cwnd());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("vegas".parse::<Variant>().is_err());
    }
}
