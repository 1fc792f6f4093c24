use std::collections::VecDeque;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub rate_bps: f64,
    pub one_way_delay: Duration,
    /// Independent per-frame erasure probability.
    pub per: f64,
    /// Frames the queue holds, counting the one being serialized.
    pub queue_capacity: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkConfigError {
    #[error("link rate must be positive and finite, got {0}")]
    Rate(f64),
    #[error("erasure probability must be in [0, 1), got {0}")]
    Per(f64),
    #[error("queue capacity must be at least 1")]
    QueueCapacity,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkConfigError> {
        if !(self.rate_bps.is_finite() && self.rate_bps > 0.0) {
            return Err(LinkConfigError::Rate(self.rate_bps));
        }
        if !(0.0..1.0).contains(&self.per) {
            return Err(LinkConfigError::Per(self.per));
        }
        if self.queue_capacity == 0 {
            return Err(LinkConfigError::QueueCapacity);
        }
        Ok(())
    }

    pub fn serialization(&self, bytes: usize) -> Duration {
        Duration::from_nanos((bytes as f64 * 8.0 * 1e9 / self.rate_bps).round() as u64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub offered: u64,
    pub erased: u64,
    pub queue_dropped: u64,
    pub delivered: u64,
    pub bytes_delivered: u64,
}

impl LinkStats {
    /// Frames accepted by the queue and not yet delivered.
    pub fn in_transit(&self) -> u64 {
        self.offered - self.erased - self.queue_dropped - self.delivered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmit {
    Arrives(SimTime),
    Erased,
    Dropped,
}

/// A unidirectional link: erasure, then a drop-tail FIFO feeding a
/// fixed-rate serializer, then propagation delay.
#[derive(Debug)]
pub struct Link {
    cfg: LinkConfig,
    rng: ChaCha8Rng,
    busy_until: SimTime,
    departures: VecDeque<SimTime>,
    stats: LinkStats,
}

impl Link {
    pub fn new(cfg: LinkConfig, rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            rng,
            busy_until: SimTime::ZERO,
            departures: VecDeque::new(),
            stats: LinkStats::default(),
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Frames queued or in service at `now`.
    pub fn occupancy(&mut self, now: SimTime) -> usize {
        while self.departures.front().is_some_and(|&t| t <= now) {
            self.departures.pop_front();
        }
        self.departures.len()
    }

    pub fn transmit(&mut self, bytes: usize, now: SimTime) -> Transmit {
        self.stats.offered += 1;
        let draw: f64 = self.rng.gen();
        if draw < self.cfg.per {
            self.stats.erased += 1;
            return Transmit::Erased;
        }
        if self.occupancy(now) >= self.cfg.queue_capacity {
            self.stats.queue_dropped += 1;
            return Transmit::Dropped;
        }
        let start = self.busy_until.max(now);
        let done = start + self.cfg.serialization(bytes);
        self.busy_until = done;
        self.departures.push_back(done);
        Transmit::Arrives(done + self.cfg.one_way_delay)
    }

    pub fn delivered(&mut self, bytes: usize) {
        self.stats.delivered += 1;
        self.stats.bytes_delivered += bytes as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamLabel};

    fn link(per: f64, cap: usize) -> Link {
        let cfg = LinkConfig {
            rate_bps: 10e6,
            one_way_delay: Duration::from_millis(250),
            per,
            queue_capacity: cap,
        };
        cfg.validate().unwrap();
        Link::new(cfg, stream(9, StreamLabel::Link(0)))
    }

    #[test]
    fn full_frame_serialization() {
        let l = link(0.0, 1);
        assert_eq!(l.config().serialization(1500), Duration::from_micros(1200));
        let mut l = l;
        assert_eq!(
            l.transmit(1500, SimTime::ZERO),
            Transmit::Arrives(SimTime::from_secs_f64(0.2512))
        );
    }

    #[test]
    fn back_to_back_into_single_slot_queue() {
        let mut l = link(0.0, 1);
        assert!(matches!(l.transmit(1500, SimTime::ZERO), Transmit::Arrives(_)));
        assert_eq!(
            l.transmit(1500, SimTime::from_secs_f64(0.0006)),
            Transmit::Dropped
        );
        assert!(matches!(
            l.transmit(1500, SimTime::from_secs_f64(0.0012)),
            Transmit::Arrives(_)
        ));
        assert_eq!(l.stats().queue_dropped, 1);
    }

    #[test]
    fn fifo_departures_are_spaced() {
        let mut l = link(0.0, 10);
        let a = l.transmit(1000, SimTime::ZERO);
        let b = l.transmit(1000, SimTime::ZERO);
        match (a, b) {
            (Transmit::Arrives(a), Transmit::Arrives(b)) => {
                assert_eq!(b - a, Duration::from_micros(800))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_bounds() {
        let ok = LinkConfig {
            rate_bps: 1e6,
            one_way_delay: Duration::ZERO,
            per: 0.0,
            queue_capacity: 1,
        };
        assert!(ok.validate().is_ok());
        assert_eq!(
            LinkConfig { per: 1.0, ..ok }.validate(),
            Err(LinkConfigError::Per(1.0))
        );
        assert_eq!(
            LinkConfig { queue_capacity: 0, ..ok }.validate(),
            Err(LinkConfigError::QueueCapacity)
        );
        assert!(LinkConfig { rate_bps: 0.0, ..ok }.validate().is_err());
    }
}
