//! Experiment configuration.
//!
//! The file format is flat TOML: every key is optional and falls back to the
//! default below. Example:
//!
//! ```toml
//! variants = ["ctcp_v2", "hybla"]
//! per = [0.0, 0.05, 0.2]
//! rtt_ms = [500]
//! link_rate_mbps = 10.0
//! transfer_bytes = 20000000
//! repetitions = 5
//! base_seed = 1
//! ```
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `variants` | all five | congestion control variants of a sweep |
//! | `per` | 0, 0.5, 1, 2.5, 5, 10, 20 % | packet erasure rates of a sweep |
//! | `rtt_ms` | 500, 600, 700, 800 | round-trip propagation delays of a sweep |
//! | `link_rate_mbps` | 10 | bottleneck rate of sweeps and traces |
//! | `transfer_bytes` | 20 000 000 | bytes per sweep transfer |
//! | `repetitions` | 5 | runs per cell |
//! | `base_seed` | 1 | seed of row 0; row `i` uses `base_seed + i` |
//! | `generation_size` | 32 | symbols per generation |
//! | `symbol_size` | 1000 | payload bytes per frame |
//! | `queue_capacity` | one BDP | forward queue, in frames |
//! | `ack_loss` | false | apply the PER to the ack direction too |
//! | `duration_cap_s` | 600 | virtual-time limit per run |
//! | `fairness_rate_mbps` | 5 | bottleneck rate of fairness runs |
//! | `fairness_per` | 0, 0.5, 1, 2.5, 5 % | erasure rates of fairness runs |
//! | `fairness_rtt_ms` | 500, 800 | round trips of fairness runs |
//! | `fairness_duration_s` | 300 | length of each fairness run |
//! | `fairness_test` | `ctcp_v2` | variant competing with the baseline |
//! | `fairness_baseline` | `cubic` | variant present in both series |
//! | `trace_variant` | `ctcp_v2` | variant of a trace |
//! | `trace_per` | 0.005 | erasure rate of a trace |
//! | `trace_rtt_ms` | 500 | round trip of a trace |
//! | `trace_bytes` | 100 000 000 | bytes of a trace transfer |
//! | `trace_bin_s` | 1 | width of a trace bin |

use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use ctcp::congestion::Variant;
use ctcp::netsim::{bdp_packets, FlowSpec, Scenario};
use ctcp::transport::FRAME_HEADER_BYTES;
use serde::{Deserialize, Deserializer};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("`{0}` must not be empty")]
    EmptyList(&'static str),
    #[error("repetitions must be at least 1")]
    Repetitions,
    #[error("`{key}` value {value} is outside [0, 1)")]
    Per { key: &'static str, value: f64 },
    #[error("`{0}` must be positive")]
    NonPositive(&'static str),
}

fn variant_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Variant>, D::Error> {
    let names = Vec::<String>::deserialize(d)?;
    names
        .iter()
        .map(|n| Variant::from_str(n).map_err(serde::de::Error::custom))
        .collect()
}

fn variant<'de, D: Deserializer<'de>>(d: D) -> Result<Variant, D::Error> {
    let name = String::deserialize(d)?;
    Variant::from_str(&name).map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "variant_list")]
    pub variants: Vec<Variant>,
    pub per: Vec<f64>,
    pub rtt_ms: Vec<u64>,
    pub link_rate_mbps: f64,
    pub transfer_bytes: u64,
    pub repetitions: usize,
    pub base_seed: u64,
    pub generation_size: usize,
    pub symbol_size: usize,
    pub queue_capacity: Option<usize>,
    pub ack_loss: bool,
    pub duration_cap_s: f64,
    pub fairness_rate_mbps: f64,
    pub fairness_per: Vec<f64>,
    pub fairness_rtt_ms: Vec<u64>,
    pub fairness_duration_s: f64,
    #[serde(deserialize_with = "variant")]
    pub fairness_test: Variant,
    #[serde(deserialize_with = "variant")]
    pub fairness_baseline: Variant,
    #[serde(deserialize_with = "variant")]
    pub trace_variant: Variant,
    pub trace_per: f64,
    pub trace_rtt_ms: u64,
    pub trace_bytes: u64,
    pub trace_bin_s: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variants: vec![
                Variant::CtcpV2,
                Variant::Hybla,
                Variant::Cubic,
                Variant::Reno,
                Variant::CtcpV1,
            ],
            per: vec![0.0, 0.005, 0.01, 0.025, 0.05, 0.1, 0.2],
            rtt_ms: vec![500, 600, 700, 800],
            link_rate_mbps: 10.0,
            transfer_bytes: 20_000_000,
            repetitions: 5,
            base_seed: 1,
            generation_size: 32,
            symbol_size: 1000,
            queue_capacity: None,
            ack_loss: false,
            duration_cap_s: 600.0,
            fairness_rate_mbps: 5.0,
            fairness_per: vec![0.0, 0.005, 0.01, 0.025, 0.05],
            fairness_rtt_ms: vec![500, 800],
            fairness_duration_s: 300.0,
            fairness_test: Variant::CtcpV2,
            fairness_baseline: Variant::Cubic,
            trace_variant: Variant::CtcpV2,
            trace_per: 0.005,
            trace_rtt_ms: 500,
            trace_bytes: 100_000_000,
            trace_bin_s: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.variants.is_empty() {
            return Err(ConfigError::EmptyList("variants"));
        }
        if self.per.is_empty() {
            return Err(ConfigError::EmptyList("per"));
        }
        if self.rtt_ms.is_empty() {
            return Err(ConfigError::EmptyList("rtt_ms"));
        }
        if self.fairness_per.is_empty() {
            return Err(ConfigError::EmptyList("fairness_per"));
        }
        if self.fairness_rtt_ms.is_empty() {
            return Err(ConfigError::EmptyList("fairness_rtt_ms"));
        }
        if self.repetitions == 0 {
            return Err(ConfigError::Repetitions);
        }
        for (key, list) in [("per", &self.per), ("fairness_per", &self.fairness_per)] {
            if let Some(&value) = list.iter().find(|p| !(0.0..1.0).contains(*p)) {
                return Err(ConfigError::Per { key, value });
            }
        }
        if !(0.0..1.0).contains(&self.trace_per) {
            return Err(ConfigError::Per {
                key: "trace_per",
                value: self.trace_per,
            });
        }
        let positive = [
            ("link_rate_mbps", self.link_rate_mbps),
            ("fairness_rate_mbps", self.fairness_rate_mbps),
            ("duration_cap_s", self.duration_cap_s),
            ("fairness_duration_s", self.fairness_duration_s),
            ("trace_bin_s", self.trace_bin_s),
            ("generation_size", self.generation_size as f64),
            ("symbol_size", self.symbol_size as f64),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NonPositive(key));
            }
        }
        if self.rtt_ms.iter().chain(&self.fairness_rtt_ms).any(|&r| r == 0) || self.trace_rtt_ms == 0
        {
            return Err(ConfigError::NonPositive("rtt_ms"));
        }
        if self.queue_capacity == Some(0) {
            return Err(ConfigError::NonPositive("queue_capacity"));
        }
        Ok(())
    }

    /// A path of `rate_mbps` and `rtt_ms` carrying `flows`, with this
    /// configuration's coding, queue and cap settings.
    pub fn scenario(
        &self,
        rate_mbps: f64,
        rtt_ms: u64,
        per: f64,
        flows: Vec<FlowSpec>,
        seed: u64,
    ) -> Scenario {
        let rate = rate_mbps * 1e6;
        let rtt = Duration::from_millis(rtt_ms);
        let mut s = Scenario::symmetric(rate, rtt, per, flows, seed);
        s.coding.generation_size = self.generation_size;
        s.coding.symbol_size = self.symbol_size;
        let bdp = bdp_packets(rate, rtt, self.symbol_size + FRAME_HEADER_BYTES);
        s.forward.queue_capacity = self.queue_capacity.unwrap_or(bdp);
        s.reverse.queue_capacity = s.forward.queue_capacity;
        s.tcp_rwnd = Some(2 * bdp as u64);
        if self.ack_loss {
            s.reverse.per = per;
        }
        s.duration_cap = Duration::from_secs_f64(self.duration_cap_s);
        s
    }
}
