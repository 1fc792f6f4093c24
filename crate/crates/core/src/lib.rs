//! Network-coded TCP: a GF(2^8) random linear network code, delay-aware
//! congestion control, the transports built on them, and a deterministic
//! network simulator to run them against loss-based baselines.

pub mod codec;
pub mod congestion;
pub mod gf;
pub mod netsim;
pub mod rng;
pub mod time;
pub mod transport;
