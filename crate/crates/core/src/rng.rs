//! Seeded random streams.
//!
//! Every link and every flow owns an independent ChaCha8 stream derived from
//! the scenario seed and a fixed label, so adding a flow or a link never
//! shifts the draws seen by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    /// Erasure draws of a link.
    Link(u32),
    /// Coefficient draws of a flow's encoder.
    Coding(u32),
    /// Application payload bytes of a flow.
    Payload(u32),
}

impl StreamLabel {
    fn stream_id(self) -> u64 {
        let (tag, idx) = match self {
            StreamLabel::Link(i) => (1u64, i),
            StreamLabel::Coding(i) => (2, i),
            StreamLabel::Payload(i) => (3, i),
        };
        (tag << 32) | idx as u64
    }
}

pub fn stream(seed: u64, label: StreamLabel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label.stream_id());
    rng
}
