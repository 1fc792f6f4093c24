//! Oracle checks run by the `selftest` subcommand.

use std::time::Duration;

use ctcp::codec::{encode_coded, encode_with_coefficients, CodedPacket, DecoderState, Innovation, SourcePacket};
use ctcp::congestion::{CcParams, CcState, RttSample, Variant};
use ctcp::gf::{gf_inv, gf_mul, FieldElement, POLYNOMIAL};
use ctcp::netsim::{run, FlowSpec, Link, LinkConfig, RunResult, Scenario, Transmit};
use ctcp::rng::{stream, StreamLabel};
use ctcp::time::SimTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn peasant_mul(a: u8, b: u8) -> u8 {
    let (mut a, mut b, mut acc) = (a as u16, b as u16, 0u16);
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= POLYNOMIAL;
        }
        b >>= 1;
    }
    acc as u8
}

/// Rank by Gaussian elimination from scratch over the peasant multiply.
pub fn oracle_rank(rows: &[Vec<u8>]) -> usize {
    let mut m = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, p);
        let inv = (1..=255u8)
            .find(|&b| peasant_mul(m[r][c], b) == 1)
            .expect("nonzero pivot");
        for v in m[r].iter_mut() {
            *v = peasant_mul(*v, inv);
        }
        for i in 0..m.len() {
            if i != r && m[i][c] != 0 {
                let f = m[i][c];
                for j in 0..cols {
                    m[i][j] ^= peasant_mul(f, m[r][j]);
                }
            }
        }
        r += 1;
    }
    r
}

fn gf_axioms() -> Result<String, String> {
    let fe = FieldElement;
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            let ab = gf_mul(fe(a), fe(b));
            ensure!(ab.value() == peasant_mul(a, b), "{a}*{b} disagrees with oracle");
            ensure!(ab == gf_mul(fe(b), fe(a)), "{a}*{b} not commutative");
            for c in 0..=255u8 {
                ensure!(
                    gf_mul(ab, fe(c)) == gf_mul(fe(a), gf_mul(fe(b), fe(c))),
                    "associativity fails at {a},{b},{c}"
                );
                ensure!(
                    gf_mul(fe(a), fe(b ^ c)).value() == ab.value() ^ peasant_mul(a, c),
                    "distributivity fails at {a},{b},{c}"
                );
            }
        }
        if a != 0 {
            let inv = gf_inv(fe(a)).map_err(|e| e.to_string())?;
            ensure!(peasant_mul(a, inv.value()) == 1, "bad inverse of {a}");
        }
    }
    ensure!(gf_inv(FieldElement::ZERO).is_err(), "zero has an inverse");
    Ok("256^3 triples".into())
}

fn source(id: u64, k: usize, symbol: usize, rng: &mut ChaCha8Rng) -> Vec<SourcePacket> {
    (0..k)
        .map(|i| SourcePacket {
            generation_id: id,
            index_in_generation: i,
            payload: (0..symbol).map(|_| rng.gen()).collect(),
        })
        .collect()
}

fn decoder_round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdec0de);
    let patterns = 1000;
    for pattern in 0..patterns {
        let k = rng.gen_range(1..=32);
        let per: f64 = rng.gen_range(0.0..0.6);
        let src = source(pattern, k, 48, &mut rng);
        let mut dec = DecoderState::new(pattern, k, 48);
        for s in &src {
            if rng.gen::<f64>() >= per {
                dec.add(&CodedPacket::systematic(s)).map_err(|e| e.to_string())?;
            }
        }
        let mut sent = 0;
        while !dec.is_complete() {
            sent += 1;
            ensure!(sent <= 20 * k + 200, "pattern {pattern} stalled");
            let pkt = encode_coded(&src, &mut rng).map_err(|e| e.to_string())?;
            if rng.gen::<f64>() >= per {
                dec.add(&pkt).map_err(|e| e.to_string())?;
            }
        }
        let out = dec.extract().map_err(|e| e.to_string())?;
        ensure!(
            out.iter().zip(&src).all(|(o, s)| *o == s.payload),
            "pattern {pattern} decoded wrong bytes"
        );
    }
    Ok(format!("{patterns} loss patterns"))
}

fn innovation_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1220);
    let mut checked = 0;
    for trial in 0..300u64 {
        let k = rng.gen_range(1..=12);
        let src = source(trial, k, 8, &mut rng);
        let mut dec = DecoderState::new(trial, k, 8);
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for _ in 0..3 * k {
            let coefficients: Vec<FieldElement> = (0..k)
                .map(|_| FieldElement(if rng.gen_bool(0.4) { rng.gen_range(0..3) } else { 0 }))
                .collect();
            if coefficients.iter().all(|c| c.is_zero()) {
                continue;
            }
            let before = oracle_rank(&rows);
            rows.push(coefficients.iter().map(|c| c.value()).collect());
            let after = oracle_rank(&rows);
            let pkt = encode_with_coefficients(&src, coefficients).map_err(|e| e.to_string())?;
            let flag = dec.add(&pkt).map_err(|e| e.to_string())?;
            ensure!(
                (flag == Innovation::Innovative) == (after > before),
                "trial {trial}: flag {flag:?}, rank {before} -> {after}"
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} frames"))
}

fn cwnd_fuzz() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let params = CcParams::default();
    let sequences = 2000;
    for seq in 0..sequences {
        let v = Variant::ALL[seq % Variant::ALL.len()];
        let mut cc = CcState::new(v, params, SimTime::ZERO);
        let mut now = SimTime::ZERO;
        for _ in 0..rng.gen_range(1..300) {
            let rtt = Duration::from_millis(rng.gen_range(1..3000));
            match rng.gen_range(0..12) {
                0..=7 => {
                    now += Duration::from_millis(rng.gen_range(0..200));
                    cc.on_ack(RttSample::new(rtt, now));
                }
                8..=10 => {
                    let beta = cc.on_congestion_loss(rtt, now);
                    ensure!(beta > 0.0 && beta <= 1.0, "{v}: beta {beta}");
                }
                _ => cc.on_timeout(now),
            }
            ensure!(
                cc.cwnd() >= params.cwnd_floor && cc.cwnd().is_finite(),
                "{v}: cwnd {}",
                cc.cwnd()
            );
        }
    }
    Ok(format!("{sequences} sequences"))
}

fn no_reduction_at_rtt_min() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b7);
    for _ in 0..1000 {
        for v in [Variant::CtcpV1, Variant::CtcpV2] {
            let mut cc = CcState::new(v, CcParams::default(), SimTime::ZERO);
            let mut now = SimTime::ZERO;
            for _ in 0..rng.gen_range(1..100) {
                now += Duration::from_millis(10);
                cc.on_ack(RttSample::new(Duration::from_millis(rng.gen_range(20..2000)), now));
            }
            let rtt_min = cc.rtt_min().ok_or("no rtt_min")?;
            let before = cc.cwnd();
            let beta = cc.on_congestion_loss(rtt_min, now);
            ensure!(beta == 1.0 && cc.cwnd() == before, "{v}: {before} -> {}", cc.cwnd());
        }
    }
    Ok("2000 windows".into())
}

fn conserved(r: &RunResult) -> bool {
    let fwd = r.links[0];
    let rev = r.links[1];
    let sent: u64 = r.flows.iter().map(|f| f.sender.frames_sent).sum();
    let received: u64 = r.flows.iter().map(|f| f.frames_received).sum();
    let acks: u64 = r.flows.iter().map(|f| f.acks_received).sum();
    fwd.offered == sent
        && fwd.delivered == received
        && fwd.offered >= fwd.delivered + fwd.erased + fwd.queue_dropped
        && rev.offered == received
        && rev.delivered == acks
        && rev.offered >= rev.delivered + rev.erased + rev.queue_dropped
}

fn conservation_and_determinism() -> Result<String, String> {
    let mut runs = 0;
    for v in Variant::ALL {
        for per in [0.0, 0.1] {
            let flows = vec![FlowSpec {
                variant: v,
                bytes: 2_000_000,
                start: Duration::ZERO,
            }];
            let mut s = Scenario::symmetric(10e6, Duration::from_millis(300), per, flows, 17);
            s.record_trace = true;
            let a = run(&s).map_err(|e| e.to_string())?;
            let b = run(&s).map_err(|e| e.to_string())?;
            ensure!(a == b, "{v} per {per}: runs differ");
            ensure!(conserved(&a), "{v} per {per}: conservation broken");
            ensure!(
                a.flows[0].complete && a.flows[0].payload_verified,
                "{v} per {per}: transfer corrupt or unfinished"
            );
            runs += 1;
        }
    }
    Ok(format!("{runs} scenarios"))
}

fn erasure_rate() -> Result<String, String> {
    let n = 100_000u64;
    for (i, per) in [0.005, 0.05, 0.2].into_iter().enumerate() {
        let cfg = LinkConfig {
            rate_bps: 1e12,
            one_way_delay: Duration::ZERO,
            per,
            queue_capacity: 1,
        };
        let mut link = Link::new(cfg, stream(i as u64 + 100, StreamLabel::Link(0)));
        let mut erased = 0;
        for j in 0..n {
            if link.transmit(1000, SimTime::from_nanos(j * 1000)) == Transmit::Erased {
                erased += 1;
            }
        }
        let rate = erased as f64 / n as f64;
        ensure!((rate - per).abs() <= 0.01, "per {per}: measured {rate}");
    }
    Ok(format!("{n} frames per rate"))
}

fn loss_estimate() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (seed, p) in [(31, 0.05), (32, 0.1), (33, 0.2)] {
        let flows = vec![FlowSpec {
            variant: Variant::CtcpV2,
            bytes: 12_000_000,
            start: Duration::ZERO,
        }];
        let r = run(&Scenario::symmetric(10e6, Duration::from_millis(500), p, flows, seed))
            .map_err(|e| e.to_string())?;
        let f = &r.flows[0];
        ensure!(f.sender.frames_sent >= 10_000, "p {p}: only {} frames", f.sender.frames_sent);
        let err = (f.p_hat - p).abs();
        ensure!(err <= 0.03, "p {p}: p_hat {}", f.p_hat);
        worst = worst.max(err);
    }
    Ok(format!("max |p_hat - p| = {worst:.4}"))
}

/// Runs every check in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        check("gf256 axioms vs peasant multiply", gf_axioms()),
        check("decoder round trip", decoder_round_trip()),
        check("innovation flag vs rank oracle", innovation_oracle()),
        check("cwnd floor and beta range", cwnd_fuzz()),
        check("no reduction at rtt_min", no_reduction_at_rtt_min()),
        check("conservation and determinism", conservation_and_determinism()),
        check("erasure rate", erasure_rate()),
        check("loss estimate", loss_estimate()),
    ]
}
