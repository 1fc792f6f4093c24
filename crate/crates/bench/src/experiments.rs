use std::time::Duration;

use ctcp::congestion::Variant;
use ctcp::netsim::{run, FlowSpec, FlowStats, RunResult, ScenarioError};
use ctcp::time::SimTime;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::report::{
    aggregate, summarize_fairness, AggregateRow, CwndRow, FairnessRow, FairnessSummaryRow,
    ResultRow, TraceRow,
};

/// Fairness transfers never finish within a run; the duration cap ends them.
const UNBOUNDED_TRANSFER: u64 = 1 << 50;

fn flow(variant: Variant, bytes: u64) -> FlowSpec {
    FlowSpec {
        variant,
        bytes,
        start: Duration::ZERO,
    }
}

/// Runs `jobs` on `threads` workers (all cores when `None`), keeping input
/// order.
fn parallel_map<T, R, F>(jobs: &[T], threads: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running serially");
            jobs.iter().map(f).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepJob {
    pub variant: Variant,
    pub per: f64,
    pub rtt_ms: u64,
    pub rep: usize,
    pub seed: u64,
}

/// Every `(variant, per, rtt, rep)` combination in row order, with row `i`
/// seeded `base_seed + i`.
pub fn sweep_jobs(cfg: &ExperimentConfig) -> Vec<SweepJob> {
    let mut jobs = Vec::new();
    for &variant in &cfg.variants {
        for &per in &cfg.per {
            for &rtt_ms in &cfg.rtt_ms {
                for rep in 0..cfg.repetitions {
                    jobs.push(SweepJob {
                        variant,
                        per,
                        rtt_ms,
                        rep,
                        seed: cfg.base_seed.wrapping_add(jobs.len() as u64),
                    });
                }
            }
        }
    }
    jobs
}

pub fn run_job(cfg: &ExperimentConfig, job: &SweepJob) -> Result<ResultRow, ScenarioError> {
    let s = cfg.scenario(
        cfg.link_rate_mbps,
        job.rtt_ms,
        job.per,
        vec![flow(job.variant, cfg.transfer_bytes)],
        job.seed,
    );
    let r = run(&s)?;
    let f = &r.flows[0];
    Ok(ResultRow {
        variant: job.variant.to_string(),
        per: job.per,
        rtt_ms: job.rtt_ms,
        rep: job.rep,
        seed: job.seed,
        goodput_bps: f.goodput_bps,
        completion_s: f.completion_time.map(|d| d.as_secs_f64()),
        overhead_frac: f.overhead_fraction(),
        incomplete: !f.complete,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub raw: Vec<ResultRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepOutput {
    pub fn incomplete(&self) -> usize {
        self.raw.iter().filter(|r| r.incomplete).count()
    }

    pub fn cell(&self, variant: Variant, per: f64, rtt_ms: u64) -> Option<&AggregateRow> {
        self.aggregate
            .iter()
            .find(|a| a.variant == variant.as_str() && a.per == per && a.rtt_ms == rtt_ms)
    }
}

pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepOutput, ScenarioError> {
    let jobs = sweep_jobs(cfg);
    let raw = parallel_map(&jobs, threads, |j| run_job(cfg, j))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate(&raw);
    Ok(SweepOutput { raw, aggregate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessOutput {
    pub rows: Vec<FairnessRow>,
    pub summary: Vec<FairnessSummaryRow>,
    /// A run whose combined goodput exceeded the bottleneck rate.
    pub capacity_violations: usize,
}

impl FairnessOutput {
    pub fn mean(&self, series: &str, per: f64, rtt_ms: u64, flow: u32) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.series == series && s.per == per && s.rtt_ms == rtt_ms && s.flow == flow)
            .map(|s| s.goodput_mean_bps)
    }
}

/// Two-flow runs over a shared bottleneck. Flow 0 is always the baseline
/// variant; flow 1 is the test variant (`test` series) or a second baseline
/// flow (`baseline` series). Both series share seeds.
pub fn run_fairness(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<FairnessOutput, ScenarioError> {
    let mut jobs = Vec::new();
    let mut index = 0u64;
    for &per in &cfg.fairness_per {
        for &rtt_ms in &cfg.fairness_rtt_ms {
            for rep in 0..cfg.repetitions {
                let seed = cfg.base_seed.wrapping_add(index);
                index += 1;
                for (series, other) in [("test", cfg.fairness_test), ("baseline", cfg.fairness_baseline)] {
                    jobs.push((series, other, per, rtt_ms, rep, seed));
                }
            }
        }
    }
    let rate = cfg.fairness_rate_mbps * 1e6;
    let results = parallel_map(&jobs, threads, |&(_, other, per, rtt_ms, _, seed)| {
        let mut s = cfg.scenario(
            cfg.fairness_rate_mbps,
            rtt_ms,
            per,
            vec![
                flow(cfg.fairness_baseline, UNBOUNDED_TRANSFER),
                flow(other, UNBOUNDED_TRANSFER),
            ],
            seed,
        );
        s.duration_cap = Duration::from_secs_f64(cfg.fairness_duration_s);
        s.verify_payload = false;
        run(&s)
    });
    let mut rows = Vec::new();
    let mut capacity_violations = 0;
    for (&(series, _, per, rtt_ms, rep, seed), result) in jobs.iter().zip(results) {
        let r = result?;
        let total: f64 = r.flows.iter().map(|f| f.goodput_bps).sum();
        if total > rate {
            capacity_violations += 1;
        }
        for f in &r.flows {
            rows.push(FairnessRow {
                series: series.to_string(),
                per,
                rtt_ms,
                rep,
                seed,
                flow: f.flow_id,
                variant: f.variant.to_string(),
                goodput_bps: f.goodput_bps,
            });
        }
    }
    let summary = summarize_fairness(&rows);
    Ok(FairnessOutput {
        rows,
        summary,
        capacity_violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutput {
    pub rows: Vec<TraceRow>,
    pub cwnd: Vec<CwndRow>,
    /// Time-weighted mean of the binned goodput.
    pub mean_goodput_bps: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub variant: Variant,
    pub per: f64,
    pub rtt_ms: u64,
    pub bytes: u64,
    pub seed: u64,
}

impl TraceParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            variant: cfg.trace_variant,
            per: cfg.trace_per,
            rtt_ms: cfg.trace_rtt_ms,
            bytes: cfg.trace_bytes,
            seed: cfg.base_seed,
        }
    }
}

pub fn run_trace(cfg: &ExperimentConfig, p: &TraceParams) -> Result<TraceOutput, ScenarioError> {
    let mut s = cfg.scenario(
        cfg.link_rate_mbps,
        p.rtt_ms,
        p.per,
        vec![flow(p.variant, p.bytes)],
        p.seed,
    );
    s.record_trace = true;
    let r = run(&s)?;
    Ok(bin_trace(&r, cfg.trace_bin_s))
}

/// Cuts the first flow's deliveries into bins of `bin_s` seconds from its
/// start to its last delivery (or the end of the run if unfinished).
pub fn bin_trace(r: &RunResult, bin_s: f64) -> TraceOutput {
    let f: &FlowStats = &r.flows[0];
    let end = if f.complete {
        f.last_delivery.unwrap_or(f.start)
    } else {
        r.end_time
    };
    let span = end.saturating_since(f.start).as_secs_f64();
    let cwnd = f
        .cwnd_samples
        .iter()
        .map(|&(t, c)| CwndRow {
            t_s: t.saturating_since(f.start).as_secs_f64(),
            cwnd_pkts: c,
        })
        .collect();
    if f.transfer_bytes == 0 || span <= 0.0 {
        return TraceOutput {
            rows: Vec::new(),
            cwnd,
            mean_goodput_bps: 0.0,
            complete: f.complete,
        };
    }

    let bins = (span / bin_s).ceil() as usize;
    let mut bytes = vec![0u64; bins];
    let mut decodes = vec![0usize; bins];
    let index = |t: SimTime| {
        let rel = t.saturating_since(f.start).as_secs_f64();
        ((rel / bin_s) as usize).min(bins - 1)
    };
    for &(t, b) in f.deliveries.iter().filter(|(t, _)| *t <= end) {
        bytes[index(t)] += b;
    }
    for &(t, _) in f.decode_events.iter().filter(|(t, _)| *t <= end) {
        decodes[index(t)] += 1;
    }
    let mut rows = Vec::with_capacity(bins);
    let mut sample = 0;
    let mut weighted = 0.0;
    for i in 0..bins {
        let t0 = i as f64 * bin_s;
        let width = (span - t0).min(bin_s);
        let bin_end = f.start + Duration::from_secs_f64(t0 + width);
        while sample + 1 < f.cwnd_samples.len() && f.cwnd_samples[sample + 1].0 <= bin_end {
            sample += 1;
        }
        let goodput = bytes[i] as f64 * 8.0 / width;
        weighted += goodput * width;
        rows.push(TraceRow {
            t_s: t0,
            goodput_bps: goodput,
            cwnd_pkts: f.cwnd_samples.get(sample).map_or(0.0, |s| s.1),
            decode_events: decodes[i],
        });
    }
    TraceOutput {
        rows,
        cwnd,
        mean_goodput_bps: weighted / span,
        complete: f.complete,
    }
}
