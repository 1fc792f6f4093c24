//! CSV row types and aggregation.
//!
//! Raw sweep rows: `variant,per,rtt_ms,rep,seed,goodput_bps,completion_s,overhead_frac,incomplete`.
//! Aggregate rows: `variant,per,rtt_ms,n,goodput_mean_bps,goodput_std_bps,incomplete`.
//! Fairness rows: `series,per,rtt_ms,rep,seed,flow,variant,goodput_bps`.
//! Fairness summary: `series,per,rtt_ms,flow,variant,n,goodput_mean_bps,goodput_std_bps`.
//! Trace rows: `t_s,goodput_bps,cwnd_pkts,decode_events`.
//! Window changes: `t_s,cwnd_pkts`.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: String,
    pub per: f64,
    pub rtt_ms: u64,
    pub rep: usize,
    pub seed: u64,
    pub goodput_bps: f64,
    pub completion_s: Option<f64>,
    pub overhead_frac: f64,
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub per: f64,
    pub rtt_ms: u64,
    pub n: usize,
    pub goodput_mean_bps: f64,
    pub goodput_std_bps: f64,
    pub incomplete: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessRow {
    /// `test` when the baseline competes with the test variant,
    /// `baseline` when it competes with itself.
    pub series: String,
    pub per: f64,
    pub rtt_ms: u64,
    pub rep: usize,
    pub seed: u64,
    pub flow: u32,
    pub variant: String,
    pub goodput_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummaryRow {
    pub series: String,
    pub per: f64,
    pub rtt_ms: u64,
    pub flow: u32,
    pub variant: String,
    pub n: usize,
    pub goodput_mean_bps: f64,
    pub goodput_std_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub goodput_bps: f64,
    pub cwnd_pkts: f64,
    pub decode_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwndRow {
    pub t_s: f64,
    pub cwnd_pkts: f64,
}

/// Mean and sample standard deviation; zero deviation for fewer than two
/// values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One aggregate row per `(variant, per, rtt_ms)` cell, in first-seen order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut cells: Vec<(String, f64, u64)> = Vec::new();
    for r in rows {
        let key = (r.variant.clone(), r.per, r.rtt_ms);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(variant, per, rtt_ms)| {
            let members: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.per == per && r.rtt_ms == rtt_ms)
                .collect();
            let goodputs: Vec<f64> = members.iter().map(|r| r.goodput_bps).collect();
            let (mean, std) = mean_std(&goodputs);
            AggregateRow {
                variant,
                per,
                rtt_ms,
                n: members.len(),
                goodput_mean_bps: mean,
                goodput_std_bps: std,
                incomplete: members.iter().filter(|r| r.incomplete).count(),
            }
        })
        .collect()
}

pub fn summarize_fairness(rows: &[FairnessRow]) -> Vec<FairnessSummaryRow> {
    let mut keys: Vec<(String, f64, u64, u32, String)> = Vec::new();
    for r in rows {
        let key = (r.series.clone(), r.per, r.rtt_ms, r.flow, r.variant.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(series, per, rtt_ms, flow, variant)| {
            let goodputs: Vec<f64> = rows
                .iter()
                .filter(|r| r.series == series && r.per == per && r.rtt_ms == rtt_ms && r.flow == flow)
                .map(|r| r.goodput_bps)
                .collect();
            let (mean, std) = mean_std(&goodputs);
            FairnessSummaryRow {
                series,
                per,
                rtt_ms,
                flow,
                variant,
                n: goodputs.len(),
                goodput_mean_bps: mean,
                goodput_std_bps: std,
            }
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> csv::Result<Vec<T>> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}
