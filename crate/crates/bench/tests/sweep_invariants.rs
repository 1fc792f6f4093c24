use ctcp_bench::{run_sweep, ExperimentConfig};

/// Cell means fall as PER rises, allowing one inversion of at most 5%
/// per variant.
#[test]
fn goodput_is_non_increasing_in_per() {
    let cfg = ExperimentConfig {
        rtt_ms: vec![500],
        ..Default::default()
    };
    let out = run_sweep(&cfg, None).unwrap();
    for v in &cfg.variants {
        let means: Vec<f64> = cfg
            .per
            .iter()
            .map(|&p| out.cell(*v, p, 500).unwrap().goodput_mean_bps)
            .collect();
        let inversions: Vec<f64> = means
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| w[1] / w[0] - 1.0)
            .collect();
        assert!(
            inversions.len() <= 1 && inversions.iter().all(|&r| r <= 0.05),
            "{v}: {means:?}"
        );
    }
}

#[test]
fn aggregates_match_raw_rows() {
    let cfg = ExperimentConfig {
        variants: vec![ctcp::congestion::Variant::CtcpV1],
        per: vec![0.0, 0.1],
        rtt_ms: vec![100],
        transfer_bytes: 1_000_000,
        ..Default::default()
    };
    let out = run_sweep(&cfg, Some(1)).unwrap();
    for a in &out.aggregate {
        let g: Vec<f64> = out
            .raw
            .iter()
            .filter(|r| r.per == a.per)
            .map(|r| r.goodput_bps)
            .collect();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g.len() - 1) as f64;
        assert_eq!(a.n, g.len());
        assert!((a.goodput_mean_bps - mean).abs() <= 1e-9 * mean);
        assert!((a.goodput_std_bps - var.sqrt()).abs() <= 1e-9 * mean);
    }
}
