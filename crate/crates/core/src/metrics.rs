//! Fairness, delay and power metrics shared by the experiment harness.
//!
//! All functions are pure so report generation stays deterministic: the same
//! samples always produce the same numbers, and formatting decisions (fixed
//! decimal places) live with the writers in the study module.

/// Percentile levels every delay summary reports.
pub const DELAY_PERCENTILES: [u8; 7] = [10, 25, 50, 75, 90, 95, 99];

/// Jain's fairness index `(Σx)² / (n·Σx²)` over per-flow rates.
///
/// `None` when the index is undefined: no flows, or every rate zero. Rates
/// must be non-negative. One means perfectly equal shares; `1/n` means one
/// flow holds everything.
pub fn jain_index(rates: &[f64]) -> Option<f64> {
    if rates.is_empty() {
        return None;
    }
    assert!(rates.iter().all(|r| *r >= 0.0), "rates must be non-negative");
    let sum: f64 = rates.iter().sum();
    let sq_sum: f64 = rates.iter().map(|r| r * r).sum();
    if sq_sum == 0.0 {
        return None;
    }
    Some(sum * sum / (rates.len() as f64 * sq_sum))
}

/// Jain's index per tiling window, given each flow's per-window rate series.
///
/// Window `w` combines `rates_per_flow[f][w]` across flows `f`; series shorter
/// than `w` contribute 0 (the flow wasn't active). Returns one entry per
/// window up to the longest series.
pub fn jain_windows(rates_per_flow: &[Vec<f64>]) -> Vec<Option<f64>> {
    let windows = rates_per_flow.iter().map(Vec::len).max().unwrap_or(0);
    (0..windows)
        .map(|w| {
            let rates: Vec<f64> =
                rates_per_flow.iter().map(|f| f.get(w).copied().unwrap_or(0.0)).collect();
            jain_index(&rates)
        })
        .collect()
}

/// Nearest-rank percentile: the sample at rank `ceil(p/100 × n)` (1-based) of
/// the sorted series. `p` must lie in `[0, 100]`; `p = 0` returns the minimum.
///
/// `None` on an empty series.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    assert!((0.0..=100.0).contains(&p), "percentile level out of range: {p}");
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-comparable sample"));
    let n = sorted.len();
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// Arithmetic mean; `None` on an empty series.
pub fn mean(samples: &[f64]) -> Option<f64> {
    (!samples.is_empty()).then(|| samples.iter().sum::<f64>() / samples.len() as f64)
}

/// The power figure of merit: throughput over mean delay. Higher is better —
/// it rewards rate and punishes queueing in one number. Units: bit/s per
/// second of delay.
pub fn power_metric(throughput_bps: f64, mean_delay_s: f64) -> Option<f64> {
    (mean_delay_s > 0.0).then(|| throughput_bps / mean_delay_s)
}

/// Bins timestamped byte deliveries into tiling throughput windows over
/// `[0, horizon_us)`: entry `w` is the average rate in bit/s of window `w`.
pub fn throughput_windows(
    deliveries: &[(u64, u32)],
    window_us: u64,
    horizon_us: u64,
) -> Vec<f64> {
    assert!(window_us > 0);
    let n = (horizon_us.div_ceil(window_us)) as usize;
    let mut bytes = vec![0u64; n];
    for &(t, size) in deliveries {
        if t < horizon_us {
            bytes[(t / window_us) as usize] += size as u64;
        }
    }
    bytes.iter().map(|b| *b as f64 * 8e6 / window_us as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jain_hand_values() {
        assert_eq!(jain_index(&[4.0, 4.0, 4.0]), Some(1.0));
        assert_eq!(jain_index(&[7.0, 0.0]), Some(0.5));
        let j = jain_index(&[6.0, 3.0, 3.0]).unwrap();
        assert!((j - 144.0 / 162.0).abs() < 1e-12);
        assert_eq!(jain_index(&[]), None);
        assert_eq!(jain_index(&[0.0, 0.0]), None, "all-zero rates are undefined");
    }

    #[test]
    fn jain_is_scale_invariant_and_bounded() {
        let rates = [1.0, 5.0, 2.5, 0.25];
        let j1 = jain_index(&rates).unwrap();
        let scaled: Vec<f64> = rates.iter().map(|r| r * 1e6).collect();
        let j2 = jain_index(&scaled).unwrap();
        assert!((j1 - j2).abs() < 1e-12);
        assert!(j1 > 1.0 / rates.len() as f64 && j1 < 1.0);
    }

    #[test]
    fn windowed_jain_pads_missing_windows_with_zero_rate() {
        let per_flow = vec![vec![4.0, 4.0, 4.0], vec![4.0, 4.0]];
        let windows = jain_windows(&per_flow);
        assert_eq!(windows.len(), 3);
        assert_eq!(windows[0], Some(1.0));
        assert_eq!(windows[1], Some(1.0));
        assert_eq!(windows[2], Some(0.5), "absent flow counts as zero rate");
    }

    #[test]
    fn nearest_rank_percentiles() {
        let samples = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(percentile(&samples, 50.0), Some(35.0)); // rank ceil(2.5)=3
        assert_eq!(percentile(&samples, 90.0), Some(50.0)); // rank ceil(4.5)=5
        assert_eq!(percentile(&samples, 10.0), Some(15.0)); // rank ceil(0.5)=1
        assert_eq!(percentile(&samples, 100.0), Some(50.0));
        assert_eq!(percentile(&samples, 0.0), Some(15.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn percentiles_match_a_brute_force_scan_and_never_decrease() {
        // Deterministic pseudo-random samples; oracle scans every candidate
        // and keeps the smallest sample covering ≥ p% of the series.
        let mut x = 0x243F_6A88u64;
        let samples: Vec<f64> = (0..257)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 33) as f64 / 1e6
            })
            .collect();
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev = f64::MIN;
        for p in DELAY_PERCENTILES {
            let got = percentile(&samples, p as f64).unwrap();
            let oracle = *sorted
                .iter()
                .find(|&&candidate| {
                    let covered = sorted.iter().filter(|&&s| s <= candidate).count();
                    covered as f64 * 100.0 >= p as f64 * sorted.len() as f64
                })
                .unwrap();
            assert_eq!(got, oracle, "p{p}");
            assert!(got >= prev, "percentiles must be non-decreasing");
            prev = got;
        }
    }

    #[test]
    fn power_rewards_rate_and_punishes_delay() {
        let base = power_metric(10e6, 0.05).unwrap();
        assert!((base - 200e6).abs() < 1e-6);
        assert!(power_metric(20e6, 0.05).unwrap() > base);
        assert!(power_metric(10e6, 0.10).unwrap() < base);
        assert_eq!(power_metric(10e6, 0.0), None);
    }

    #[test]
    fn throughput_windows_tile_the_horizon() {
        // 1500 B at 10 ms and 30 ms, 3000 B at 110 ms, horizon 250 ms.
        let deliveries = [(10_000u64, 1500u32), (30_000, 1500), (110_000, 3000)];
        let w = throughput_windows(&deliveries, 100_000, 250_000);
        assert_eq!(w.len(), 3);
        assert!((w[0] - 3000.0 * 8.0 / 0.1).abs() < 1e-9);
        assert!((w[1] - 3000.0 * 8.0 / 0.1).abs() < 1e-9);
        assert_eq!(w[2], 0.0);
    }
}
