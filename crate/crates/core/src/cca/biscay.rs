//! Radio-KPI-driven congestion control with a wired-bottleneck fallback.
//!
//! Instead of probing for capacity, this controller sizes its window from the
//! bandwidth the base station actually allocated (the KPI estimate produced
//! by the bandwidth module), split equally across active flows and multiplied
//! by a windowed minimum RTT:
//!
//! ```text
//! cwnd = bdp_cwnd(bw_split_policy(cellular_bw, n_flows), min_rtt, mss)
//! ```
//!
//! A three-state machine guards that rule:
//!
//! * **Startup** — classic slow start while the KPI feed proves itself; exits
//!   to *Biscay* once [`STARTUP_EXIT_SAMPLES`] consecutive valid samples have
//!   arrived (the window switch happens on the next event after the streak
//!   completes).
//! * **Biscay** — the BDP rule above, recomputed on every event. Loss signals
//!   do not shrink the window; the allocation, not drops, dictates the rate.
//!   Leaves for *Fallback* when the bottleneck classifier decides the wired
//!   segment is limiting, or when the KPI feed goes stale for more than
//!   [`STALENESS_LIMIT_INTERVALS`] sampling intervals.
//! * **Fallback** — delegates the window to an embedded delivery-rate
//!   controller ([`BbrLite`]), which has been fed every event all along and
//!   is therefore warm at the moment of hand-over. Returns to *Biscay* only
//!   on a fresh classifier verdict that the cellular segment limits again.
//!
//! Startup is never re-entered.

use crate::bandwidth::{BottleneckDetector, BottleneckLocation};

use super::{
    bdp_cwnd, bw_split_policy, slow_start_step, BbrLite, CcaConfig, CongestionControl,
    CongestionEvent, CwndUpdate, CcInputs, EventKind, KpiSample, WindowedMax, WindowedMin,
};

/// Consecutive valid KPI samples required to leave startup.
pub const STARTUP_EXIT_SAMPLES: u32 = 3;
/// KPI silence tolerated before abandoning the KPI-driven window, in
/// sampling intervals.
pub const STALENESS_LIMIT_INTERVALS: u64 = 10;
/// Sliding window for the minimum-RTT filter.
pub const RTT_WINDOW_US: u64 = 10_000_000;
/// Floor for the delivery-rate filter window (2 × min RTT otherwise).
const MIN_E2E_WINDOW_US: u64 = 20_000;

/// State-machine phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Startup,
    Biscay,
    Fallback,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Startup => "startup",
            Phase::Biscay => "biscay",
            Phase::Fallback => "fallback",
        })
    }
}

/// KPI-driven congestion controller.
#[derive(Clone, Debug)]
pub struct Biscay {
    phase: Phase,
    cwnd: u32,
    mss: u32,
    kpi_interval_us: u64,
    min_rtt: WindowedMin<u64>,
    /// Two-round-trip maximum of per-ACK delivery-rate samples: the
    /// end-to-end bandwidth estimate handed to the bottleneck classifier.
    /// The maximum rides service bursts to the full path rate (so the
    /// cellular-verdict comparison can actually be met), tolerates transient
    /// dips, and surfaces a genuine wired slowdown once the old peaks age
    /// out — within two round trips.
    e2e_rate: WindowedMax<f64>,
    detector: BottleneckDetector,
    /// Wired-path controller, kept warm on every event.
    fallback: BbrLite,
    /// Consecutive valid KPI samples seen while in startup.
    kpi_streak: u32,
    last_kpi: Option<KpiSample>,
}

impl Biscay {
    pub fn new(cfg: &CcaConfig) -> Self {
        Self {
            phase: Phase::Startup,
            cwnd: cfg.initial_cwnd.max(1),
            mss: cfg.mss,
            kpi_interval_us: cfg.kpi_interval_us.max(1),
            min_rtt: WindowedMin::new(RTT_WINDOW_US),
            e2e_rate: WindowedMax::new(MIN_E2E_WINDOW_US),
            detector: BottleneckDetector::default(),
            fallback: BbrLite::new(cfg),
            kpi_streak: 0,
            last_kpi: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Latest classifier verdict.
    pub fn bottleneck(&self) -> BottleneckLocation {
        self.detector.location()
    }

    /// Current end-to-end delivery-rate estimate, bit/s.
    pub fn e2e_estimate_bps(&self) -> Option<f64> {
        self.e2e_rate.current()
    }

    fn stale(&self, now_us: u64) -> bool {
        match self.last_kpi {
            Some(k) => {
                now_us.saturating_sub(k.time_us)
                    > STALENESS_LIMIT_INTERVALS * self.kpi_interval_us
            }
            None => false,
        }
    }

    /// The one window rule of the steady state. Holds the previous window if
    /// an input is missing.
    fn recompute_bdp(&mut self, active_flows: u32) {
        let Some(kpi) = self.last_kpi else { return };
        let Some(rtt) = self.min_rtt.current() else { return };
        let per_flow = bw_split_policy(kpi.bps.max(0.0) as u64, active_flows.max(1));
        self.cwnd = bdp_cwnd(per_flow, rtt, self.mss);
    }

    /// Takes in a possibly-new KPI sample; returns a classifier verdict when
    /// a fresh sample arrived outside startup.
    fn intake_kpi(&mut self, inputs: &CcInputs<'_>) -> Option<BottleneckLocation> {
        let k = inputs.kpi?;
        let is_new = self.last_kpi.is_none_or(|prev| k.seq != prev.seq);
        if !is_new {
            return None;
        }
        if !(k.bps.is_finite() && k.bps >= 0.0) {
            // A garbage sample breaks the startup confidence streak and is
            // otherwise discarded.
            self.kpi_streak = 0;
            return None;
        }
        self.last_kpi = Some(*k);
        if self.phase == Phase::Startup {
            self.kpi_streak += 1;
            return None;
        }
        // The classifier compares like with like: this flow's share of the
        // allocation against this flow's own delivery rate.
        let per_flow = bw_split_policy(k.bps as u64, inputs.active_flows.max(1));
        Some(self.detector.update(per_flow as f64, self.e2e_rate.current()))
    }

    fn slow_start_event(&mut self, ev: &CongestionEvent) {
        match ev.kind {
            EventKind::Ack => {
                let packets = ev.acked_bytes.div_ceil(self.mss as u64);
                for _ in 0..packets {
                    self.cwnd = slow_start_step(self.cwnd);
                }
            }
            EventKind::DupAck | EventKind::Ecn => self.cwnd = (self.cwnd / 2).max(2),
            EventKind::Timeout => self.cwnd = 1,
        }
    }
}

impl CongestionControl for Biscay {
    fn name(&self) -> &'static str {
        "biscay"
    }

    fn on_event(&mut self, ev: &CongestionEvent, inputs: &CcInputs<'_>) -> CwndUpdate {
        let now = inputs.now_us.max(ev.ack_time_us);

        // Keep the wired-path controller and path estimators warm in every
        // phase, so a fallback hand-over starts from live state.
        let fb = self.fallback.on_event(ev, inputs);
        if let Some(rtt) = ev.rtt_us() {
            self.min_rtt.push(ev.ack_time_us, rtt);
            let window = (2 * self.min_rtt.current().unwrap_or(rtt)).max(MIN_E2E_WINDOW_US);
            self.e2e_rate.set_window(window);
            if let Some(rate) = ev.delivery_rate_bps() {
                self.e2e_rate.push(ev.ack_time_us, rate);
            }
        }

        // Promotion happens at the top of the event *after* the confidence
        // streak completes, so the completing event still slow-starts.
        if self.phase == Phase::Startup && self.kpi_streak >= STARTUP_EXIT_SAMPLES {
            self.phase = Phase::Biscay;
            // Fresh classifier: the wired-vs-cellular question starts from a
            // clean slate once the KPI feed is trusted.
            self.detector = BottleneckDetector::default();
        }

        let verdict = self.intake_kpi(inputs);

        match self.phase {
            Phase::Startup => self.slow_start_event(ev),
            Phase::Biscay => {
                if self.stale(now) {
                    self.phase = Phase::Fallback;
                    self.cwnd = fb.cwnd;
                } else if verdict == Some(BottleneckLocation::Wired) {
                    self.phase = Phase::Fallback;
                    self.cwnd = fb.cwnd;
                } else {
                    self.recompute_bdp(inputs.active_flows);
                }
            }
            Phase::Fallback => {
                if verdict == Some(BottleneckLocation::Cellular) && !self.stale(now) {
                    self.phase = Phase::Biscay;
                    self.recompute_bdp(inputs.active_flows);
                } else {
                    self.cwnd = fb.cwnd;
                }
            }
        }

        CwndUpdate {
            cwnd: self.cwnd,
            pacing_bps: (self.phase == Phase::Fallback)
                .then_some(fb.pacing_bps)
                .flatten(),
            phase: Some(self.phase),
        }
    }

    fn cwnd(&self) -> u32 {
        self.cwnd
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::{ack, flow_key, inputs, loss};
    use super::*;
    use proptest::prelude::*;

    fn kpi(bps: f64, time_us: u64, seq: u64) -> KpiSample {
        KpiSample { bps, time_us, seq }
    }

    fn with_kpi(now_us: u64, sample: &KpiSample, flows: u32) -> CcInputs<'_> {
        CcInputs { now_us, kpi: Some(sample), active_flows: flows }
    }

    /// Drives a controller into the steady KPI phase: three fresh samples
    /// plus the promotion event. Returns the next free (time, seq).
    fn enter_biscay(b: &mut Biscay, bw_bps: f64, rtt_us: u64, flows: u32) -> (u64, u64) {
        let mut now = rtt_us;
        for seq in 1..=3 {
            let k = kpi(bw_bps, now, seq);
            let up = b.on_event(&ack(now, rtt_us, 1, bw_bps), &with_kpi(now, &k, flows));
            assert_eq!(up.phase, Some(Phase::Startup));
            now += 10_000;
        }
        let k = kpi(bw_bps, now, 4);
        let up = b.on_event(&ack(now, rtt_us, 1, bw_bps), &with_kpi(now, &k, flows));
        assert_eq!(up.phase, Some(Phase::Biscay));
        (now + 10_000, 5)
    }

    #[test]
    fn startup_slow_starts_then_switches_on_the_event_after_the_streak() {
        let mut b = Biscay::new(&CcaConfig::default());
        assert_eq!(b.phase(), Phase::Startup);

        // ACKs without KPI: pure slow start.
        let up = b.on_event(&ack(50_000, 50_000, 1, 1e6), &inputs(50_000));
        assert_eq!(up.cwnd, 11);
        assert_eq!(up.phase, Some(Phase::Startup));

        // Three fresh samples: the third still slow-starts...
        for seq in 1..=3u64 {
            let now = 50_000 + seq * 10_000;
            let k = kpi(12e6, now, seq);
            let up = b.on_event(&ack(now, 50_000, 1, 12e6), &with_kpi(now, &k, 3));
            assert_eq!(up.phase, Some(Phase::Startup));
            assert_eq!(up.cwnd, 11 + seq as u32);
        }
        // ...and the next event computes the BDP window: 12 Mbit/s across 3
        // flows at 50 ms and 1500 B is ceil(16.7) = 17 packets.
        let k = kpi(12e6, 90_000, 4);
        let up = b.on_event(&ack(90_000, 50_000, 1, 12e6), &with_kpi(90_000, &k, 3));
        assert_eq!(up.phase, Some(Phase::Biscay));
        assert_eq!(up.cwnd, 17);
    }

    #[test]
    fn steady_window_is_exactly_the_split_bdp_even_across_losses() {
        let mut b = Biscay::new(&CcaConfig::default());
        let (mut now, mut seq) = enter_biscay(&mut b, 10e6, 60_000, 1);
        // 10 Mbit/s, one flow, 60 ms → 50 packets.
        assert_eq!(b.cwnd(), 50);

        // A duplicate ACK does not shrink the window: the allocation decides.
        let k = kpi(10e6, now, seq);
        let up = b.on_event(&loss(now, EventKind::DupAck), &with_kpi(now, &k, 1));
        assert_eq!(up.phase, Some(Phase::Biscay));
        assert_eq!(up.cwnd, 50);
        now += 10_000;
        seq += 1;

        // The window tracks allocation changes exactly.
        let k = kpi(20e6, now, seq);
        let up = b.on_event(&ack(now, 60_000, 1, 10e6), &with_kpi(now, &k, 1));
        assert_eq!(up.cwnd, bdp_cwnd(20_000_000, 60_000, 1500));
    }

    #[test]
    fn sustained_overallocation_falls_back_to_the_wired_controller() {
        let mut b = Biscay::new(&CcaConfig::default());
        let (mut now, mut seq) = enter_biscay(&mut b, 20e6, 50_000, 1);

        // Mirror of the embedded wired controller, fed the same events.
        let mut mirror = BbrLite::new(&CcaConfig::default());
        {
            // Replay everything the controller has seen so far.
            let mut t = 50_000;
            for s in 1..=4u64 {
                let _ = s;
                mirror.on_event(&ack(t, 50_000, 1, 20e6), &inputs(t));
                t += 10_000;
            }
        }

        // The path now delivers 10 Mbit/s against a 20 Mbit/s allocation.
        // The estimate is a two-round-trip maximum, so the old 20 Mbit/s
        // peaks shield the classifier for 100 ms (ten samples); after that,
        // three sustained verdicts trip the fallback: index 10 + 3 - 1 = 12.
        let mut fell_at = None;
        for step in 0..30 {
            let k = kpi(20e6, now, seq);
            let ev = ack(now, 50_000, 1, 10e6);
            mirror.on_event(&ev, &inputs(now));
            let up = b.on_event(&ev, &with_kpi(now, &k, 1));
            if up.phase == Some(Phase::Fallback) {
                fell_at = Some(step);
                break;
            }
            now += 10_000;
            seq += 1;
        }
        assert_eq!(fell_at, Some(12), "aging (10 samples) plus streak (3)");
        assert_eq!(b.cwnd(), mirror.cwnd(), "fallback window must come from the wired controller");
    }


    #[test]
    fn fallback_returns_once_estimates_realign() {
        let mut b = Biscay::new(&CcaConfig::default());
        let (mut now, mut seq) = enter_biscay(&mut b, 20e6, 50_000, 1);

        // Push into fallback: ten samples to age the old peaks out of the
        // two-round-trip maximum, three more for the wired-verdict streak.
        for _ in 0..13 {
            let k = kpi(20e6, now, seq);
            b.on_event(&ack(now, 50_000, 1, 10e6), &with_kpi(now, &k, 1));
            now += 10_000;
            seq += 1;
        }
        assert_eq!(b.phase(), Phase::Fallback);

        // Delivery recovers to the allocation. The running maximum picks the
        // recovered rate up on its very first sample, so the return waits
        // only for the three-sample realignment streak.
        let mut came_back_at = None;
        for step in 0..30 {
            let k = kpi(20e6, now, seq);
            let up = b.on_event(&ack(now, 50_000, 1, 20e6), &with_kpi(now, &k, 1));
            if up.phase == Some(Phase::Biscay) {
                came_back_at = Some(step);
                break;
            }
            now += 10_000;
            seq += 1;
        }
        assert_eq!(came_back_at, Some(2), "three aligned samples end the fallback");
        // Re-entry recomputes the BDP window immediately.
        assert_eq!(b.cwnd(), bdp_cwnd(20_000_000, 50_000, 1500));
    }

    #[test]
    fn kpi_silence_reverts_to_fallback_within_ten_intervals() {
        let mut b = Biscay::new(&CcaConfig::default());
        let (start, _) = enter_biscay(&mut b, 10e6, 50_000, 1);
        let last_sample_time = start - 10_000; // time of seq 4
        // The feed goes quiet: the stale sample keeps being handed over.
        let stale_kpi = kpi(10e6, last_sample_time, 4);
        let mut fell_at = None;
        for i in 1..=40u64 {
            let now = last_sample_time + i * 5_000;
            let up = b.on_event(&ack(now, 50_000, 1, 10e6), &with_kpi(now, &stale_kpi, 1));
            if up.phase == Some(Phase::Fallback) {
                fell_at = Some(now);
                break;
            }
        }
        let fell_at = fell_at.expect("silence never triggered fallback");
        let intervals = (fell_at - last_sample_time) as f64 / 10_000.0;
        assert!(intervals <= 10.5, "took {intervals} sampling intervals");
        // And silence keeps it there: no verdict can fire without samples.
        for i in 41..=60u64 {
            let now = last_sample_time + i * 5_000;
            let up = b.on_event(&ack(now, 50_000, 1, 10e6), &with_kpi(now, &stale_kpi, 1));
            assert_eq!(up.phase, Some(Phase::Fallback));
        }
    }

    #[test]
    fn share_of_the_allocation_scales_with_the_flow_count() {
        let mut b = Biscay::new(&CcaConfig::default());
        let (now, seq) = enter_biscay(&mut b, 12e6, 50_000, 3);
        assert_eq!(b.cwnd(), 17); // 4 Mbit/s share at 50 ms
        // A flow leaves: the share grows to 6 Mbit/s → ceil(25.0) = 25.
        let k = kpi(12e6, now, seq);
        let up = b.on_event(&ack(now, 50_000, 1, 4e6), &with_kpi(now, &k, 2));
        assert_eq!(up.cwnd, 25);
    }

    proptest! {
        /// Whatever the event/KPI stream does, the machine only walks the
        /// allowed edges and never revisits startup.
        #[test]
        fn state_machine_never_reenters_startup(
            steps in proptest::collection::vec(
                (0u8..4, proptest::option::of(0u64..30_000_000), 1_000u64..25_000_000),
                1..200,
            )
        ) {
            let mut b = Biscay::new(&CcaConfig::default());
            let mut now = 50_000u64;
            let mut seq = 0u64;
            let mut prev = b.phase();
            let mut left_startup = false;
            for (kind, kpi_bps, rate) in steps {
                now += 7_000;
                let sample = kpi_bps.map(|bps| {
                    seq += 1;
                    kpi(bps as f64, now, seq)
                });
                let ev = match kind {
                    0 => ack(now, 50_000, 1, rate as f64),
                    1 => loss(now, EventKind::DupAck),
                    2 => loss(now, EventKind::Timeout),
                    _ => loss(now, EventKind::Ecn),
                };
                let cc_inputs = CcInputs {
                    now_us: now,
                    kpi: sample.as_ref(),
                    active_flows: 1,
                };
                let up = b.on_event(&ev, &cc_inputs);
                let cur = up.phase.unwrap();
                prop_assert!(up.cwnd >= 1);
                let edge_ok = matches!(
                    (prev, cur),
                    (Phase::Startup, Phase::Startup)
                        | (Phase::Startup, Phase::Biscay)
                        | (Phase::Biscay, Phase::Biscay)
                        | (Phase::Biscay, Phase::Fallback)
                        | (Phase::Fallback, Phase::Fallback)
                        | (Phase::Fallback, Phase::Biscay)
                );
                prop_assert!(edge_ok, "illegal transition {prev:?} -> {cur:?}");
                if cur != Phase::Startup {
                    left_startup = true;
                }
                if left_startup {
                    prop_assert!(cur != Phase::Startup, "startup re-entered");
                }
                prev = cur;
            }
            let _ = flow_key(); // silence unused-import lint when minimized
        }
    }
}
