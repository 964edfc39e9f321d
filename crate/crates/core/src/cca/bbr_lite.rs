//! Model-based controller: windowed-max delivery rate × windowed-min RTT.
//!
//! Every ACK contributes a delivery-rate sample (bytes delivered between a
//! packet's send and its ACK, over that interval) and an RTT sample. The
//! bandwidth estimate is the maximum rate over the last ten round trips; the
//! propagation estimate is the minimum RTT over the last ten seconds. The
//! window is pinned to twice the product of the two, and the pacing rate
//! cycles through gains around the bandwidth estimate to keep probing. A
//! startup phase paces at 2.885× until the bandwidth estimate stops growing
//! by at least 25% for three consecutive round trips.
//!
//! Loss signals are deliberately ignored — the model, not packet drops,
//! decides the sending rate. A retransmission timeout resets the window to
//! its initial value since the inflight estimate is no longer trustworthy.

use super::{
    bdp_cwnd, CcaConfig, CongestionControl, CongestionEvent, CwndUpdate, CcInputs, EventKind,
    WindowedMax, WindowedMin,
};

/// Pacing gain while searching for the link capacity.
pub const STARTUP_GAIN: f64 = 2.885;
/// Steady-state pacing-gain cycle: probe up, drain, then cruise.
pub const GAIN_CYCLE: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
/// RTT-filter window: ten seconds.
const RTT_WINDOW_US: u64 = 10_000_000;
/// Bandwidth filter spans this many round trips.
const BW_WINDOW_RTTS: u64 = 10;
/// Round-trip length assumed before any RTT sample exists.
const FALLBACK_RTT_US: u64 = 10_000;

/// Delivery-rate / min-RTT congestion controller.
#[derive(Clone, Debug)]
pub struct BbrLite {
    mss: u32,
    initial_cwnd: u32,
    cwnd: u32,
    min_rtt: WindowedMin<u64>,
    bw: WindowedMax<f64>,
    startup: bool,
    /// Best bandwidth seen when the plateau check last advanced it.
    full_bw_bps: f64,
    /// Consecutive rounds without ≥25% growth.
    full_bw_rounds: u32,
    /// End of the current round trip; rounds drive plateau checks and gain
    /// cycling.
    round_end_us: Option<u64>,
    cycle_idx: usize,
    pacing_gain: f64,
}

impl BbrLite {
    pub fn new(cfg: &CcaConfig) -> Self {
        Self {
            mss: cfg.mss,
            initial_cwnd: cfg.initial_cwnd.max(1),
            cwnd: cfg.initial_cwnd.max(1),
            min_rtt: WindowedMin::new(RTT_WINDOW_US),
            bw: WindowedMax::new(BW_WINDOW_RTTS * FALLBACK_RTT_US),
            startup: true,
            full_bw_bps: 0.0,
            full_bw_rounds: 0,
            round_end_us: None,
            cycle_idx: 0,
            pacing_gain: STARTUP_GAIN,
        }
    }

    /// Whether the controller is still in its capacity-search phase.
    pub fn in_startup(&self) -> bool {
        self.startup
    }

    /// Current bandwidth estimate, bit/s.
    pub fn bw_estimate_bps(&self) -> Option<f64> {
        self.bw.current()
    }

    /// Current propagation-delay estimate.
    pub fn min_rtt_us(&self) -> Option<u64> {
        self.min_rtt.current()
    }

    fn rtt_or_fallback(&self) -> u64 {
        self.min_rtt.current().unwrap_or(FALLBACK_RTT_US)
    }

    fn on_round_boundary(&mut self) {
        if self.startup {
            let bw_now = self.bw.current().unwrap_or(0.0);
            if bw_now > self.full_bw_bps * 1.25 {
                self.full_bw_bps = bw_now;
                self.full_bw_rounds = 0;
            } else {
                self.full_bw_rounds += 1;
                if self.full_bw_rounds >= 3 {
                    self.startup = false;
                    self.cycle_idx = 0;
                    self.pacing_gain = GAIN_CYCLE[0];
                }
            }
        } else {
            self.cycle_idx = (self.cycle_idx + 1) % GAIN_CYCLE.len();
            self.pacing_gain = GAIN_CYCLE[self.cycle_idx];
        }
    }

    fn on_ack(&mut self, ev: &CongestionEvent) {
        if let Some(rtt) = ev.rtt_us() {
            self.min_rtt.push(ev.ack_time_us, rtt);
        }
        if let Some(rate) = ev.delivery_rate_bps() {
            self.bw.set_window(BW_WINDOW_RTTS * self.rtt_or_fallback());
            self.bw.push(ev.ack_time_us, rate);
        }
        match self.round_end_us {
            None => self.round_end_us = Some(ev.ack_time_us + self.rtt_or_fallback()),
            Some(end) if ev.ack_time_us >= end => {
                self.round_end_us = Some(ev.ack_time_us + self.rtt_or_fallback());
                self.on_round_boundary();
            }
            Some(_) => {}
        }
        if let (Some(bw), Some(rtt)) = (self.bw.current(), self.min_rtt.current()) {
            let bdp = bdp_cwnd(bw as u64, rtt, self.mss);
            self.cwnd = (2 * bdp).max(if self.startup { self.initial_cwnd } else { 4 });
        }
    }
}

impl CongestionControl for BbrLite {
    fn name(&self) -> &'static str {
        "bbr-lite"
    }

    fn on_event(&mut self, ev: &CongestionEvent, _inputs: &CcInputs<'_>) -> CwndUpdate {
        match ev.kind {
            EventKind::Ack => self.on_ack(ev),
            // Losses don't enter the model; the rate filters already reflect
            // what the path actually delivered.
            EventKind::DupAck | EventKind::Ecn => {}
            EventKind::Timeout => self.cwnd = self.initial_cwnd,
        }
        CwndUpdate {
            cwnd: self.cwnd,
            pacing_bps: self.bw.current().map(|bw| self.pacing_gain * bw),
            phase: None,
        }
    }

    fn cwnd(&self) -> u32 {
        self.cwnd
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::{ack, inputs, loss};
    use super::*;

    #[test]
    fn window_is_twice_the_estimated_bdp() {
        let mut b = BbrLite::new(&CcaConfig::default());
        // min RTT 50 ms; rate samples 5, 7, 6 Mbit/s → estimate 7 Mbit/s.
        for (i, rate) in [5e6, 7e6, 6e6].into_iter().enumerate() {
            let now = 50_000 + i as u64 * 10_000;
            b.on_event(&ack(now, 50_000, 1, rate), &inputs(now));
        }
        assert_eq!(b.min_rtt_us(), Some(50_000));
        assert_eq!(b.bw_estimate_bps(), Some(7e6));
        // 2 × ceil(7e6 × 0.05 / (8 × 1500)) = 2 × 30.
        assert_eq!(b.cwnd(), 60);
    }

    #[test]
    fn stale_rate_peaks_age_out_of_the_filter() {
        let mut b = BbrLite::new(&CcaConfig::default());
        b.on_event(&ack(50_000, 50_000, 1, 7e6), &inputs(50_000));
        // Ten round trips later the 7 Mbit/s sample must be forgotten.
        for i in 0..12u64 {
            let now = 150_000 + i * 50_000;
            b.on_event(&ack(now, 50_000, 1, 5e6), &inputs(now));
        }
        assert_eq!(b.bw_estimate_bps(), Some(5e6));
        assert_eq!(b.cwnd(), 2 * bdp_cwnd(5_000_000, 50_000, 1500));
    }

    #[test]
    fn startup_ends_after_three_flat_rounds() {
        let mut b = BbrLite::new(&CcaConfig::default());
        assert!(b.in_startup());
        let mut ticks = 0;
        // Constant 7 Mbit/s delivery: growth stalls immediately, so startup
        // should end after three round boundaries. Start the clock one round
        // trip in so every sample spans a full, unclipped round trip.
        for i in 1..=40u64 {
            let now = 50_000 + i * 10_000;
            let up = b.on_event(&ack(now, 50_000, 1, 7e6), &inputs(now));
            if b.in_startup() {
                ticks += 1;
                assert_eq!(up.pacing_bps, Some(STARTUP_GAIN * 7e6));
            }
        }
        assert!(!b.in_startup(), "plateau not detected");
        assert!(ticks < 40, "startup never exited");
    }

    #[test]
    fn pacing_gain_cycles_after_startup() {
        let mut b = BbrLite::new(&CcaConfig::default());
        let mut gains = Vec::new();
        for i in 1..=120u64 {
            let now = i * 10_000;
            b.on_event(&ack(now, 50_000, 1, 7e6), &inputs(now));
            if !b.in_startup() {
                gains.push(b.pacing_gain);
            }
        }
        // Once out of startup the gain sequence must walk the cycle, starting
        // at the probe gain.
        assert_eq!(gains[0], 1.25);
        assert!(gains.contains(&0.75));
        let mut seen = gains.clone();
        seen.dedup();
        // Round trips last 50 ms = 5 ACKs, so each gain repeats; the deduped
        // order must be a walk of the cycle.
        for w in seen.windows(2) {
            let i = GAIN_CYCLE.iter().position(|g| *g == w[0]);
            assert!(i.is_some());
        }
    }

    #[test]
    fn losses_leave_the_model_untouched_but_timeouts_reset() {
        let mut b = BbrLite::new(&CcaConfig::default());
        for i in 1..=10u64 {
            let now = i * 10_000;
            b.on_event(&ack(now, 50_000, 1, 7e6), &inputs(now));
        }
        let before = b.cwnd();
        b.on_event(&loss(200_000, EventKind::DupAck), &inputs(200_000));
        assert_eq!(b.cwnd(), before, "duplicate ACKs must not shrink the window");
        b.on_event(&loss(300_000, EventKind::Timeout), &inputs(300_000));
        assert_eq!(b.cwnd(), 10, "timeout falls back to the initial window");
    }
}
