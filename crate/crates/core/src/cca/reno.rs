//! Reno: slow start plus additive-increase / multiplicative-decrease.
//!
//! Below `ssthresh` the window grows by one packet per acked packet (doubling
//! per round trip); above it, by one packet per window's worth of ACKs. A
//! fast-retransmit signal halves the window and sets `ssthresh` to the new
//! value; a timeout collapses the window to one packet and re-enters slow
//! start.

use super::{
    slow_start_step, CcaConfig, CongestionControl, CongestionEvent, CwndUpdate, CcInputs,
    EventKind,
};

/// Classic AIMD controller.
#[derive(Clone, Debug)]
pub struct Reno {
    cwnd: u32,
    ssthresh: u32,
    mss: u32,
    /// Bytes acknowledged since the last additive increase.
    acked_accum: u64,
}

impl Reno {
    pub fn new(cfg: &CcaConfig) -> Self {
        Self {
            cwnd: cfg.initial_cwnd.max(1),
            ssthresh: u32::MAX,
            mss: cfg.mss,
            acked_accum: 0,
        }
    }

    fn on_ack(&mut self, acked_bytes: u64) {
        let mut packets = acked_bytes / self.mss as u64;
        if acked_bytes % self.mss as u64 != 0 {
            packets += 1;
        }
        for _ in 0..packets {
            if self.cwnd < self.ssthresh {
                self.cwnd = slow_start_step(self.cwnd);
            } else {
                // Congestion avoidance: +1 packet per full window of ACKs,
                // tracked in bytes so sub-MSS ACKs still count.
                self.acked_accum += self.mss as u64;
                let window_bytes = self.cwnd as u64 * self.mss as u64;
                if self.acked_accum >= window_bytes {
                    self.acked_accum -= window_bytes;
                    self.cwnd = self.cwnd.saturating_add(1);
                }
            }
        }
    }

    fn on_loss(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(2);
        self.cwnd = self.ssthresh;
        self.acked_accum = 0;
    }

    fn on_timeout(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(2);
        self.cwnd = 1;
        self.acked_accum = 0;
    }
}

impl CongestionControl for Reno {
    fn name(&self) -> &'static str {
        "reno"
    }

    fn on_event(&mut self, ev: &CongestionEvent, _inputs: &CcInputs<'_>) -> CwndUpdate {
        match ev.kind {
            EventKind::Ack => self.on_ack(ev.acked_bytes),
            EventKind::DupAck | EventKind::Ecn => self.on_loss(),
            EventKind::Timeout => self.on_timeout(),
        }
        CwndUpdate { cwnd: self.cwnd, pacing_bps: None, phase: None }
    }

    fn cwnd(&self) -> u32 {
        self.cwnd
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::{ack, inputs, loss};
    use super::*;

    fn reno() -> Reno {
        Reno::new(&CcaConfig::default())
    }

    #[test]
    fn slow_start_until_ssthresh_then_linear() {
        let mut r = reno();
        r.ssthresh = 10; // start at the threshold: straight into avoidance
        assert_eq!(r.cwnd(), 10);
        // One full window of single-packet ACKs adds exactly one packet.
        for i in 0..10u64 {
            r.on_event(&ack(100_000 + i, 50_000, 1, 1e6), &inputs(100_000 + i));
        }
        assert_eq!(r.cwnd(), 11);
    }

    #[test]
    fn loss_halves_the_window() {
        let mut r = reno();
        r.cwnd = 40;
        r.ssthresh = 40;
        r.on_event(&loss(200_000, EventKind::DupAck), &inputs(200_000));
        assert_eq!(r.cwnd(), 20);
        assert_eq!(r.ssthresh, 20);
    }

    #[test]
    fn timeout_collapses_to_one_and_slow_starts_again() {
        let mut r = reno();
        r.cwnd = 30;
        r.ssthresh = 30;
        r.on_event(&loss(200_000, EventKind::Timeout), &inputs(200_000));
        assert_eq!(r.cwnd(), 1);
        assert_eq!(r.ssthresh, 15);
        // Doubling resumes below the new threshold.
        r.on_event(&ack(300_000, 50_000, 1, 1e6), &inputs(300_000));
        assert_eq!(r.cwnd(), 2);
    }

    #[test]
    fn halving_never_goes_below_two() {
        let mut r = reno();
        r.cwnd = 2;
        r.on_event(&loss(1_000, EventKind::DupAck), &inputs(1_000));
        assert_eq!(r.cwnd(), 2);
    }
}
