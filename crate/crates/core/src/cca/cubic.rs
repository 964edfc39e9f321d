//! CUBIC: window growth along a cubic curve anchored at the last loss point.
//!
//! After a multiplicative decrease to `β·W_max`, the window follows
//! `W(t) = C·(t − K)³ + W_max` where `t` is the time since the decrease and
//! `K = ∛(W_max·(1 − β)/C)` is when the curve crosses its anchor again:
//! concave approach below `W_max`, plateau around it, convex probing beyond.
//! Slow start applies below `ssthresh`, and timeouts collapse the window to
//! one packet.

use super::{
    slow_start_step, CcaConfig, CongestionControl, CongestionEvent, CwndUpdate, CcInputs,
    EventKind,
};

/// Cubic curve scale constant, packets/s³.
pub const CUBIC_C: f64 = 0.4;
/// Multiplicative decrease factor.
pub const CUBIC_BETA: f64 = 0.7;

/// Time in seconds for the cubic curve to climb back to `w_max` packets.
pub fn cubic_k(w_max: f64) -> f64 {
    (w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt()
}

/// Cubic congestion controller.
#[derive(Clone, Debug)]
pub struct Cubic {
    /// Fractional window, packets; `cwnd()` reports the floor.
    cwnd_f: f64,
    ssthresh: u32,
    mss: u32,
    /// Window size when the last decrease happened (curve anchor).
    w_max: f64,
    /// Seconds until the curve re-reaches `w_max`.
    k: f64,
    /// When the current growth epoch started, i.e. the last decrease.
    epoch_start_us: Option<u64>,
}

impl Cubic {
    pub fn new(cfg: &CcaConfig) -> Self {
        Self {
            cwnd_f: cfg.initial_cwnd.max(1) as f64,
            ssthresh: u32::MAX,
            mss: cfg.mss,
            w_max: 0.0,
            k: 0.0,
            epoch_start_us: None,
        }
    }

    /// Window the curve prescribes at time `now_us`.
    fn target(&self, now_us: u64) -> f64 {
        let epoch = self.epoch_start_us.expect("target needs an epoch");
        let t = now_us.saturating_sub(epoch) as f64 / 1e6;
        CUBIC_C * (t - self.k).powi(3) + self.w_max
    }

    fn on_ack(&mut self, now_us: u64, acked_bytes: u64) {
        let packets = acked_bytes.div_ceil(self.mss as u64);
        for _ in 0..packets {
            if (self.cwnd_f as u32) < self.ssthresh {
                self.cwnd_f = slow_start_step(self.cwnd_f as u32) as f64;
                continue;
            }
            if self.epoch_start_us.is_none() {
                // Entering avoidance without a recorded loss (e.g. regrown
                // past ssthresh after a timeout): anchor the curve here.
                self.epoch_start_us = Some(now_us);
                if self.w_max < self.cwnd_f {
                    self.w_max = self.cwnd_f;
                }
                self.k = cubic_k(self.w_max);
            }
            let target = self.target(now_us);
            if target > self.cwnd_f {
                // Standard per-ACK approach: close the gap in cwnd steps, so
                // the window converges to the curve within about a round trip.
                self.cwnd_f += (target - self.cwnd_f) / self.cwnd_f;
            } else {
                // At or beyond the curve (clock skew, reordering): probe
                // minimally, about 1% of a packet per window.
                self.cwnd_f += 0.01 / self.cwnd_f;
            }
        }
    }

    fn on_loss(&mut self, now_us: u64) {
        self.w_max = self.cwnd_f;
        self.cwnd_f = (self.cwnd_f * CUBIC_BETA).max(1.0);
        self.ssthresh = (self.cwnd_f as u32).max(2);
        self.k = cubic_k(self.w_max);
        self.epoch_start_us = Some(now_us);
    }

    fn on_timeout(&mut self) {
        self.ssthresh = ((self.cwnd_f * CUBIC_BETA) as u32).max(2);
        self.cwnd_f = 1.0;
        self.epoch_start_us = None;
    }
}

impl CongestionControl for Cubic {
    fn name(&self) -> &'static str {
        "cubic"
    }

    fn on_event(&mut self, ev: &CongestionEvent, _inputs: &CcInputs<'_>) -> CwndUpdate {
        match ev.kind {
            EventKind::Ack => self.on_ack(ev.ack_time_us, ev.acked_bytes),
            EventKind::DupAck | EventKind::Ecn => self.on_loss(ev.ack_time_us),
            EventKind::Timeout => self.on_timeout(),
        }
        CwndUpdate { cwnd: self.cwnd(), pacing_bps: None, phase: None }
    }

    fn cwnd(&self) -> u32 {
        (self.cwnd_f as u32).max(1)
    }
}
