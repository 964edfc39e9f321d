//! Congestion-control algorithms behind a common event-driven interface.
//!
//! The transport layer feeds every [`CongestionEvent`] (ACK, duplicate-ACK
//! signal, timeout, ECN) into the flow's [`CongestionControl`] instance, which
//! answers with a congestion-window size in packets. Four algorithms are
//! provided, selectable by name via [`make_cca`]:
//!
//! * `biscay` — sizes the window from the *radio-allocated* bandwidth KPI (see
//!   [`biscay`]) instead of probing for capacity;
//! * `bbr-lite` — delivery-rate / min-RTT model with a startup phase and gain
//!   cycling;
//! * `cubic` — the cubic window curve with multiplicative decrease;
//! * `reno` — slow start plus AIMD.
//!
//! The module also owns the shared arithmetic ([`bdp_cwnd`],
//! [`bw_split_policy`], [`slow_start_step`]), the sliding-window extrema
//! filters used for RTT and rate estimates, and the [`FlowRegistry`] that
//! tracks which flows are active (UDP included — they take a bandwidth share
//! even though no controller runs for them).

pub mod bbr_lite;
pub mod biscay;
pub mod cubic;
pub mod reno;

pub use bbr_lite::BbrLite;
pub use biscay::{Biscay, Phase as BiscayPhase};
pub use cubic::{cubic_k, Cubic};
pub use reno::Reno;

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::net::Ipv4Addr;

/// Transport protocol of a tracked flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

/// Classic connection 4-tuple identifying a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
}

impl std::fmt::Display for FlowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}->{}:{}", self.src_ip, self.src_port, self.dst_ip, self.dst_port)
    }
}

/// Live bookkeeping for one registered flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowState {
    pub transport: Transport,
    /// Segment size used for window arithmetic, bytes.
    pub mss: u32,
    /// Last congestion window the controller reported, packets.
    pub cwnd_packets: u32,
    /// Last minimum-RTT estimate, if the flow has one.
    pub min_rtt_us: Option<u64>,
}

/// Default maximum segment size.
pub const DEFAULT_MSS: u32 = 1500;

/// Registry of currently active flows. Its count is what the per-flow
/// bandwidth split divides by, so UDP flows register here too.
#[derive(Clone, Debug, Default)]
pub struct FlowRegistry {
    flows: BTreeMap<FlowKey, FlowState>,
}

impl FlowRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a flow; re-registering the same 4-tuple is a no-op. Returns
    /// whether the flow was new.
    pub fn register(&mut self, key: FlowKey, transport: Transport, mss: u32) -> bool {
        if self.flows.contains_key(&key) {
            return false;
        }
        self.flows.insert(
            key,
            FlowState { transport, mss, cwnd_packets: 0, min_rtt_us: None },
        );
        true
    }

    /// Removes a flow; unknown keys are a no-op. Returns whether it existed.
    pub fn unregister(&mut self, key: &FlowKey) -> bool {
        self.flows.remove(key).is_some()
    }

    pub fn contains(&self, key: &FlowKey) -> bool {
        self.flows.contains_key(key)
    }

    /// Number of active flows, TCP and UDP alike. The instantaneous snapshot
    /// handed to controllers.
    pub fn active_count(&self) -> u32 {
        self.flows.len() as u32
    }

    pub fn get(&self, key: &FlowKey) -> Option<&FlowState> {
        self.flows.get(key)
    }

    /// Records the controller's latest window for observability.
    pub fn note_cwnd(&mut self, key: &FlowKey, cwnd_packets: u32) {
        if let Some(st) = self.flows.get_mut(key) {
            st.cwnd_packets = cwnd_packets;
        }
    }

    pub fn note_min_rtt(&mut self, key: &FlowKey, min_rtt_us: u64) {
        if let Some(st) = self.flows.get_mut(key) {
            st.min_rtt_us = Some(min_rtt_us);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FlowKey, &FlowState)> {
        self.flows.iter()
    }
}

/// What happened on the wire to provoke a controller callback.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Cumulative acknowledgment advanced.
    Ack,
    /// Third duplicate ACK: fast-retransmit signal.
    DupAck,
    /// Retransmission timer fired.
    Timeout,
    /// Explicit congestion notification echoed.
    Ecn,
}

/// One transport event delivered to a congestion controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CongestionEvent {
    pub kind: EventKind,
    pub flow: FlowKey,
    /// Bytes newly acknowledged by this event (0 for losses).
    pub acked_bytes: u64,
    /// When the packet whose ACK triggered this event was sent.
    pub send_time_us: u64,
    /// When the event was observed; the controller's "now".
    pub ack_time_us: u64,
    /// Bytes delivered between that packet's send and its ACK — the delivery
    /// count underlying rate samples.
    pub delivered_bytes_since: u64,
}

impl CongestionEvent {
    /// RTT sample carried by an ACK; `None` for loss events or degenerate
    /// timestamps.
    pub fn rtt_us(&self) -> Option<u64> {
        (self.kind == EventKind::Ack && self.ack_time_us > self.send_time_us)
            .then(|| self.ack_time_us - self.send_time_us)
    }

    /// Delivery-rate sample in bit/s, if this event carries one.
    pub fn delivery_rate_bps(&self) -> Option<f64> {
        let rtt = self.rtt_us()?;
        (self.delivered_bytes_since > 0)
            .then(|| self.delivered_bytes_since as f64 * 8e6 / rtt as f64)
    }
}

/// Latest radio-KPI bandwidth estimate, as sampled by the harness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KpiSample {
    /// Allocated cellular bandwidth, bit/s.
    pub bps: f64,
    /// When the sample was computed.
    pub time_us: u64,
    /// Strictly increasing sample counter; lets controllers distinguish a
    /// fresh sample from the previous one being handed over again.
    pub seq: u64,
}

/// Shared observations handed to the controller alongside each event.
#[derive(Clone, Copy, Debug)]
pub struct CcInputs<'a> {
    pub now_us: u64,
    /// Most recent KPI bandwidth sample, if any exists yet.
    pub kpi: Option<&'a KpiSample>,
    /// Active-flow count from the registry (≥ 1 whenever a flow event fires).
    pub active_flows: u32,
}

/// Controller verdict after an event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwndUpdate {
    /// Congestion window in packets, ≥ 1.
    pub cwnd: u32,
    /// Pacing rate for controllers that compute one.
    pub pacing_bps: Option<f64>,
    /// State-machine phase, for controllers that have one (`biscay`).
    pub phase: Option<BiscayPhase>,
}

/// Event-driven congestion controller for a single flow.
pub trait CongestionControl {
    /// Algorithm name as used in scenario configs.
    fn name(&self) -> &'static str;
    /// Processes one transport event and returns the updated window.
    fn on_event(&mut self, ev: &CongestionEvent, inputs: &CcInputs<'_>) -> CwndUpdate;
    /// Current window without processing an event.
    fn cwnd(&self) -> u32;
}

/// Controller construction parameters.
#[derive(Clone, Copy, Debug)]
pub struct CcaConfig {
    pub mss: u32,
    pub initial_cwnd: u32,
    /// KPI sampling interval; the KPI-driven controller measures staleness in
    /// units of this.
    pub kpi_interval_us: u64,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self { mss: DEFAULT_MSS, initial_cwnd: 10, kpi_interval_us: 10_000 }
    }
}

/// Error for unrecognized algorithm names.
#[derive(Debug, thiserror::Error)]
#[error("unknown congestion-control algorithm '{0}' (expected biscay, bbr-lite, cubic or reno)")]
pub struct UnknownCca(pub String);

/// Builds a controller by config name: `biscay`, `bbr-lite`, `cubic`, `reno`.
pub fn make_cca(name: &str, cfg: &CcaConfig) -> Result<Box<dyn CongestionControl>, UnknownCca> {
    match name {
        "biscay" => Ok(Box::new(Biscay::new(cfg))),
        "bbr-lite" => Ok(Box::new(BbrLite::new(cfg))),
        "cubic" => Ok(Box::new(Cubic::new(cfg))),
        "reno" => Ok(Box::new(Reno::new(cfg))),
        other => Err(UnknownCca(other.to_string())),
    }
}

/// One slow-start increment: the window grows by one packet per acked packet,
/// which doubles it every round trip.
pub fn slow_start_step(cwnd: u32) -> u32 {
    cwnd.saturating_add(1)
}

/// Equal-share apportioning of the link bandwidth across active flows,
/// integer floor. `active_flows` must be ≥ 1.
pub fn bw_split_policy(bw_bps: u64, active_flows: u32) -> u64 {
    assert!(active_flows >= 1, "split requires at least one active flow");
    bw_bps / active_flows as u64
}

/// Bandwidth-delay product expressed as a window: `ceil(bw × rtt / (8 × mss))`
/// packets, floored at one so a flow can always probe.
pub fn bdp_cwnd(bw_bps: u64, rtt_us: u64, mss: u32) -> u32 {
    assert!(mss > 0);
    let num = bw_bps as u128 * rtt_us as u128;
    let den = 8u128 * mss as u128 * 1_000_000u128;
    let packets = num.div_ceil(den);
    (packets.max(1)).min(u32::MAX as u128) as u32
}

/// Sliding-window minimum over timestamped samples (monotonic deque, O(1)
/// amortized). Samples must arrive in non-decreasing time order.
#[derive(Clone, Debug)]
pub struct WindowedMin<T> {
    window_us: u64,
    q: VecDeque<(u64, T)>,
}

impl<T: PartialOrd + Copy> WindowedMin<T> {
    pub fn new(window_us: u64) -> Self {
        Self { window_us, q: VecDeque::new() }
    }

    pub fn push(&mut self, t_us: u64, value: T) {
        while self.q.back().is_some_and(|&(_, v)| v >= value) {
            self.q.pop_back();
        }
        self.q.push_back((t_us, value));
        let cutoff = t_us.saturating_sub(self.window_us);
        while self.q.front().is_some_and(|&(t, _)| t < cutoff) {
            self.q.pop_front();
        }
    }

    /// Minimum over the trailing window ending at the last push.
    pub fn current(&self) -> Option<T> {
        self.q.front().map(|&(_, v)| v)
    }
}

/// Sliding-window maximum; mirror image of [`WindowedMin`].
#[derive(Clone, Debug)]
pub struct WindowedMax<T> {
    window_us: u64,
    q: VecDeque<(u64, T)>,
}

impl<T: PartialOrd + Copy> WindowedMax<T> {
    pub fn new(window_us: u64) -> Self {
        Self { window_us, q: VecDeque::new() }
    }

    /// Adjusts the window length; applies from the next push.
    pub fn set_window(&mut self, window_us: u64) {
        self.window_us = window_us;
    }

    pub fn push(&mut self, t_us: u64, value: T) {
        while self.q.back().is_some_and(|&(_, v)| v <= value) {
            self.q.pop_back();
        }
        self.q.push_back((t_us, value));
        let cutoff = t_us.saturating_sub(self.window_us);
        while self.q.front().is_some_and(|&(t, _)| t < cutoff) {
            self.q.pop_front();
        }
    }

    pub fn current(&self) -> Option<T> {
        self.q.front().map(|&(_, v)| v)
    }
}
