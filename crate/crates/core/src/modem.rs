//! Synthetic modem: replays a capacity trace as scheduling grants and exports
//! them as diagnostic frames.
//!
//! Every TTI the synthesizer inverts the throughput table: given the trace
//! capacity it picks, per carrier, the resource-block count whose table entry
//! comes closest to the capacity's per-TTI bit budget. Re-summing those grants
//! through the same table therefore reconstructs the trace to within one
//! resource block per carrier per TTI — the quantization floor of the
//! representation.
//!
//! [`ModemEmulator`] wraps the synthesizer with the modem's export behavior:
//! grants become `dci_grant` frames, serving-cell measurements appear every
//! 10 ms, granted-byte summaries every 100 ms, and everything sits in an
//! internal buffer until the configured [`BufferPolicy`] flushes it to
//! subscribers. A 1 ms drain makes per-TTI KPIs arrive essentially live; a
//! 1000 ms batch makes them arrive in once-a-second bursts, which is exactly
//! the freshness difference the sampling-granularity experiments measure.


use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bandwidth::TputTable;
use crate::diag::{
    self, CellMeas, DciGrant, DiagChannel, DiagFrame, Direction, FramePayload, GrantedBytesReport,
    MsgType, Subscription, MAX_PRB,
};
use crate::trace::LinkTrace;

/// How the transport-block-size index evolves over time.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TbsSchedule {
    /// Same index every TTI.
    Fixed(u8),
    /// Redraw the index uniformly in `[min, max]` every `dwell_ms`, from the
    /// seeded stream. Capacity inversion compensates with the resource-block
    /// count, so the reconstructed bandwidth stays faithful while the raw PRB
    /// series decouples from capacity.
    Redraw { min: u8, max: u8, dwell_ms: u64 },
}

impl Default for TbsSchedule {
    fn default() -> Self {
        TbsSchedule::Fixed(DEFAULT_TBS_INDEX)
    }
}

/// Default transport-block-size index for synthesis.
pub const DEFAULT_TBS_INDEX: u8 = 10;

/// Radio parameters of the synthesized link.
#[derive(Clone, Debug)]
pub struct RadioConfig {
    /// Spatial layers per component carrier; the vector length is the carrier
    /// count (≥ 1). Capacity splits equally across carriers.
    pub mimo_layers: Vec<u8>,
    /// TTI length in microseconds: 500 or 1000.
    pub tti_us: u32,
    pub direction: Direction,
    pub tbs: TbsSchedule,
    /// Multiplicative grant noise: each per-carrier bit target is scaled by a
    /// factor drawn uniformly from `[1 - f, 1 + f]`. Zero disables it.
    pub grant_noise: f64,
    /// Transport-block capacity table used both to size grants and to read
    /// them back.
    pub table: TputTable,
}

impl RadioConfig {
    /// Single carrier, one layer, 1 ms TTI, fixed default TBS, no noise.
    pub fn single_carrier() -> Self {
        Self {
            mimo_layers: vec![1],
            tti_us: 1000,
            direction: Direction::Uplink,
            tbs: TbsSchedule::default(),
            grant_noise: 0.0,
            table: TputTable::synthetic(Direction::Uplink),
        }
    }

    pub fn num_carriers(&self) -> usize {
        self.mimo_layers.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.mimo_layers.is_empty() {
            return Err("at least one carrier required".into());
        }
        for (i, &m) in self.mimo_layers.iter().enumerate() {
            if !matches!(m, 1 | 2 | 4) {
                return Err(format!("carrier {i}: mimo_layers must be 1, 2 or 4, got {m}"));
            }
        }
        if !matches!(self.tti_us, 500 | 1000) {
            return Err(format!("tti_us must be 500 or 1000, got {}", self.tti_us));
        }
        if !(0.0..1.0).contains(&self.grant_noise) {
            return Err(format!("grant_noise must be in [0, 1), got {}", self.grant_noise));
        }
        match self.tbs {
            TbsSchedule::Fixed(t) if t > diag::MAX_TBS_INDEX => {
                return Err(format!("tbs index {t} out of range"));
            }
            TbsSchedule::Redraw { min, max, dwell_ms } => {
                if min > max || max > diag::MAX_TBS_INDEX {
                    return Err(format!("bad tbs redraw range [{min}, {max}]"));
                }
                if dwell_ms == 0 {
                    return Err("tbs redraw dwell must be positive".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A grant stamped with the TTI it applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimedGrant {
    pub time_us: u64,
    pub grant: DciGrant,
}

/// Incremental grant synthesizer; drives both the offline
/// [`grants_from_capacity`] and the [`ModemEmulator`].
#[derive(Clone, Debug)]
pub struct GrantSynth {
    cfg: RadioConfig,
    rng: ChaCha8Rng,
    current_tbs: u8,
    next_redraw_us: u64,
    /// TTIs whose ideal allocation exceeded the resource-block ceiling and got
    /// clamped; bandwidth above the table's reach is unreconstructable.
    pub clamped_ttis: u64,
}

impl GrantSynth {
    pub fn new(cfg: RadioConfig, seed: u64) -> Self {
        let current_tbs = match cfg.tbs {
            TbsSchedule::Fixed(t) => t,
            TbsSchedule::Redraw { min, .. } => min,
        };
        Self { cfg, rng: ChaCha8Rng::seed_from_u64(seed), current_tbs, next_redraw_us: 0, clamped_ttis: 0 }
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    fn tbs_at(&mut self, t_us: u64) -> u8 {
        if let TbsSchedule::Redraw { min, max, dwell_ms } = self.cfg.tbs {
            while t_us >= self.next_redraw_us {
                self.current_tbs = self.rng.gen_range(min..=max);
                self.next_redraw_us += dwell_ms * 1000;
            }
        }
        self.current_tbs
    }

    /// Grants for the TTI starting at `t_us`, one per carrier (carrier_id
    /// ascending). Must be called in increasing time order.
    pub fn grants_for_tti(&mut self, t_us: u64, capacity_bps: u64) -> Vec<DciGrant> {
        let tbs = self.tbs_at(t_us);
        let tti_us = self.cfg.tti_us as f64;
        let target_bits = capacity_bps as f64 * tti_us / 1e6;
        let per_carrier = target_bits / self.cfg.num_carriers() as f64;
        let unit = self.cfg.table.bits(1, tbs) as f64; // bits per resource block per layer
        let mut clamped = false;
        let grants = self
            .cfg
            .mimo_layers
            .iter()
            .enumerate()
            .map(|(carrier, &mimo)| {
                let noisy = if self.cfg.grant_noise > 0.0 {
                    per_carrier * (1.0 + self.rng.gen_range(-self.cfg.grant_noise..=self.cfg.grant_noise))
                } else {
                    per_carrier
                };
                let ideal = noisy / (unit * mimo as f64);
                let rounded = ideal.round();
                if rounded > MAX_PRB as f64 {
                    clamped = true;
                }
                DciGrant {
                    carrier_id: carrier as u8,
                    direction: self.cfg.direction,
                    prb: rounded.clamp(0.0, MAX_PRB as f64) as u16,
                    tbs_index: tbs,
                    mimo_layers: mimo,
                    tti_us: self.cfg.tti_us as u16,
                }
            })
            .collect();
        if clamped {
            self.clamped_ttis += 1;
        }
        grants
    }
}

/// Synthesizes the full grant sequence for `[0, duration_ms)`.
pub fn grants_from_capacity(
    trace: &LinkTrace,
    cfg: &RadioConfig,
    duration_ms: u64,
    seed: u64,
) -> Vec<TimedGrant> {
    let mut synth = GrantSynth::new(cfg.clone(), seed);
    let mut out = Vec::new();
    let mut t = 0u64;
    let end = duration_ms * 1000;
    while t < end {
        for grant in synth.grants_for_tti(t, trace.capacity_at_us(t)) {
            out.push(TimedGrant { time_us: t, grant });
        }
        t += cfg.tti_us as u64;
    }
    out
}

/// Rolls a grant sequence up into granted-byte reports over tiling windows of
/// `window_ms`. Returns `(report_time_us, report)` pairs, stamped at window
/// end; `bytes_granted = floor(Σ grant_bits / 8)` per window. The synthetic
/// modem has no demand model, so `bytes_used` equals `bytes_granted`.
pub fn granted_bytes_rollup(
    grants: &[TimedGrant],
    window_ms: u64,
    table: &TputTable,
) -> Vec<(u64, GrantedBytesReport)> {
    assert!(window_ms > 0);
    let window_us = window_ms * 1000;
    let mut out = Vec::new();
    let mut window_end = window_us;
    let mut bits = 0u64;
    let flush = |end: u64, bits: u64, out: &mut Vec<(u64, GrantedBytesReport)>| {
        let bytes = bits / 8;
        out.push((
            end,
            GrantedBytesReport { window_us: window_us as u32, bytes_granted: bytes, bytes_used: bytes },
        ));
    };
    for tg in grants {
        while tg.time_us >= window_end {
            flush(window_end, bits, &mut out);
            bits = 0;
            window_end += window_us;
        }
        bits += table.grant_bits(&tg.grant);
    }
    if let Some(last) = grants.last() {
        debug_assert!(last.time_us < window_end);
        flush(window_end, bits, &mut out);
    }
    out
}

/// When the modem hands buffered frames to its subscribers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "period_us")]
pub enum BufferPolicy {
    /// Flush the internal buffer every `period_us` (1 ms default): frames
    /// reach subscribers almost as soon as they are generated.
    Drain { period_us: u64 },
    /// Let the buffer fill for `period_us` (1000 ms default) and release it
    /// all at once: subscribers see one burst per period.
    Batch { period_us: u64 },
}

impl BufferPolicy {
    pub fn drain_default() -> Self {
        BufferPolicy::Drain { period_us: 1_000 }
    }

    pub fn batch_default() -> Self {
        BufferPolicy::Batch { period_us: 1_000_000 }
    }

    pub fn period_us(&self) -> u64 {
        match *self {
            BufferPolicy::Drain { period_us } | BufferPolicy::Batch { period_us } => period_us,
        }
    }
}

impl Default for BufferPolicy {
    fn default() -> Self {
        Self::drain_default()
    }
}

/// How often serving-cell measurements are generated.
pub const CELL_MEAS_PERIOD_US: u64 = 10_000;
/// Accounting window of granted-byte reports.
pub const REPORT_WINDOW_US: u64 = 100_000;

/// A frame together with the instant the flush policy released it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub delivered_us: u64,
    pub frame: DiagFrame,
}

/// Everything an [`ModemEmulator::advance_to`] call produced.
#[derive(Clone, Debug, Default)]
pub struct ModemOutput {
    /// Grants generated in the advanced interval, in TTI order. These describe
    /// the radio's actual service schedule, independent of when the diagnostic
    /// frames reporting them get flushed.
    pub grants: Vec<TimedGrant>,
    /// Frames released to subscribers, in release order.
    pub deliveries: Vec<Delivery>,
}

/// Trace-driven modem with a diagnostic export path.
pub struct ModemEmulator {
    trace: LinkTrace,
    synth: GrantSynth,
    policy: BufferPolicy,
    channel: DiagChannel,
    pending: Vec<DiagFrame>,
    now_us: u64,
    next_tti_us: u64,
    next_meas_us: u64,
    next_report_us: u64,
    next_flush_us: u64,
    window_bits: u64,
    cell_id: u16,
}

impl ModemEmulator {
    pub fn new(trace: LinkTrace, cfg: RadioConfig, policy: BufferPolicy, seed: u64) -> Self {
        assert!(policy.period_us() > 0, "flush period must be positive");
        Self {
            trace,
            synth: GrantSynth::new(cfg, seed),
            policy,
            channel: DiagChannel::new(),
            pending: Vec::new(),
            now_us: 0,
            next_tti_us: 0,
            next_meas_us: 0,
            next_report_us: REPORT_WINDOW_US,
            next_flush_us: policy.period_us(),
            window_bits: 0,
            cell_id: 1,
        }
    }

    /// Registers a subscriber on the modem's diagnostic channel.
    pub fn subscribe(&mut self, filter: &[MsgType]) -> Subscription {
        self.channel.subscribe(filter)
    }

    pub fn config(&self) -> &RadioConfig {
        self.synth.config()
    }

    /// TTIs whose allocation the resource-block ceiling clamped so far.
    pub fn clamped_ttis(&self) -> u64 {
        self.synth.clamped_ttis
    }

    /// Runs the modem up to and including `t_us`.
    pub fn advance_to(&mut self, t_us: u64) -> ModemOutput {
        assert!(t_us >= self.now_us, "time went backwards");
        let mut out = ModemOutput::default();
        loop {
            // Earliest due internal event; generation outranks flushing at
            // equal times so a flush releases frames stamped that instant.
            let next = self
                .next_tti_us
                .min(self.next_meas_us)
                .min(self.next_report_us)
                .min(self.next_flush_us);
            if next > t_us {
                break;
            }
            if self.next_tti_us == next {
                let t = self.next_tti_us;
                for grant in self.synth.grants_for_tti(t, self.trace.capacity_at_us(t)) {
                    self.window_bits += self.synth.config().table.grant_bits(&grant);
                    self.pending.push(DiagFrame { timestamp_us: t, payload: FramePayload::Dci(grant) });
                    out.grants.push(TimedGrant { time_us: t, grant });
                }
                self.next_tti_us += self.synth.config().tti_us as u64;
            } else if self.next_meas_us == next {
                let t = self.next_meas_us;
                let rsrp = rsrp_for_capacity(self.trace.capacity_at_us(t));
                self.pending.push(DiagFrame {
                    timestamp_us: t,
                    payload: FramePayload::CellMeas(CellMeas {
                        rsrp_centi_dbm: rsrp,
                        cell_id: self.cell_id,
                    }),
                });
                self.next_meas_us += CELL_MEAS_PERIOD_US;
            } else if self.next_report_us == next {
                let t = self.next_report_us;
                let bytes = self.window_bits / 8;
                self.window_bits = 0;
                self.pending.push(DiagFrame {
                    timestamp_us: t,
                    payload: FramePayload::GrantedBytes(GrantedBytesReport {
                        window_us: REPORT_WINDOW_US as u32,
                        bytes_granted: bytes,
                        bytes_used: bytes,
                    }),
                });
                self.next_report_us += REPORT_WINDOW_US;
            } else {
                let t = self.next_flush_us;
                for frame in self.pending.drain(..) {
                    self.channel.publish(&frame);
                    out.deliveries.push(Delivery { delivered_us: t, frame });
                }
                self.next_flush_us += self.policy.period_us();
            }
        }
        self.now_us = t_us;
        out
    }
}

/// Maps capacity to a plausible serving-cell power reading, centi-dBm.
fn rsrp_for_capacity(capacity_bps: u64) -> i32 {
    let mbps = capacity_bps as f64 / 1e6;
    (-11_500.0 + mbps * 10.0).clamp(-14_000.0, -7_000.0) as i32
}
