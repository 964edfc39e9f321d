//! Trace-driven simulator for congestion control over cellular links.
//!
//! The crate models the full pipeline between a radio modem and a transport
//! sender:
//!
//! * [`diag`] — the modem's diagnostic messages (scheduling grants, granted-byte
//!   summaries, cell measurements), their binary framing, and a latest-value
//!   channel that fans decoded frames out to subscribers without blocking the
//!   producer.
//! * [`modem`] — a synthetic modem that replays a capacity trace as per-TTI
//!   scheduling grants and exports them as diagnostic frames, with a
//!   configurable internal buffer-flush policy.
//! * [`trace`] — piecewise-constant link-capacity traces: CSV ingest,
//!   generation, and lookup.
//! * [`bandwidth`] — turning diagnostic KPIs into bandwidth estimates
//!   (per-grant throughput-table summation and granted-byte counters), plus a
//!   hysteresis detector that decides whether the cellular hop or the wired
//!   path is the bottleneck.
//! * [`cca`] — congestion-control algorithms: the KPI-driven controller with
//!   its startup/steady/fallback state machine, and `bbr-lite`, `cubic`,
//!   `reno` baselines behind one trait.
//! * [`netsim`] — a deterministic discrete-event network model (wired segment,
//!   per-UE cellular buffer drained by the modem's grants, cumulative-ACK
//!   transport) producing a serializable event log.
//! * [`metrics`] — delay/throughput summaries, Jain fairness, nearest-rank
//!   percentiles.
//! * [`study`] — canned experiments that sweep scenarios and write
//!   deterministic `summary.csv` / `report.json` outputs.
//! * [`config`] — TOML scenario and study configuration.
//!
//! Everything is deterministic given a seed: reruns of the same scenario
//! produce byte-identical event logs and study outputs.

pub mod bandwidth;
pub mod cca;
pub mod config;
pub mod diag;
pub mod metrics;
pub mod modem;
pub mod netsim;
pub mod study;
pub mod trace;

pub use bandwidth::{bw_3gpp, bw_granted_bytes, pearson, BottleneckDetector, BottleneckLocation, TputTable};
pub use cca::{make_cca, CongestionControl, CongestionEvent, FlowKey, FlowRegistry, Transport};
pub use diag::{CellMeas, DciGrant, DiagFrame, Direction, FramePayload, GrantedBytesReport, MsgType};
pub use modem::{BufferPolicy, ModemEmulator, RadioConfig, TimedGrant};
pub use netsim::{measure, run, EventLog, Scenario};
pub use trace::LinkTrace;
