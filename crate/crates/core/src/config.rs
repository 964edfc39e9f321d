//! TOML configuration for scenarios and studies.
//!
//! Two file kinds share one scenario schema:
//!
//! * a **scenario file** (`sim run --scenario`) is the `[scenario]` schema at
//!   the top level;
//! * a **study file** (`sim study <name> --config`) holds the same schema
//!   under `[scenario]` plus optional per-study sections.
//!
//! Every key has a default, so `{}` (or a file containing just `[scenario]`)
//! is valid; `sim run` additionally requires at least one `[[flows]]` entry.
//! Times are milliseconds (fractions allowed, microsecond resolution), rates
//! are Mbit/s unless the key says otherwise. Relative paths resolve against
//! the config file's directory.
//!
//! # Scenario schema
//!
//! | key                 | default   | meaning                                   |
//! |---------------------|-----------|-------------------------------------------|
//! | `duration_ms`       | 60000     | simulation horizon                        |
//! | `seed`              | 1         | master seed (trace, noise, everything)    |
//! | `mss`               | 1500      | segment size, bytes                       |
//! | `initial_cwnd`      | 10        | initial window, packets                   |
//! | `kpi_interval_ms`   | 10        | KPI sampling period                       |
//! | `cell_buffer_bytes` | 3145728   | per-UE cellular buffer                    |
//! | `kpi_source`        | `"per_tti_grants"` | or `"granted_bytes"`             |
//!
//! `[trace]` — exactly one of:
//!
//! | key             | meaning                                  |
//! |-----------------|------------------------------------------|
//! | `file`          | CSV path (`time_ms,capacity_bps` header) |
//! | `constant_mbps` | flat capacity                            |
//! | `random_walk`   | table: `min_mbps`, `max_mbps`, `step_mbps`, optional `duration_ms` (scenario duration), `interval_ms` (100), `seed` (scenario seed) |
//!
//! Defaults to a 5–50 Mbit/s walk, 3 Mbit/s steps, 100 ms intervals.
//!
//! `[radio]`:
//!
//! | key           | default    | meaning                                    |
//! |---------------|------------|--------------------------------------------|
//! | `mimo_layers` | `[1]`      | spatial layers per carrier (1, 2 or 4)     |
//! | `tti_us`      | 1000       | TTI length (500 or 1000)                   |
//! | `direction`   | `"uplink"` | or `"downlink"`                            |
//! | `tbs_index`   | 10         | fixed transport-block-size index           |
//! | `tbs_redraw`  | —          | table `{ min, max, dwell_ms }`, overrides `tbs_index` |
//! | `grant_noise` | 0.0        | multiplicative grant noise fraction        |
//! | `tput_table`  | synthetic  | CSV path (`prb,tbs_index,bits` header)     |
//!
//! `[buffer]` — diagnostic flush policy:
//!
//! | key         | default | meaning                                       |
//! |-------------|---------|-----------------------------------------------|
//! | `mode`      | `"drain"` | or `"batch"`                                |
//! | `period_ms` | 1 (drain) / 1000 (batch) | flush period                 |
//!
//! `[wired]`:
//!
//! | key             | default | meaning                                    |
//! |-----------------|---------|--------------------------------------------|
//! | `prop_delay_ms` | 10      | one-way propagation delay (each direction) |
//! | `rate_mbps`     | 100     | constant capacity, or                      |
//! | `steps`         | —       | array of `{ time_ms, rate_mbps }`, first at 0 |
//!
//! `[[flows]]` (repeatable):
//!
//! | key             | default   | meaning                                 |
//! |-----------------|-----------|------------------------------------------|
//! | `cca`           | required for TCP | `biscay`, `bbr-lite`, `cubic`, `reno` |
//! | `transport`     | `"tcp"` (`"udp"` when `udp_rate_mbps` set) |        |
//! | `start_ms`      | 0         | when the flow starts                     |
//! | `duration_ms`   | until end | how long it sends                        |
//! | `udp_rate_mbps` | —         | constant UDP rate                        |
//! | `label`         | cca name  | row label in study outputs               |
//!
//! # Study sections
//!
//! Studies build their own flows (and sometimes trace/wired schedules) from
//! the `[scenario]` base; `[[flows]]` entries in a study file are ignored.
//!
//! * `[compare]`: `ccas` (default all four), `runs` (default 1) — each run
//!   uses seed `base + run`, so a seeded random-walk trace differs per run
//!   while every algorithm faces the same set of traces.
//! * `[sweep]`: `intervals_ms` (default `[1, 10, 100, 1000, 1500]`), `cca`
//!   (default `biscay`) — one run per KPI sampling interval, same seed.
//! * `[multiflow]`: `ccas` (default `biscay`, `bbr-lite`, `cubic`), `flows`
//!   (default 3), `stagger_ms` (default 0, i.e. simultaneous starts; raise it
//!   to probe late-joiner convergence).
//! * `[fallback]`: `cca` (default `biscay`), `cellular_mbps` (default 20),
//!   `high_mbps` (default 50), `low_mbps` (default `[5, 10, 15]`),
//!   `segment_ms` (default 10000) — replaces the base trace with a constant
//!   cellular link and the wired schedule with
//!   high, low₁, high, low₂, … , high segments.
//! * `[correlate]`: `runs` (default 10), `noise` (default 0.1), `window_ms`
//!   (default 100), `tbs_min`/`tbs_max`/`tbs_dwell_ms` (defaults 4/22/100) —
//!   no network simulation; compares bandwidth estimators against the trace.
//! * `[granularity]`: `cca` (default `biscay`), `drain_period_ms` (default
//!   1), `batch_period_ms` (default 1000) — one run per flush policy plus
//!   modem-level inter-arrival statistics.
//!
//! Top-level `events_log = true` makes studies write per-run event logs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bandwidth::{TableError, TputTable};
use crate::cca::Transport;
use crate::diag::Direction;
use crate::modem::{BufferPolicy, RadioConfig, TbsSchedule, DEFAULT_TBS_INDEX};
use crate::netsim::{
    FlowSpec, KpiSource, Scenario, WiredConfig, WiredStep, DEFAULT_CELL_BUFFER_BYTES,
    DEFAULT_KPI_INTERVAL_US,
};
use crate::trace::{LinkTrace, RandomWalk, TraceError};

/// Anything that can go wrong loading or building a configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("config: {0}")]
    Invalid(String),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("throughput table: {0}")]
    Table(#[from] TableError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Converts configured milliseconds to internal microseconds.
fn ms_to_us(ms: f64, key: &str) -> Result<u64, ConfigError> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(invalid(format!("{key}: {ms} is not a non-negative duration")));
    }
    Ok((ms * 1000.0).round() as u64)
}

/// Converts configured Mbit/s to internal bit/s.
fn mbps_to_bps(mbps: f64, key: &str) -> Result<u64, ConfigError> {
    if !mbps.is_finite() || mbps < 0.0 {
        return Err(invalid(format!("{key}: {mbps} is not a non-negative rate")));
    }
    Ok((mbps * 1e6).round() as u64)
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// The `[trace]` section.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub file: Option<PathBuf>,
    pub constant_mbps: Option<f64>,
    pub random_walk: Option<RandomWalkSpec>,
}

/// The `[trace.random_walk]` table.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RandomWalkSpec {
    pub min_mbps: f64,
    pub max_mbps: f64,
    pub step_mbps: f64,
    pub duration_ms: Option<u64>,
    pub interval_ms: Option<u64>,
    pub seed: Option<u64>,
}

impl Default for RandomWalkSpec {
    fn default() -> Self {
        Self {
            min_mbps: 5.0,
            max_mbps: 50.0,
            step_mbps: 3.0,
            duration_ms: None,
            interval_ms: None,
            seed: None,
        }
    }
}

impl TraceSpec {
    fn build(
        &self,
        base_dir: &Path,
        duration_ms: u64,
        seed: u64,
    ) -> Result<LinkTrace, ConfigError> {
        let sources =
            self.file.is_some() as u8 + self.constant_mbps.is_some() as u8
                + self.random_walk.is_some() as u8;
        if sources > 1 {
            return Err(invalid(
                "trace: set at most one of file, constant_mbps, random_walk",
            ));
        }
        if let Some(path) = &self.file {
            return Ok(LinkTrace::from_csv_path(&resolve(base_dir, path))?);
        }
        if let Some(mbps) = self.constant_mbps {
            return Ok(LinkTrace::constant(mbps_to_bps(mbps, "trace.constant_mbps")?));
        }
        let walk = self.random_walk.unwrap_or_default();
        if walk.max_mbps < walk.min_mbps {
            return Err(invalid("trace.random_walk: max_mbps below min_mbps"));
        }
        let cfg = RandomWalk {
            min_mbps: walk.min_mbps,
            max_mbps: walk.max_mbps,
            step_mbps: walk.step_mbps,
            duration_ms: walk.duration_ms.unwrap_or(duration_ms),
            interval_ms: walk.interval_ms.unwrap_or(100),
        };
        Ok(LinkTrace::random_walk(&cfg, walk.seed.unwrap_or(seed)))
    }
}

/// The `[radio.tbs_redraw]` table.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TbsRedrawSpec {
    pub min: u8,
    pub max: u8,
    pub dwell_ms: u64,
}

/// The `[radio]` section.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSpec {
    pub mimo_layers: Vec<u8>,
    pub tti_us: u32,
    pub direction: Direction,
    pub tbs_index: Option<u8>,
    pub tbs_redraw: Option<TbsRedrawSpec>,
    pub grant_noise: f64,
    pub tput_table: Option<PathBuf>,
}

impl Default for RadioSpec {
    fn default() -> Self {
        Self {
            mimo_layers: vec![1],
            tti_us: 1000,
            direction: Direction::Uplink,
            tbs_index: None,
            tbs_redraw: None,
            grant_noise: 0.0,
            tput_table: None,
        }
    }
}

impl RadioSpec {
    fn build(&self, base_dir: &Path) -> Result<RadioConfig, ConfigError> {
        if self.tbs_index.is_some() && self.tbs_redraw.is_some() {
            return Err(invalid("radio: set at most one of tbs_index, tbs_redraw"));
        }
        let tbs = match self.tbs_redraw {
            Some(r) => TbsSchedule::Redraw { min: r.min, max: r.max, dwell_ms: r.dwell_ms },
            None => TbsSchedule::Fixed(self.tbs_index.unwrap_or(DEFAULT_TBS_INDEX)),
        };
        let table = match &self.tput_table {
            Some(path) => TputTable::from_csv_path(&resolve(base_dir, path), self.direction)?,
            None => TputTable::synthetic(self.direction),
        };
        let cfg = RadioConfig {
            mimo_layers: self.mimo_layers.clone(),
            tti_us: self.tti_us,
            direction: self.direction,
            tbs,
            grant_noise: self.grant_noise,
            table,
        };
        cfg.validate().map_err(|e| invalid(format!("radio: {e}")))?;
        Ok(cfg)
    }
}

/// The `[buffer]` section.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BufferSpec {
    pub mode: String,
    pub period_ms: Option<f64>,
}

impl Default for BufferSpec {
    fn default() -> Self {
        Self { mode: "drain".into(), period_ms: None }
    }
}

impl BufferSpec {
    fn build(&self) -> Result<BufferPolicy, ConfigError> {
        let default_ms = match self.mode.as_str() {
            "drain" => 1.0,
            "batch" => 1000.0,
            other => {
                return Err(invalid(format!(
                    "buffer.mode: '{other}' is not 'drain' or 'batch'"
                )))
            }
        };
        let period_us = ms_to_us(self.period_ms.unwrap_or(default_ms), "buffer.period_ms")?;
        if period_us == 0 {
            return Err(invalid("buffer.period_ms must be positive"));
        }
        Ok(match self.mode.as_str() {
            "drain" => BufferPolicy::Drain { period_us },
            _ => BufferPolicy::Batch { period_us },
        })
    }
}

/// One `{ time_ms, rate_mbps }` entry of `wired.steps`.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WiredStepSpec {
    pub time_ms: f64,
    pub rate_mbps: f64,
}

/// The `[wired]` section.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WiredSpec {
    pub prop_delay_ms: f64,
    pub rate_mbps: Option<f64>,
    pub steps: Option<Vec<WiredStepSpec>>,
}

impl Default for WiredSpec {
    fn default() -> Self {
        Self { prop_delay_ms: 10.0, rate_mbps: None, steps: None }
    }
}

impl WiredSpec {
    fn build(&self) -> Result<WiredConfig, ConfigError> {
        let prop_delay_us = ms_to_us(self.prop_delay_ms, "wired.prop_delay_ms")?;
        if self.rate_mbps.is_some() && self.steps.is_some() {
            return Err(invalid("wired: set at most one of rate_mbps, steps"));
        }
        if let Some(steps) = &self.steps {
            let steps = steps
                .iter()
                .map(|s| {
                    Ok(WiredStep {
                        time_us: ms_to_us(s.time_ms, "wired.steps.time_ms")?,
                        rate_bps: mbps_to_bps(s.rate_mbps, "wired.steps.rate_mbps")?,
                    })
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            return Ok(WiredConfig { steps, prop_delay_us });
        }
        let rate = mbps_to_bps(self.rate_mbps.unwrap_or(100.0), "wired.rate_mbps")?;
        Ok(WiredConfig::constant(rate, prop_delay_us))
    }
}

/// One `[[flows]]` entry.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub cca: Option<String>,
    pub transport: Option<Transport>,
    pub start_ms: Option<f64>,
    pub duration_ms: Option<f64>,
    pub udp_rate_mbps: Option<f64>,
    pub label: Option<String>,
}

impl FlowEntry {
    fn build(&self, index: usize) -> Result<FlowSpec, ConfigError> {
        let transport = self.transport.unwrap_or(if self.udp_rate_mbps.is_some() {
            Transport::Udp
        } else {
            Transport::Tcp
        });
        let mut spec = match transport {
            Transport::Tcp => {
                let cca = self.cca.clone().ok_or_else(|| {
                    invalid(format!("flows[{index}]: tcp flows need a cca name"))
                })?;
                FlowSpec::tcp(&cca)
            }
            Transport::Udp => {
                let mbps = self.udp_rate_mbps.ok_or_else(|| {
                    invalid(format!("flows[{index}]: udp flows need udp_rate_mbps"))
                })?;
                FlowSpec::udp(mbps_to_bps(mbps, "flows.udp_rate_mbps")?)
            }
        };
        if let Some(ms) = self.start_ms {
            spec.start_us = ms_to_us(ms, "flows.start_ms")?;
        }
        if let Some(ms) = self.duration_ms {
            spec.duration_us = Some(ms_to_us(ms, "flows.duration_ms")?);
        }
        if let Some(label) = &self.label {
            spec.label = label.clone();
        }
        Ok(spec)
    }
}

/// The scenario schema: top level of a scenario file, `[scenario]` in a study
/// file. See the module docs for every key and default.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub duration_ms: f64,
    pub seed: u64,
    pub mss: u32,
    pub initial_cwnd: u32,
    pub kpi_interval_ms: f64,
    pub cell_buffer_bytes: u64,
    pub kpi_source: KpiSource,
    pub trace: TraceSpec,
    pub radio: RadioSpec,
    pub buffer: BufferSpec,
    pub wired: WiredSpec,
    pub flows: Vec<FlowEntry>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            duration_ms: 60_000.0,
            seed: 1,
            mss: 1500,
            initial_cwnd: 10,
            kpi_interval_ms: DEFAULT_KPI_INTERVAL_US as f64 / 1000.0,
            cell_buffer_bytes: DEFAULT_CELL_BUFFER_BYTES,
            kpi_source: KpiSource::default(),
            trace: TraceSpec::default(),
            radio: RadioSpec::default(),
            buffer: BufferSpec::default(),
            wired: WiredSpec::default(),
            flows: Vec::new(),
        }
    }
}

impl ScenarioFile {
    /// Builds the scenario with the file's own seed.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario, ConfigError> {
        self.build_seeded(base_dir, self.seed)
    }

    /// Builds the scenario with `seed` substituted everywhere the file does
    /// not pin one explicitly (scenario seed and random-walk trace seed).
    /// Studies use this to derive per-run variants.
    pub fn build_seeded(&self, base_dir: &Path, seed: u64) -> Result<Scenario, ConfigError> {
        let duration_us = ms_to_us(self.duration_ms, "duration_ms")?;
        let duration_ms = duration_us.div_ceil(1000);
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| f.build(i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scenario {
            trace: self.trace.build(base_dir, duration_ms, seed)?,
            radio: self.radio.build(base_dir)?,
            wired: self.wired.build()?,
            flows,
            duration_us,
            cell_buffer_bytes: self.cell_buffer_bytes,
            kpi_interval_us: ms_to_us(self.kpi_interval_ms, "kpi_interval_ms")?,
            buffer_policy: self.buffer.build()?,
            kpi_source: self.kpi_source,
            mss: self.mss,
            initial_cwnd: self.initial_cwnd,
            seed,
        })
    }
}

/// `[compare]` study knobs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub ccas: Vec<String>,
    pub runs: u32,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            ccas: ["biscay", "bbr-lite", "cubic", "reno"].map(String::from).to_vec(),
            runs: 1,
        }
    }
}

/// `[sweep]` study knobs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub intervals_ms: Vec<f64>,
    pub cca: String,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { intervals_ms: vec![1.0, 10.0, 100.0, 1000.0, 1500.0], cca: "biscay".into() }
    }
}

/// `[multiflow]` study knobs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MultiflowSpec {
    pub ccas: Vec<String>,
    pub flows: u32,
    pub stagger_ms: f64,
}

impl Default for MultiflowSpec {
    fn default() -> Self {
        Self {
            ccas: ["biscay", "bbr-lite", "cubic"].map(String::from).to_vec(),
            flows: 3,
            stagger_ms: 0.0,
        }
    }
}

/// `[fallback]` study knobs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FallbackSpec {
    pub cca: String,
    pub cellular_mbps: f64,
    pub high_mbps: f64,
    pub low_mbps: Vec<f64>,
    pub segment_ms: f64,
}

impl Default for FallbackSpec {
    fn default() -> Self {
        Self {
            cca: "biscay".into(),
            cellular_mbps: 20.0,
            high_mbps: 50.0,
            low_mbps: vec![5.0, 10.0, 15.0],
            segment_ms: 10_000.0,
        }
    }
}

/// `[correlate]` study knobs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateSpec {
    pub runs: u32,
    pub noise: f64,
    pub window_ms: u64,
    pub tbs_min: u8,
    pub tbs_max: u8,
    pub tbs_dwell_ms: u64,
}

impl Default for CorrelateSpec {
    fn default() -> Self {
        Self { runs: 10, noise: 0.10, window_ms: 100, tbs_min: 4, tbs_max: 22, tbs_dwell_ms: 100 }
    }
}

/// `[granularity]` study knobs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GranularitySpec {
    pub cca: String,
    pub drain_period_ms: f64,
    pub batch_period_ms: f64,
}

impl Default for GranularitySpec {
    fn default() -> Self {
        Self { cca: "biscay".into(), drain_period_ms: 1.0, batch_period_ms: 1000.0 }
    }
}

/// A parsed study file: shared scenario base plus per-study sections.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StudyFile {
    pub scenario: ScenarioFile,
    /// Write a per-run event log next to the summary outputs.
    pub events_log: bool,
    pub compare: CompareSpec,
    pub sweep: SweepSpec,
    pub multiflow: MultiflowSpec,
    pub fallback: FallbackSpec,
    pub correlate: CorrelateSpec,
    pub granularity: GranularitySpec,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text)
        .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source: Box::new(source) })
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

/// Loads a scenario file, builds and validates the scenario.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = read_toml(path)?;
    let scenario = file.build(&parent_dir(path))?;
    scenario.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(scenario)
}

/// Loads a study file; returns it with the directory relative paths resolve
/// against.
pub fn load_study(path: &Path) -> Result<(StudyFile, PathBuf), ConfigError> {
    let file: StudyFile = read_toml(path)?;
    Ok((file, parent_dir(path)))
}
