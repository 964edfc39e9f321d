//! Canned experiments: each study expands a base scenario into a set of runs,
//! executes them, and reduces the event logs to a flat `summary.csv` plus a
//! structured `report.json`.
//!
//! Determinism: a study is a pure function of `(study file, seed)`. Runs
//! derive their seeds as `base seed + run index`, every collection is either
//! a `Vec` in run order or a `BTreeMap`, and all CSV floats print with fixed
//! decimals — rerunning a study reproduces its outputs byte for byte.
//!
//! `summary.csv` carries one row per run per flow (the correlate study has no
//! flows, so it writes one row per run with per-estimator correlations
//! instead). `report.json` carries the full nested structure, including
//! per-window fairness series, fallback timing, and modem-level inter-arrival
//! statistics where the study produces them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::bandwidth::{bw_3gpp, bw_granted_bytes, pearson};
use crate::cca::Transport;
use crate::config::{ConfigError, StudyFile};
use crate::diag::MsgType;
use crate::metrics::{jain_index, jain_windows, mean, percentile, power_metric};
use crate::modem::{
    granted_bytes_rollup, grants_from_capacity, BufferPolicy, ModemEmulator, TbsSchedule,
};
use crate::netsim::{
    self, measure, EventLog, FlowMeasure, FlowSpec, Measurement, Scenario, ScenarioError,
    WiredConfig, WiredStep,
};

/// Window for the per-window Jain fairness series.
const JAIN_WINDOW_US: u64 = 1_000_000;

/// The six canned studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyName {
    /// One flow per congestion controller on the same traces.
    Compare,
    /// One run per KPI sampling interval.
    Sweep,
    /// Several same-controller flows sharing the link, per controller.
    Multiflow,
    /// Scripted wired-capacity steps under a constant cellular link.
    Fallback,
    /// Bandwidth estimators against trace ground truth, no network model.
    Correlate,
    /// Drain- versus batch-mode diagnostic freshness.
    Granularity,
}

impl StudyName {
    pub const ALL: [StudyName; 6] = [
        StudyName::Compare,
        StudyName::Sweep,
        StudyName::Multiflow,
        StudyName::Fallback,
        StudyName::Correlate,
        StudyName::Granularity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyName::Compare => "compare",
            StudyName::Sweep => "sweep",
            StudyName::Multiflow => "multiflow",
            StudyName::Fallback => "fallback",
            StudyName::Correlate => "correlate",
            StudyName::Granularity => "granularity",
        }
    }
}

impl std::fmt::Display for StudyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StudyName {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, StudyError> {
        StudyName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| StudyError::UnknownStudy(s.to_string()))
    }
}

/// Anything that can stop a study.
#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown study '{0}' (expected compare, sweep, multiflow, fallback, correlate or granularity)")]
    UnknownStudy(String),
}

/// One-way-delay summary in milliseconds; percentiles are nearest-rank and
/// non-decreasing by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DelayReport {
    pub mean: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

/// Everything measured about one flow in one run.
#[derive(Clone, Debug, Serialize)]
pub struct FlowReport {
    pub flow: u32,
    pub label: String,
    pub cca: String,
    pub transport: String,
    pub start_ms: f64,
    pub end_ms: f64,
    pub sent_packets: u64,
    pub retx_packets: u64,
    pub dropped_packets: u64,
    pub delivered_packets: u64,
    pub throughput_bps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<DelayReport>,
    /// Throughput / mean delay, bit/s per second of delay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fallback_entries_us: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub phase_changes: Vec<(u64, String)>,
}

/// Per-window Jain fairness over the run.
#[derive(Clone, Debug, Serialize)]
pub struct JainWindowedReport {
    pub window_ms: u64,
    /// Tiling windows in the horizon.
    pub total_windows: usize,
    /// Windows where at least one flow delivered bytes; the rest are skipped.
    pub defined_windows: usize,
    pub frac_ge_095: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    pub values: Vec<f64>,
}

/// One simulated run of a study.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub run: u32,
    /// The study's varying knob for this run (controller name, interval, …).
    pub param: String,
    pub seed: u64,
    pub flows: Vec<FlowReport>,
    pub total_throughput_bps: f64,
    /// Delay summary over all flows' deliveries pooled together.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled_delay_ms: Option<DelayReport>,
    /// Whole-run Jain index over per-flow throughputs (multi-flow runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jain_run: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jain_windowed: Option<JainWindowedReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<FallbackReport>,
}

/// One wired-schedule step, classified by direction.
#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub time_us: u64,
    pub rate_bps: u64,
    /// `down` when the rate decreased, `up` when it increased.
    pub kind: String,
}

/// Controller response to one wired step.
#[derive(Clone, Debug, Serialize)]
pub struct DetectionReport {
    pub step_time_us: u64,
    pub kind: String,
    /// First fallback entry (down) or return to the KPI-driven phase (up) at
    /// or after the step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_us: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_us: Option<u64>,
    /// Wall-clock span of five consecutive measured round trips starting at
    /// the step — the natural yardstick for `latency_us`, taken from the
    /// flow's own RTT samples rather than the unloaded path delay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub five_rtt_us: Option<u64>,
}

/// Delivered rate over one wired segment, against its expected bottleneck.
#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    pub start_us: u64,
    pub end_us: u64,
    pub wired_bps: u64,
    pub cellular_bps: f64,
    /// `min(wired, cellular)` — what a well-behaved flow should deliver.
    pub expected_bps: f64,
    /// Start of the steady-state measurement span (convergence excluded).
    pub steady_from_us: u64,
    pub delivered_bps: f64,
    pub ratio: f64,
}

/// Fallback-study timing and per-segment accounting.
#[derive(Clone, Debug, Serialize)]
pub struct FallbackReport {
    pub steps: Vec<StepReport>,
    pub fallback_entries_us: Vec<u64>,
    pub biscay_returns_us: Vec<u64>,
    pub detection: Vec<DetectionReport>,
    pub segments: Vec<SegmentReport>,
}

/// Per-controller aggregate over all of a study's runs.
#[derive(Clone, Debug, Serialize)]
pub struct CcaAggregate {
    pub runs: u32,
    pub mean_throughput_bps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_delay_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_delay_p95_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_windowed_jain: Option<f64>,
}

/// Ratios of the KPI-driven controller against one baseline, per run and
/// averaged. Ratios below 1 favor the KPI-driven controller for delay and
/// disfavor it for throughput.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub per_run_delay_ratio: Vec<f64>,
    pub per_run_throughput_ratio: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_delay_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_throughput_ratio: Option<f64>,
}

/// Correlations of one run's estimator series against trace ground truth.
#[derive(Clone, Debug, Serialize)]
pub struct RunCorrelation {
    pub run: u32,
    pub seed: u64,
    pub windows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_tti_grants: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub granted_bytes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_prb: Option<f64>,
}

/// Correlate-study results: per-run correlations plus the mean pairwise
/// correlation matrix over `matrix_labels`.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub noise: f64,
    pub window_ms: u64,
    pub per_run: Vec<RunCorrelation>,
    pub min_per_tti_grants: Option<f64>,
    pub min_granted_bytes: Option<f64>,
    pub max_raw_prb: Option<f64>,
    pub matrix_labels: Vec<String>,
    /// Mean over runs of the pairwise Pearson matrix; `null` where undefined.
    pub mean_matrix: Vec<Vec<Option<f64>>>,
}

/// Diagnostic-frame arrival statistics for one flush policy.
#[derive(Clone, Debug, Serialize)]
pub struct PolicyReport {
    pub label: String,
    pub mode: String,
    pub period_us: u64,
    pub cellmeas_count: usize,
    /// Median gap between consecutive cell-measurement arrivals (µs). Batch
    /// mode's within-burst gaps are zero, so its median collapses to 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_interarrival_us: Option<u64>,
    /// Median gap between bursts (distinct release instants), µs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_period_median_us: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_period_min_us: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_period_max_us: Option<u64>,
    /// Largest gap between frames released in the same burst, µs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_burst_max_us: Option<u64>,
}

/// Granularity-study modem-level statistics.
#[derive(Clone, Debug, Serialize)]
pub struct GranularityReport {
    pub policies: Vec<PolicyReport>,
}

/// The `report.json` payload.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub study: String,
    pub base_seed: u64,
    pub runs: Vec<RunReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub cca_summary: BTreeMap<String, CcaAggregate>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub comparisons: BTreeMap<String, ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub granularity: Option<GranularityReport>,
}

impl Report {
    fn new(study: StudyName, base_seed: u64) -> Self {
        Self {
            study: study.as_str().to_string(),
            base_seed,
            runs: Vec::new(),
            cca_summary: BTreeMap::new(),
            comparisons: BTreeMap::new(),
            correlation: None,
            granularity: None,
        }
    }

    /// Stable JSON rendering (pretty-printed, trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }
}

/// A finished study: the structured report plus the rendered summary table.
#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub report: Report,
    pub summary_csv: String,
}

struct Ctx<'a> {
    file: &'a StudyFile,
    base_dir: &'a Path,
    seed: u64,
    out: Option<&'a Path>,
}

impl Ctx<'_> {
    fn base_scenario(&self, run_seed: u64) -> Result<Scenario, StudyError> {
        let mut sc = self.file.scenario.build_seeded(self.base_dir, run_seed)?;
        sc.flows.clear(); // studies define their own traffic
        Ok(sc)
    }

    /// Runs one scenario, optionally writing its event log.
    fn run(&self, sc: &Scenario, log_name: &str) -> Result<Measurement, StudyError> {
        let log = netsim::run(sc)?;
        if let (Some(out), true) = (self.out, self.file.events_log) {
            let path = out.join(format!("events_{log_name}.log"));
            write_file(&path, &log.to_lines())?;
        }
        Ok(measure(&log))
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), StudyError> {
    std::fs::write(path, text).map_err(|source| StudyError::Io { path: path.to_path_buf(), source })
}

/// Runs a named study. Seeds come from `seed_override` when given, else the
/// config; when `out_dir` is set, `summary.csv`, `report.json` and (if the
/// config asks) per-run event logs are written there.
pub fn run_study(
    name: StudyName,
    file: &StudyFile,
    base_dir: &Path,
    seed_override: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<StudyOutput, StudyError> {
    if let Some(out) = out_dir {
        std::fs::create_dir_all(out)
            .map_err(|source| StudyError::Io { path: out.to_path_buf(), source })?;
    }
    let ctx = Ctx {
        file,
        base_dir,
        seed: seed_override.unwrap_or(file.scenario.seed),
        out: out_dir,
    };
    let output = match name {
        StudyName::Compare => compare_study(&ctx)?,
        StudyName::Sweep => sweep_study(&ctx)?,
        StudyName::Multiflow => multiflow_study(&ctx)?,
        StudyName::Fallback => fallback_study(&ctx)?,
        StudyName::Correlate => correlate_study(&ctx)?,
        StudyName::Granularity => granularity_study(&ctx)?,
    };
    if let Some(out) = out_dir {
        write_file(&out.join("summary.csv"), &output.summary_csv)?;
        write_file(&out.join("report.json"), &output.report.to_json())?;
    }
    Ok(output)
}

/// Runs a single scenario the way `sim run` does: a one-run report labelled
/// `run`, plus the event log for callers that want to persist it.
pub fn run_single(sc: &Scenario) -> Result<(StudyOutput, EventLog), StudyError> {
    let log = netsim::run(sc)?;
    let m = measure(&log);
    let mut report = Report {
        study: "run".to_string(),
        base_seed: sc.seed,
        runs: Vec::new(),
        cca_summary: BTreeMap::new(),
        comparisons: BTreeMap::new(),
        correlation: None,
        granularity: None,
    };
    let run = run_report(&m, sc, 0, "-", sc.seed);
    let rows = flow_rows("run", &run);
    report.runs.push(run);
    let output = StudyOutput { report, summary_csv: render_flow_csv(&rows) };
    Ok((output, log))
}

// ---------------------------------------------------------------------------
// Per-flow and per-run reduction

fn delay_report(owd_ms: &mut Vec<f64>) -> Option<DelayReport> {
    let mean_ms = mean(owd_ms)?;
    owd_ms.sort_by(f64::total_cmp);
    let p = |level: f64| percentile(owd_ms, level).expect("non-empty samples");
    Some(DelayReport {
        mean: mean_ms,
        p10: p(10.0),
        p25: p(25.0),
        p50: p(50.0),
        p75: p(75.0),
        p90: p(90.0),
        p95: p(95.0),
        p99: p(99.0),
    })
}

fn flow_report(f: &FlowMeasure, label: &str) -> FlowReport {
    let mut owd_ms: Vec<f64> = f.owd_us.iter().map(|&d| d as f64 / 1000.0).collect();
    let delay_ms = delay_report(&mut owd_ms);
    let throughput_bps = f.goodput_bps();
    let power = delay_ms.and_then(|d| power_metric(throughput_bps, d.mean / 1000.0));
    let transport = match f.transport {
        Some(Transport::Tcp) => "tcp",
        Some(Transport::Udp) => "udp",
        None => "-",
    };
    FlowReport {
        flow: f.flow,
        label: label.to_string(),
        cca: f.cca.clone(),
        transport: transport.to_string(),
        start_ms: f.start_us as f64 / 1000.0,
        end_ms: f.end_us as f64 / 1000.0,
        sent_packets: f.sent_packets,
        retx_packets: f.retx_packets,
        dropped_packets: f.dropped_packets,
        delivered_packets: f.delivered_packets,
        throughput_bps,
        delay_ms,
        power,
        fallback_entries_us: f.fallback_entries_us.clone(),
        phase_changes: f
            .phase_changes
            .iter()
            .map(|&(t, p)| (t, p.to_string()))
            .collect(),
    }
}

fn jain_windowed_report(m: &Measurement) -> Option<JainWindowedReport> {
    if m.flows.len() < 2 || m.horizon_us == 0 {
        return None;
    }
    let per_flow: Vec<Vec<f64>> = m
        .flows
        .iter()
        .map(|f| crate::metrics::throughput_windows(&f.deliveries, JAIN_WINDOW_US, m.horizon_us))
        .collect();
    let windows = jain_windows(&per_flow);
    let total_windows = windows.len();
    let values: Vec<f64> = windows.into_iter().flatten().collect();
    let defined = values.len();
    if defined == 0 {
        return None;
    }
    let ge = values.iter().filter(|&&j| j >= 0.95).count();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Some(JainWindowedReport {
        window_ms: JAIN_WINDOW_US / 1000,
        total_windows,
        defined_windows: defined,
        frac_ge_095: ge as f64 / defined as f64,
        median: percentile(&sorted, 50.0),
        min: sorted.first().copied(),
        values,
    })
}

fn run_report(m: &Measurement, sc: &Scenario, run: u32, param: &str, seed: u64) -> RunReport {
    let label_of = |f: &FlowMeasure| -> String {
        sc.flows
            .get(f.flow as usize)
            .map(|s| if s.label.is_empty() { s.cca.clone() } else { s.label.clone() })
            .unwrap_or_else(|| f.cca.clone())
    };
    let flows: Vec<FlowReport> = m.flows.iter().map(|f| flow_report(f, &label_of(f))).collect();
    let total_throughput_bps = flows.iter().map(|f| f.throughput_bps).sum();
    let mut pooled_ms: Vec<f64> = m
        .flows
        .iter()
        .flat_map(|f| f.owd_us.iter().map(|&d| d as f64 / 1000.0))
        .collect();
    let pooled_delay_ms = delay_report(&mut pooled_ms);
    let jain_run = if m.flows.len() >= 2 {
        jain_index(&m.flows.iter().map(|f| f.goodput_bps()).collect::<Vec<_>>())
    } else {
        None
    };
    RunReport {
        run,
        param: param.to_string(),
        seed,
        flows,
        total_throughput_bps,
        pooled_delay_ms,
        jain_run,
        jain_windowed: jain_windowed_report(m),
        fallback: None,
    }
}

// ---------------------------------------------------------------------------
// CSV rendering

struct FlowRow {
    study: &'static str,
    run: u32,
    param: String,
    seed: u64,
    report: FlowReport,
}

fn flow_rows(study: &'static str, run: &RunReport) -> Vec<FlowRow> {
    run.flows
        .iter()
        .map(|f| FlowRow {
            study,
            run: run.run,
            param: run.param.clone(),
            seed: run.seed,
            report: f.clone(),
        })
        .collect()
}

const FLOW_CSV_HEADER: &str = "study,run,param,seed,flow,label,cca,transport,start_ms,end_ms,\
     sent_packets,retx_packets,dropped_packets,delivered_packets,throughput_bps,\
     delay_mean_ms,delay_p10_ms,delay_p25_ms,delay_p50_ms,delay_p75_ms,delay_p90_ms,\
     delay_p95_ms,delay_p99_ms,power,fallback_entries";

fn render_flow_csv(rows: &[FlowRow]) -> String {
    let mut out = String::new();
    out.push_str(&FLOW_CSV_HEADER.replace(' ', ""));
    out.push('\n');
    for r in rows {
        let f = &r.report;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{:.3},{:.3},{},{},{},{},{:.3}",
            r.study,
            r.run,
            r.param,
            r.seed,
            f.flow,
            f.label,
            f.cca,
            f.transport,
            f.start_ms,
            f.end_ms,
            f.sent_packets,
            f.retx_packets,
            f.dropped_packets,
            f.delivered_packets,
            f.throughput_bps,
        )
        .unwrap();
        match &f.delay_ms {
            Some(d) => write!(
                out,
                ",{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                d.mean, d.p10, d.p25, d.p50, d.p75, d.p90, d.p95, d.p99
            )
            .unwrap(),
            None => out.push_str(",,,,,,,,"),
        }
        match f.power {
            Some(p) => write!(out, ",{p:.3}").unwrap(),
            None => out.push(','),
        }
        writeln!(out, ",{}", f.fallback_entries_us.len()).unwrap();
    }
    out
}

const CORRELATE_CSV_HEADER: &str =
    "study,run,param,seed,windows,pearson_per_tti_grants,pearson_granted_bytes,pearson_raw_prb";

fn render_correlate_csv(noise: f64, base_seed: u64, per_run: &[RunCorrelation]) -> String {
    let mut out = String::new();
    out.push_str(CORRELATE_CSV_HEADER);
    out.push('\n');
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => String::new(),
    };
    let _ = base_seed;
    for r in per_run {
        writeln!(
            out,
            "correlate,{},{:.3},{},{},{},{},{}",
            r.run,
            noise,
            r.seed,
            r.windows,
            fmt(r.per_tti_grants),
            fmt(r.granted_bytes),
            fmt(r.raw_prb),
        )
        .unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Aggregation helpers

fn cca_summary(runs: &[RunReport]) -> BTreeMap<String, CcaAggregate> {
    let mut grouped: BTreeMap<String, Vec<&RunReport>> = BTreeMap::new();
    for r in runs {
        grouped.entry(r.param.clone()).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(cca, rs)| {
            let tputs: Vec<f64> = rs.iter().map(|r| r.total_throughput_bps).collect();
            let delays: Vec<f64> =
                rs.iter().filter_map(|r| r.pooled_delay_ms.map(|d| d.mean)).collect();
            let p95s: Vec<f64> =
                rs.iter().filter_map(|r| r.pooled_delay_ms.map(|d| d.p95)).collect();
            let jains: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.jain_windowed.as_ref().and_then(|j| j.median))
                .collect();
            let median_jain = if jains.is_empty() {
                None
            } else {
                let mut sorted = jains;
                sorted.sort_by(f64::total_cmp);
                percentile(&sorted, 50.0)
            };
            let agg = CcaAggregate {
                runs: rs.len() as u32,
                mean_throughput_bps: mean(&tputs).unwrap_or(0.0),
                mean_delay_ms: mean(&delays),
                mean_delay_p95_ms: mean(&p95s),
                median_windowed_jain: median_jain,
            };
            (cca, agg)
        })
        .collect()
}

/// Ratios of the `biscay` runs against each baseline, matching runs by run
/// index so every pair saw the same trace.
fn comparisons(runs: &[RunReport]) -> BTreeMap<String, ComparisonReport> {
    let mut by_param: BTreeMap<&str, BTreeMap<u32, &RunReport>> = BTreeMap::new();
    for r in runs {
        by_param.entry(&r.param).or_default().insert(r.run, r);
    }
    let Some(biscay) = by_param.get("biscay").cloned() else {
        return BTreeMap::new();
    };
    let mut out = BTreeMap::new();
    for (&param, base_runs) in &by_param {
        if param == "biscay" {
            continue;
        }
        let mut delay_ratios = Vec::new();
        let mut tput_ratios = Vec::new();
        for (run, b) in &biscay {
            let Some(o) = base_runs.get(run) else { continue };
            if let (Some(bd), Some(od)) = (b.pooled_delay_ms, o.pooled_delay_ms) {
                if od.mean > 0.0 {
                    delay_ratios.push(bd.mean / od.mean);
                }
            }
            if o.total_throughput_bps > 0.0 {
                tput_ratios.push(b.total_throughput_bps / o.total_throughput_bps);
            }
        }
        out.insert(
            format!("biscay_vs_{param}"),
            ComparisonReport {
                mean_delay_ratio: mean(&delay_ratios),
                mean_throughput_ratio: mean(&tput_ratios),
                per_run_delay_ratio: delay_ratios,
                per_run_throughput_ratio: tput_ratios,
            },
        );
    }
    out
}

// ---------------------------------------------------------------------------
// The studies

fn compare_study(ctx: &Ctx<'_>) -> Result<StudyOutput, StudyError> {
    let spec = &ctx.file.compare;
    let mut report = Report::new(StudyName::Compare, ctx.seed);
    let mut rows = Vec::new();
    for run in 0..spec.runs.max(1) {
        let run_seed = ctx.seed + run as u64;
        for cca in &spec.ccas {
            let mut sc = ctx.base_scenario(run_seed)?;
            sc.flows.push(FlowSpec::tcp(cca));
            let m = ctx.run(&sc, &format!("compare_{run:03}_{cca}"))?;
            let rr = run_report(&m, &sc, run, cca, run_seed);
            rows.extend(flow_rows("compare", &rr));
            report.runs.push(rr);
        }
    }
    report.cca_summary = cca_summary(&report.runs);
    report.comparisons = comparisons(&report.runs);
    Ok(StudyOutput { summary_csv: render_flow_csv(&rows), report })
}

fn sweep_study(ctx: &Ctx<'_>) -> Result<StudyOutput, StudyError> {
    let spec = &ctx.file.sweep;
    let mut report = Report::new(StudyName::Sweep, ctx.seed);
    let mut rows = Vec::new();
    for (run, &interval_ms) in spec.intervals_ms.iter().enumerate() {
        if !(interval_ms.is_finite() && interval_ms > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "sweep.intervals_ms: {interval_ms} is not a positive duration"
            ))
            .into());
        }
        let mut sc = ctx.base_scenario(ctx.seed)?;
        sc.kpi_interval_us = (interval_ms * 1000.0).round() as u64;
        sc.flows.push(FlowSpec::tcp(&spec.cca));
        let param = format!("{interval_ms}");
        let m = ctx.run(&sc, &format!("sweep_{run:03}_{param}ms"))?;
        let rr = run_report(&m, &sc, run as u32, &param, ctx.seed);
        rows.extend(flow_rows("sweep", &rr));
        report.runs.push(rr);
    }
    Ok(StudyOutput { summary_csv: render_flow_csv(&rows), report })
}

fn multiflow_study(ctx: &Ctx<'_>) -> Result<StudyOutput, StudyError> {
    let spec = &ctx.file.multiflow;
    let stagger_us = (spec.stagger_ms.max(0.0) * 1000.0).round() as u64;
    let mut report = Report::new(StudyName::Multiflow, ctx.seed);
    let mut rows = Vec::new();
    for (run, cca) in spec.ccas.iter().enumerate() {
        let mut sc = ctx.base_scenario(ctx.seed)?;
        for k in 0..spec.flows.max(1) {
            sc.flows.push(
                FlowSpec::tcp(cca)
                    .starting_at(k as u64 * stagger_us)
                    .labeled(&format!("{cca}-{k}")),
            );
        }
        let m = ctx.run(&sc, &format!("multiflow_{run:03}_{cca}"))?;
        let rr = run_report(&m, &sc, run as u32, cca, ctx.seed);
        rows.extend(flow_rows("multiflow", &rr));
        report.runs.push(rr);
    }
    report.cca_summary = cca_summary(&report.runs);
    report.comparisons = comparisons(&report.runs);
    Ok(StudyOutput { summary_csv: render_flow_csv(&rows), report })
}

fn fallback_schedule(spec: &crate::config::FallbackSpec) -> Result<(Vec<WiredStep>, u64), StudyError> {
    let seg_us = (spec.segment_ms * 1000.0).round() as u64;
    if seg_us == 0 || !spec.segment_ms.is_finite() {
        return Err(ConfigError::Invalid("fallback.segment_ms must be positive".into()).into());
    }
    let rate = |mbps: f64, key: &str| -> Result<u64, StudyError> {
        if !(mbps.is_finite() && mbps > 0.0) {
            return Err(ConfigError::Invalid(format!("fallback.{key}: bad rate {mbps}")).into());
        }
        Ok((mbps * 1e6).round() as u64)
    };
    let high = rate(spec.high_mbps, "high_mbps")?;
    let mut steps = vec![WiredStep { time_us: 0, rate_bps: high }];
    for (i, &low_mbps) in spec.low_mbps.iter().enumerate() {
        let low = rate(low_mbps, "low_mbps")?;
        let t = (2 * i as u64 + 1) * seg_us;
        steps.push(WiredStep { time_us: t, rate_bps: low });
        steps.push(WiredStep { time_us: t + seg_us, rate_bps: high });
    }
    let duration_us = (2 * spec.low_mbps.len() as u64 + 1) * seg_us;
    Ok((steps, duration_us))
}

fn fallback_study(ctx: &Ctx<'_>) -> Result<StudyOutput, StudyError> {
    let spec = &ctx.file.fallback;
    let mut sc = ctx.base_scenario(ctx.seed)?;
    let (steps, duration_us) = fallback_schedule(spec)?;
    let cellular = (spec.cellular_mbps * 1e6).round() as u64;
    if cellular == 0 || !spec.cellular_mbps.is_finite() {
        return Err(ConfigError::Invalid("fallback.cellular_mbps must be positive".into()).into());
    }
    sc.trace = crate::trace::LinkTrace::constant(cellular);
    sc.wired = WiredConfig { steps: steps.clone(), prop_delay_us: sc.wired.prop_delay_us };
    sc.duration_us = duration_us;
    sc.flows.push(FlowSpec::tcp(&spec.cca));

    let m = ctx.run(&sc, "fallback_000")?;
    let mut rr = run_report(&m, &sc, 0, &spec.cca, ctx.seed);
    rr.fallback = Some(fallback_report(&sc, &m));
    let mut report = Report::new(StudyName::Fallback, ctx.seed);
    let rows = flow_rows("fallback", &rr);
    report.runs.push(rr);
    Ok(StudyOutput { summary_csv: render_flow_csv(&rows), report })
}

/// Duration of `n` consecutive round trips starting at `from_us`, each hop
/// lasting the RTT the flow observed at that moment (most recent sample at or
/// before the hop; the first sample before any exist). `None` without samples.
fn rtt_walk_us(samples: &[(u64, u64)], from_us: u64, n: u32) -> Option<u64> {
    if samples.is_empty() {
        return None;
    }
    let mut t = from_us;
    for _ in 0..n {
        let at = samples.partition_point(|&(st, _)| st <= t);
        let (_, rtt) = if at == 0 { samples[0] } else { samples[at - 1] };
        t += rtt;
    }
    Some(t - from_us)
}

fn fallback_report(sc: &Scenario, m: &Measurement) -> FallbackReport {
    let flow = &m.flows[0];
    let entries = flow.fallback_entries_us.clone();
    let first_entry = entries.first().copied().unwrap_or(u64::MAX);
    // Returns to the KPI-driven phase count only after the first fallback;
    // the initial startup promotion is not a "return".
    let returns: Vec<u64> = flow
        .phase_changes
        .iter()
        .filter(|&&(t, p)| p == crate::cca::BiscayPhase::Biscay && t > first_entry)
        .map(|&(t, _)| t)
        .collect();

    let mut steps = Vec::new();
    let mut detection = Vec::new();
    for (i, step) in sc.wired.steps.iter().enumerate() {
        if i == 0 {
            continue; // the initial rate is not a step
        }
        let prev = sc.wired.steps[i - 1].rate_bps;
        let kind = if step.rate_bps < prev { "down" } else { "up" };
        steps.push(StepReport {
            time_us: step.time_us,
            rate_bps: step.rate_bps,
            kind: kind.to_string(),
        });
        let response = match kind {
            "down" => entries.iter().copied().find(|&t| t >= step.time_us),
            _ => returns.iter().copied().find(|&t| t >= step.time_us),
        };
        detection.push(DetectionReport {
            step_time_us: step.time_us,
            kind: kind.to_string(),
            response_us: response,
            latency_us: response.map(|t| t - step.time_us),
            five_rtt_us: rtt_walk_us(&flow.rtt_samples, step.time_us, 5),
        });
    }

    // Per-segment delivered rate over its steady tail.
    let mut segments = Vec::new();
    let mut boundaries: Vec<u64> = sc.wired.steps.iter().map(|s| s.time_us).collect();
    boundaries.push(sc.duration_us);
    for w in boundaries.windows(2) {
        let (start, end) = (w[0], w[1]);
        if end <= start {
            continue;
        }
        let wired = sc
            .wired
            .steps
            .iter()
            .rev()
            .find(|s| s.time_us <= start)
            .map(|s| s.rate_bps)
            .unwrap_or(0);
        let cellular = sc.trace.mean_capacity_bps(start, end);
        let expected = (wired as f64).min(cellular);
        let settle = ((end - start) / 5).min(2_000_000);
        let steady_from = start + settle;
        let span_s = (end - steady_from) as f64 / 1e6;
        let delivered_bytes: u64 = m
            .flows
            .iter()
            .flat_map(|f| f.deliveries.iter())
            .filter(|&&(t, _)| t >= steady_from && t < end)
            .map(|&(_, b)| b as u64)
            .sum();
        let delivered_bps = if span_s > 0.0 { delivered_bytes as f64 * 8.0 / span_s } else { 0.0 };
        segments.push(SegmentReport {
            start_us: start,
            end_us: end,
            wired_bps: wired,
            cellular_bps: cellular,
            expected_bps: expected,
            steady_from_us: steady_from,
            delivered_bps,
            ratio: if expected > 0.0 { delivered_bps / expected } else { 0.0 },
        });
    }

    FallbackReport {
        steps,
        fallback_entries_us: entries,
        biscay_returns_us: returns,
        detection,
        segments,
    }
}

fn correlate_study(ctx: &Ctx<'_>) -> Result<StudyOutput, StudyError> {
    let spec = &ctx.file.correlate;
    if spec.window_ms == 0 {
        return Err(ConfigError::Invalid("correlate.window_ms must be positive".into()).into());
    }
    let mut report = Report::new(StudyName::Correlate, ctx.seed);
    let labels =
        ["truth", "per_tti_grants", "granted_bytes", "raw_prb"].map(String::from).to_vec();
    let mut matrix_sums = vec![vec![(0.0f64, 0u32); 4]; 4];
    let mut per_run = Vec::new();

    for run in 0..spec.runs.max(1) {
        let run_seed = ctx.seed + run as u64;
        let sc = ctx.base_scenario(run_seed)?;
        let mut radio = sc.radio.clone();
        radio.grant_noise = spec.noise;
        radio.tbs = TbsSchedule::Redraw {
            min: spec.tbs_min,
            max: spec.tbs_max,
            dwell_ms: spec.tbs_dwell_ms,
        };
        radio
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("correlate radio: {e}")))?;

        let duration_ms = sc.duration_us / 1000;
        let grants = grants_from_capacity(&sc.trace, &radio, duration_ms, run_seed);
        let rollup = granted_bytes_rollup(&grants, spec.window_ms, &radio.table);
        let window_us = spec.window_ms * 1000;
        let windows = (duration_ms / spec.window_ms) as usize;

        let mut truth = Vec::with_capacity(windows);
        let mut per_tti = Vec::with_capacity(windows);
        let mut granted = Vec::with_capacity(windows);
        let mut raw_prb = Vec::with_capacity(windows);
        let mut cursor = 0usize;
        for w in 0..windows {
            let start = w as u64 * window_us;
            let end = start + window_us;
            let from = cursor;
            while cursor < grants.len() && grants[cursor].time_us < end {
                cursor += 1;
            }
            let in_window: Vec<crate::diag::DciGrant> =
                grants[from..cursor].iter().map(|tg| tg.grant).collect();
            let ttis = (window_us / radio.tti_us as u64).max(1);
            truth.push(sc.trace.mean_capacity_bps(start, end));
            per_tti.push(
                bw_3gpp(&in_window, Duration::from_micros(window_us), &radio.table)
                    .unwrap_or(0.0),
            );
            granted.push(rollup.get(w).map(|(_, r)| bw_granted_bytes(r)).unwrap_or(0.0));
            raw_prb.push(
                in_window.iter().map(|g| g.prb as f64).sum::<f64>() / ttis as f64,
            );
        }

        let series = [&truth, &per_tti, &granted, &raw_prb];
        for (i, a) in series.iter().enumerate() {
            for (j, b) in series.iter().enumerate() {
                if let Some(c) = pearson(a, b) {
                    matrix_sums[i][j].0 += c;
                    matrix_sums[i][j].1 += 1;
                }
            }
        }
        per_run.push(RunCorrelation {
            run,
            seed: run_seed,
            windows,
            per_tti_grants: pearson(&per_tti, &truth),
            granted_bytes: pearson(&granted, &truth),
            raw_prb: pearson(&raw_prb, &truth),
        });
    }

    let mean_matrix: Vec<Vec<Option<f64>>> = matrix_sums
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(sum, n)| (n > 0).then(|| sum / n as f64))
                .collect()
        })
        .collect();
    let min_of = |f: fn(&RunCorrelation) -> Option<f64>| {
        per_run.iter().filter_map(f).min_by(f64::total_cmp)
    };
    let summary_csv = render_correlate_csv(spec.noise, ctx.seed, &per_run);
    report.correlation = Some(CorrelationReport {
        noise: spec.noise,
        window_ms: spec.window_ms,
        min_per_tti_grants: min_of(|r| r.per_tti_grants),
        min_granted_bytes: min_of(|r| r.granted_bytes),
        max_raw_prb: per_run.iter().filter_map(|r| r.raw_prb).max_by(f64::total_cmp),
        per_run,
        matrix_labels: labels,
        mean_matrix,
    });
    Ok(StudyOutput { summary_csv, report })
}

fn policy_label(policy: &BufferPolicy) -> (String, &'static str) {
    let (mode, period_us) = match *policy {
        BufferPolicy::Drain { period_us } => ("drain", period_us),
        BufferPolicy::Batch { period_us } => ("batch", period_us),
    };
    let period_ms = period_us as f64 / 1000.0;
    (format!("{mode}_{period_ms}ms"), mode)
}

fn policy_stats(sc: &Scenario, policy: BufferPolicy) -> PolicyReport {
    let mut modem = ModemEmulator::new(sc.trace.clone(), sc.radio.clone(), policy, sc.seed);
    let out = modem.advance_to(sc.duration_us);
    let arrivals: Vec<u64> = out
        .deliveries
        .iter()
        .filter(|d| d.frame.msg_type() == MsgType::CellMeas)
        .map(|d| d.delivered_us)
        .collect();
    let mut gaps: Vec<u64> = arrivals.windows(2).map(|w| w[1] - w[0]).collect();
    let median = |sorted: &[u64]| sorted.get(sorted.len().saturating_sub(1) / 2).copied();
    gaps.sort_unstable();
    let median_interarrival_us = median(&gaps);
    let positive: Vec<u64> = gaps.iter().copied().filter(|&g| g > 0).collect();
    let zeros = gaps.len() - positive.len();
    let (label, mode) = policy_label(&policy);
    PolicyReport {
        label,
        mode: mode.to_string(),
        period_us: policy.period_us(),
        cellmeas_count: arrivals.len(),
        median_interarrival_us,
        burst_period_median_us: median(&positive),
        burst_period_min_us: positive.first().copied(),
        burst_period_max_us: positive.last().copied(),
        within_burst_max_us: (zeros > 0).then_some(0),
    }
}

fn granularity_study(ctx: &Ctx<'_>) -> Result<StudyOutput, StudyError> {
    let spec = &ctx.file.granularity;
    let period = |ms: f64, key: &str| -> Result<u64, StudyError> {
        let us = (ms * 1000.0).round() as u64;
        if us == 0 || !ms.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "granularity.{key}: {ms} is not a positive period"
            ))
            .into());
        }
        Ok(us)
    };
    let policies = [
        BufferPolicy::Drain { period_us: period(spec.drain_period_ms, "drain_period_ms")? },
        BufferPolicy::Batch { period_us: period(spec.batch_period_ms, "batch_period_ms")? },
    ];
    let mut report = Report::new(StudyName::Granularity, ctx.seed);
    let mut rows = Vec::new();
    let mut policy_reports = Vec::new();
    for (run, policy) in policies.into_iter().enumerate() {
        let mut sc = ctx.base_scenario(ctx.seed)?;
        sc.buffer_policy = policy;
        sc.flows.push(FlowSpec::tcp(&spec.cca));
        policy_reports.push(policy_stats(&sc, policy));
        let (label, _) = policy_label(&policy);
        let m = ctx.run(&sc, &format!("granularity_{run:03}_{label}"))?;
        let rr = run_report(&m, &sc, run as u32, &label, ctx.seed);
        rows.extend(flow_rows("granularity", &rr));
        report.runs.push(rr);
    }
    report.granularity = Some(GranularityReport { policies: policy_reports });
    Ok(StudyOutput { summary_csv: render_flow_csv(&rows), report })
}
