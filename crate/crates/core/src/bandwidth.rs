//! Turning radio KPIs into bandwidth numbers.
//!
//! Two estimation routes are supported, mirroring what the modem exports:
//!
//! * [`bw_3gpp`] sums a throughput-table lookup over every scheduling grant in
//!   a window — `bits = table[prb, tbs_index] × mimo_layers` per grant, one
//!   grant per carrier per TTI — and divides by the window length.
//! * [`bw_granted_bytes`] converts a scheduler byte counter covering a fixed
//!   accounting window straight into bit/s.
//!
//! Both see the *allocated* capacity of the radio link, not what transport
//! happened to push through it, which is what makes them usable as a
//! congestion-control input.
//!
//! [`BottleneckDetector`] decides whether the cellular hop or the wired path
//! is the limiting segment by comparing the cellular estimate against an
//! end-to-end estimate with hysteresis and a consecutive-sample streak, and
//! [`pearson`] is the correlation used to grade estimators against ground
//! truth.

use std::io::Read;
use std::path::Path;
use std::time::Duration;

use crate::diag::{DciGrant, Direction, GrantedBytesReport, MAX_PRB, MAX_TBS_INDEX};

const PRB_ROWS: usize = MAX_PRB as usize + 1; // row 0 = no allocation
const TBS_COLS: usize = MAX_TBS_INDEX as usize + 1;

/// Per-TTI transport-block capacity, indexed by `(prb, tbs_index)`, in bits
/// for a single spatial layer.
///
/// Row 0 (zero resource blocks) is implicitly zero. The table must be monotone
/// non-decreasing along both axes: more resource blocks or a higher TBS index
/// never carry fewer bits.
#[derive(Clone, PartialEq, Eq)]
pub struct TputTable {
    pub direction: Direction,
    bits: Vec<u32>, // PRB_ROWS × TBS_COLS, row-major
}

impl std::fmt::Debug for TputTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TputTable")
            .field("direction", &self.direction)
            .field("max_bits", &self.bits(MAX_PRB, MAX_TBS_INDEX))
            .finish()
    }
}

/// Problems loading a throughput table.
#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: cell ({prb},{tbs}) out of range")]
    CellOutOfRange { line: usize, prb: u64, tbs: u64 },
    #[error("line {line}: duplicate cell ({prb},{tbs})")]
    DuplicateCell { line: usize, prb: u16, tbs: u8 },
    #[error("table is missing cell ({prb},{tbs})")]
    MissingCell { prb: u16, tbs: u8 },
    #[error("table not monotone at ({prb},{tbs}): {bits} bits after {prev} bits at ({prev_prb},{prev_tbs})")]
    NotMonotone { prb: u16, tbs: u8, bits: u32, prev: u32, prev_prb: u16, prev_tbs: u8 },
    #[error("reading table: {0}")]
    Io(#[from] std::io::Error),
}

impl TputTable {
    /// Synthetic table: `bits = prb × 24 × (tbs_index + 1)`. Monotone in both
    /// axes by construction and convenient for exact arithmetic in tests.
    pub fn synthetic(direction: Direction) -> Self {
        let mut bits = vec![0u32; PRB_ROWS * TBS_COLS];
        for prb in 0..PRB_ROWS {
            for tbs in 0..TBS_COLS {
                bits[prb * TBS_COLS + tbs] = (prb as u32) * 24 * (tbs as u32 + 1);
            }
        }
        Self { direction, bits }
    }

    /// Transport-block bits for one grant of `prb` resource blocks at
    /// `tbs_index`, single layer.
    pub fn bits(&self, prb: u16, tbs_index: u8) -> u64 {
        assert!(prb <= MAX_PRB, "prb {prb} out of range");
        assert!(tbs_index <= MAX_TBS_INDEX, "tbs_index {tbs_index} out of range");
        self.bits[prb as usize * TBS_COLS + tbs_index as usize] as u64
    }

    /// Bits carried by one grant including its spatial layers.
    pub fn grant_bits(&self, g: &DciGrant) -> u64 {
        self.bits(g.prb, g.tbs_index) * g.mimo_layers as u64
    }

    /// Loads a table from CSV: header `prb,tbs_index,bits`, then one row per
    /// cell covering the full grid `prb ∈ 1..=273 × tbs_index ∈ 0..=26`.
    /// Rejects holes, duplicates, and monotonicity violations, naming the
    /// offending cell.
    pub fn from_csv_str(text: &str, direction: Direction) -> Result<Self, TableError> {
        let mut bits = vec![None::<u32>; PRB_ROWS * TBS_COLS];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if idx == 0 {
                if row != "prb,tbs_index,bits" {
                    return Err(TableError::Parse {
                        line: 1,
                        msg: format!("expected header 'prb,tbs_index,bits', got '{row}'"),
                    });
                }
                continue;
            }
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(TableError::Parse {
                    line,
                    msg: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str, what: &str| -> Result<u64, TableError> {
                s.parse().map_err(|e| TableError::Parse { line, msg: format!("bad {what} '{s}': {e}") })
            };
            let prb = parse(fields[0], "prb")?;
            let tbs = parse(fields[1], "tbs_index")?;
            let val = parse(fields[2], "bits")?;
            if prb == 0 || prb > MAX_PRB as u64 || tbs > MAX_TBS_INDEX as u64 {
                return Err(TableError::CellOutOfRange { line, prb, tbs });
            }
            if val > u32::MAX as u64 {
                return Err(TableError::Parse { line, msg: format!("bits {val} exceeds u32") });
            }
            let slot = &mut bits[prb as usize * TBS_COLS + tbs as usize];
            if slot.is_some() {
                return Err(TableError::DuplicateCell { line, prb: prb as u16, tbs: tbs as u8 });
            }
            *slot = Some(val as u32);
        }
        // Completeness: every cell of the grid must be present.
        let mut full = vec![0u32; PRB_ROWS * TBS_COLS];
        for prb in 1..PRB_ROWS {
            for tbs in 0..TBS_COLS {
                match bits[prb * TBS_COLS + tbs] {
                    Some(v) => full[prb * TBS_COLS + tbs] = v,
                    None => return Err(TableError::MissingCell { prb: prb as u16, tbs: tbs as u8 }),
                }
            }
        }
        let table = Self { direction, bits: full };
        table.check_monotone()?;
        Ok(table)
    }

    pub fn from_csv_path(path: &Path, direction: Direction) -> Result<Self, TableError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::from_csv_str(&text, direction)
    }

    fn check_monotone(&self) -> Result<(), TableError> {
        for prb in 1..=MAX_PRB {
            for tbs in 0..=MAX_TBS_INDEX {
                let here = self.bits(prb, tbs) as u32;
                if prb > 1 {
                    let left = self.bits(prb - 1, tbs) as u32;
                    if here < left {
                        return Err(TableError::NotMonotone {
                            prb,
                            tbs,
                            bits: here,
                            prev: left,
                            prev_prb: prb - 1,
                            prev_tbs: tbs,
                        });
                    }
                }
                if tbs > 0 {
                    let below = self.bits(prb, tbs - 1) as u32;
                    if here < below {
                        return Err(TableError::NotMonotone {
                            prb,
                            tbs,
                            bits: here,
                            prev: below,
                            prev_prb: prb,
                            prev_tbs: tbs - 1,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Renders the CSV form (inverse of [`from_csv_str`]).
    pub fn to_csv_string(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("prb,tbs_index,bits\n");
        for prb in 1..=MAX_PRB {
            for tbs in 0..=MAX_TBS_INDEX {
                writeln!(out, "{},{},{}", prb, tbs, self.bits(prb, tbs)).unwrap();
            }
        }
        out
    }
}

/// Which estimation route produced a sample. Used when series are written to
/// study outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BwMethod {
    /// Per-grant throughput-table summation.
    PerTtiGrants,
    /// Scheduler byte counters over an accounting window.
    GrantedBytes,
    /// ACK-derived end-to-end delivery rate.
    EndToEnd,
    /// The capacity trace itself.
    GroundTruth,
}

/// One bandwidth observation on a common timeline.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct BandwidthSample {
    pub time_ms: u64,
    pub bps: f64,
    pub method: BwMethod,
}

/// Allocated cellular bandwidth over a window of scheduling grants:
/// `Σ table[prb, tbs] × mimo_layers` across the grants, divided by the window.
///
/// Returns `None` when the window holds no grants — callers must treat that
/// as "no data", not as zero bandwidth.
///
/// The window must cover at least one TTI; the caller is responsible for
/// passing exactly the grants that fall inside it (all carriers).
pub fn bw_3gpp(grants: &[DciGrant], window: Duration, table: &TputTable) -> Option<f64> {
    let secs = window.as_secs_f64();
    assert!(secs > 0.0, "window must be positive");
    if grants.is_empty() {
        return None;
    }
    let total_bits: u64 = grants.iter().map(|g| table.grant_bits(g)).sum();
    Some(total_bits as f64 / secs)
}

/// Bandwidth from a granted-byte counter: `bytes_granted × 8 / window`.
pub fn bw_granted_bytes(report: &GrantedBytesReport) -> f64 {
    assert!(report.window_us > 0, "report window must be positive");
    report.bytes_granted as f64 * 8.0 / (report.window_us as f64 / 1e6)
}

/// Which segment currently limits the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckLocation {
    Cellular,
    Wired,
}

/// Hysteresis + streak classifier for the bottleneck location.
///
/// Starting from `Cellular`:
/// * switch to `Wired` only after `cellular > (1 + h) × end_to_end` for `k`
///   consecutive updates;
/// * switch back to `Cellular` only after `cellular ≤ end_to_end` for `k`
///   consecutive updates;
/// * anything in the band `(e2e, (1+h)·e2e]` resets both streaks and keeps the
///   current answer, so estimator jitter inside the band can never flap the
///   decision;
/// * a missing end-to-end estimate leaves everything untouched.
#[derive(Clone, Debug)]
pub struct BottleneckDetector {
    hysteresis: f64,
    streak: u32,
    location: BottleneckLocation,
    wired_run: u32,
    cellular_run: u32,
}

/// Default hysteresis margin.
pub const DEFAULT_HYSTERESIS: f64 = 0.1;
/// Default consecutive-sample requirement.
pub const DEFAULT_STREAK: u32 = 3;

impl Default for BottleneckDetector {
    fn default() -> Self {
        Self::new(DEFAULT_HYSTERESIS, DEFAULT_STREAK)
    }
}

impl BottleneckDetector {
    pub fn new(hysteresis: f64, streak: u32) -> Self {
        assert!(hysteresis >= 0.0);
        assert!(streak >= 1);
        Self {
            hysteresis,
            streak,
            location: BottleneckLocation::Cellular,
            wired_run: 0,
            cellular_run: 0,
        }
    }

    pub fn location(&self) -> BottleneckLocation {
        self.location
    }

    /// Feeds one pair of estimates and returns the (possibly updated) verdict.
    pub fn update(&mut self, cellular_bps: f64, end_to_end_bps: Option<f64>) -> BottleneckLocation {
        let Some(e2e) = end_to_end_bps else {
            return self.location; // no estimate: hold the prior verdict
        };
        if cellular_bps > (1.0 + self.hysteresis) * e2e {
            self.wired_run += 1;
            self.cellular_run = 0;
            if self.wired_run >= self.streak {
                self.location = BottleneckLocation::Wired;
            }
        } else if cellular_bps <= e2e {
            self.cellular_run += 1;
            self.wired_run = 0;
            if self.cellular_run >= self.streak {
                self.location = BottleneckLocation::Cellular;
            }
        } else {
            // Inside the hysteresis band: evidence for neither side.
            self.wired_run = 0;
            self.cellular_run = 0;
        }
        self.location
    }
}

/// Pearson correlation coefficient of two equal-length series.
///
/// Returns `None` when the correlation is undefined: fewer than two points,
/// mismatched lengths, or either series constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}
