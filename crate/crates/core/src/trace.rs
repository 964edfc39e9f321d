//! Piecewise-constant link-capacity traces.
//!
//! A trace is a sequence of `(time_ms, capacity_bps)` samples with strictly
//! increasing times. Capacity holds constant from one sample until the next;
//! before the first sample it holds the first value, after the last sample
//! the last value.
//!
//! The CSV form is a header line `time_ms,capacity_bps` followed by one
//! sample per line. Parsing reports the 1-based line number of anything it
//! rejects, so a bad row in a long capture is easy to find.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One capacity observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceSample {
    pub time_ms: u64,
    pub capacity_bps: u64,
}

/// A validated capacity trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkTrace {
    samples: Vec<TraceSample>,
}

/// Problems found while building or parsing a trace.
#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace has no samples")]
    Empty,
    #[error("line {line}: timestamps must be strictly increasing ({prev} ms then {this} ms)")]
    NonMonotonicTime { line: usize, prev: u64, this: u64 },
    #[error("line {line}: expected header 'time_ms,capacity_bps', got '{got}'")]
    BadHeader { line: usize, got: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading trace: {0}")]
    Io(#[from] std::io::Error),
}

impl LinkTrace {
    /// Validates strictly increasing sample times.
    pub fn new(samples: Vec<TraceSample>) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, pair) in samples.windows(2).enumerate() {
            if pair[1].time_ms <= pair[0].time_ms {
                return Err(TraceError::NonMonotonicTime {
                    // +2 headers a data row count starting at 1; callers that
                    // parse CSV re-map this to file lines themselves.
                    line: i + 2,
                    prev: pair[0].time_ms,
                    this: pair[1].time_ms,
                });
            }
        }
        Ok(Self { samples })
    }

    /// A flat trace at `capacity_bps`.
    pub fn constant(capacity_bps: u64) -> Self {
        Self { samples: vec![TraceSample { time_ms: 0, capacity_bps }] }
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    /// Time of the last sample; the trace holds its final value beyond this.
    pub fn last_change_ms(&self) -> u64 {
        self.samples.last().unwrap().time_ms
    }

    /// Capacity at an instant, in bit/s.
    pub fn capacity_at_us(&self, t_us: u64) -> u64 {
        let t_ms = t_us / 1000;
        // Largest sample with time <= t_ms; before the first sample, hold it.
        match self.samples.partition_point(|s| s.time_ms <= t_ms) {
            0 => self.samples[0].capacity_bps,
            n => self.samples[n - 1].capacity_bps,
        }
    }

    /// Mean capacity over `[start_us, end_us)`, exact under the
    /// piecewise-constant interpretation.
    pub fn mean_capacity_bps(&self, start_us: u64, end_us: u64) -> f64 {
        assert!(end_us > start_us, "empty interval");
        let mut acc = 0.0f64;
        let mut t = start_us;
        while t < end_us {
            let cap = self.capacity_at_us(t);
            // Next capacity change after t, in us.
            let t_ms = t / 1000;
            let next_change_us = match self.samples.iter().find(|s| s.time_ms > t_ms) {
                Some(s) => s.time_ms * 1000,
                None => end_us,
            };
            let seg_end = next_change_us.min(end_us).max(t + 1);
            acc += cap as f64 * (seg_end - t) as f64;
            t = seg_end;
        }
        acc / (end_us - start_us) as f64
    }

    /// Parses the CSV form. See the module docs for the format.
    pub fn from_csv_str(text: &str) -> Result<Self, TraceError> {
        let mut samples = Vec::new();
        let mut prev_time: Option<(usize, u64)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if idx == 0 {
                if line != "time_ms,capacity_bps" {
                    return Err(TraceError::BadHeader { line: 1, got: line.to_string() });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let (t, c) = match (fields.next(), fields.next(), fields.next()) {
                (Some(t), Some(c), None) => (t.trim(), c.trim()),
                _ => {
                    return Err(TraceError::Parse {
                        line: line_no,
                        msg: format!("expected 2 comma-separated fields, got '{line}'"),
                    })
                }
            };
            let time_ms: u64 = t.parse().map_err(|e| TraceError::Parse {
                line: line_no,
                msg: format!("bad time_ms '{t}': {e}"),
            })?;
            let capacity_bps: u64 = c.parse().map_err(|e| TraceError::Parse {
                line: line_no,
                msg: format!("bad capacity_bps '{c}': {e}"),
            })?;
            if let Some((_, prev)) = prev_time {
                if time_ms <= prev {
                    return Err(TraceError::NonMonotonicTime { line: line_no, prev, this: time_ms });
                }
            }
            prev_time = Some((line_no, time_ms));
            samples.push(TraceSample { time_ms, capacity_bps });
        }
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(Self { samples })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, TraceError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::from_csv_str(&text)
    }

    /// Renders the CSV form (inverse of [`from_csv_str`]).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time_ms,capacity_bps\n");
        for s in &self.samples {
            writeln!(out, "{},{}", s.time_ms, s.capacity_bps).unwrap();
        }
        out
    }

    /// Seeded bounded random walk: capacity starts mid-range and moves by a
    /// uniform step in `[-step, +step]` Mbit/s every `interval_ms`, clamped to
    /// `[min, max]`. Same seed, same trace.
    pub fn random_walk(cfg: &RandomWalk, seed: u64) -> Self {
        assert!(cfg.max_mbps >= cfg.min_mbps, "max below min");
        assert!(cfg.interval_ms > 0, "interval must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mbps = (cfg.min_mbps + cfg.max_mbps) / 2.0;
        let mut samples = Vec::new();
        let mut t = 0u64;
        while t < cfg.duration_ms.max(1) {
            samples.push(TraceSample { time_ms: t, capacity_bps: (mbps * 1e6).round() as u64 });
            if cfg.step_mbps > 0.0 {
                mbps += rng.gen_range(-cfg.step_mbps..=cfg.step_mbps);
                mbps = mbps.clamp(cfg.min_mbps, cfg.max_mbps);
            }
            t += cfg.interval_ms;
        }
        Self { samples }
    }
}

/// Parameters for [`LinkTrace::random_walk`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RandomWalk {
    pub min_mbps: f64,
    pub max_mbps: f64,
    /// Maximum capacity change per interval, Mbit/s.
    pub step_mbps: f64,
    pub duration_ms: u64,
    /// Time between capacity changes; 100 ms if unspecified in configs.
    pub interval_ms: u64,
}
