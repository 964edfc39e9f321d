//! `sim` — command-line front end for the cellsim simulation library.
//!
//! Subcommands:
//!
//! * `run` — execute one scenario file and write `events.log`,
//!   `summary.csv`, and `report.json`;
//! * `study` — execute a named multi-run experiment (`compare`, `sweep`,
//!   `multiflow`, `fallback`, `correlate`, `granularity`) from a study
//!   config;
//! * `gen-trace` — emit a synthetic link-capacity trace as CSV;
//! * `diag gen` / `diag dump` — produce and decode binary diagnostic frame
//!   streams.
//!
//! Every command is deterministic given its seed: identical invocations
//! produce byte-identical output files.

use std::fmt::Write as _;
use std::io::{Read, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cellsim_core::config;
use cellsim_core::diag::{decode_all, encode_frame, DiagFrame, FramePayload};
use cellsim_core::modem::{BufferPolicy, ModemEmulator, RadioConfig};
use cellsim_core::study::{self, StudyName};
use cellsim_core::trace::{LinkTrace, RandomWalk};

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Trace-driven simulator for congestion control over cellular links"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write events.log, summary.csv, and report.json.
    Run(RunArgs),
    /// Run a named study (compare, sweep, multiflow, fallback, correlate,
    /// granularity) from a study config file.
    Study(StudyArgs),
    /// Generate a synthetic link-capacity trace as CSV (time_ms,capacity_bps).
    GenTrace(GenTraceArgs),
    /// Produce or decode binary diagnostic frame streams.
    #[command(subcommand)]
    Diag(DiagCmd),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML; see the config schema in the library docs).
    #[arg(long)]
    scenario: PathBuf,
    /// Directory the output files are written to.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Which study to run.
    name: String,
    /// Study config file (TOML with a [scenario] table plus per-study keys).
    #[arg(long)]
    config: PathBuf,
    /// Directory the output files are written to.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Base seed; overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TraceProfile {
    RandomWalk,
}

#[derive(Args)]
struct GenTraceArgs {
    /// Trace shape to generate.
    #[arg(long, value_enum, default_value = "random-walk")]
    profile: TraceProfile,
    /// Lower capacity bound, Mbit/s.
    #[arg(long, default_value_t = 5.0)]
    min_mbps: f64,
    /// Upper capacity bound, Mbit/s.
    #[arg(long, default_value_t = 50.0)]
    max_mbps: f64,
    /// Largest capacity change per interval, Mbit/s.
    #[arg(long, default_value_t = 3.0)]
    step: f64,
    /// Trace length in milliseconds.
    #[arg(long, default_value_t = 60_000)]
    duration: u64,
    /// Time between capacity changes, milliseconds.
    #[arg(long, default_value_t = 100)]
    interval: u64,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DiagCmd {
    /// Decode a frame stream and print one line per frame; a summary of
    /// decoder statistics goes to stderr. Reads stdin when FILE is `-`.
    Dump {
        /// Binary frame-stream file, or `-` for stdin.
        file: PathBuf,
    },
    /// Synthesize a binary diagnostic frame stream from a random-walk trace.
    Gen(DiagGenArgs),
}

#[derive(Args)]
struct DiagGenArgs {
    /// Emulated span in milliseconds.
    #[arg(long, default_value_t = 1_000)]
    duration: u64,
    /// Lower capacity bound, Mbit/s.
    #[arg(long, default_value_t = 5.0)]
    min_mbps: f64,
    /// Upper capacity bound, Mbit/s.
    #[arg(long, default_value_t = 50.0)]
    max_mbps: f64,
    /// Largest capacity change per interval, Mbit/s.
    #[arg(long, default_value_t = 3.0)]
    step: f64,
    /// Diagnostic flush policy.
    #[arg(long, value_enum, default_value = "drain")]
    policy: FlushPolicy,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FlushPolicy {
    /// Flush each frame within one drain period (1 ms).
    Drain,
    /// Hold frames and release them in one burst per second.
    Batch,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Study(args) => cmd_study(&args),
        Cmd::GenTrace(args) => cmd_gen_trace(&args),
        Cmd::Diag(DiagCmd::Dump { file }) => cmd_diag_dump(&file),
        Cmd::Diag(DiagCmd::Gen(args)) => cmd_diag_gen(&args),
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let scenario = config::load_scenario(&args.scenario)
        .with_context(|| format!("loading scenario {}", args.scenario.display()))?;
    let (output, log) = study::run_single(&scenario)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_out(&args.out, "events.log", &log.to_lines())?;
    write_out(&args.out, "summary.csv", &output.summary_csv)?;
    write_out(&args.out, "report.json", &output.report.to_json())?;
    for run in &output.report.runs {
        for flow in &run.flows {
            let delay = flow
                .delay_ms
                .map(|d| format!("{:.1} ms mean / {:.1} ms p95 delay", d.mean, d.p95))
                .unwrap_or_else(|| "no delivered packets".to_string());
            println!(
                "flow {} ({}): {:.3} Mbit/s, {delay}",
                flow.flow,
                flow.label,
                flow.throughput_bps / 1e6
            );
        }
    }
    println!("wrote {}", args.out.join("summary.csv").display());
    println!("wrote {}", args.out.join("report.json").display());
    println!("wrote {}", args.out.join("events.log").display());
    Ok(())
}

fn cmd_study(args: &StudyArgs) -> Result<()> {
    let name = StudyName::from_str(&args.name)?;
    let (file, base_dir) = config::load_study(&args.config)
        .with_context(|| format!("loading study config {}", args.config.display()))?;
    let output = study::run_study(name, &file, &base_dir, args.seed, Some(&args.out))?;
    for (cca, agg) in &output.report.cca_summary {
        let delay = agg
            .mean_delay_ms
            .map(|d| format!("{d:.1} ms mean delay"))
            .unwrap_or_else(|| "no delay samples".to_string());
        println!(
            "{cca}: {} runs, {:.3} Mbit/s mean, {delay}",
            agg.runs,
            agg.mean_throughput_bps / 1e6
        );
    }
    println!("wrote {}", args.out.join("summary.csv").display());
    println!("wrote {}", args.out.join("report.json").display());
    Ok(())
}

fn cmd_gen_trace(args: &GenTraceArgs) -> Result<()> {
    let TraceProfile::RandomWalk = args.profile;
    anyhow::ensure!(args.max_mbps >= args.min_mbps, "--max-mbps below --min-mbps");
    let cfg = RandomWalk {
        min_mbps: args.min_mbps,
        max_mbps: args.max_mbps,
        step_mbps: args.step,
        duration_ms: args.duration,
        interval_ms: args.interval,
    };
    let trace = LinkTrace::random_walk(&cfg, args.seed);
    emit(args.out.as_deref(), trace.to_csv_string().as_bytes())
}

fn cmd_diag_gen(args: &DiagGenArgs) -> Result<()> {
    anyhow::ensure!(args.max_mbps >= args.min_mbps, "--max-mbps below --min-mbps");
    let cfg = RandomWalk {
        min_mbps: args.min_mbps,
        max_mbps: args.max_mbps,
        step_mbps: args.step,
        duration_ms: args.duration,
        interval_ms: 100,
    };
    let trace = LinkTrace::random_walk(&cfg, args.seed);
    let policy = match args.policy {
        FlushPolicy::Drain => BufferPolicy::drain_default(),
        FlushPolicy::Batch => BufferPolicy::batch_default(),
    };
    let mut emu = ModemEmulator::new(trace, RadioConfig::single_carrier(), policy, args.seed);
    let output = emu.advance_to(args.duration * 1000);
    let mut bytes = Vec::new();
    for delivery in &output.deliveries {
        bytes.extend_from_slice(&encode_frame(&delivery.frame)?);
    }
    emit(args.out.as_deref(), &bytes)
}

fn cmd_diag_dump(file: &Path) -> Result<()> {
    let bytes = if file == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).context("reading stdin")?;
        buf
    } else {
        std::fs::read(file).with_context(|| format!("reading {}", file.display()))?
    };
    let (frames, stats) = decode_all(&bytes);
    let mut out = String::new();
    for frame in &frames {
        format_frame(&mut out, frame);
    }
    print!("{out}");
    eprintln!(
        "decoded {} frames (crc_errors={} bad_version={} bad_length={} \
         unknown_msg_type={} invalid_payload={} resync_bytes={})",
        stats.frames,
        stats.crc_errors,
        stats.bad_version,
        stats.bad_length,
        stats.unknown_msg_type,
        stats.invalid_payload,
        stats.resync_bytes
    );
    Ok(())
}

fn format_frame(out: &mut String, frame: &DiagFrame) {
    let _ = write!(out, "t_us={}", frame.timestamp_us);
    match &frame.payload {
        FramePayload::Dci(g) => {
            let dir = match g.direction {
                cellsim_core::diag::Direction::Uplink => "ul",
                cellsim_core::diag::Direction::Downlink => "dl",
            };
            let _ = writeln!(
                out,
                " type=dci_grant carrier={} dir={dir} prb={} tbs_index={} mimo_layers={} tti_us={}",
                g.carrier_id, g.prb, g.tbs_index, g.mimo_layers, g.tti_us
            );
        }
        FramePayload::GrantedBytes(r) => {
            let _ = writeln!(
                out,
                " type=granted_bytes window_us={} bytes_granted={} bytes_used={}",
                r.window_us, r.bytes_granted, r.bytes_used
            );
        }
        FramePayload::CellMeas(m) => {
            let _ = writeln!(
                out,
                " type=cell_meas rsrp_centi_dbm={} cell_id={}",
                m.rsrp_centi_dbm, m.cell_id
            );
        }
    }
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(bytes).context("writing stdout")
        }
    }
}
