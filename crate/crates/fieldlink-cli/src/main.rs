//! fieldlink command line.
//!
//! Subcommands: `probe` (latency only), `stream` (stream load + latency),
//! `simulate` (real-time delay simulator), `report` (re-render tables and
//! charts from a results directory), `presets` (inspect the preset
//! catalog), `serve` (echo + sink peer for real-socket runs).
//!
//! Exit codes: 0 success, 1 validation, 2 transport, 3 partial results.

mod mission;
mod plan;
mod report;
mod runs;
mod table;

use std::fmt::Display;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fieldlink::channel::PresetCatalog;
use fieldlink::loadgen::{EchoServer, StreamSink};
use fieldlink::metrics::present_1dp;
use fieldlink::rtsim;
use thiserror::Error;

use crate::plan::ExperimentPlan;
use crate::runs::{write, ExecArgs, SessionMode, TransportKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    fn validation(e: impl Display) -> Self {
        Self::Validation(e.to_string())
    }

    fn transport(e: impl Display) -> Self {
        Self::Transport(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Transport(_) => 2,
            Self::Partial(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fieldlink",
    version,
    about = "Wireless field-link measurement and simulation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TransportArg {
    /// Seeded channel emulation on a virtual clock.
    Emulated,
    /// Real datagram sockets against `fieldlink serve` peers.
    Udp,
}

#[derive(Args)]
struct RunOpts {
    /// Plan file (see configs/ for examples).
    #[arg(long)]
    plan: PathBuf,
    /// Preset file; defaults to the bundled catalog.
    #[arg(long)]
    presets: Option<PathBuf>,
    /// Base seed; per-run seeds derive from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Results directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = TransportArg::Emulated)]
    transport: TransportArg,
    /// Echo peer address (udp transport).
    #[arg(long)]
    echo: Option<SocketAddr>,
    /// Stream sink address (udp transport).
    #[arg(long)]
    sink: Option<SocketAddr>,
    /// Probe cadence for `probe` runs; streams always probe at 10 Hz.
    #[arg(long, default_value_t = 10.0)]
    rate_hz: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the latency probe protocol over a plan.
    Probe(RunOpts),
    /// Run the stream-load protocol (with concurrent probes) over a plan.
    Stream(RunOpts),
    /// Run the real-time operation-delay simulator from a mission file.
    Simulate {
        /// Mission config file.
        #[arg(long)]
        mission: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Re-render tables, gap rows and charts from persisted results.
    Report {
        /// Directory holding run CSVs written by probe/stream.
        #[arg(long)]
        results: PathBuf,
        /// Output directory; defaults to `<results>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show the preset catalog: encoded numbers, gaps and provenance.
    Presets {
        /// Preset file; defaults to the bundled catalog.
        #[arg(long)]
        presets: Option<PathBuf>,
    },
    /// Run the echo + sink peers for real-socket sessions.
    Serve {
        #[arg(long, default_value = "0.0.0.0")]
        bind: String,
        #[arg(long, default_value_t = 4401)]
        echo_port: u16,
        #[arg(long, default_value_t = 4402)]
        sink_port: u16,
        /// Stop after this many seconds (runs until killed if omitted).
        #[arg(long)]
        duration_s: Option<f64>,
    },
}

fn load_catalog(path: &Option<PathBuf>) -> Result<PresetCatalog, CliError> {
    match path {
        None => Ok(PresetCatalog::bundled()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            PresetCatalog::from_text(&text).map_err(CliError::validation)
        }
    }
}

fn exec_args(opts: &RunOpts) -> Result<ExecArgs, CliError> {
    let plan_text = std::fs::read_to_string(&opts.plan)
        .map_err(|e| CliError::Validation(format!("{}: {e}", opts.plan.display())))?;
    let plan = ExperimentPlan::parse(&plan_text)?;
    let catalog = load_catalog(&opts.presets)?;
    let transport = match opts.transport {
        TransportArg::Emulated => TransportKind::Emulated,
        TransportArg::Udp => {
            let echo = opts.echo.ok_or_else(|| {
                CliError::Validation("--transport udp needs --echo <addr>".into())
            })?;
            TransportKind::Udp {
                echo,
                sink: opts.sink,
            }
        }
    };
    Ok(ExecArgs {
        plan,
        catalog,
        out_dir: opts.out.clone(),
        seed: opts.seed,
        transport,
        probe_rate_hz: opts.rate_hz,
    })
}

fn cmd_simulate(mission_path: &Path, out_dir: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(mission_path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", mission_path.display())))?;
    let (spec, model) = mission::parse_mission(&text)?;
    let report = rtsim::simulate_mission(&spec, &model).map_err(CliError::validation)?;

    let mut csv = String::from("message,position_m,rtt_ms,cumulative_delay_ms,margin_ms\n");
    for m in &report.messages {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            m.index,
            present_1dp(m.position_m),
            present_1dp(m.rtt_ms),
            present_1dp(m.cumulative_delay_ms),
            present_1dp(m.margin_ms),
        ));
    }
    write(&out_dir.join("mission.csv"), &csv)?;

    let json = serde_json::json!({
        "verdict": report.verdict(),
        "response_window_ms": report.response_window_ms,
        "response_window_ms_presented": present_1dp(report.response_window_ms),
        "total_cumulative_delay_ms": report.total_cumulative_delay_ms,
        "total_cumulative_delay_s_presented": present_1dp(report.total_cumulative_delay_ms / 1000.0),
        "messages_sent": spec.messages(),
        "messages_total": spec.total_message_count(),
        "report": report,
    });
    let mut json_text = serde_json::to_string_pretty(&json).expect("report serialize");
    json_text.push('\n');
    write(&out_dir.join("mission.json"), &json_text)?;
    write(&out_dir.join("mission.svg"), &rtsim::timeline_svg(&report))?;

    let worst = report
        .messages
        .iter()
        .map(|m| m.margin_ms)
        .fold(f64::INFINITY, f64::min);
    let mut out = String::new();
    out.push_str(&format!("verdict: {}\n", report.verdict()));
    out.push_str(&format!(
        "response window: {} ms\n",
        present_1dp(report.response_window_ms)
    ));
    out.push_str(&format!(
        "worst margin: {}{} ms ({})\n",
        if worst >= 0.0 { "+" } else { "" },
        present_1dp(worst),
        if worst >= 0.0 { "lead" } else { "lag" },
    ));
    let total = report.total_cumulative_delay_ms;
    if total > 0.0 {
        out.push_str(&format!(
            "total lag: {} s over {} s of travel\n",
            present_1dp(total / 1000.0),
            present_1dp(spec.travel_time_s()),
        ));
    } else {
        out.push_str(&format!(
            "net lead: {} s over {} s of travel\n",
            present_1dp(-total / 1000.0),
            present_1dp(spec.travel_time_s()),
        ));
    }
    out.push_str(&format!("note: {}\n", report.footnote));
    out.push_str(&format!(
        "files: mission.csv, mission.json, mission.svg in {}\n",
        out_dir.display()
    ));
    Ok(out)
}

fn cmd_serve(
    bind: &str,
    echo_port: u16,
    sink_port: u16,
    duration_s: Option<f64>,
) -> Result<String, CliError> {
    let echo = EchoServer::spawn(&format!("{bind}:{echo_port}")).map_err(CliError::transport)?;
    let sink = StreamSink::spawn(&format!("{bind}:{sink_port}")).map_err(CliError::transport)?;
    println!("echo peer on {}", echo.addr());
    println!("stream sink on {}", sink.addr());
    match duration_s {
        Some(secs) => std::thread::sleep(std::time::Duration::from_secs_f64(secs)),
        None => loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        },
    }
    Ok("done serving\n".into())
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Probe(opts) => runs::execute(&exec_args(&opts)?, SessionMode::Probe),
        Command::Stream(opts) => runs::execute(&exec_args(&opts)?, SessionMode::Stream),
        Command::Simulate { mission, out } => cmd_simulate(&mission, &out),
        Command::Report { results, out } => {
            let out_dir = out.unwrap_or_else(|| results.join("report"));
            report::render(&results, &out_dir)
        }
        Command::Presets { presets } => Ok(report::render_presets(&load_catalog(&presets)?)),
        Command::Serve {
            bind,
            echo_port,
            sink_port,
            duration_s,
        } => cmd_serve(&bind, echo_port, sink_port, duration_s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
