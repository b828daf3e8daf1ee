use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use gridmesh::broker::Limits;
use gridmesh::case::{load_case, CaseTopology};
use gridmesh::contour::HeatRange;
use gridmesh::server::{Server, ServerConfig};
use gridmesh::tools::{
    self, load_recording, load_series, synth_frames, BenchDirection, BenchOptions, DriveOptions, Rate, RecordOptions,
    RecordOutcome, RecordingWriter, RenderOptions, ReplayOptions, SynthParams, ToolError,
};
use gridmesh::wire::TransportBinding;

const DEFAULT_SERVER: &str = "tcp://127.0.0.1:5000";
/// Exit status of `record` when the group went quiet before the end marker.
const EXIT_IDLE: u8 = 3;

#[derive(Parser)]
#[command(name = "gridmesh", version, about = "Shared-workspace message server and grid telemetry tools")]
struct Cli {
    /// Log at debug level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the message server.
    Serve(ServeArgs),
    /// Publish a case topology and a stream of frames.
    Drive(DriveArgs),
    /// Record everything sent to a group.
    Record(RecordArgs),
    /// Play a recording back into a group.
    Replay(ReplayArgs),
    /// Render contour frames from a recording to PPM files.
    Render(RenderArgs),
    /// Measure server throughput.
    Bench(BenchArgs),
    /// Convert a case between JSON and CSV.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// TCP listen address, e.g. 127.0.0.1:5000 (repeatable).
    #[arg(long)]
    tcp: Vec<String>,
    /// Unix socket path (repeatable).
    #[arg(long)]
    ipc: Vec<PathBuf>,
    /// WebSocket listen address (repeatable).
    #[arg(long)]
    ws: Vec<String>,
    #[arg(long, default_value_t = Limits::default().max_sessions)]
    max_sessions: usize,
}

#[derive(Args)]
struct Conn {
    /// Server binding: tcp://host:port, ipc:///path or ws://host:port.
    #[arg(long, default_value = DEFAULT_SERVER)]
    server: TransportBinding,
    #[arg(long, default_value = "grid")]
    group: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateArg {
    Realtime,
    Max,
}

#[derive(Args)]
struct DriveArgs {
    #[command(flatten)]
    conn: Conn,
    /// Case file (.json) or CSV case directory.
    #[arg(long)]
    case: PathBuf,
    /// CSV series (t, v1..vN per row). Without it a synthetic wave is sent.
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long, default_value = "freq")]
    var: String,
    #[arg(long, value_enum, default_value = "realtime")]
    rate: RateArg,
    /// Wait for the consumer's ack after every publish.
    #[arg(long)]
    lockstep: bool,
    /// Seconds to wait for each ack in lockstep mode.
    #[arg(long, default_value_t = 10.0)]
    ack_timeout: f64,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Seconds between synthetic frames.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = SynthParams::default().f0)]
    f0: f64,
    #[arg(long, default_value_t = SynthParams::default().amplitude)]
    amplitude: f64,
    /// Bus idx where the disturbance starts (default: first bus).
    #[arg(long)]
    origin_bus: Option<i64>,
    /// Propagation speed in projected units per second.
    #[arg(long, default_value_t = SynthParams::default().speed)]
    speed: f64,
    #[arg(long, default_value_t = SynthParams::default().decay)]
    decay: f64,
    #[arg(long, default_value_t = SynthParams::default().t_event)]
    t_event: f64,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    conn: Conn,
    #[arg(long)]
    out: PathBuf,
    /// Give up after this many silent seconds.
    #[arg(long, default_value_t = 5.0)]
    idle_timeout: f64,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    conn: Conn,
    #[arg(long)]
    recording: PathBuf,
    /// Playback speed multiplier; `inf` sends back to back.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long)]
    lockstep: bool,
    #[arg(long, default_value_t = 10.0)]
    ack_timeout: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    recording: PathBuf,
    #[arg(long, default_value = "freq")]
    var: String,
    /// Value drawn green.
    #[arg(long, default_value_t = 60.0)]
    center: f64,
    /// Distance from the center to full blue or red.
    #[arg(long, default_value_t = 0.1)]
    half_width: f64,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "800x600", value_parser = parse_size)]
    size: (u32, u32),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = DEFAULT_SERVER)]
    server: TransportBinding,
    #[arg(long, default_value = "bench")]
    group: String,
    /// Doubles per array.
    #[arg(long, default_value_t = 1_000_000)]
    k: usize,
    /// Number of arrays.
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value = "send")]
    direction: BenchDirection,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    case: PathBuf,
    /// Output `.json` file, or a directory for buses.csv + lines.csv.
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w = w.parse().map_err(|e| format!("width: {e}"))?;
    let h = h.parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

fn secs(s: f64) -> Result<Duration, ToolError> {
    Duration::try_from_secs_f64(s).map_err(|e| ToolError::Usage(format!("bad duration {s}: {e}")))
}

fn serve(args: ServeArgs) -> Result<(), ToolError> {
    let mut bindings: Vec<TransportBinding> = args.tcp.iter().map(|a| TransportBinding::tcp(a.clone())).collect();
    bindings.extend(args.ipc.iter().map(|p| TransportBinding::ipc(p.to_string_lossy().into_owned())));
    bindings.extend(args.ws.iter().map(|a| TransportBinding::websocket(a.clone())));
    if bindings.is_empty() {
        bindings.push(DEFAULT_SERVER.parse().map_err(ToolError::Usage)?);
    }
    let config = ServerConfig { bindings, limits: Limits { max_sessions: args.max_sessions, ..Limits::default() } };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = Server::bind(config).await.map_err(|e| ToolError::Usage(e.to_string()))?;
        let mut out = std::io::stdout().lock();
        for b in server.bindings() {
            writeln!(out, "listening {b}")?;
        }
        out.flush()?;
        drop(out);
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        Ok(())
    })
}

fn drive(args: DriveArgs) -> Result<(), ToolError> {
    let case = load_case(&args.case)?;
    let frames = match &args.series {
        Some(path) => load_series(path)?,
        None => {
            let params = SynthParams {
                f0: args.f0,
                amplitude: args.amplitude,
                origin_bus: args.origin_bus.or(case.buses.first().map(|b| b.idx)).unwrap_or(0),
                speed: args.speed,
                decay: args.decay,
                t_event: args.t_event,
            };
            synth_frames(&case, &params, args.frames, args.dt)?
        }
    };
    let opts = DriveOptions {
        binding: args.conn.server,
        group: args.conn.group,
        var: args.var,
        rate: match args.rate {
            RateArg::Realtime => Rate::RealTime,
            RateArg::Max => Rate::Max,
        },
        lockstep: args.lockstep,
        ack_timeout: secs(args.ack_timeout)?,
    };
    let report = tools::drive(&case, &frames, &opts)?;
    println!("drove {} frames in {:.3}s", report.frames, report.elapsed.as_secs_f64());
    Ok(())
}

fn record(args: RecordArgs) -> Result<RecordOutcome, ToolError> {
    let mut out = RecordingWriter::create(&args.out)?;
    let opts = RecordOptions {
        binding: args.conn.server,
        group: args.conn.group,
        idle_timeout: secs(args.idle_timeout)?,
    };
    let report = tools::record(&opts, &mut out)?;
    out.flush()?;
    let total = report.frames_total.map_or_else(|| "?".to_owned(), |n| n.to_string());
    println!("recorded {} records, {}/{} frames", report.records, report.frames, total);
    Ok(report.outcome)
}

fn replay(args: ReplayArgs) -> Result<(), ToolError> {
    let records = load_recording(&args.recording)?;
    let opts = ReplayOptions {
        binding: args.conn.server,
        group: args.conn.group,
        speed: args.speed,
        lockstep: args.lockstep,
        ack_timeout: secs(args.ack_timeout)?,
    };
    let report = tools::replay(&records, &opts)?;
    println!("replayed {} records in {:.3}s", report.records, report.elapsed.as_secs_f64());
    Ok(())
}

fn render(args: RenderArgs) -> Result<(), ToolError> {
    let case = load_case(&args.case)?;
    let records = load_recording(&args.recording)?;
    let range = HeatRange::new(args.center, args.half_width).map_err(|e| ToolError::Usage(e.to_string()))?;
    let opts = RenderOptions { var: args.var, range, width: args.size.0, height: args.size.1, out_dir: args.out };
    let report = tools::render(&case, &records, &opts)?;
    println!("wrote {} frames", report.files.len());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), ToolError> {
    let report = tools::bench(&BenchOptions {
        binding: args.server,
        group: args.group,
        k: args.k,
        m: args.m,
        direction: args.direction,
    })?;
    println!("{report}");
    Ok(())
}

fn write_case(case: &CaseTopology, out: &Path) -> Result<(), ToolError> {
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        std::fs::write(out, case.to_json())?;
    } else {
        std::fs::create_dir_all(out)?;
        let (buses, lines) = case.to_csv();
        std::fs::write(out.join("buses.csv"), buses)?;
        std::fs::write(out.join("lines.csv"), lines)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.cmd {
        Cmd::Serve(a) => serve(a),
        Cmd::Drive(a) => drive(a),
        Cmd::Record(a) => match record(a) {
            Ok(RecordOutcome::Done) => Ok(()),
            Ok(RecordOutcome::IdleTimeout) => {
                error!("no data before the idle timeout");
                return ExitCode::from(EXIT_IDLE);
            }
            Err(e) => Err(e),
        },
        Cmd::Replay(a) => replay(a),
        Cmd::Render(a) => render(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Convert(a) => load_case(&a.case).map_err(ToolError::from).and_then(|c| write_case(&c, &a.out)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
