//! `pamon`: simulate, analyze, replay and serve monitoring sessions.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use pamon_core::analysis::analyze;
use pamon_core::monitor::write_csv;
use pamon_core::scenario::ScenarioRegistry;
use pamon_core::session::{read_session, run, LaserWindow, RunSpec, SessionFile};
use pamon_core::{Error, Exec};

#[derive(Parser)]
#[command(name = "pamon", version, about = "Photoacoustic monitoring of simulated laser tattoo removal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headlessly and write a session file.
    Simulate(SimulateArgs),
    /// Re-run the monitor over a session file and report the fit, stages and alarm.
    Analyze(AnalyzeArgs),
    /// Print a session file's records at a multiple of the original pacing.
    Replay(ReplayArgs),
    /// List available scenarios.
    Scenarios(RegistryArgs),
    /// Run the websocket session service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RegistryArgs {
    /// JSON file with extra scenarios, added to the built-in ones.
    #[arg(long, value_name = "PATH")]
    scenarios: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: String,
    /// Session length, s.
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Laser switch-on time, s. Pairs with the matching --laser-off; without
    /// any pairs the laser stays on for the whole duration.
    #[arg(long = "laser-on", value_name = "S")]
    laser_on: Vec<f64>,
    /// Laser switch-off time, s.
    #[arg(long = "laser-off", value_name = "S")]
    laser_off: Vec<f64>,
    /// Output file; standard output when omitted or "-".
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    registry: RegistryArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    file: PathBuf,
    /// Also write the per-pulse CSV here ("-" for standard output, after the report).
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    file: PathBuf,
    /// Pacing multiplier, or "max" for no delay.
    #[arg(long, default_value = "1", value_parser = parse_speed)]
    speed: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PAMON_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "PAMON_SCENARIOS", value_name = "PATH")]
    scenarios: Option<PathBuf>,
    #[arg(long, env = "PAMON_RECORD_DIR", value_name = "DIR")]
    record_dir: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    #[arg(long, env = "PAMON_TIME_SCALE", default_value_t = 1.0)]
    time_scale: f64,
}

fn parse_speed(s: &str) -> Result<f64, String> {
    if s.eq_ignore_ascii_case("max") {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("speed must be a positive number or \"max\", got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Data(String),
    /// Downstream closed the pipe; not an error.
    Closed,
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Data(e.to_string())
        }
    }
}

/// Errors in files we were asked to read are data errors, everything else
/// (bad flags, unknown scenario, invalid schedule) is a usage error.
fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: Error) -> Failure {
    match e {
        Error::Parse { line, message } => Failure::Data(format!("line {line}: {message}")),
        e => Failure::Data(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Replay(a) => replay(a),
        Command::Scenarios(a) => scenarios(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("pamon: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("pamon: {m}");
            ExitCode::from(2)
        }
    }
}

fn registry(path: Option<&Path>) -> Result<ScenarioRegistry, Failure> {
    match path {
        None => Ok(ScenarioRegistry::builtin()),
        Some(p) => ScenarioRegistry::load(p)
            .map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdout().lock())),
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    if a.laser_on.len() != a.laser_off.len() {
        return Err(Failure::Usage(format!(
            "--laser-on given {} times but --laser-off {} times",
            a.laser_on.len(),
            a.laser_off.len()
        )));
    }
    let reg = registry(a.registry.scenarios.as_deref())?;
    let spec = RunSpec {
        scenario: a.scenario,
        duration: a.duration,
        seed: a.seed,
        schedule: a
            .laser_on
            .iter()
            .zip(&a.laser_off)
            .map(|(&on_at, &off_at)| LaserWindow { on_at, off_at })
            .collect(),
    };
    let file = run(&spec, &reg, Exec::default()).map_err(usage)?;
    let out = output(a.out.as_deref())?;
    write_session(&file, out)
}

fn write_session(file: &SessionFile, out: Box<dyn Write>) -> Result<(), Failure> {
    match file.write_to(out) {
        Ok(()) => Ok(()),
        Err(Error::Io(m)) if m.contains("Broken pipe") => Err(Failure::Closed),
        Err(e) => Err(Failure::Data(e.to_string())),
    }
}

fn load(path: &Path) -> Result<SessionFile, Failure> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    read_session(BufReader::new(f)).map_err(|e| match data(e) {
        Failure::Data(m) => Failure::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<(), Failure> {
    let file = load(&a.file)?;
    let analysis = analyze(&file).map_err(data)?;
    let mut stdout = io::stdout().lock();
    let report = serde_json::to_string_pretty(&analysis.report).expect("report serializes");
    writeln!(stdout, "{report}")?;
    stdout.flush()?;
    drop(stdout);
    if let Some(path) = a.csv {
        let mut out = output(Some(&path))?;
        write_csv(&mut out, &analysis.rows)?;
        out.flush()?;
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), Failure> {
    let file = load(&a.file)?;
    let lines = file.replay(a.speed).map_err(usage)?;
    let mut out = io::stdout().lock();
    let start = Instant::now();
    let mut due = Duration::ZERO;
    let mut buf = String::new();
    for (delay, line) in lines {
        due += delay;
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        // One write per record so a closed pipe never leaves half a line.
        buf.clear();
        buf.push_str(line);
        buf.push('\n');
        out.write_all(buf.as_bytes())?;
        out.flush()?;
    }
    Ok(())
}

fn scenarios(a: RegistryArgs) -> Result<(), Failure> {
    let reg = registry(a.scenarios.as_deref())?;
    let mut out = io::stdout().lock();
    for s in reg.iter() {
        writeln!(out, "{}\t{}", s.name, s.description)?;
    }
    out.flush()?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    if !(a.time_scale > 0.0 && a.time_scale.is_finite()) {
        return Err(Failure::Usage(format!("--time-scale must be positive, got {}", a.time_scale)));
    }
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    let cfg = pamon_server::ServerConfig {
        listen: a.listen,
        registry: registry(a.scenarios.as_deref())?,
        record_dir: a.record_dir,
        time_scale: a.time_scale,
        ..Default::default()
    };
    if let Some(dir) = &cfg.record_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .map_err(|e| Failure::Usage(format!("cannot listen on {}: {e}", cfg.listen)))?;
        eprintln!("pamon: listening on {}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        pamon_server::serve(cfg, listener, shutdown).await?;
        Ok(())
    })
}
