//! Command-line driver: run the sync server, dissect captured frames,
//! or execute one scripted scenario against a running server.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use trackersync::codec::{render_dissection, parse_hex_dump, TrackerId};
use trackersync::scenario::{self, Expectation, ScenarioParams};
use trackersync::server::{spawn, Clock, Mode, ServerConfig, ServerState};

#[derive(Parser)]
#[command(name = "trackersync", version, about = "Tracker sync protocol toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sync server until interrupted.
    Serve(ServeArgs),
    /// Annotate a frame capture (raw binary or hex-dump text) field by field.
    Dissect { file: PathBuf },
    /// Baseline: honest device sync, digest must match the device.
    HonestSync(ScenarioArgs),
    /// Replay a captured frame under a different tracker ID.
    Impersonate(ScenarioArgs),
    /// Upload a fabricated summary-only frame with no device involved.
    Fabricate(ScenarioArgs),
    /// Two-request CRC-oracle attack against the error response.
    CrcOracle(ScenarioArgs),
    /// Inject a step count into EEPROM through the debug port, then sync.
    HwInject(ScenarioArgs),
    /// Clear the EEPROM encryption flag so frames go out in plaintext.
    HwDecryptFlag(ScenarioArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "vulnerable")]
    mode: Mode,
    #[arg(long, default_value_t = 8000)]
    port: u16,
    /// Account store file; omit for in-memory accounts.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Consecutive CRC errors tolerated before lockout.
    #[arg(long, default_value_t = 5)]
    error_threshold: u32,
    #[arg(long, default_value_t = 3600)]
    lockout_secs: u64,
    /// Time source: "system", or "manual:<unix-secs>" (steppable via
    /// POST /admin/clock).
    #[arg(long, default_value = "system")]
    clock: String,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    server: String,
    /// Target tracker ID, 12 hex digits.
    #[arg(long)]
    tracker: TrackerId,
    #[arg(long, default_value = "2017-01-15")]
    date: NaiveDate,
    #[arg(long, default_value_t = 10_000)]
    steps: u32,
    #[arg(long, default_value_t = 10_000_000)]
    distance_mm: u32,
    /// Device readout protection level for hardware scenarios (0-2).
    #[arg(long, default_value_t = 0)]
    protection_level: u8,
    /// Expected outcome; exit code 0 iff the observation matches.
    #[arg(long, default_value = "pass")]
    expect: Expectation,
}

impl ScenarioArgs {
    fn into_params(self) -> ScenarioParams {
        let mut params = ScenarioParams::new(&self.server, self.tracker);
        params.date = self.date;
        params.steps = self.steps;
        params.distance_mm = self.distance_mm;
        params.protection_level = self.protection_level;
        params.expect = self.expect;
        params
    }
}

fn parse_clock(spec: &str) -> Result<Clock, String> {
    if spec == "system" {
        return Ok(Clock::System);
    }
    let start = spec
        .strip_prefix("manual:")
        .ok_or_else(|| format!("clock must be system or manual:<secs>, got {spec}"))?;
    let start: u64 = start
        .parse()
        .map_err(|_| format!("bad manual clock start: {start}"))?;
    Ok(Clock::manual(start))
}

fn serve(args: ServeArgs) -> Result<(), String> {
    let clock = parse_clock(&args.clock)?;
    let mut config = ServerConfig::new(args.mode);
    config.error_threshold = args.error_threshold;
    config.lockout_secs = args.lockout_secs;
    let state = ServerState::try_new(config, clock, args.store).map_err(|e| e.to_string())?;
    let handle = spawn(Arc::new(state), args.port).map_err(|e| e.to_string())?;
    eprintln!("listening on {} ({:?} mode)", handle.addr, args.mode);
    loop {
        std::thread::park();
    }
}

fn dissect(file: &PathBuf) -> Result<(), String> {
    let raw = std::fs::read(file).map_err(|e| format!("{}: {e}", file.display()))?;
    // hex-dump text captures are also accepted
    let frame = match std::str::from_utf8(&raw) {
        Ok(text) if text.chars().all(|c| c.is_ascii()) => {
            parse_hex_dump(text).unwrap_or(raw.clone())
        }
        _ => raw.clone(),
    };
    print!("{}", render_dissection(&frame));
    Ok(())
}

fn run_scenario(name: &str, args: ScenarioArgs) -> ExitCode {
    match scenario::run(name, &args.into_params()) {
        Ok(verdict) => {
            println!("{}", serde_json::to_string_pretty(&verdict).expect("verdict is JSON"));
            if verdict.met {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("scenario failed to run: {err}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Serve(args) => match serve(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("{err}");
                ExitCode::from(2)
            }
        },
        Command::Dissect { file } => match dissect(&file) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("{err}");
                ExitCode::from(2)
            }
        },
        Command::HonestSync(args) => run_scenario("honest-sync", args),
        Command::Impersonate(args) => run_scenario("impersonate", args),
        Command::Fabricate(args) => run_scenario("fabricate", args),
        Command::CrcOracle(args) => run_scenario("crc-oracle", args),
        Command::HwInject(args) => run_scenario("hw-inject", args),
        Command::HwDecryptFlag(args) => run_scenario("hw-decrypt-flag", args),
    }
}
