use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hpsync::harness::{
    run_with, HarnessError, InProcess, NetConditions, Recording, RunOutput, Scenario,
    ScenarioConfig, ServerPort, WsPort,
};
use hpsync::server::{net, trace, ServerConfig};

#[derive(Parser)]
#[command(
    name = "hpsync",
    version,
    about = "Hybrid-presence sync server and scenario harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the relay server.
    Server {
        #[arg(long, default_value_t = 9000)]
        port: u16,
        /// Also accept length-delimited frames over plain TCP on this port.
        #[arg(long)]
        tcp_port: Option<u16>,
        #[arg(long, default_value = "0.0.0.0")]
        host: IpAddr,
        /// Room configuration, TOML or JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Scenario bots and room traces.
    Harness {
        #[command(subcommand)]
        command: HarnessCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// One-way client-to-client latency.
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
    /// Width of the end-to-end latency spread.
    #[arg(long, default_value_t = 0)]
    jitter_ms: u64,
    /// Fraction of pose and audio frames lost end to end.
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    /// Scenario configuration (client and room settings), TOML.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HarnessCommand {
    /// Run a scenario and write its metrics.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the server's structured log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Drive a running server (ws://host:port) in real time instead of an in-process room.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Run a scenario in-process and record the room's input and output trace.
    Record {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Replay a recorded room trace and check the outputs match.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Server(#[from] hpsync::server::ServerError),
    #[error("{0}")]
    Other(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn scenario_config(args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
            toml::from_str::<ScenarioConfig>(&text)
                .map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?
        }
        None => ScenarioConfig::default(),
    };
    cfg.seed = args.seed;
    cfg.conditions = NetConditions::new(args.latency_ms, args.jitter_ms, args.loss)?;
    Ok(cfg)
}

fn write_output(
    out: &RunOutput,
    metrics: Option<&Path>,
    log: Option<&Path>,
) -> Result<(), CliError> {
    let json = out.metrics.to_json_pretty();
    match metrics {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => println!("{json}"),
    }
    if let Some(p) = log {
        let mut w = BufWriter::new(File::create(p)?);
        for e in &out.log {
            writeln!(w, "{}", e.to_json())?;
        }
        w.flush()?;
    }
    Ok(())
}

fn report(out: &RunOutput) -> ExitCode {
    for a in &out.metrics.assertions {
        eprintln!(
            "{} {}: {}",
            if a.passed { "pass" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    if out.metrics.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Server {
            port,
            tcp_port,
            host,
            config,
        } => {
            let cfg = match config {
                Some(p) => ServerConfig::load(&p)?,
                None => ServerConfig::default(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            let ws = SocketAddr::new(host, port);
            let tcp = tcp_port.map(|p| SocketAddr::new(host, p));
            rt.block_on(net::run(cfg, ws, tcp, net::stdout_log()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Harness { command } => match command {
            HarnessCommand::Run {
                run,
                out,
                log,
                endpoint,
            } => {
                let cfg = scenario_config(&run)?;
                let mut port: Box<dyn ServerPort> = match endpoint {
                    Some(url) => Box::new(WsPort::new(url)?),
                    None => Box::new(InProcess::new(cfg.room.clone())),
                };
                let output = run_with(run.scenario, &cfg, port.as_mut())?;
                write_output(&output, out.as_deref(), log.as_deref())?;
                Ok(report(&output))
            }
            HarnessCommand::Record { run, out, metrics } => {
                let cfg = scenario_config(&run)?;
                let mut port = Recording::new(cfg.room.clone());
                let output = run_with(run.scenario, &cfg, &mut port)?;
                trace::write_jsonl(port.lines(), BufWriter::new(File::create(&out)?))?;
                if metrics.is_some() {
                    write_output(&output, metrics.as_deref(), None)?;
                }
                eprintln!("recorded {} lines to {}", port.lines().len(), out.display());
                Ok(report(&output))
            }
            HarnessCommand::Replay { trace: path } => {
                let lines = trace::read_jsonl(BufReader::new(File::open(&path)?))?;
                let r = trace::replay(&lines)?;
                println!(
                    "{}",
                    serde_json::to_string_pretty(&r).map_err(|e| CliError::Other(e.to_string()))?
                );
                if r.identical() {
                    eprintln!(
                        "replay identical: {} inputs, {} outputs",
                        r.inputs, r.outputs
                    );
                    Ok(ExitCode::SUCCESS)
                } else {
                    eprintln!("replay diverged at output {:?}", r.first_mismatch);
                    Ok(ExitCode::from(1))
                }
            }
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
