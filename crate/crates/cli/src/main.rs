//! `ccm`: command-line client of the ccm service.
//!
//! Without `--server` (or `CCM_SERVER`) the service is started in-process on
//! an ephemeral loopback port, so every command goes through the same
//! HTTP/JSON path either way.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccm_api::{ConfigRequest, IdentifyRequest, RunResponse, SequenceKind, SequenceSpec, SweepRequest, TuneRequest};
use ccm_client::{Client, ClientError};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ccm", version, about = "Continuous-casting thermal model and cooling identification")]
struct Cli {
    /// Service base URL; an in-process server is started when omitted.
    #[arg(long, env = "CCM_SERVER", global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Forward run: field, fronts and energy audit.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noisy surface profile and tuning-point stream from the truth model.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Least-squares identification of the target face from a measured profile.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, default_value = "ccm-identify")]
        out: PathBuf,
    },
    /// One stochastic-approximation tuning run against synthetic measurements.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        seq: Seq,
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, default_value = "ccm-tune")]
        out: PathBuf,
    },
    /// Tuning runs over a grid of sequences and parameters.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "ccm-sweep")]
        out: PathBuf,
    },
    /// Direct reversion against least squares under repeated measurement noise.
    Scatter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "ccm-scatter")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Seq {
    Harmonic,
    SignReset,
    SignIncrement,
}

impl From<Seq> for SequenceKind {
    fn from(s: Seq) -> Self {
        match s {
            Seq::Harmonic => SequenceKind::Harmonic,
            Seq::SignReset => SequenceKind::SignReset,
            Seq::SignIncrement => SequenceKind::SignIncrement,
        }
    }
}

enum Failure {
    Config(String),
    Io(String),
    Client(ClientError),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 1,
            Failure::Client(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) | Failure::Io(m) => f.write_str(m),
            Failure::Client(e) => write!(f, "{e}"),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Client(e)
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_outputs(out: &Path, resp: &RunResponse) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("cannot write to {}: {e}", out.display()));
    std::fs::create_dir_all(out).map_err(io)?;
    for a in &resp.artifacts {
        std::fs::write(out.join(&a.name), &a.content).map_err(io)?;
    }
    std::fs::write(out.join("resolved.toml"), &resp.resolved_config).map_err(io)?;
    let summary = serde_json::to_string_pretty(&resp.summary).unwrap_or_default();
    std::fs::write(out.join("summary.json"), format!("{summary}\n")).map_err(io)?;
    println!("{summary}");
    eprintln!("wrote {} files to {}", resp.artifacts.len() + 2, out.display());
    Ok(())
}

async fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Serve { addr } = &cli.command {
        let listener =
            tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::Io(format!("cannot bind {addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?);
        return ccm_service::serve(listener).await.map_err(|e| Failure::Io(e.to_string()));
    }
    let base = match cli.server {
        Some(s) => s,
        None => {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                .await
                .map_err(|e| Failure::Io(format!("cannot start the in-process server: {e}")))?;
            let addr = listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?;
            tokio::spawn(ccm_service::serve(listener));
            format!("http://{addr}")
        }
    };
    let client = Client::new(base);
    let (resp, out) = match cli.command {
        Command::Serve { .. } => unreachable!("handled above"),
        Command::Simulate { config, out } => (client.simulate(&ConfigRequest { config: read_input(&config)? }).await?, out),
        Command::Synthesize { config, out } => {
            (client.synthesize(&ConfigRequest { config: read_input(&config)? }).await?, out)
        }
        Command::Identify { config, measurements, out } => {
            let req = IdentifyRequest { config: read_input(&config)?, measurements: read_input(&measurements)? };
            (client.identify(&req).await?, out)
        }
        Command::Tune { config, seq, a, b, out } => {
            let req = TuneRequest { config: read_input(&config)?, sequence: SequenceSpec { kind: seq.into(), a, b } };
            (client.tune(&req).await?, out)
        }
        Command::Sweep { config, grid, out } => {
            let req = SweepRequest { config: read_input(&config)?, grid: Some(read_input(&grid)?) };
            (client.sweep(&req).await?, out)
        }
        Command::Scatter { config, out } => (client.scatter(&ConfigRequest { config: read_input(&config)? }).await?, out),
    };
    write_outputs(&out, &resp)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("ccm: cannot start the runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ccm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
