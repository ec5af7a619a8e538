use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magswarm_cli::{CliError, ScenarioConfig, Scenario};
use magswarm_service::{Server, DEFAULT_LISTEN, LISTEN_ENV};

#[derive(Parser)]
#[command(name = "magswarm", version, about = "Rotating-field nanoparticle swarm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run(RunArgs),
    /// List the available scenarios.
    List,
    /// Serve a live session over WebSocket.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    scenario: String,
    /// Scenario config or a previous run's manifest; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = LISTEN_ENV, default_value = DEFAULT_LISTEN)]
    listen: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scene seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Start paused until a client sends Resume.
    #[arg(long)]
    paused: bool,
}

fn load(path: Option<&PathBuf>, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let config = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let seed = seed.unwrap_or(config.seed);
    let config = config.with_seed(seed);
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let scenario = Scenario::from_name(&args.scenario).ok_or_else(|| {
        let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        CliError::Usage(format!("unknown scenario '{}'; expected one of {}", args.scenario, names.join(", ")))
    })?;
    let config = load(args.config.as_ref(), args.seed)?;
    tracing::info!("running {scenario} with seed {}", config.seed);
    let (_, artifacts) = magswarm_cli::run(scenario, &config)?;
    artifacts.commit(&args.out)?;
    println!("{scenario}: wrote {} files to {}", artifacts.paths().count(), args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = load(args.config.as_ref(), args.seed)?;
    let mut session = magswarm_cli::session_config(&config)?;
    session.time_scale = args.time_scale;
    session.start_paused = args.paused;
    session.validate().map_err(|e| CliError::invalid("time_scale", e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = Server::bind(&args.listen, session)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot listen on {}: {e}", args.listen)))?;
        let addr = server.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("listening on ws://{addr}");
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List => {
            for s in Scenario::ALL {
                println!("{:<18} {}", s.name(), s.description());
            }
            Ok(())
        }
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("magswarm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
