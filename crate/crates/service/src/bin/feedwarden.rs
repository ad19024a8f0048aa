use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use feedwarden_service::config::{load_config, ServiceConfig, CONFIG_ENV};
use feedwarden_service::error::{StartupError, EXIT_STORAGE};
use feedwarden_service::{router, Service};

#[derive(Parser)]
#[command(name = "feedwarden", version, about = "Feed filtering service")]
struct Cli {
    /// Config file; falls back to $FEEDWARDEN_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Restore state and serve the HTTP API.
    Serve {
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Validate the config and print the effective values.
    CheckConfig,
}

fn config_from(cli: &Cli) -> Result<ServiceConfig, StartupError> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(load_config(&p)?),
        None => Ok(ServiceConfig::default()),
    }
}

fn fail(e: &StartupError) -> ExitCode {
    eprintln!("feedwarden: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match config_from(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match cli.command {
        Command::CheckConfig => {
            println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
            ExitCode::SUCCESS
        }
        Command::Serve { listen } => {
            if let Some(addr) = listen {
                config.listen = addr;
            }
            // providers use blocking clients, so build them before the runtime
            let service = match Service::open(config) {
                Ok(s) => Arc::new(s),
                Err(e) => return fail(&e),
            };
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("feedwarden: runtime: {e}");
                    return ExitCode::from(EXIT_STORAGE as u8);
                }
            };
            match runtime.block_on(serve(service)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
    }
}

async fn serve(service: Arc<Service>) -> Result<(), StartupError> {
    let addr = service.config().listen.clone();
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| StartupError::Bind { addr: addr.clone(), source })?;
    eprintln!("feedwarden: listening on {addr}");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| StartupError::Bind { addr, source })
}
