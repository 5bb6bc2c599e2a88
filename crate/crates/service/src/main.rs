use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use neurochat_core::analysis::run_analysis;
use neurochat_core::ingest::{synth_generate, write_csv, SynthSpec};
use neurochat_core::Config;
use neurochat_service::gateway::{ChatClient, MockClient, OpenAiClient, BASE_URL_ENV};
use neurochat_service::source::SourceSpec;
use neurochat_service::{app, AppState};

#[derive(Parser)]
#[command(
    name = "neurochat",
    version,
    about = "EEG engagement-adaptive tutoring service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Default source for new sessions: bridge://host:port,
        /// replay://file.csv[?speed=..] or synth://spec.toml[?speed=..]
        #[arg(long)]
        source: Option<String>,
        #[arg(long, default_value = "neurochat-data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the offline mock model even if an endpoint is configured.
        #[arg(long)]
        mock_llm: bool,
    },
    /// Clean, z-score and summarise exported metrics logs.
    Analyze {
        /// Directory of <session_id>.jsonl metrics files.
        #[arg(long)]
        input: PathBuf,
        /// CSV with header session_id,participant,condition,order
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic spec to a replayable CSV recording.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    match Cli::parse().command {
        Command::Serve {
            source,
            data_dir,
            port,
            config,
            mock_llm,
        } => {
            let cfg = load_config(config.as_ref())?;
            if let Some(s) = &source {
                s.parse::<SourceSpec>()?;
            }
            let gateway: Arc<dyn ChatClient> = match (mock_llm, OpenAiClient::from_env(&cfg.llm)) {
                (false, Some(client)) => Arc::new(client?),
                (false, None) => {
                    tracing::warn!("{BASE_URL_ENV} not set, using the mock model");
                    Arc::new(MockClient::new())
                }
                (true, _) => Arc::new(MockClient::new()),
            };
            tracing::info!(model = gateway.name(), "language model client ready");
            let state = AppState::open(&data_dir, cfg, gateway, source)?;
            let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
            tracing::info!("listening on http://{}", listener.local_addr()?);
            let shutdown_state = state.clone();
            axum::serve(listener, app(state))
                .with_graceful_shutdown(async move {
                    let _ = tokio::signal::ctrl_c().await;
                    shutdown_state.shutdown();
                })
                .await?;
        }
        Command::Analyze {
            input,
            manifest,
            out,
        } => {
            let report = run_analysis(&input, &manifest, &out)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} sessions, {} paired participants, tables in {}",
                report.sessions.len(),
                report.summary.paired.len(),
                out.display()
            );
        }
        Command::Synth { spec, out } => {
            let spec = SynthSpec::load(&spec)?;
            let frames = synth_generate(&spec)?;
            if frames.is_empty() {
                bail!("spec produced no frames");
            }
            write_csv(&out, &frames)?;
            println!("{} frames written to {}", frames.len(), out.display());
        }
    }
    Ok(())
}
