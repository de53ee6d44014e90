use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use hazardline::config::Config;
use hazardline::retrieval::RetrievalStrategy;
use hazardline::SessionRegistry;
use hazardline_cli::{eval_synthetic, eval_tasks, grid_spec, index, query_once, render_trace, router};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "hazardline", version, about = "Multi-path disaster question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Service configuration (TOML).
    #[arg(short, long, default_value = "hazardline.toml")]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist the keyword and vector indices.
    Index(ConfigArg),
    /// Answer one question and print the pathway trace.
    Query {
        #[command(flatten)]
        config: ConfigArg,
        /// Print the raw JSON response.
        #[arg(long)]
        json: bool,
        text: String,
    },
    /// Sweep retrieval configurations against the no-retrieval baseline.
    Eval {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Run the seeded synthetic suite instead of task files.
        #[arg(long, conflicts_with_all = ["mcq", "open_ended"])]
        synthetic: Option<u64>,
        #[arg(long)]
        mcq: Option<PathBuf>,
        #[arg(long)]
        open_ended: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<RetrievalStrategy>,
        #[arg(long = "ir", value_delimiter = ',')]
        pool_sizes: Vec<usize>,
        #[arg(long = "k", value_delimiter = ',')]
        depths: Vec<usize>,
        /// Judge keypoints with the configured model instead of containment.
        #[arg(long)]
        model_judge: bool,
        /// Write the full JSON report here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Index(c) => {
            let config = Config::load(&c.config)?;
            let n = index(&config)?;
            println!("indexed {n} passages into {}", config.indices.display());
        }
        Command::Query { config, json, text } => {
            let r = query_once(&Config::load(&config.config)?, &text)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                print!("{}", render_trace(&r));
            }
        }
        Command::Eval {
            config,
            synthetic,
            mcq,
            open_ended,
            strategies,
            pool_sizes,
            depths,
            model_judge,
            out,
        } => {
            let spec = grid_spec(&strategies, &pool_sizes, &depths);
            let report = match synthetic {
                Some(seed) => eval_synthetic(seed, &spec)?,
                None => {
                    let path = config.unwrap_or_else(|| "hazardline.toml".into());
                    let config = Config::load(&path)?;
                    eval_tasks(&config, mcq.as_deref(), open_ended.as_deref(), model_judge, &spec)?
                }
            };
            if let Some(out) = out {
                std::fs::write(&out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
            }
            println!("cells: {}", report.cell_count());
            print!("{}", report.summary_table());
        }
        Command::Serve { config, addr } => {
            let config = Config::load(&config.config)?;
            let mut registry = SessionRegistry::new(Arc::new(config.build_engine()?));
            if let Some(dir) = &config.sessions {
                std::fs::create_dir_all(dir)?;
                registry = registry.with_persistence(dir);
            }
            serve(router(Arc::new(registry)), addr)?;
        }
    }
    Ok(())
}

#[tokio::main]
async fn serve(app: axum::Router, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    eprintln!("listening on http://{addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
