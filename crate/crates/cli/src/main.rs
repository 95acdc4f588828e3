use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pinshape_cli::config::ModelArgs;
use pinshape_cli::mqtt::{Bridge, BridgeConfig};
use pinshape_cli::server;
use pinshape_core::eval::{load_corpus, parse_corpus, Evaluator, DEFAULT_CORPUS};
use pinshape_core::{extract_parameters, sim, Hub, HubConfig, PipelineVariant, ScriptCategory};

#[derive(Parser)]
#[command(name = "pinshape", version, about = "Author pin-display behaviour from text prompts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server, optionally bridged to hardware over MQTT.
    Serve {
        #[arg(long, env = "PINSHAPE_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Broker URL, e.g. mqtt://localhost:1883
        #[arg(long, env = "PINSHAPE_MQTT_URL")]
        mqtt_url: Option<String>,
        #[arg(long, env = "PINSHAPE_TARGET_TOPIC")]
        target_topic: Option<String>,
        #[arg(long, env = "PINSHAPE_ACTUAL_TOPIC")]
        actual_topic: Option<String>,
        /// Directory for per-session command logs.
        #[arg(long, env = "PINSHAPE_LOG_DIR")]
        log_dir: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Evaluation harness.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Compile-check a script file and print its parameters.
    Check {
        file: PathBuf,
        #[arg(long, default_value = "primitive")]
        category: ScriptCategory,
        /// Primitive script whose parameters become parentparams.
        #[arg(long)]
        parent: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Score a prompt corpus by compile success.
    Run {
        /// One prompt per line; defaults to the bundled 50-prompt corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        variant: PipelineVariant,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve {
            addr,
            mqtt_url,
            target_topic,
            actual_topic,
            log_dir,
            models,
        } => {
            let engine = Arc::new(models.engine()?);
            let hub = Arc::new(Hub::new(
                engine,
                HubConfig {
                    log_dir,
                    ..HubConfig::default()
                },
            ));
            let bridge = match mqtt_url {
                Some(url) => {
                    let mut config = BridgeConfig::from_url(&url)?;
                    if let Some(t) = target_topic {
                        config.target_topic = t;
                    }
                    if let Some(t) = actual_topic {
                        config.actual_topic = t;
                    }
                    Some(Bridge::start(hub.clone(), config)?)
                }
                None => None,
            };
            serve(hub.clone(), addr)?;
            hub.shutdown();
            if let Some(b) = bridge {
                b.join();
            }
            Ok(())
        }
        Command::Eval {
            command:
                EvalCommand::Run {
                    corpus,
                    variant,
                    jobs,
                    out,
                    models,
                },
        } => {
            let prompts = match corpus {
                Some(path) => load_corpus(&path).with_context(|| format!("reading {}", path.display()))?,
                None => parse_corpus(DEFAULT_CORPUS),
            };
            let report = Evaluator::new(models.engine()?, variant).with_jobs(jobs).run(&prompts)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            eprintln!(
                "{variant}: n = {}, success rate = {:.4}, mean latency = {:.3} s{}",
                report.n,
                report.success_rate,
                report.mean_latency,
                if report.latency_is_physical { "" } else { " (replayed, not physical)" }
            );
            Ok(())
        }
        Command::Check {
            file,
            category,
            parent,
        } => {
            let source = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let parent = match parent {
                Some(p) => {
                    let src = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    extract_parameters(&src, ScriptCategory::Primitive)?
                }
                None => Default::default(),
            };
            sim::compile_check_with_parent(&source, category, &parent)?;
            let params = extract_parameters(&source, category)?;
            println!("{}", serde_json::to_string_pretty(&params)?);
            Ok(())
        }
    }
}

fn serve(hub: Arc<Hub>, addr: SocketAddr) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(hub))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
