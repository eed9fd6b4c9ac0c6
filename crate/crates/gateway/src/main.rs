use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use airan_core::testbed::TestbedConfig;
use airan_eval::fixtures::reference_script;
use airan_eval::suite::builtin_suite_json;
use airan_eval::{render_table, Report};
use airan_gateway::server::{bind, serve_on, AppState};
use airan_gateway::{load_suite, run_eval, run_sim, write_report, BackendKind, EvalOptions, GatewayConfig};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "airan", version, about = "AI-RAN testbed gateway, simulator and evaluator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
    #[command(subcommand)]
    Sim(SimCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum SimCmd {
    /// Advance a standalone testbed and write its events as JSONL.
    Run {
        /// Testbed config file; the desk-3cell preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        ticks: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Evaluate a backend on a scenario suite (`builtin` for the shipped one).
    Run {
        #[arg(long)]
        suite: String,
        #[arg(long, value_enum)]
        backend: BackendKind,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the reference script for a suite.
    Script {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the shipped scenario suite.
    Suite {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Print a report as a table.
    Render { report: PathBuf },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Serve { config, bind: addr } => serve(config, addr),
        Cmd::Sim(SimCmd::Run { config, preset, ticks, out }) => {
            let cfg = match (config, preset) {
                (Some(p), _) => TestbedConfig::load(&p)?,
                (None, Some(name)) => TestbedConfig::preset(&name)?,
                (None, None) => TestbedConfig::default(),
            };
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            let summary = run_sim(&cfg, ticks, &mut w)?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(())
        }
        Cmd::Eval(EvalCmd::Run { suite, backend, script, traces, out }) => {
            let scenarios = load_suite(&suite)?;
            let (report, timing) = run_eval(&scenarios, backend, &EvalOptions { script, traces })?;
            let sidecar = write_report(&out, &report, &timing)?;
            print!("{}", render_table(&report));
            println!("mean_latency_s              {:>10.6}", timing.mean_latency_s);
            tracing::info!(report = %out.display(), timing = %sidecar.display(), "report written");
            Ok(())
        }
        Cmd::Eval(EvalCmd::Script { suite, out }) => {
            let script = reference_script(&load_suite(&suite)?);
            std::fs::write(&out, serde_json::to_string_pretty(&script)? + "\n")?;
            Ok(())
        }
        Cmd::Eval(EvalCmd::Suite { out }) => {
            std::fs::write(&out, builtin_suite_json())?;
            Ok(())
        }
        Cmd::Report(ReportCmd::Render { report }) => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let r: Report = serde_json::from_str(&text).context("parsing report")?;
            print!("{}", render_table(&r));
            Ok(())
        }
    }
}

fn serve(config: Option<PathBuf>, addr: Option<String>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => GatewayConfig::load(&p)?,
        None => GatewayConfig::default(),
    };
    if let Some(a) = addr {
        cfg.bind = a;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = bind(&cfg).await?;
        let state = AppState::new(&cfg)?;
        tracing::info!(addr = %listener.local_addr()?, "gateway listening");
        tokio::select! {
            r = serve_on(listener, state) => r?,
            _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
        }
        Ok(())
    })
}
