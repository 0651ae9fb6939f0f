use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use credito_cli::scenario::{check_remote, run, Script};
use credito_cli::transport::{segment, Embedded, Remote, Transport};
use credito_cli::{render_alerts, render_forecast, render_tree, verify_journal};
use credito_gateway::ServiceConfig;
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(name = "credito", version, about = "Client and scenario runner for the credito ledgers")]
struct Cli {
    #[command(flatten)]
    target: Target,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Target {
    /// Talk to a running gateway at this base URL.
    #[arg(long, global = true, value_name = "URL", conflicts_with = "embedded")]
    server: Option<String>,
    /// Run against an in-process ledger (the default).
    #[arg(long, global = true)]
    embedded: bool,
    /// Journal file for the embedded ledger, the server, or verification.
    #[arg(long, global = true, value_name = "PATH")]
    journal: Option<PathBuf>,
    /// Service configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the HTTP gateway until interrupted.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Execute a scenario script and print its transcript.
    RunScenario { script: PathBuf },
    /// Print the provenance tree of a credit code.
    ShowTree { credit_code: String },
    /// Check a journal's hash chain and every ledger invariant.
    VerifyJournal { path: Option<PathBuf> },
    /// Print the token demand forecast.
    Forecast {
        #[arg(long, default_value_t = 1)]
        horizon: u64,
    },
    /// Print fraud alerts detected after a sequence number.
    Alerts {
        #[arg(long, default_value_t = 0)]
        since_seq: u64,
    },
}

fn fail(msg: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn service_config(target: &Target) -> Result<ServiceConfig, String> {
    let mut config = match &target.config {
        Some(path) => ServiceConfig::load(path).map_err(|e| e.to_string())?,
        None => ServiceConfig::default(),
    };
    if target.journal.is_some() {
        config.journal = target.journal.clone();
    }
    Ok(config)
}

fn transport(target: &Target) -> Result<Box<dyn Transport>, String> {
    match &target.server {
        Some(url) => Ok(Box::new(Remote::new(url))),
        None => Ok(Box::new(Embedded::new(&service_config(target)?).map_err(|e| e.to_string())?)),
    }
}

/// GETs `path` and returns the body, or prints the API error.
fn query(target: &Target, path: &str) -> Result<Value, ExitCode> {
    let mut t = transport(target).map_err(|e| fail(e, 2))?;
    match t.get(path) {
        Ok((200, body)) => Ok(body),
        Ok((_, body)) => Err(fail(
            format!(
                "{}: {}",
                body["error"]["code"].as_str().unwrap_or("UNKNOWN"),
                body["error"]["message"].as_str().unwrap_or("")
            ),
            1,
        )),
        Err(e) => Err(fail(e, 3)),
    }
}

fn serve(target: &Target, listen: Option<String>) -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let mut config = match service_config(target) {
        Ok(c) => c,
        Err(e) => return fail(e, 2),
    };
    if let Some(listen) = listen {
        config.listen = listen;
    }
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    match rt.block_on(credito_gateway::serve(&config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e, 1),
    }
}

fn run_scenario(target: &Target, path: &Path) -> ExitCode {
    let script = match Script::load(path) {
        Ok(s) => s,
        Err(e) => return fail(e, 2),
    };
    let mut t: Box<dyn Transport> = match &target.server {
        Some(url) => {
            let mut remote = Remote::new(url);
            if let Err(e) = check_remote(&script, &mut remote) {
                return fail(e, 1);
            }
            Box::new(remote)
        }
        None => {
            let mut config = script.service_config();
            config.journal = target.journal.clone();
            match Embedded::new(&config) {
                Ok(e) => Box::new(e),
                Err(e) => return fail(e, 3),
            }
        }
    };
    let result = run(&script, t.as_mut());
    print!("{}", result.transcript);
    match &result.outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e, result.exit_code() as u8),
    }
}

fn verify(target: &Target, path: Option<PathBuf>) -> ExitCode {
    let Some(path) = path.or_else(|| target.journal.clone()) else {
        return fail("verify-journal needs a path or --journal", 2);
    };
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) => return fail(format!("cannot read {}: {e}", path.display()), 1),
    };
    match verify_journal(&bytes) {
        Ok(report) => {
            print!("{}", report.render());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            println!("chain: FAIL {} ({e})", e.code());
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let target = &cli.target;
    match cli.command {
        Cmd::Serve { listen } => serve(target, listen),
        Cmd::RunScenario { script } => run_scenario(target, &script),
        Cmd::VerifyJournal { path } => verify(target, path),
        Cmd::ShowTree { credit_code } => match query(target, &format!("/credits/{}/tree", segment(&credit_code))) {
            Ok(body) => match render_tree(&body) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(format!("malformed tree: {e}"), 3),
            },
            Err(code) => code,
        },
        Cmd::Forecast { horizon } => match query(target, &format!("/forecast?horizon={horizon}")) {
            Ok(body) => {
                print!("{}", render_forecast(&body));
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Cmd::Alerts { since_seq } => match query(target, &format!("/alerts?since_seq={since_seq}")) {
            Ok(body) => {
                print!("{}", render_alerts(&body));
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
    }
}
