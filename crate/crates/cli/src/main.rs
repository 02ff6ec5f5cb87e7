//! `fdconfig`: batch analysis, counting, consequence dumps, transcript
//! replay, and the HTTP server.
//!
//! Exit codes: 0 success, 1 infeasible model, 2 input error, 3 resource limit.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use fdconfig_core::consequences::{
    analyses, count_solutions, model_consequences, valid_domains_enumerate, ConsequenceError, CountError,
};
use fdconfig_core::model::parse_model;
use fdconfig_core::session::{parse_transcript, replay, ReplayError, SessionError};
use fdconfig_core::solver::DEFAULT_NODE_BUDGET;
use fdconfig_core::translate::TranslateError;
use fdconfig_core::{compile, CompiledModel, Consequences, FeatureModel, Session};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "fdconfig", version, about = "Feature model analysis and interactive configuration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and check that the model has at least one product.
    Check { model: PathBuf },
    /// Print the valid domain of every variable.
    Consequences {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Probe)]
        method: MethodArg,
        #[arg(long)]
        json: bool,
    },
    /// Count products.
    Count {
        model: PathBuf,
        /// Stop after this many solutions (exit 3).
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Apply a decision transcript and print the final session snapshot.
    Replay {
        model: PathBuf,
        transcript: PathBuf,
        /// Seconds to wait for each recomputation.
        #[arg(long, default_value_t = 600)]
        timeout: u64,
    },
    /// Run the HTTP server.
    Serve {
        #[arg(long, env = "FDCONFIG_PORT", default_value_t = 7070)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 100)]
        session_cap: usize,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        node_budget: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Probe,
    Enumerate,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Resource(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 1,
            CliError::Input(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl From<TranslateError> for CliError {
    fn from(e: TranslateError) -> Self {
        match e {
            TranslateError::Invalid(ds) => {
                CliError::Input(ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
            }
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<ConsequenceError> for CliError {
    fn from(e: ConsequenceError) -> Self {
        match e {
            ConsequenceError::InfeasibleModel => CliError::Infeasible("the model has no valid product".into()),
            e @ (ConsequenceError::ResourceLimit { .. } | ConsequenceError::Cancelled { .. }) => {
                CliError::Resource(e.to_string())
            }
            ConsequenceError::Solver(e) => CliError::Input(e.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Translate(t) => t.into(),
            SessionError::InfeasibleModel => CliError::Infeasible(e.to_string()),
            SessionError::ResourceLimit => CliError::Resource(e.to_string()),
            SessionError::Solver(e) => CliError::Input(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<FeatureModel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| CliError::Input(format!("{}:{e}", path.display())))
}

fn load_compiled(path: &Path) -> Result<CompiledModel, CliError> {
    Ok(compile(&load(path)?)?)
}

fn table(c: &Consequences) -> String {
    let width = c.entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("variable".len());
    let mut out = format!("{:width$}  values\n", "variable");
    for (name, d) in &c.entries {
        out.push_str(&format!("{name:width$}  {d}\n"));
    }
    out
}

fn run(command: Command, out: &mut impl Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Input(e.to_string());
    match command {
        Command::Check { model } => {
            let mut cm = load_compiled(&model)?;
            let a = analyses(&mut cm)?;
            let list = |v: &[String]| if v.is_empty() { "-".to_string() } else { v.join(", ") };
            writeln!(out, "feasible: {} products", a.count).map_err(io)?;
            writeln!(out, "core: {}", list(&a.core)).map_err(io)?;
            writeln!(out, "dead: {}", list(&a.dead)).map_err(io)?;
        }
        Command::Consequences { model, method, json } => {
            let mut cm = load_compiled(&model)?;
            let mut c = match method {
                MethodArg::Probe => (*model_consequences(&mut cm)?).clone(),
                MethodArg::Enumerate => {
                    let c = valid_domains_enumerate(&mut cm, u64::MAX)?;
                    if c.entries.iter().any(|(_, d)| d.is_empty()) {
                        return Err(ConsequenceError::InfeasibleModel.into());
                    }
                    c
                }
            };
            // Counting belongs to `count`; keeping it out makes both methods
            // print the same bytes.
            c.solution_count = None;
            if json {
                writeln!(out, "{}", serde_json::to_string(&c).expect("consequences serialize")).map_err(io)?;
            } else {
                write!(out, "{}", table(&c)).map_err(io)?;
            }
        }
        Command::Count { model, limit } => {
            let mut cm = load_compiled(&model)?;
            match count_solutions(&mut cm, limit.unwrap_or(u64::MAX)) {
                Ok(c) if c.exact => writeln!(out, "{}", c.count).map_err(io)?,
                Ok(c) => return Err(CliError::Resource(format!("limit reached: at least {} solutions", c.count))),
                Err(CountError::ResourceLimit { partial }) => {
                    return Err(CliError::Resource(format!("node budget exhausted: at least {partial} solutions")))
                }
                Err(CountError::Solver(e)) => return Err(CliError::Input(e.to_string())),
            }
        }
        Command::Replay { model, transcript, timeout } => {
            let m = load(&model)?;
            let text = std::fs::read_to_string(&transcript)
                .map_err(|e| CliError::Input(format!("{}: {e}", transcript.display())))?;
            let steps = parse_transcript(&text).map_err(|e| CliError::Input(format!("{}: {e}", transcript.display())))?;
            let session = Session::create(&m)?;
            replay(&session, &steps, Duration::from_secs(timeout)).map_err(|e| match e {
                ReplayError::Timeout { .. } => CliError::Resource(e.to_string()),
                e => CliError::Input(e.to_string()),
            })?;
            let mut snap = session.state();
            // Wall-clock stamps would make equal inputs print different bytes.
            for d in &mut snap.decisions {
                d.created_at = 0;
            }
            writeln!(out, "{}", serde_json::to_string(&snap).expect("snapshots serialize")).map_err(io)?;
        }
        Command::Serve { port, host, session_cap, node_budget } => {
            let config = fdconfig_server::Config { addr: SocketAddr::new(host, port), session_cap, node_budget };
            let rt = tokio::runtime::Runtime::new().map_err(io)?;
            eprintln!("listening on http://{}", config.addr);
            rt.block_on(fdconfig_server::serve(config)).map_err(io)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;
    use fdconfig_core::testkit::M1;

    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn table_aligns_values() {
        let mut cm = compile(&parse_model(M1).unwrap()).unwrap();
        let t = table(&model_consequences(&mut cm).unwrap());
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines[0], "variable   values");
        assert_eq!(lines[6], "GPS.price  {0..3}");
    }

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::Infeasible(String::new()).exit_code(), 1);
        assert_eq!(CliError::Input(String::new()).exit_code(), 2);
        assert_eq!(CliError::Resource(String::new()).exit_code(), 3);
    }
}
