//! `penflow` command line.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, server), 2 invalid input
//! data or parameters, 64 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use penflow_core::ingest::{parse_event_log, serialize_event_log, LogFormat};
use penflow_core::patterns::{MiningConfig, RankOrder, DEFAULT_MIN_SUPPORT};
use penflow_core::session::DEFAULT_MANUAL_PATTERN_LENGTH;
use penflow_core::summarize::{AuditLog, Summarizer, DEFAULT_TIMEOUT};
use penflow_core::synopsis::DEFAULT_ALPHA;
use penflow_core::Error;
use serde::Serialize;

use crate::api::{serve, ServeConfig, ServeError};
use crate::backend::HttpBackend;
use crate::report::{self, Render};
use crate::store::Dataset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "penflow", version, about = "Cluster and summarize writing-behavior event logs")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Csv,
    Json,
}

impl From<InputFormat> for LogFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Csv => LogFormat::Csv,
            InputFormat::Json => LogFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
struct Input {
    /// Event log, CSV or JSON.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Log format; guessed from the file extension when omitted.
    #[arg(long, value_enum)]
    input_format: Option<InputFormat>,
}

#[derive(Debug, Args)]
struct Clustering {
    /// Number of clusters; each collection's default when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Weight of pattern length against information loss.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a log and print it normalized and sorted.
    Ingest {
        #[command(flatten)]
        input: Input,
        /// Format of the normalized log; `--format text` is the same as csv.
        #[arg(long, value_enum)]
        emit: Option<InputFormat>,
    },
    /// Consensus clusters of all four collections.
    Cluster {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        clustering: Clustering,
    },
    /// Maximal patterns of every consensus cluster.
    Mine {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        clustering: Clustering,
        #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
        min_support: f64,
        /// Longest pattern explored; 0 for no limit.
        #[arg(long, default_value_t = DEFAULT_MANUAL_PATTERN_LENGTH)]
        max_length: usize,
        #[arg(long, value_enum, default_value_t = Order::SupportFirst)]
        order: Order,
        /// Patterns listed per cluster.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Transition profiles of every sequence.
    Profile {
        #[command(flatten)]
        input: Input,
    },
    /// Name and describe every consensus cluster.
    Summarize {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        clustering: Clustering,
        /// Use the template summaries and never call a backend.
        #[arg(long)]
        offline: bool,
        #[command(flatten)]
        backend: BackendArgs,
        /// Append prompts and responses to this file.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Activity table and sequence-length statistics.
    Stats {
        #[command(flatten)]
        input: Input,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Where datasets, sessions and the audit log are kept.
        #[arg(long, env = "DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Logs to load at startup.
        #[arg(long = "in", value_name = "FILE")]
        preload: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Allowed browser origin; any origin when omitted.
        #[arg(long, env = "STUDIO_ORIGIN")]
        cors_origin: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Order {
    SupportFirst,
    LengthFirst,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// Text-generation endpoint.
    #[arg(long, env = "GEN_BACKEND_URL")]
    backend_url: Option<String>,
    /// API key for the endpoint.
    #[arg(long, env = "GEN_BACKEND_KEY", hide_env_values = true)]
    backend_key: Option<String>,
    /// Model name recorded with generated summaries.
    #[arg(long, env = "GEN_BACKEND_MODEL")]
    backend_model: Option<String>,
    /// Seconds to wait for the backend.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
    backend_timeout: u64,
}

impl BackendArgs {
    fn backend(&self) -> Option<HttpBackend> {
        self.backend_url
            .as_ref()
            .map(|url| HttpBackend::new(url.clone(), self.backend_key.clone(), self.backend_model.clone()))
    }
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: EXIT_INVALID, message: format!("{} ({})", e, e.code()) }
    }
}

fn failure(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

/// Run the CLI on `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("penflow: {}", f.message);
            f.code
        }
    }
}

fn read_input(input: &Input) -> Result<(Vec<u8>, LogFormat), Failure> {
    let bytes = std::fs::read(&input.input)
        .map_err(|e| failure(EXIT_INVALID, format!("cannot read {}: {e}", input.input.display())))?;
    let format = input.input_format.map_or_else(|| LogFormat::from_path(&input.input.to_string_lossy()), Into::into);
    Ok((bytes, format))
}

fn load(input: &Input, alpha: f64) -> Result<Dataset, Failure> {
    let (bytes, format) = read_input(input)?;
    Ok(Dataset::parse(&bytes, format, alpha)?)
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(failure(EXIT_INVALID, format!("alpha must be positive, got {alpha}")))
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let written = match out {
        Some(path) => std::fs::write(path, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    };
    written.map_err(|e| failure(EXIT_FAILURE, format!("cannot write output: {e}")))
}

fn emit_report<R: Serialize + Render>(cli_format: OutputFormat, out: Option<&Path>, report: &R) -> Result<(), Failure> {
    let bytes = match cli_format {
        OutputFormat::Json => {
            let mut b = serde_json::to_vec_pretty(report).expect("report serializes");
            b.push(b'\n');
            b
        }
        OutputFormat::Text => report.render_text().into_bytes(),
    };
    emit(out, &bytes)
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Ingest { input, emit: to } => {
            let (bytes, format) = read_input(&input)?;
            let records = parse_event_log(&bytes, format).map_err(Error::from)?;
            penflow_core::ingest::assemble_collections(&records).map_err(Error::from)?;
            let to = match (to, cli.format) {
                (Some(f), _) => f.into(),
                (None, OutputFormat::Json) => LogFormat::Json,
                (None, OutputFormat::Text) => LogFormat::Csv,
            };
            emit(out, &serialize_event_log(&records, to))?;
            Ok(EXIT_OK)
        }
        Command::Cluster { input, clustering } => {
            check_alpha(clustering.alpha)?;
            let d = load(&input, clustering.alpha)?;
            let r = report::cluster_report(&d.collections, clustering.k, clustering.alpha);
            emit_report(cli.format, out, &r)?;
            Ok(k_status(clustering.k, r.collections.iter().map(|e| &e.head)))
        }
        Command::Mine { input, clustering, min_support, max_length, order, top } => {
            check_alpha(clustering.alpha)?;
            let d = load(&input, clustering.alpha)?;
            let opts = report::MineOptions {
                k: clustering.k,
                alpha: clustering.alpha,
                mining: MiningConfig { min_support, max_length: (max_length > 0).then_some(max_length) },
                rank_order: match order {
                    Order::SupportFirst => RankOrder::SupportFirst,
                    Order::LengthFirst => RankOrder::LengthFirst,
                },
                top,
            };
            let r = report::mine_report(&d.collections, &opts)?;
            emit_report(cli.format, out, &r)?;
            Ok(k_status(clustering.k, r.collections.iter().map(|e| &e.head)))
        }
        Command::Profile { input } => {
            let d = load(&input, DEFAULT_ALPHA)?;
            emit_report(cli.format, out, &report::profile_report(&d.collections))?;
            Ok(EXIT_OK)
        }
        Command::Summarize { input, clustering, offline, backend, audit } => {
            check_alpha(clustering.alpha)?;
            let d = load(&input, clustering.alpha)?;
            let summarizer = match backend.backend().filter(|_| !offline) {
                None => Summarizer::offline(),
                Some(b) => {
                    let s = Summarizer::with_backend(Box::new(b)).timeout(Duration::from_secs(backend.backend_timeout));
                    match audit {
                        Some(path) => s.audit(AuditLog::new(path)),
                        None => s,
                    }
                }
            };
            let r = report::summary_report(&d.collections, clustering.k, clustering.alpha, &summarizer)?;
            emit_report(cli.format, out, &r)?;
            Ok(k_status(clustering.k, r.collections.iter().map(|e| &e.head)))
        }
        Command::Stats { input } => {
            let d = load(&input, DEFAULT_ALPHA)?;
            emit_report(cli.format, out, &report::stats_report(&d.collections))?;
            Ok(EXIT_OK)
        }
        Command::Serve { port, host, data_dir, preload, alpha, cors_origin, backend } => {
            let config = ServeConfig {
                host,
                port,
                data_dir,
                backend: backend.backend(),
                timeout: Duration::from_secs(backend.backend_timeout),
                alpha,
                cors_origin,
                preload,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| failure(EXIT_FAILURE, e.to_string()))?;
            match runtime.block_on(serve(config)) {
                Ok(()) => Ok(EXIT_OK),
                Err(e @ ServeError::BadConfig(_)) => Err(failure(EXIT_INVALID, e.to_string())),
                Err(e) => Err(failure(EXIT_FAILURE, e.to_string())),
            }
        }
    }
}

/// A K the caller chose must fit every collection that has authors.
fn k_status<'a>(k: Option<usize>, heads: impl Iterator<Item = &'a report::CollectionHead>) -> i32 {
    let Some(k) = k else { return EXIT_OK };
    let mut status = EXIT_OK;
    for h in heads.filter(|h| h.authors > 0) {
        if let Some(e) = &h.error {
            eprintln!("penflow: {}: K = {k} rejected: {}", h.key, e.message);
            status = EXIT_INVALID;
        }
    }
    status
}
