//! `kdsim` command line: configuration, stage dispatch and artifact checks.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use kdsim::data::TransferOrigin;
use kdsim::report::ReportFormat;

use crate::commands::Context;
use crate::config::{load_config, Overrides};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kdsim", version, about = "Knowledge distillation under heterogeneous data partitions")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed (overrides the file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (overrides the file).
    #[arg(long, global = true, env = "KDSIM_OUT_DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Accept input artifacts produced by a different configuration.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PairArgs {
    #[arg(long)]
    pub teacher: Option<usize>,
    #[arg(long)]
    pub student: Option<usize>,
    /// Transfer option, e.g. public_unlabeled_large.
    #[arg(long, value_parser = parse_origin)]
    pub transfer: Option<TransferOrigin>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split validation set, public pool and participant shards.
    Partition,
    /// Train one model per participant.
    Pretrain,
    /// Distill one teacher into one student.
    Distill {
        #[command(flatten)]
        pair: PairArgs,
        /// KD method name (vanilla, tuned, dml, dpkd).
        #[arg(long)]
        method: Option<String>,
    },
    /// Tuned KD grid search on one pair.
    Grid {
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Every ordered pair for every configured method and transfer option.
    Matrix,
    /// Multi-teacher consolidation of all participants.
    Consolidate,
    /// Random-init vs pre-consolidated federated averaging.
    Fedavg,
    /// Emit CSV/JSON reports from matrix and federated results.
    Report {
        #[arg(long = "format", value_parser = parse_format)]
        formats: Vec<ReportFormat>,
    },
}

fn parse_origin(s: &str) -> Result<TransferOrigin, String> {
    TransferOrigin::from_name(s).ok_or_else(|| {
        let known: Vec<&str> = TransferOrigin::ALL.iter().map(|o| o.name()).collect();
        format!("unknown transfer option `{s}` (known: {})", known.join(", "))
    })
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    match s {
        "csv" => Ok(ReportFormat::Csv),
        "json" => Ok(ReportFormat::Json),
        _ => Err(format!("unknown report format `{s}` (known: csv, json)")),
    }
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            seed: self.seed,
            out_dir: self.out.clone(),
            ..Overrides::default()
        };
        match &self.command {
            Command::Distill { pair, method } => {
                apply_pair(&mut o, pair);
                o.method = method.clone();
            }
            Command::Grid { pair } => apply_pair(&mut o, pair),
            Command::Report { formats } if !formats.is_empty() => o.formats = Some(formats.clone()),
            _ => {}
        }
        o
    }
}

fn apply_pair(o: &mut Overrides, pair: &PairArgs) {
    o.teacher = pair.teacher;
    o.student = pair.student;
    o.transfer_option = pair.transfer;
}

/// Run a parsed command; returns the written files.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides())?;
    let ctx = Context::new(cfg, cli.force);
    let run = || match cli.command {
        Command::Partition => commands::partition(&ctx),
        Command::Pretrain => commands::pretrain(&ctx),
        Command::Distill { .. } => commands::distill(&ctx),
        Command::Grid { .. } => commands::grid(&ctx),
        Command::Matrix => commands::matrix(&ctx),
        Command::Consolidate => commands::consolidate(&ctx),
        Command::Fedavg => commands::fedavg(&ctx),
        Command::Report { .. } => commands::report(&ctx),
    };
    match cli.jobs {
        Some(0) => Err(CliError::Validation(vec!["--jobs must be at least 1".into()])),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {n} worker threads: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Parse arguments, run, print errors; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
