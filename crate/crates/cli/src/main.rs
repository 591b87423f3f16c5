//! `steerbench` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use steerbench_core::adaptation::Strategy;

/// Usage error (unknown flag, bad value).
const EX_USAGE: u8 = 64;
/// Input failed validation.
const EX_INVALID: u8 = 2;
const EX_UNAVAILABLE: u8 = 69;
const EX_SOFTWARE: u8 = 70;
const EX_IOERR: u8 = 74;

#[derive(Debug, Parser)]
#[command(name = "steerbench", version, about = "Personalization benchmark for proactive assistants")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic personas as JSON lines.
    GenPersonas {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build schedules and dataset tuples for a persona file.
    GenDataset {
        #[arg(long)]
        personas: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Oracle)]
        backend: Backend,
        /// Tuples per persona.
        #[arg(long, default_value_t = 4)]
        per_persona: usize,
        #[command(flatten)]
        remote: RemoteArgs,
    },
    /// Check a generated dataset directory. Exits 2 when it fails.
    ValidateDataset {
        #[arg(long = "in")]
        input: PathBuf,
        /// Allowed per-type deviation in percentage points.
        #[arg(long, default_value_t = 2.0)]
        tolerance: f64,
    },
    /// Run the strategy comparison and write one directory per seed.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        /// Skip the per-interaction record files.
        #[arg(long)]
        no_records: bool,
    },
    /// Evaluate a fixed pool against priors calibrated on growing pools.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        counts: Vec<usize>,
    },
    /// Long steering runs, reported in windows of ten opportunities.
    Horizon {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 500)]
        opportunities: u32,
    },
    /// Write supervised fine-tuning examples from dataset tuples.
    ExportSft {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a descriptor before and after steering with contrastive pairs.
    SteerDemo {
        /// JSON lines of {category, negative_text, positive_text}.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "misc")]
        activity_type: String,
        #[arg(long, default_value_t = 720)]
        start_minute: u32,
    },
    /// Run the study server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Directory served under /app.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// TOML service configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Require this bearer token on API routes.
        #[arg(long, env = "STEERBENCH_TOKEN", hide_env_values = true)]
        token: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Oracle,
    Remote,
}

#[derive(Debug, Args)]
struct RemoteArgs {
    /// Base URL of an OpenAI-compatible API, e.g. https://host/v1.
    #[arg(long)]
    remote_url: Option<String>,
    #[arg(long)]
    remote_model: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    personas: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EX_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(EX_USAGE);
        }
    }
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &commands::CliError) -> u8 {
    use steerbench_core::Error as E;
    match e {
        commands::CliError::Core(err) | commands::CliError::Service(steerbench_service::ServiceError::Core(err)) => {
            match err {
                E::Io { .. } => EX_IOERR,
                E::Transport { .. } | E::Protocol { .. } => EX_UNAVAILABLE,
                E::Contract(_) => EX_SOFTWARE,
                E::InvalidArgument(_) | E::Parse { .. } | E::Validation { .. } | E::NotImplemented(_) => EX_INVALID,
            }
        }
        commands::CliError::Service(_) => EX_SOFTWARE,
        commands::CliError::Config(_) => EX_INVALID,
        commands::CliError::Usage(_) => EX_USAGE,
    }
}
