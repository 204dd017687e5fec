mod benchmark;
mod explain;
mod protocol;

use std::fmt::Display;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsic_explain::{Error, ModelError};

#[derive(Parser, Debug)]
#[command(name = "hsic-explain", version, about = "Explain black-box graph classifiers with HSIC lasso")]
struct Cli {
    /// Worker threads for perturbation and solving (default: logical CPUs).
    #[arg(long, global = true, env = "HSIC_EXPLAIN_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explain one graph or graph series; prints the explanation as JSON.
    Explain(explain::ExplainArgs),
    /// Run benchmark cases and report metrics.
    Benchmark(benchmark::BenchmarkArgs),
    /// Check that an external model server speaks the wire protocol.
    ProtocolCheck(protocol::CheckArgs),
    /// Print a normalized Gram matrix as CSV.
    Gram(explain::GramArgs),
    /// Serve a builtin model over the wire protocol.
    Serve(protocol::ServeArgs),
}

/// A failure with its exit code and machine-readable name.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub name: &'static str,
    pub detail: String,
}

impl Failure {
    pub fn input(name: &'static str, detail: impl Display) -> Self {
        Self { code: 2, name, detail: detail.to_string() }
    }

    pub fn model(name: &'static str, detail: impl Display) -> Self {
        Self { code: 3, name, detail: detail.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let detail = e.to_string();
        let (code, name) = match &e {
            Error::Schema { .. } => (2, "schema"),
            Error::InvalidGraph(_) => (2, "invalid_graph"),
            Error::InvalidArgument(_) => (2, "invalid_argument"),
            Error::Incompatible(_) => (2, "incompatible"),
            Error::Io(_) => (2, "io"),
            Error::ConstantModel => (4, "constant_model"),
            Error::Model(m) => (3, model_error_name(m)),
        };
        Self { code, name, detail }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::model(model_error_name(&e), e)
    }
}

fn model_error_name(e: &ModelError) -> &'static str {
    match e {
        ModelError::Transport(_) => "model_transport",
        ModelError::Timeout(_) => "model_timeout",
        ModelError::Protocol(_) => "model_protocol",
        ModelError::Remote { .. } => "model_remote",
        ModelError::NonSimplex(_) => "model_non_simplex",
        ModelError::ClassMismatch { .. } => "model_class_mismatch",
        ModelError::InputKind { .. } => "model_input_kind",
    }
}

fn report(f: &Failure) {
    let detail = f.detail.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error_code={} detail={}", f.name, detail);
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            report(&Failure::input("usage", first));
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            report(&Failure::input("usage", "--jobs must be at least 1"));
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Explain(a) => explain::run(a),
        Command::Benchmark(a) => benchmark::run(a),
        Command::ProtocolCheck(a) => protocol::check(a),
        Command::Gram(a) => explain::gram(a),
        Command::Serve(a) => protocol::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}
