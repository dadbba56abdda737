//! `perpilot` command-line entry point.

use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use perpilot::dataset::{apps_outside_catalog, load_corpus, quality_report, DatasetError};
use perpilot::evaluation::{compute_metrics, render_report, Format};
use perpilot::harness::gold_script;
use perpilot::llm::{ApiKey, HttpBackend, LlmBackend, LlmConfig, MockBackend, MockScript, API_KEY_ENV};
use perpilot::memory::MemoryError;
use perpilot::orchestrator::{
    read_traces, write_traces, DisabledHook, HookError, InteractiveHook, InterventionHook, Orchestrator,
    ScriptedHook, TraceIoError,
};
use perpilot::sim::SimError;
use perpilot::{Corpus, MemoryStore, Scenario};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_BACKEND: u8 = 5;
const EXIT_EVAL: u8 = 6;

/// Personalized instruction completion for mobile agents, and its benchmark harness.
///
/// Exit codes: 0 success, 1 other error, 2 usage error, 3 missing or unreadable
/// file, 4 validation or parse error, 5 backend error, 6 trace/corpus mismatch.
#[derive(Debug, Parser)]
#[command(name = "perpilot", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus or compute its quality metrics.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the pipeline over a corpus and judge every record.
    Run(RunArgs),
    /// Compute benchmark metrics from a trace file.
    Eval(EvalArgs),
    /// Inspect or reset a memory profile.
    #[command(subcommand)]
    Memory(MemoryCommand),
    /// Generate mock backend scripts.
    #[command(subcommand)]
    Script(ScriptCommand),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Check every record invariant and report the corpus shape.
    Check {
        /// Corpus file (JSON array of records).
        path: PathBuf,
    },
    /// Print DLC, DE_difficulty and DE_diversity.
    Metrics {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
}

#[derive(Debug, Subcommand)]
enum MemoryCommand {
    /// Print the stored element/value pairs as JSON.
    Show {
        #[arg(long)]
        memory: PathBuf,
    },
    /// Remove every entry, keeping the profile file.
    Clear {
        #[arg(long)]
        memory: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ScriptCommand {
    /// Write the responses an ideal model would give for a corpus and scenario.
    Gold {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Table => Format::Table,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Memory profile; loaded if present (else started empty) and saved after the run.
    #[arg(long)]
    memory: PathBuf,
    /// Ignore any stored entries and start from an empty profile.
    #[arg(long)]
    fresh_memory: bool,
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    /// Mock script file; defaults to the gold script for the corpus and scenario.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Fail on prompts the mock script does not cover instead of using its fallback.
    #[arg(long)]
    strict: bool,
    /// JSON object mapping element phrases to the values a user would supply.
    #[arg(long, group = "hook")]
    interventions: Option<PathBuf>,
    /// Ask on the terminal when exploration fails.
    #[arg(long, group = "hook")]
    interactive: bool,
    /// Never ask for values (default).
    #[arg(long, group = "hook")]
    no_interventions: bool,
    /// Write one JSON trace per line to this file.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Stop after the first record with a stage failure.
    #[arg(long)]
    fail_fast: bool,
    /// Print one progress line per record on stderr.
    #[arg(short, long)]
    verbose: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Debug, Args)]
struct LlmArgs {
    /// Chat-completion model name.
    #[arg(long)]
    model: Option<String>,
    /// OpenAI-compatible base URL, e.g. https://api.openai.com/v1.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    seed: Option<i64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
}

/// An error with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: EXIT_OTHER, error }
    }
}

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

fn dataset_err(e: DatasetError) -> Failure {
    let code = if matches!(e, DatasetError::Io { .. }) { EXIT_IO } else { EXIT_INVALID };
    fail(code, e)
}

fn sim_err(e: SimError) -> Failure {
    let code = if matches!(e, SimError::Io { .. }) { EXIT_IO } else { EXIT_INVALID };
    fail(code, e)
}

fn memory_err(e: MemoryError) -> Failure {
    let code = if matches!(e, MemoryError::Io { .. }) { EXIT_IO } else { EXIT_INVALID };
    fail(code, e)
}

fn hook_err(e: HookError) -> Failure {
    let code = if matches!(e, HookError::Io { .. }) { EXIT_IO } else { EXIT_INVALID };
    fail(code, e)
}

fn trace_err(e: TraceIoError) -> Failure {
    let code = if matches!(e, TraceIoError::Io { .. }) { EXIT_IO } else { EXIT_INVALID };
    fail(code, e)
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(fail(EXIT_IO, anyhow!("{what} file not found: {}", path.display())))
    }
}

type CmdResult = Result<(), Failure>;

fn dataset(cmd: DatasetCommand) -> CmdResult {
    match cmd {
        DatasetCommand::Check { path } => {
            let corpus = load_corpus(&path).map_err(dataset_err)?;
            let personalized = corpus.iter().filter(|r| r.is_personalized()).count();
            println!(
                "ok: {} records ({} personalized), {} distinct apps",
                corpus.len(),
                personalized,
                corpus.distinct_apps().len()
            );
            let outside = apps_outside_catalog(&corpus);
            if !outside.is_empty() {
                let names: Vec<&str> = outside.iter().map(String::as_str).collect();
                eprintln!("note: apps outside the catalog: {}", names.join(", "));
            }
            Ok(())
        }
        DatasetCommand::Metrics { path, format } => {
            let corpus = load_corpus(&path).map_err(dataset_err)?;
            let report = quality_report(&corpus).map_err(|e| fail(EXIT_INVALID, e))?;
            match format {
                OutputFormat::Table => print!("{}", report.render_table()),
                OutputFormat::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).context("serializing report")?
                ),
            }
            Ok(())
        }
    }
}

fn llm_config(args: &LlmArgs, backend: BackendKind) -> Result<LlmConfig, Failure> {
    let mut config = LlmConfig::default();
    if let Some(m) = &args.model {
        config.model = m.clone();
    }
    if let Some(e) = &args.endpoint {
        config.endpoint = e.clone();
    }
    if let Some(t) = args.temperature {
        config.temperature = t;
    }
    if let Some(n) = args.max_tokens {
        config.max_tokens = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if backend == BackendKind::Http {
        if args.endpoint.is_none() {
            return Err(fail(EXIT_USAGE, anyhow!("--backend http requires --endpoint")));
        }
        config.api_key = Some(ApiKey::from_env().ok_or_else(|| {
            fail(EXIT_USAGE, anyhow!("--backend http requires the {API_KEY_ENV} environment variable"))
        })?);
    }
    config.validate().map_err(|e| fail(EXIT_BACKEND, e))?;
    Ok(config)
}

fn make_backend(args: &RunArgs, corpus: &Corpus, scenario: &Scenario) -> Result<Box<dyn LlmBackend>, Failure> {
    match args.backend {
        BackendKind::Http => Ok(Box::new(HttpBackend::new().map_err(|e| fail(EXIT_BACKEND, e))?)),
        BackendKind::Mock => {
            let script = match &args.script {
                Some(path) => {
                    require_file(path, "mock script")?;
                    MockScript::load(path).map_err(|e| fail(EXIT_INVALID, e))?
                }
                None => gold_script(corpus, scenario),
            };
            Ok(Box::new(if args.strict {
                MockBackend::strict(script)
            } else {
                MockBackend::new(script)
            }))
        }
    }
}

fn run(args: RunArgs) -> CmdResult {
    require_file(&args.corpus, "corpus")?;
    require_file(&args.scenario, "scenario")?;
    let corpus = load_corpus(&args.corpus).map_err(dataset_err)?;
    let scenario = Scenario::load(&args.scenario).map_err(sim_err)?;
    let config = llm_config(&args.llm, args.backend)?;
    let backend = make_backend(&args, &corpus, &scenario)?;

    let mut store = if args.fresh_memory {
        let stem = args.memory.file_stem().and_then(|s| s.to_str()).unwrap_or("default");
        MemoryStore::new(stem)
    } else {
        MemoryStore::load(&args.memory).map_err(memory_err)?
    };

    let mut hook: Box<dyn InterventionHook> = match (&args.interventions, args.interactive) {
        (Some(path), _) => {
            require_file(path, "interventions")?;
            Box::new(ScriptedHook::load(path).map_err(hook_err)?)
        }
        (None, true) => Box::new(InteractiveHook::new(BufReader::new(io::stdin()), io::stderr())),
        (None, false) => Box::new(DisabledHook),
    };

    let orch = Orchestrator::new(backend.as_ref(), config, &scenario);
    let verbose = args.verbose;
    let traces = orch.run_corpus(&corpus, &mut store, hook.as_mut(), args.fail_fast, |p| {
        if verbose {
            eprintln!(
                "[{}/{}] record {}: {}",
                p.done,
                p.total,
                p.trace.id,
                if p.trace.verdict.success { "success" } else { p.trace.verdict.reason.as_str() }
            );
        }
    });

    store.persist(&args.memory).map_err(memory_err)?;
    if let Some(path) = &args.traces {
        write_traces(path, &traces).map_err(trace_err)?;
    }
    let report = compute_metrics(&traces, &corpus).map_err(|e| fail(EXIT_EVAL, e))?;
    print!("{}", render_report(&report, args.format.into()));
    if args.format == OutputFormat::Json {
        println!();
    }

    let stopped = args.fail_fast && traces.len() < corpus.len();
    if let Some(t) = traces.last().filter(|_| stopped) {
        let message = t.failures.first().map_or("", |f| f.message.as_str());
        return Err(fail(
            EXIT_BACKEND,
            anyhow!("stopped after record {} ({} of {}): {message}", t.id, traces.len(), corpus.len()),
        ));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> CmdResult {
    require_file(&args.traces, "trace")?;
    require_file(&args.corpus, "corpus")?;
    let corpus = load_corpus(&args.corpus).map_err(dataset_err)?;
    let traces = read_traces(&args.traces).map_err(trace_err)?;
    let report = compute_metrics(&traces, &corpus).map_err(|e| fail(EXIT_EVAL, e))?;
    print!("{}", render_report(&report, args.format.into()));
    if args.format == OutputFormat::Json {
        println!();
    }
    Ok(())
}

fn memory(cmd: MemoryCommand) -> CmdResult {
    match cmd {
        MemoryCommand::Show { memory } => {
            require_file(&memory, "memory")?;
            let store = MemoryStore::load(&memory).map_err(memory_err)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&store).context("serializing memory")?
            );
        }
        MemoryCommand::Clear { memory } => {
            require_file(&memory, "memory")?;
            let mut store = MemoryStore::load(&memory).map_err(memory_err)?;
            let removed = store.len();
            store.clear();
            store.persist(&memory).map_err(memory_err)?;
            println!("cleared {removed} entries from profile {}", store.profile_id());
        }
    }
    Ok(())
}

fn script(cmd: ScriptCommand) -> CmdResult {
    let ScriptCommand::Gold { corpus, scenario, out } = cmd;
    require_file(&corpus, "corpus")?;
    require_file(&scenario, "scenario")?;
    let corpus = load_corpus(&corpus).map_err(dataset_err)?;
    let scenario = Scenario::load(&scenario).map_err(sim_err)?;
    let script = gold_script(&corpus, &scenario);
    script
        .save(&out)
        .map_err(|e| fail(EXIT_IO, anyhow!("cannot write {}: {e}", out.display())))?;
    println!("wrote {} entries to {}", script.entries.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dataset(cmd) => dataset(cmd),
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
        Command::Memory(cmd) => memory(cmd),
        Command::Script(cmd) => script(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error}");
            ExitCode::from(code)
        }
    }
}
