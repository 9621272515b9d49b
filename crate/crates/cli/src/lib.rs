//! `cogweb` subcommands. [`run`] never panics on bad input; failures map to
//! exit codes 0 (ok), 1 (partial: some records or episodes failed) and 2
//! (fatal: bad flags, unreadable inputs, unreachable services).

mod commands;
mod provenance;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use provenance::{digest_path, Provenance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Partial,
}

#[derive(Debug, Parser)]
#[command(name = "cogweb", version, about = "Crawl sites, build web-cognition tasks, run agents and score them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct BrowserArgs {
    /// Devtools endpoint (http://host:port or ws://...); falls back to COGWEB_CDP.
    #[arg(long)]
    pub cdp_endpoint: Option<String>,
    /// Use the built-in in-process fixture site instead of a browser.
    #[arg(long, conflicts_with = "cdp_endpoint")]
    pub fake: bool,
    #[arg(long, default_value_t = 1280)]
    pub viewport_width: u32,
    #[arg(long, default_value_t = 720)]
    pub viewport_height: u32,
    /// Page-settle cap in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    pub settle_ms: u64,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Chat-completion endpoint URL. The API key is read from COGWEB_API_KEY.
    #[arg(long)]
    pub model_endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    pub model_name: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Layered crawl of one site into an interaction store.
    Crawl {
        #[command(flatten)]
        browser: BrowserArgs,
        /// First page of the crawl (defaults to the fixture root with --fake).
        #[arg(long)]
        start_url: Option<String>,
        /// In-page instrumentation bundle; falls back to COGWEB_INSTRUMENTATION.
        #[arg(long)]
        instrumentation: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        max_layers: u32,
        #[arg(long, default_value_t = 50)]
        max_elements: usize,
        #[arg(long, default_value_t = 2000)]
        max_records: usize,
        /// Pause after hover and click, in milliseconds.
        #[arg(long, default_value_t = 500)]
        input_settle_ms: u64,
        /// Store root; the site directory is created inside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate task instances from a crawl store and external corpora.
    GenTasks {
        /// Site directory written by `crawl`.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Comma-separated families (default: every store-derived family).
        #[arg(long, value_delimiter = ',')]
        families: Vec<String>,
        /// Annotator endpoint for description-style families.
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        next_page_open: bool,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 3)]
        max_attempts: u32,
        /// External corpus as `<schema>=<records.jsonl>`; schemas: caption_qa, single_step, trajectory.
        #[arg(long)]
        external: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Composite popups onto crawled pages and recorded trajectories.
    SynthPopups {
        #[arg(long)]
        store: Option<PathBuf>,
        /// Directory of episode directories (each with trajectory.json).
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Popup asset directory; the built-in assets are used when omitted.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the agent on a task file and record trajectories.
    RunAgent {
        /// JSONL of {task_id, query, start_url, check?}.
        #[arg(long)]
        tasks: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        browser: BrowserArgs,
        #[arg(long, default_value_t = cogweb::agent::DEFAULT_MAX_STEPS)]
        max_steps: usize,
        /// Number of most recent steps whose screenshots are attached.
        #[arg(long, default_value_t = cogweb::agent::DEFAULT_IMAGE_WINDOW)]
        window: usize,
        /// Judge endpoint for tasks without a programmatic check.
        #[arg(long)]
        judge_endpoint: Option<String>,
        #[arg(long, default_value = "default")]
        judge_model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions (or a live model) against a manifest.
    Eval {
        #[arg(long)]
        bench: PathBuf,
        /// JSONL of {task_id, prediction}.
        #[arg(long, conflicts_with = "model_endpoint")]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        judge_endpoint: Option<String>,
        #[arg(long, default_value = "default")]
        judge_model: String,
        /// times20 (default) or linear.
        #[arg(long, default_value = "times20")]
        judge_scale: String,
        /// Image root for manifest paths (default: the manifest's directory).
        #[arg(long)]
        images_root: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a manifest against the task schema and family bindings.
    Validate {
        /// Also require each family's benchmark metric and compare counts.
        #[arg(long)]
        bench: bool,
        manifest: PathBuf,
    },
    /// Print a report as a table; or aggregate per-family means.
    Report {
        #[arg(long, required_unless_present = "means")]
        report: Option<PathBuf>,
        /// JSON object mapping family name to mean score.
        #[arg(long)]
        means: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn init_logging() {
    let _ = tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::INFO)
        .with_current_span(false)
        .try_init();
}

/// Parses `argv` (program name first) and runs the command.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    init_logging();
    let args = argv.get(1..).unwrap_or_default().to_vec();
    match commands::dispatch(cli.command, &args) {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::Partial) => EXIT_PARTIAL,
        Err(e) => {
            tracing::error!(error = %format!("{e:#}"), "fatal");
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}
