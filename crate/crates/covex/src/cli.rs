//! Command-line interface. Exit status is 0 on success, 1 for usage and
//! configuration errors and 2 when a stage fails.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use covex_core::eval::Metric;
use covex_core::qgen::PromptMode;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{
    default_alpha_grid, evaluate_run, render_sweep_table, Pipeline, SearchMode, DEFAULT_QUERY_COUNTS,
};

#[derive(Debug, Parser)]
#[command(name = "covex", version, about = "Topic-coverage document expansion pipeline")]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set fusion.alpha=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Log more detail to stderr (repeat for debug output).
    #[arg(long, short = 'v', action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the dataset and split documents into sentences.
    Ingest,
    /// Cluster sentence embeddings into named topics.
    FitTopics,
    /// Extract and select keywords for every document.
    ExtractKeywords,
    /// Generate queries for every document.
    Generate {
        /// Prompt variant; defaults to `generation.mode`.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<PromptMode>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the BM25 index.
    IndexSparse {
        /// Index the original documents only.
        #[arg(long)]
        no_expansion: bool,
        /// Expanded corpus to append; defaults to the `generate` output.
        #[arg(long)]
        expanded: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Embed documents, generated queries and appended texts.
    IndexDense {
        /// Build the document index only.
        #[arg(long)]
        no_expansion: bool,
        #[arg(long)]
        expanded: Option<PathBuf>,
    },
    /// Retrieve for every dataset query and write a TREC run.
    Search {
        /// sparse, text, fused or append.
        #[arg(long, value_parser = parse_search_mode)]
        mode: SearchMode,
        /// Fusion weight; defaults to `fusion.alpha`.
        #[arg(long)]
        alpha: Option<f64>,
        /// With `--mode sparse`, search the unexpanded index.
        #[arg(long)]
        no_expansion: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a TREC run against relevance judgments.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to the configured dataset's qrels.
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_metric, default_value = "map,ndcg@10,recall@100")]
        metrics: Vec<Metric>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Topic recall of the generated queries, optionally correlated with
    /// per-query retrieval gains.
    TopicRecall {
        #[arg(long)]
        expanded: Option<PathBuf>,
        /// Expanded-index run whose gains are measured.
        #[arg(long, requires = "baseline")]
        run: Option<PathBuf>,
        /// Unexpanded baseline run.
        #[arg(long, requires = "run")]
        baseline: Option<PathBuf>,
    },
    /// Fused retrieval quality across fusion weights.
    SweepAlpha {
        /// Comma-separated weights; defaults to 0.0, 0.1, ..., 1.0.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// BM25 quality as more generated queries are appended.
    SweepQueryCount {
        /// Comma-separated counts; defaults to 0,5,10,20,30.
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
        #[arg(long)]
        expanded: Option<PathBuf>,
    },
    /// Generate an expanded corpus with a reduced prompt.
    Ablate {
        #[arg(long, value_parser = parse_mode)]
        mode: PromptMode,
    },
    /// Print the effective configuration.
    Config,
}

fn parse_mode(s: &str) -> std::result::Result<PromptMode, String> {
    s.parse().map_err(|e: covex_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: covex_core::Error| e.to_string())
}

fn parse_search_mode(s: &str) -> std::result::Result<SearchMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    PipelineConfig::load(cli.config.as_deref(), &cli.overrides, |k| std::env::var(k).ok())
}

/// Executes a parsed command; the summary line goes to stderr.
pub fn execute(cli: &Cli) -> Result<()> {
    if let Command::Evaluate {
        run,
        qrels,
        metrics,
        output,
    } = &cli.command
    {
        let qrels = match qrels {
            Some(q) => q.clone(),
            None => {
                let c = load_config(cli)?;
                crate::beir::DatasetPaths::new(&c.dataset.dir, &c.dataset.split).qrels
            }
        };
        let (summary, _) = evaluate_run(run, &qrels, metrics, output.as_deref())?;
        eprintln!("{summary}");
        return Ok(());
    }

    let config = load_config(cli)?;
    if let Command::Config = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let default_mode = config.generation.mode;
    let p = Pipeline::new(config)?;
    let summary = match &cli.command {
        Command::Ingest => p.ingest()?,
        Command::FitTopics => p.fit_topics()?,
        Command::ExtractKeywords => p.extract_keywords()?,
        Command::Generate { mode, output } => p.generate(mode.unwrap_or(default_mode), output.as_deref())?,
        Command::IndexSparse {
            no_expansion,
            expanded,
            output,
        } => p.index_sparse(!no_expansion, expanded.as_deref(), output.as_deref())?,
        Command::IndexDense { no_expansion, expanded } => p.index_dense(!no_expansion, expanded.as_deref())?,
        Command::Search {
            mode,
            alpha,
            no_expansion,
            output,
        } => {
            if alpha.is_some() && *mode != SearchMode::Fused {
                return Err(Error::Config("--alpha applies to --mode fused only".into()));
            }
            if *no_expansion && *mode != SearchMode::Sparse {
                return Err(Error::Config("--no-expansion applies to --mode sparse only".into()));
            }
            p.search(*mode, *alpha, !no_expansion, output.as_deref())?.0
        }
        Command::TopicRecall {
            expanded,
            run,
            baseline,
        } => {
            let runs = run.as_deref().zip(baseline.as_deref());
            p.topic_recall(expanded.as_deref(), runs)?
        }
        Command::SweepAlpha { alphas } => {
            let alphas = if alphas.is_empty() { default_alpha_grid() } else { alphas.clone() };
            let rows = p.sweep_alpha(&alphas)?;
            print!("{}", render_sweep_table("alpha", &rows));
            format!("sweep-alpha: {} rows -> {}", rows.len(), p.layout.alpha_sweep().display())
        }
        Command::SweepQueryCount { counts, expanded } => {
            let counts = if counts.is_empty() { DEFAULT_QUERY_COUNTS.to_vec() } else { counts.clone() };
            let rows = p.sweep_query_count(&counts, expanded.as_deref())?;
            print!("{}", render_sweep_table("M", &rows));
            format!("sweep-query-count: {} rows -> {}", rows.len(), p.layout.query_count_sweep().display())
        }
        Command::Ablate { mode } => p.generate(*mode, None)?,
        Command::Evaluate { .. } | Command::Config => unreachable!("handled above"),
    };
    eprintln!("{summary}");
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args`, runs the command and returns the process exit status.
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
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
