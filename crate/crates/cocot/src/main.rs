//! Subcommand front-end wiring the pipeline stages together.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use cocot::error::{Error, Result};
use cocot::pipeline::{self, files, RunConfig};
use cocot::prompts::{self, PromptId};
use cocot::types::{Dataset, Strategy};

/// Multi-region grounding, reasoning-chain construction, and VQA
/// evaluation pipeline.
#[derive(Parser)]
#[command(name = "cocot", version, about)]
struct Cli {
    /// TOML run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every randomized operation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Per-stage worker count.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Fail the run when any sample is rejected.
    #[arg(long, global = true)]
    strict: bool,

    /// Directory with model_fixtures.jsonl and ocr_pages.jsonl
    /// (scripted-client mode).
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,

    /// Model service base URL (HTTP mode). The auth token comes from the
    /// COCOT_AUTH_TOKEN environment variable only.
    #[arg(long, global = true)]
    endpoint: Option<String>,

    /// Directory stage outputs are written to.
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply per-dataset complexity rules to sample records.
    Filter {
        /// Sample records to filter.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Restrict the run to one dataset.
        #[arg(long)]
        dataset: Option<String>,
        /// Also split passing samples into test/train/rest files.
        #[arg(long)]
        split: bool,
    },
    /// Ground filtered samples to OCR-corrected image regions.
    Ground {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build reasoning chains for grounded samples.
    Chain {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Emit two-stage training records and the gold sidecar.
    Emit {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run inference strategies over chained samples.
    Infer {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comma-separated strategy list (default: all six).
        #[arg(long)]
        strategies: Option<String>,
    },
    /// Score predictions and write the machine-readable report.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Chained (or grounded) records predictions join against.
        #[arg(long)]
        grounded: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Render the accuracy and signed delta tables.
    Report {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        grounded: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Render a registered prompt template for inspection.
    PromptDump {
        /// Template id; see --list.
        #[arg(long)]
        id: Option<String>,
        /// Placeholder bindings as name=value, repeatable.
        #[arg(long = "bind")]
        bindings: Vec<String>,
        /// List registered template ids and their placeholders.
        #[arg(long)]
        list: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if cli.strict {
        cfg.strict = true;
    }
    if let Some(fixtures) = &cli.fixtures {
        cfg.paths.fixtures_dir = Some(fixtures.clone());
    }
    if let Some(endpoint) = &cli.endpoint {
        cfg.client.endpoint = endpoint.clone();
    }
    if let Some(out_dir) = &cli.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if let Ok(token) = std::env::var("COCOT_AUTH_TOKEN") {
        if !token.is_empty() {
            cfg.client.auth_token = Some(token);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_input(explicit: Option<PathBuf>, cfg: &RunConfig, default_name: &str) -> Result<PathBuf> {
    let path = explicit.unwrap_or_else(|| cfg.out(default_name));
    if !path.exists() {
        return Err(Error::Usage(format!(
            "input {} does not exist; run the previous stage or pass --input",
            path.display()
        )));
    }
    Ok(path)
}

fn parse_strategies(spec: Option<&str>, cfg: &RunConfig) -> Result<Vec<Strategy>> {
    match spec {
        None => Ok(cfg.eval.strategies.clone()),
        Some(s) => s.split(',').map(|t| Strategy::from_str(t.trim())).collect(),
    }
}

fn parse_baseline(spec: Option<&str>, cfg: &RunConfig) -> Result<Strategy> {
    match spec {
        None => Ok(cfg.eval.baseline),
        Some(s) => Strategy::from_str(s),
    }
}

fn prompt_dump(id: Option<&str>, bindings: &[String], list: bool) -> Result<String> {
    if list {
        let mut out = String::new();
        for tpl in prompts::all_templates() {
            let names: Vec<&str> =
                tpl.required_placeholders.iter().map(String::as_str).collect();
            out.push_str(&format!("{}: {}\n", tpl.id.as_str(), names.join(", ")));
        }
        return Ok(out);
    }
    let id = id.ok_or_else(|| Error::Usage("pass --id or --list".into()))?;
    let id = PromptId::from_str(id)?;
    let mut map = BTreeMap::new();
    for binding in bindings {
        let (name, value) = binding.split_once('=').ok_or_else(|| {
            Error::Usage(format!("binding `{binding}` is not name=value"))
        })?;
        map.insert(name.to_string(), value.to_string());
    }
    prompts::render(id, &map)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Filter { input, dataset, split } => {
            let input = match input.or_else(|| cfg.paths.samples.clone()) {
                Some(path) if path.exists() => path,
                Some(path) => {
                    return Err(Error::Usage(format!(
                        "input {} does not exist",
                        path.display()
                    )))
                }
                None => {
                    return Err(Error::Usage(
                        "filter needs --input or paths.samples in the config".into(),
                    ))
                }
            };
            let dataset = dataset.as_deref().map(Dataset::from_str).transpose()?;
            let summary = pipeline::run_filter(&cfg, &input, dataset, split)?;
            println!("filter: {summary}");
        }
        Command::Ground { input } => {
            let input = require_input(input, &cfg, files::FILTERED)?;
            let summary = pipeline::run_ground(&cfg, &input)?;
            println!("ground: {summary}");
        }
        Command::Chain { input } => {
            let input = require_input(input, &cfg, files::GROUNDED)?;
            let summary = pipeline::run_chain(&cfg, &input)?;
            println!("chain: {summary}");
        }
        Command::Emit { input } => {
            let input = require_input(input, &cfg, files::CHAINED)?;
            let summary = pipeline::run_emit(&cfg, &input)?;
            println!("emit: {summary}");
        }
        Command::Infer { input, strategies } => {
            let input = require_input(input, &cfg, files::CHAINED)?;
            let strategies = parse_strategies(strategies.as_deref(), &cfg)?;
            let summary = pipeline::run_infer(&cfg, &input, &strategies)?;
            println!("infer: {summary}");
        }
        Command::Eval { predictions, grounded, baseline } => {
            let predictions = require_input(predictions, &cfg, files::PREDICTIONS)?;
            let grounded = require_input(grounded, &cfg, files::CHAINED)?;
            let baseline = parse_baseline(baseline.as_deref(), &cfg)?;
            let report = pipeline::run_eval(&cfg, &predictions, &grounded, baseline)?;
            println!(
                "eval: {} rows, {} deltas -> {}",
                report.rows.len(),
                report.deltas.len(),
                cfg.out(files::METRICS).display()
            );
        }
        Command::Report { predictions, grounded, baseline } => {
            let predictions = require_input(predictions, &cfg, files::PREDICTIONS)?;
            let grounded = require_input(grounded, &cfg, files::CHAINED)?;
            let baseline = parse_baseline(baseline.as_deref(), &cfg)?;
            let text = pipeline::run_report(&cfg, &predictions, &grounded, baseline)?;
            print!("{text}");
        }
        Command::PromptDump { id, bindings, list } => {
            print!("{}", prompt_dump(id.as_deref(), &bindings, list)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
