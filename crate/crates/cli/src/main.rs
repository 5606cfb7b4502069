//! Command-line entry points: scenario synthesis, dialogue generation,
//! evaluation, and dataset statistics.
//!
//! Exit codes: 0 success, 2 configuration error (clap usage errors share
//! this code), 3 input-data error, 4 provider error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use dialogsim::eval::{
    contradiction_rate, dataset_statistics, embedding_diversity, judge_diversity,
    quality_summary, realism_summary,
};
use dialogsim::model::{DialogueRecord, Scenario, TeachableMoment};
use dialogsim::orchestrator::{run_batch, ProviderConfig, RunConfig};
use dialogsim::persist::{
    self, read_records, read_scenarios, write_jsonl, write_run_outputs, PersistError,
};
use dialogsim::provider::mock::MockProvider;
use dialogsim::provider::{Gateway, Provider};
use dialogsim::scenario::synthesize_scenarios;

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("provider error: {0}")]
    Provider(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Provider(_) => 4,
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<dialogsim::provider::ProviderError> for CliError {
    fn from(e: dialogsim::provider::ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "dialogsim", version, about = "Parent-child dialogue simulation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize scenarios for every configured (topic, moment) cell.
    Synthesize {
        #[command(flatten)]
        config: ConfigArg,
        /// Output scenario file (one JSON object per line).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate dialogues for a scenario file; writes records, quarantine,
    /// and a manifest (manifest last: its presence certifies completion).
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Input scenario file.
        #[arg(long)]
        scenarios: PathBuf,
        /// Output directory for records.jsonl / quarantine.jsonl / manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run evaluation metrics over a record file.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Record file to evaluate.
        #[arg(long)]
        records: PathBuf,
        /// Second record file, for comparative diversity judging.
        #[arg(long)]
        records_b: Option<PathBuf>,
        /// Scenario file for topic attribution in stats.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Metrics to run.
        #[arg(long, value_delimiter = ',', default_value = "stats")]
        metrics: Vec<Metric>,
        /// Report output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print dataset statistics for a record file.
    Stats {
        /// Record file.
        #[arg(long)]
        records: PathBuf,
        /// Scenario file for topic attribution.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Stats,
    EmbeddingDiversity,
    Contradiction,
    Realism,
    Quality,
    JudgeDiversity,
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn build_gateway(config: &RunConfig) -> Result<Gateway, CliError> {
    let backend: Arc<dyn Provider> = match &config.provider {
        ProviderConfig::Mock { script } => match script {
            Some(path) => Arc::new(
                MockProvider::from_script_file(path)
                    .map_err(|e| CliError::Config(format!("mock script: {e}")))?,
            ),
            None => Arc::new(MockProvider::new()),
        },
        ProviderConfig::Remote { base_url, api_key_env, model_tag, embedding_model } => {
            Arc::new(
                dialogsim::provider::remote::RemoteProvider::new(
                    base_url.clone(),
                    api_key_env,
                    embedding_model.clone(),
                    model_tag.clone(),
                )
                .map_err(|e| CliError::Config(e.to_string()))?,
            )
        }
    };
    Ok(Gateway::new(backend))
}

fn cmd_synthesize(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let gateway = build_gateway(&config)?;
    let settings = config.agent_settings();
    let mut scenarios = Vec::new();
    for topic in &config.topics {
        for moment in TeachableMoment::ALL {
            let batch =
                synthesize_scenarios(*topic, moment, config.scenarios_per_cell, &gateway, &settings)
                    .map_err(|e| CliError::Provider(e.to_string()))?;
            scenarios.extend(batch);
        }
    }
    write_jsonl(out, &scenarios)?;
    println!("wrote {} scenarios to {}", scenarios.len(), out.display());
    Ok(())
}

fn cmd_generate(config_path: &Path, scenario_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let gateway = build_gateway(&config)?;
    let scenarios: Vec<Scenario> = read_scenarios(scenario_path)?;
    if scenarios.is_empty() {
        return Err(CliError::Input(format!("{}: no scenarios", scenario_path.display())));
    }
    let started = persist::now_unix();
    let outcome = run_batch(&scenarios, &config, &gateway);
    let manifest = write_run_outputs(out_dir, &config, &scenarios, &outcome, started)?;
    println!(
        "wrote {} records ({} failures) to {}",
        manifest.dialogue_count,
        manifest.failure_count,
        out_dir.display()
    );
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<DialogueRecord>, CliError> {
    let records = read_records(path)?;
    if records.is_empty() {
        return Err(CliError::Input(format!("{}: no dialogue records", path.display())));
    }
    Ok(records)
}

fn cmd_evaluate(
    config_path: &Path,
    records_path: &Path,
    records_b: Option<&Path>,
    scenarios: Option<&Path>,
    metrics: &[Metric],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let gateway = build_gateway(&config)?;
    let settings = config.agent_settings();
    let records = load_records(records_path)?;
    let scenario_list: Vec<Scenario> =
        scenarios.map(read_scenarios).transpose()?.unwrap_or_default();

    let mut report = BTreeMap::new();
    for metric in metrics {
        match metric {
            Metric::Stats => {
                let stats = dataset_statistics(&records, &scenario_list)
                    .map_err(|e| CliError::Input(e.to_string()))?;
                report.insert("stats", serde_json::to_value(stats).unwrap());
            }
            Metric::EmbeddingDiversity => {
                let d = embedding_diversity(&records, &gateway)
                    .map_err(|e| CliError::Provider(e.to_string()))?;
                report.insert("embedding_diversity", serde_json::json!(d));
            }
            Metric::Contradiction => {
                let mut rates = Vec::new();
                for r in &records {
                    rates.push(
                        contradiction_rate(r, &gateway)
                            .map_err(|e| CliError::Provider(e.to_string()))?,
                    );
                }
                let mean = rates.iter().sum::<f64>() / rates.len() as f64;
                report.insert("contradiction_rate", serde_json::json!(mean));
            }
            Metric::Realism => {
                let summary = realism_summary(&records, &gateway, &settings)
                    .map_err(|e| CliError::Provider(e.to_string()))?;
                report.insert("realism", serde_json::to_value(summary).unwrap());
            }
            Metric::Quality => {
                let summary = quality_summary(&records, &gateway, &settings)
                    .map_err(|e| CliError::Provider(e.to_string()))?;
                report.insert("quality", serde_json::to_value(summary).unwrap());
            }
            Metric::JudgeDiversity => {
                let b_path = records_b.ok_or_else(|| {
                    CliError::Input("judge-diversity needs --records-b".to_string())
                })?;
                let set_b = load_records(b_path)?;
                let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
                let result = judge_diversity(&records, &set_b, &mut rng, &gateway, &settings)
                    .map_err(|e| CliError::Provider(e.to_string()))?;
                report.insert("judge_diversity", serde_json::to_value(result).unwrap());
            }
        }
    }
    emit(&serde_json::to_string_pretty(&report).unwrap(), out)
}

fn cmd_stats(
    records_path: &Path,
    scenarios: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let records = load_records(records_path)?;
    let scenario_list: Vec<Scenario> =
        scenarios.map(read_scenarios).transpose()?.unwrap_or_default();
    let stats = dataset_statistics(&records, &scenario_list)
        .map_err(|e| CliError::Input(e.to_string()))?;
    emit(&serde_json::to_string_pretty(&stats).unwrap(), out)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, format!("{text}\n"))
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            println!("wrote report to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synthesize { config, out } => cmd_synthesize(&config.config, out),
        Command::Generate { config, scenarios, out_dir } => {
            cmd_generate(&config.config, scenarios, out_dir)
        }
        Command::Evaluate { config, records, records_b, scenarios, metrics, out } => cmd_evaluate(
            &config.config,
            records,
            records_b.as_deref(),
            scenarios.as_deref(),
            metrics,
            out.as_deref(),
        ),
        Command::Stats { records, scenarios, out } => {
            cmd_stats(records, scenarios.as_deref(), out.as_deref())
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
