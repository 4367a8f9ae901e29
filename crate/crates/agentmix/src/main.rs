use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentmix::commands::{self, checkpoint_name, SynthArgs};
use agentmix::config::{self, FileConfig};
use agentmix::embedding::{ProviderConfig, ProviderKind};
use agentmix::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agentmix", version, about = "Train and audit per-partition agent ensembles")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; repeat for several runs.
    #[arg(long = "seed", global = true)]
    seed: Vec<u64>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, global = true, value_parser = ["hcc-like", "mtb-like"])]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted synthetic dataset and its ground truth.
    Synth(SynthCmd),
    /// Split, embed and train one model per seed.
    Train(TrainCmd),
    /// Score checkpoints on their test splits and aggregate across seeds.
    Eval(EvalCmd),
    /// Per-case attribution reports.
    Attribute(AttributeCmd),
    /// Compare sampled, exact and leave-one-out contribution estimates.
    ShapleyAudit(AuditCmd),
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 200)]
    n_cases: usize,
    #[arg(long, default_value_t = 5)]
    agents: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_std: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Stub,
    Remote,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda_pg: Option<f64>,
    #[arg(long)]
    lambda_shap: Option<f64>,
    #[arg(long)]
    ema_decay: Option<f64>,
    /// Permutations per Shapley estimate (default ceil(2^(N/2))).
    #[arg(long)]
    mc_budget: Option<usize>,
    #[arg(long)]
    shapley_interval: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Write a trace record every this many steps.
    #[arg(long)]
    log_interval: Option<u64>,
    #[arg(long)]
    centralized_only: bool,
    #[arg(long)]
    no_decision_matrix: bool,
    #[arg(long)]
    no_contribution_losses: bool,
    /// Embedding provider for text datasets.
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    #[arg(long, requires = "provider")]
    dim: Option<usize>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable that holds the remote provider's token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCmd {
    /// Checkpoint files; defaults to one per seed in --out.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Split manifests, one per checkpoint; defaults to the stored split.
    #[arg(long)]
    split: Vec<PathBuf>,
}

#[derive(Args)]
struct AttributeCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Case id; repeat for several.
    #[arg(long = "case")]
    cases: Vec<String>,
    /// File with one case id per line.
    #[arg(long)]
    cases_file: Option<PathBuf>,
    /// Also write a plain-text rendering.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct AuditCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Enumerate every coalition (at most 12 agents).
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    permutations: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seeds: Vec<u64> = cli.seed.iter().chain(&cli.seeds).copied().collect();
    let out = cli
        .out
        .clone()
        .or_else(|| file.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("agentmix-out"));
    let dataset_or_config = |flag: Option<PathBuf>| -> Result<PathBuf> {
        flag.or_else(|| file.data.path.clone())
            .ok_or_else(|| Error::Config("no dataset path; pass --dataset or set [data] path".into()))
    };

    match cli.command {
        Command::Synth(s) => commands::cmd_synth(
            &SynthArgs {
                n_cases: s.n_cases,
                agents: s.agents,
                classes: s.classes,
                dim: s.dim,
                alpha: s.alpha,
                noise_std: s.noise_std,
                seed: seeds.first().copied().unwrap_or(0),
            },
            &out,
        ),
        Command::Train(t) => {
            let mut flags = FileConfig::default();
            flags.data.path = t.dataset;
            flags.data.train_fraction = t.train_fraction;
            flags.run.out = Some(out);
            flags.run.seeds = (!seeds.is_empty()).then_some(seeds);
            flags.run.cache_dir = t.cache_dir;
            let tr = &mut flags.train;
            tr.preset = cli.preset;
            tr.epochs = t.epochs;
            tr.batch_size = t.batch_size;
            tr.learning_rate = t.learning_rate;
            tr.lambda_pg = t.lambda_pg;
            tr.lambda_shap = t.lambda_shap;
            tr.ema_decay = t.ema_decay;
            tr.mc_budget = t.mc_budget;
            tr.shapley_interval = t.shapley_interval;
            tr.log_interval = t.log_interval;
            tr.centralized_only = t.centralized_only.then_some(true);
            tr.no_decision_matrix = t.no_decision_matrix.then_some(true);
            tr.no_contribution_losses = t.no_contribution_losses.then_some(true);
            if let Some(kind) = t.provider {
                let dim = t.dim.ok_or_else(|| Error::Config("--provider needs --dim".into()))?;
                let mut p = match kind {
                    ProviderArg::Stub => ProviderConfig::stub(dim),
                    ProviderArg::Remote => ProviderConfig {
                        kind: ProviderKind::Remote,
                        ..ProviderConfig::stub(dim)
                    },
                };
                p.endpoint = t.endpoint;
                p.model = t.model;
                p.token_env = t.token_env;
                flags.provider = Some(p);
            }
            let run = config::resolve(&file, &flags)?;
            let outcomes = commands::cmd_train(&run)?;
            Ok(outcomes
                .into_iter()
                .flat_map(|o| [o.split, o.trace, o.checkpoint])
                .collect())
        }
        Command::Eval(e) => {
            let checkpoints = if e.checkpoint.is_empty() {
                let seeds = if seeds.is_empty() {
                    file.run.seeds.clone().unwrap_or_else(|| vec![0])
                } else {
                    seeds
                };
                seeds.iter().map(|s| out.join(checkpoint_name(*s))).collect()
            } else {
                e.checkpoint
            };
            let dataset = dataset_or_config(e.dataset)?;
            commands::cmd_eval(&checkpoints, &dataset, &e.split, &out)?;
            Ok(vec![out.join("metrics.json")])
        }
        Command::Attribute(a) => {
            let mut ids = a.cases;
            if let Some(path) = &a.cases_file {
                ids.extend(read_ids(path)?);
            }
            let dataset = dataset_or_config(a.dataset)?;
            commands::cmd_attribute(&a.checkpoint, &dataset, &ids, a.text, &out)?;
            let mut written = vec![out.join("attributions.json")];
            if a.text {
                written.push(out.join("attributions.txt"));
            }
            Ok(written)
        }
        Command::ShapleyAudit(s) => {
            let dataset = dataset_or_config(s.dataset)?;
            commands::cmd_shapley_audit(&s.checkpoint, &dataset, s.exact, s.permutations, &out)?;
            Ok(vec![out.join("shapley-audit.json")])
        }
    }
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}
