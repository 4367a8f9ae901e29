//! The subcommands as library functions. Each writes its artifacts under an
//! output directory and returns what it wrote.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use agentmix_core::data::{stratified_split, synth_generate, Dataset, SplitManifest, SplitSpec, SynthSpec};
use agentmix_core::game::{
    rewards_and_advantage_of, sample_budget, shapley_exact, shapley_mc, BatchGame, ExactShapley, GameTable,
};
use agentmix_core::metrics::{attribution_report, evaluate, multi_seed_aggregate, AttributionReport, MetricsSummary, SeedMetrics};
use agentmix_core::model::EmbeddedCase;
use agentmix_core::rng::{stream_rng, Stream};
use agentmix_core::train::{StepRecord, Trainer};
use agentmix_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::dataset_io::{load_dataset, load_split_manifest, save_dataset, save_json, save_split_manifest, GroundTruth};
use crate::embedding::{embed_dataset, EmbeddingCache, ProviderConfig};
use crate::error::{Error, Result};
use crate::trace::TraceWriter;

pub fn checkpoint_name(seed: u64) -> String {
    format!("checkpoint-seed{seed}.json")
}

pub fn trace_name(seed: u64) -> String {
    format!("trace-seed{seed}.jsonl")
}

pub fn split_name(seed: u64) -> String {
    format!("split-seed{seed}.json")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthArgs {
    pub n_cases: usize,
    pub agents: usize,
    pub classes: usize,
    pub dim: usize,
    pub alpha: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// Writes `dataset.jsonl` and `ground_truth.json`.
pub fn cmd_synth(args: &SynthArgs, out: &Path) -> Result<Vec<PathBuf>> {
    for (flag, value) in [("--n-cases", args.n_cases), ("--agents", args.agents), ("--classes", args.classes)] {
        if value == 0 {
            return Err(Error::Config(format!("{flag} must be positive")));
        }
    }
    if args.dim < args.classes {
        return Err(Error::Config(format!(
            "--dim {} is smaller than --classes {}; class directions need dim >= classes",
            args.dim, args.classes
        )));
    }
    if !(args.alpha >= 0.0 && args.alpha.is_finite()) {
        return Err(Error::Config(format!("--alpha {} must be finite and >= 0", args.alpha)));
    }
    if !(args.noise_std >= 0.0 && args.noise_std.is_finite()) {
        return Err(Error::Config(format!("--noise-std {} must be finite and >= 0", args.noise_std)));
    }
    let spec = SynthSpec::one_per_class(
        args.n_cases,
        args.agents,
        args.classes,
        args.dim,
        args.alpha,
        args.noise_std,
        args.seed,
    );
    let (dataset, map) = synth_generate(&spec)?;
    let data_path = out.join("dataset.jsonl");
    let truth_path = out.join("ground_truth.json");
    save_dataset(&data_path, &dataset)?;
    save_json(
        &truth_path,
        &GroundTruth {
            seed: args.seed,
            noise_std: args.noise_std,
            planted_agents: (0..args.classes).map(|k| map.planted_agent(k)).collect(),
            informative_map: map,
        },
    )?;
    Ok(vec![data_path, truth_path])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
    pub split: PathBuf,
    pub final_record: Option<StepRecord>,
}

fn embed_all(dataset: &Dataset, provider: Option<&ProviderConfig>, cache_dir: Option<&Path>) -> Result<Vec<EmbeddedCase>> {
    let built = provider.map(ProviderConfig::build).transpose()?;
    let cache = cache_dir.map(EmbeddingCache::new).transpose()?;
    embed_dataset(dataset, built.as_deref(), cache.as_ref())
}

fn embedded_dim(cases: &[EmbeddedCase]) -> usize {
    cases
        .first()
        .map(|c| c.partitions.first().map_or(c.global.len(), Vec::len))
        .unwrap_or(0)
}

fn pick<'a>(cases: &'a [EmbeddedCase], ids: &[String]) -> Result<Vec<EmbeddedCase>> {
    let index: HashMap<&str, &'a EmbeddedCase> = cases.iter().map(|c| (c.id.as_str(), c)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| Error::Lookup(format!("case id {id:?} is not in the dataset")))
        })
        .collect()
}

/// Split, embed and train once per seed.
pub fn cmd_train(run: &RunConfig) -> Result<Vec<TrainOutcome>> {
    let dataset = load_dataset(&run.dataset, None)?;
    let cache_dir = run.cache_dir.clone().unwrap_or_else(|| run.out.join("embedding-cache"));
    let needs_cache = run.provider.is_some();
    let embedded = embed_all(&dataset, run.provider.as_ref(), needs_cache.then_some(cache_dir.as_path()))?;
    let dim = embedded_dim(&embedded);
    if let Some(p) = &run.provider {
        if p.dim != dim && dataset.mode() == Some(agentmix_core::data::PayloadMode::Text) {
            return Err(Error::Contract(format!("provider dim {} but vectors have {dim}", p.dim)));
        }
    }

    let mut outcomes = Vec::with_capacity(run.seeds.len());
    for &seed in &run.seeds {
        let (_, _, manifest) = stratified_split(
            &dataset,
            SplitSpec {
                train_fraction: run.train_fraction,
                seed,
            },
        )?;
        let split_path = run.out.join(split_name(seed));
        save_split_manifest(&split_path, &manifest)?;
        let train_cases = pick(&embedded, &manifest.train_ids)?;

        let mut config = run.train.clone();
        config.agents = dataset.agents();
        config.classes = dataset.classes();
        config.dim = dim;
        config.seed = seed;
        let mut trainer = Trainer::new(config)?;

        let trace_path = run.out.join(trace_name(seed));
        let mut trace = TraceWriter::create(&trace_path, run.log_interval)?;
        let mut last = None;
        while !trainer.is_finished() {
            let record = trainer.step(&train_cases)?;
            if trace.wants(record.step) {
                trace.write(&record)?;
            }
            if record.step % 1000 == 0 {
                log::info!("seed {seed} step {} epoch {} loss {:.6}", record.step, record.epoch, record.loss.total);
            }
            last = Some(record);
        }
        trace.finish(last.as_ref())?;

        let checkpoint_path = run.out.join(checkpoint_name(seed));
        let checkpoint = Checkpoint::new(
            trainer.state(),
            dataset.partition_names.clone(),
            dataset.class_names.clone(),
            run.provider.clone(),
            Some(manifest),
        );
        save_checkpoint(&checkpoint_path, &checkpoint)?;
        outcomes.push(TrainOutcome {
            seed,
            checkpoint: checkpoint_path,
            trace: trace_path,
            split: split_path,
            final_record: last,
        });
    }
    Ok(outcomes)
}

/// A checkpoint together with the dataset it is evaluated against.
pub struct LoadedRun {
    pub checkpoint: Checkpoint,
    pub dataset: Dataset,
    pub cases: Vec<EmbeddedCase>,
}

impl LoadedRun {
    /// Loads both and checks that partition count, class count and
    /// embedding dimension agree.
    pub fn open(checkpoint: &Path, dataset: &Path, cache_dir: Option<&Path>) -> Result<Self> {
        let checkpoint = load_checkpoint(checkpoint)?;
        let dataset = load_dataset(dataset, None)?;
        let config = &checkpoint.trainer.config;
        if dataset.agents() != config.agents || dataset.classes() != config.classes {
            return Err(Error::Contract(format!(
                "checkpoint expects {} partitions and {} classes, dataset has {} and {}",
                config.agents,
                config.classes,
                dataset.agents(),
                dataset.classes()
            )));
        }
        if dataset.class_names != checkpoint.class_names || dataset.partition_names != checkpoint.partition_names {
            return Err(Error::Contract("dataset partition or class names differ from the checkpoint".into()));
        }
        let cases = embed_all(&dataset, checkpoint.provider.as_ref(), cache_dir)?;
        let dim = embedded_dim(&cases);
        if dim != config.dim {
            return Err(Error::Contract(format!("checkpoint expects dimension {}, data has {dim}", config.dim)));
        }
        Ok(LoadedRun {
            checkpoint,
            dataset,
            cases,
        })
    }

    pub fn split(&self, manifest: Option<&SplitManifest>) -> Result<(Vec<EmbeddedCase>, Vec<EmbeddedCase>)> {
        let manifest = manifest
            .or(self.checkpoint.split.as_ref())
            .ok_or_else(|| Error::Config("checkpoint has no split; pass --split".into()))?;
        Ok((pick(&self.cases, &manifest.train_ids)?, pick(&self.cases, &manifest.test_ids)?))
    }

    pub fn seed(&self) -> u64 {
        self.checkpoint.trainer.config.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub summary: MetricsSummary,
    pub runs: Vec<SeedMetrics>,
}

/// Fits thresholds on each checkpoint's training split, scores its test split,
/// and aggregates across checkpoints into `metrics.json`.
pub fn cmd_eval(checkpoints: &[PathBuf], dataset: &Path, splits: &[PathBuf], out: &Path) -> Result<MetricsFile> {
    if checkpoints.is_empty() {
        return Err(Error::Config("eval needs at least one --checkpoint".into()));
    }
    if !splits.is_empty() && splits.len() != checkpoints.len() {
        return Err(Error::Config(format!(
            "{} --split manifests for {} checkpoints",
            splits.len(),
            checkpoints.len()
        )));
    }
    let mut runs = Vec::with_capacity(checkpoints.len());
    for (j, path) in checkpoints.iter().enumerate() {
        let run = LoadedRun::open(path, dataset, None)?;
        let manifest = splits.get(j).map(|p| load_split_manifest(p)).transpose()?;
        let (train, test) = run.split(manifest.as_ref())?;
        let params = &run.checkpoint.trainer.params;
        let (metrics, _) = evaluate(params, &train, &test, &run.dataset.class_names, run.seed())?;
        runs.push(metrics);
    }
    let file = MetricsFile {
        summary: multi_seed_aggregate(&runs)?,
        runs,
    };
    save_json(&out.join("metrics.json"), &file)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionFile {
    pub partition_names: Vec<String>,
    pub class_names: Vec<String>,
    pub reports: Vec<AttributionReport>,
}

/// Attribution reports for `ids`, in order, as `attributions.json` and
/// optionally a plain-text `attributions.txt`.
pub fn cmd_attribute(
    checkpoint: &Path,
    dataset: &Path,
    ids: &[String],
    text: bool,
    out: &Path,
) -> Result<AttributionFile> {
    if ids.is_empty() {
        return Err(Error::Config("attribute needs --case or --cases-file".into()));
    }
    let run = LoadedRun::open(checkpoint, dataset, None)?;
    let (train, _) = run.split(None)?;
    let params = &run.checkpoint.trainer.params;
    let (_, thresholds) = evaluate(params, &train, &train, &run.dataset.class_names, run.seed())?;
    let cases = pick(&run.cases, ids)?;
    let reports = cases
        .iter()
        .map(|case| attribution_report(params, case, &thresholds, Some(&run.checkpoint.trainer.shapley)))
        .collect::<agentmix_core::Result<Vec<_>>>()?;
    let file = AttributionFile {
        partition_names: run.dataset.partition_names.clone(),
        class_names: run.dataset.class_names.clone(),
        reports,
    };
    save_json(&out.join("attributions.json"), &file)?;
    if text {
        crate::dataset_io::write_atomic(&out.join("attributions.txt"), render_attributions(&file).as_bytes())?;
    }
    Ok(file)
}

/// Plain-text rendering, one paragraph per case.
pub fn render_attributions(file: &AttributionFile) -> String {
    let mut out = String::new();
    for report in &file.reports {
        out.push_str(&format!("Case {}\n", report.case_id));
        for class in &report.classes {
            let name = &file.class_names[class.class_index];
            out.push_str(&format!(
                "  {name}: scored at {} percentile; cutoff at {} percentile; {}.",
                ordinal(class.score_percentile),
                ordinal(class.threshold_percentile),
                if class.decision { "positive" } else { "negative" }
            ));
            if let Some(shares) = &class.shares {
                let mut ranked: Vec<(usize, f64)> = shares.iter().copied().enumerate().collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                let top: Vec<String> = ranked
                    .iter()
                    .take(3)
                    .map(|(i, s)| format!("{} ({:.0}%)", file.partition_names[*i], 100.0 * s))
                    .collect();
                out.push_str(&format!(" Top contributing agents: {}.", top.join(", ")));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn ordinal(percentile: f64) -> String {
    let n = percentile.round() as u64;
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyAudit {
    pub seed: u64,
    pub cases: usize,
    pub permutations: usize,
    pub phi_mc: Matrix,
    pub advantage: Matrix,
    pub exact: Option<ExactShapley>,
    /// `max |phi_mc - exact.rectified_normalized|`.
    pub max_gap_mc_exact: Option<f64>,
    /// `max |advantage - exact.classical|`.
    pub max_gap_advantage_exact: Option<f64>,
    /// Agent pairs whose exact value rows agree.
    pub symmetric_pairs: Vec<(usize, usize)>,
    /// Agents whose exact value row is zero.
    pub dummy_agents: Vec<usize>,
}

const AUDIT_TOLERANCE: f64 = 1e-9;

/// Compares the sampled Shapley matrix, the advantage matrix and (with
/// `exact`) the enumerated values on the checkpoint's training split.
pub fn cmd_shapley_audit(
    checkpoint: &Path,
    dataset: &Path,
    exact: bool,
    permutations: Option<usize>,
    out: &Path,
) -> Result<ShapleyAudit> {
    let run = LoadedRun::open(checkpoint, dataset, None)?;
    let params = &run.checkpoint.trainer.params;
    if params.agents() == 0 {
        return Err(Error::Config("a centralized checkpoint has no agents to audit".into()));
    }
    let cases = match run.checkpoint.split {
        Some(_) => run.split(None)?.0,
        None => run.cases.clone(),
    };
    let game = BatchGame::new(params, &cases)?;
    let m = match permutations {
        Some(m) => m,
        None => sample_budget(params.agents())?,
    };
    let phi_mc = shapley_mc(&game, m, &mut stream_rng(run.seed(), Stream::Shapley))?;
    let (_, advantage) = rewards_and_advantage_of(&game)?;
    let exact = if exact {
        Some(shapley_exact(&GameTable::from_game(&game)?)?)
    } else {
        None
    };
    let max_gap = |a: &Matrix, b: &Matrix| a.max_abs_diff(b);
    let (mut symmetric_pairs, mut dummy_agents) = (Vec::new(), Vec::new());
    if let Some(e) = &exact {
        let n = e.classical.rows();
        let scale = e.classical.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            let row = e.classical.row(i);
            if row.iter().all(|v| v.abs() <= AUDIT_TOLERANCE * scale) {
                dummy_agents.push(i);
            }
            for j in i + 1..n {
                let other = e.classical.row(j);
                if row.iter().zip(other).all(|(a, b)| (a - b).abs() <= AUDIT_TOLERANCE * scale) {
                    symmetric_pairs.push((i, j));
                }
            }
        }
    }
    let audit = ShapleyAudit {
        seed: run.seed(),
        cases: cases.len(),
        permutations: m,
        max_gap_mc_exact: exact.as_ref().map(|e| max_gap(&phi_mc, &e.rectified_normalized)).transpose()?,
        max_gap_advantage_exact: exact.as_ref().map(|e| max_gap(&advantage.advantage, &e.classical)).transpose()?,
        phi_mc,
        advantage: advantage.advantage,
        exact,
        symmetric_pairs,
        dummy_agents,
    };
    save_json(&out.join("shapley-audit.json"), &audit)?;
    Ok(audit)
}
