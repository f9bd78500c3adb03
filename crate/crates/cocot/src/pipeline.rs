//! Stage orchestration: one run configuration, file handoffs between
//! stages, resumable outputs, and bounded per-stage parallelism.
//!
//! Every stage reads its input records, skips samples already present in
//! its output (idempotent append keyed by sample id), processes the rest
//! with `jobs` workers, sorts results by sample id, and appends. Reruns
//! with identical config are byte-stable regardless of worker count.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chains::{build_chain, render_chain, ChainBuilderConfig};
use crate::clients::{
    ClientConfig, HttpModelClient, ModelClient, OcrClient, ScriptedModelClient, ScriptedOcrClient,
};
use crate::emitter::{
    decompose, emit_stage2, gold_record, write_manifest, GoldRecord, RunManifest, Stage1Record,
    Stage2Record,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_report, render_report_text, GroundedIndex, GroundedInfo, MatchConfig, Report,
};
use crate::filter::{multi_region_ratio, passes_filter, split_dataset, FilterRule};
use crate::grounding::{ground_sample, GroundingConfig};
use crate::records::{
    append_jsonl, read_jsonl, read_samples, round6, write_jsonl, ChainedRecord, RejectRecord,
};
use crate::types::{Dataset, GroundedSample, PredictionRecord, Sample, Strategy};

/// Input locations; stage outputs land in `out_dir` under fixed names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Source sample records for the filter stage.
    pub samples: Option<PathBuf>,
    /// Directory holding `model_fixtures.jsonl` and `ocr_pages.jsonl`;
    /// selects scripted-client mode.
    pub fixtures_dir: Option<PathBuf>,
}

/// Strategy selection for inference and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub strategies: Vec<Strategy>,
    pub baseline: Strategy,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { strategies: Strategy::ALL.to_vec(), baseline: Strategy::Direct }
    }
}

/// One run configuration shared by every subcommand; file values are
/// overridden by CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub strict: bool,
    pub out_dir: PathBuf,
    pub paths: PathsConfig,
    pub grounding: GroundingConfig,
    pub chain: ChainBuilderConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub client: ClientConfig,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 4,
            strict: false,
            out_dir: PathBuf::from("out"),
            paths: PathsConfig::default(),
            grounding: GroundingConfig::default(),
            chain: ChainBuilderConfig::default(),
            matching: MatchConfig::default(),
            client: ClientConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { key: path.display().to_string(), message: e.to_string() })?;
        toml::from_str(&text)
            .map_err(|e| Error::Config { key: path.display().to_string(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config { key: "jobs".into(), message: "must be >= 1".into() });
        }
        self.grounding.validate()?;
        self.chain.validate()?;
        self.matching.validate()?;
        self.client.validate()?;
        if let Some(dir) = &self.paths.fixtures_dir {
            if !dir.is_dir() {
                return Err(Error::Config {
                    key: "paths.fixtures_dir".into(),
                    message: format!("{} is not a directory", dir.display()),
                });
            }
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Manifest snapshot of everything that shapes outputs. The auth token
    /// never leaves the process.
    pub fn snapshot(&self) -> serde_json::Value {
        json!({
            "seed": self.seed,
            "strict": self.strict,
            "paths": {
                "samples": self.paths.samples.as_ref().map(|p| p.display().to_string()),
                "fixtures_dir": self.paths.fixtures_dir.as_ref().map(|p| p.display().to_string()),
            },
            "grounding": serde_json::to_value(self.grounding).unwrap(),
            "chain": serde_json::to_value(self.chain).unwrap(),
            "match": serde_json::to_value(self.matching).unwrap(),
            "client": {
                "endpoint": self.client.endpoint,
                "timeout_ms": self.client.timeout_ms,
                "max_retries": self.client.max_retries,
                "max_concurrent": self.client.max_concurrent,
            },
            "eval": serde_json::to_value(self.eval.clone()).unwrap(),
        })
    }
}

/// Output file names, fixed per stage.
pub mod files {
    pub const FILTERED: &str = "filtered.jsonl";
    pub const FILTER_STATS: &str = "filter_stats.json";
    pub const SPLIT_TEST: &str = "split_test.jsonl";
    pub const SPLIT_TRAIN: &str = "split_train.jsonl";
    pub const SPLIT_REST: &str = "split_rest.jsonl";
    pub const GROUNDED: &str = "grounded.jsonl";
    pub const GROUND_REJECTS: &str = "ground_rejects.jsonl";
    pub const GROUND_STATS: &str = "ground_stats.json";
    pub const CHAINED: &str = "chained.jsonl";
    pub const CHAIN_REJECTS: &str = "chain_rejects.jsonl";
    pub const STAGE1: &str = "stage1.jsonl";
    pub const STAGE2: &str = "stage2.jsonl";
    pub const GOLD: &str = "gold.jsonl";
    pub const PREDICTIONS: &str = "predictions.jsonl";
    pub const METRICS: &str = "metrics.json";
    pub const REPORT: &str = "report.txt";

    pub fn manifest(stage: &str) -> String {
        format!("manifest_{stage}.json")
    }
}

/// What a stage did this invocation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageSummary {
    pub written: usize,
    pub skipped: usize,
    pub rejected: usize,
}

impl std::fmt::Display for StageSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} written, {} skipped (already present), {} rejected",
            self.written, self.skipped, self.rejected
        )
    }
}

/// Build the configured model client: scripted when a fixtures directory is
/// set, HTTP when an endpoint is set.
pub fn build_model_client(cfg: &RunConfig) -> Result<Box<dyn ModelClient>> {
    if let Some(dir) = &cfg.paths.fixtures_dir {
        let path = dir.join("model_fixtures.jsonl");
        return Ok(Box::new(ScriptedModelClient::from_path(&path)?));
    }
    if !cfg.client.endpoint.is_empty() {
        return Ok(Box::new(HttpModelClient::new(cfg.client.clone())?));
    }
    Err(Error::Config {
        key: "client".into(),
        message: "set --fixtures for scripted mode or --endpoint for HTTP mode".into(),
    })
}

/// OCR pages come from the fixtures directory.
pub fn build_ocr_client(cfg: &RunConfig) -> Result<Box<dyn OcrClient>> {
    let dir = cfg.paths.fixtures_dir.as_ref().ok_or_else(|| Error::Config {
        key: "paths.fixtures_dir".into(),
        message: "grounding needs --fixtures pointing at ocr_pages.jsonl".into(),
    })?;
    Ok(Box::new(ScriptedOcrClient::from_path(&dir.join("ocr_pages.jsonl"))?))
}

/// Run `f` over `items` with a bounded worker pool; output order follows
/// input order regardless of scheduling.
fn parallel_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("building worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

fn ids_if_exists<T, F>(path: &Path, id_of: F) -> Result<HashSet<String>>
where
    T: serde::de::DeserializeOwned,
    F: Fn(&T) -> String,
{
    if !path.exists() {
        return Ok(HashSet::new());
    }
    Ok(read_jsonl::<T>(path)?.iter().map(id_of).collect())
}

fn reject_ids(path: &Path) -> Result<HashSet<String>> {
    ids_if_exists::<RejectRecord, _>(path, |r| r.sample_id.clone())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterDatasetStats {
    pub input: u64,
    pub passed: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub per_dataset: BTreeMap<String, FilterDatasetStats>,
}

/// Filter stage: apply the per-dataset complexity rules, write passing
/// samples, a stats summary, and optionally the test/train/rest split.
pub fn run_filter(
    cfg: &RunConfig,
    input: &Path,
    only_dataset: Option<Dataset>,
    split: bool,
) -> Result<StageSummary> {
    let samples = read_samples(input)?;
    let scope: Vec<Sample> = samples
        .into_iter()
        .filter(|s| only_dataset.is_none_or(|d| s.dataset == d))
        .collect();

    let out_path = cfg.out(files::FILTERED);
    let existing = ids_if_exists::<Sample, _>(&out_path, |s| s.sample_id.clone())?;

    let mut stats = FilterStats::default();
    let mut passed: Vec<Sample> = Vec::new();
    let mut skipped = 0usize;
    for sample in &scope {
        let entry = stats.per_dataset.entry(sample.dataset.as_str().to_string()).or_default();
        entry.input += 1;
        if passes_filter(sample, &FilterRule::builtin(sample.dataset))? {
            entry.passed += 1;
            if existing.contains(&sample.sample_id) {
                skipped += 1;
            } else {
                passed.push(sample.clone());
            }
        } else {
            entry.failed += 1;
        }
    }
    passed.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    append_jsonl(&out_path, &passed)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(
        cfg.out(files::FILTER_STATS),
        format!("{}\n", serde_json::to_string_pretty(&stats)?),
    )?;

    if split {
        let all_passed: Vec<Sample> = read_jsonl(&out_path)?;
        let mut by_dataset: BTreeMap<&'static str, Vec<Sample>> = BTreeMap::new();
        for s in all_passed {
            by_dataset.entry(s.dataset.as_str()).or_default().push(s);
        }
        let (mut test, mut train, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for (_, group) in by_dataset {
            let (t, tr, r) = split_dataset(group, cfg.seed)?;
            test.extend(t);
            train.extend(tr);
            rest.extend(r);
        }
        write_jsonl(&cfg.out(files::SPLIT_TEST), &test)?;
        write_jsonl(&cfg.out(files::SPLIT_TRAIN), &train)?;
        write_jsonl(&cfg.out(files::SPLIT_REST), &rest)?;
    }

    let total_passed: u64 = stats.per_dataset.values().map(|d| d.passed).sum();
    let total_failed: u64 = stats.per_dataset.values().map(|d| d.failed).sum();
    let counts: BTreeMap<String, u64> = [
        ("input".to_string(), scope.len() as u64),
        ("passed".to_string(), total_passed),
        ("failed".to_string(), total_failed),
    ]
    .into();
    write_manifest(
        &cfg.out(&files::manifest("filter")),
        &RunManifest::build("filter", cfg.seed, cfg.snapshot(), counts),
    )?;
    Ok(StageSummary { written: passed.len(), skipped, rejected: total_failed as usize })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundStats {
    pub grounded: u64,
    pub rejected: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_region_ratio: Option<f64>,
    pub per_dataset: BTreeMap<String, u64>,
}

/// Grounding stage: produce corrected multi-region groundings; samples with
/// no usable regions go to the reject file.
pub fn run_ground(cfg: &RunConfig, input: &Path) -> Result<StageSummary> {
    let samples = read_samples(input)?;
    let out_path = cfg.out(files::GROUNDED);
    let reject_path = cfg.out(files::GROUND_REJECTS);
    let mut done = ids_if_exists::<GroundedSample, _>(&out_path, |g| g.sample.sample_id.clone())?;
    done.extend(reject_ids(&reject_path)?);

    let input_len = samples.len();
    let todo: Vec<Sample> =
        samples.into_iter().filter(|s| !done.contains(&s.sample_id)).collect();
    let skipped = input_len - todo.len();

    let model = build_model_client(cfg)?;
    let ocr = build_ocr_client(cfg)?;
    let results = parallel_map(cfg.jobs, todo, |s| {
        (
            s.sample_id.clone(),
            ground_sample(model.as_ref(), ocr.as_ref(), s, &cfg.grounding),
        )
    })?;

    let mut grounded = Vec::new();
    let mut rejects = Vec::new();
    for (sample_id, result) in results {
        match result {
            Ok(g) => grounded.push(g),
            Err(Error::GroundingFailed(reason)) => {
                rejects.push(RejectRecord { sample_id, stage: "ground".into(), reason });
            }
            Err(e) => return Err(e),
        }
    }
    grounded.sort_by(|a, b| a.sample.sample_id.cmp(&b.sample.sample_id));
    rejects.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    append_jsonl(&out_path, &grounded)?;
    append_jsonl(&reject_path, &rejects)?;

    let all: Vec<GroundedSample> = read_jsonl(&out_path)?;
    let mut per_dataset: BTreeMap<String, u64> = BTreeMap::new();
    for g in &all {
        *per_dataset.entry(g.sample.dataset.as_str().to_string()).or_default() += 1;
    }
    let rejected_total = reject_ids(&reject_path)?.len() as u64;
    let stats = GroundStats {
        grounded: all.len() as u64,
        rejected: rejected_total,
        multi_region_ratio: if all.is_empty() {
            None
        } else {
            Some(round6(multi_region_ratio(&all)?))
        },
        per_dataset,
    };
    std::fs::write(
        cfg.out(files::GROUND_STATS),
        format!("{}\n", serde_json::to_string_pretty(&stats)?),
    )?;

    let counts: BTreeMap<String, u64> =
        [("grounded".to_string(), stats.grounded), ("rejected".to_string(), stats.rejected)].into();
    write_manifest(
        &cfg.out(&files::manifest("ground")),
        &RunManifest::build("ground", cfg.seed, cfg.snapshot(), counts),
    )?;

    let summary =
        StageSummary { written: grounded.len(), skipped, rejected: rejects.len() };
    if cfg.strict && !rejects.is_empty() {
        return Err(Error::GroundingFailed(format!(
            "{} samples rejected with --strict set",
            rejects.len()
        )));
    }
    Ok(summary)
}

/// Chain stage: build and render the reasoning chain for every grounded
/// sample; first-step failures go to the reject file.
pub fn run_chain(cfg: &RunConfig, input: &Path) -> Result<StageSummary> {
    let grounded: Vec<GroundedSample> = read_jsonl(input)?;
    let out_path = cfg.out(files::CHAINED);
    let reject_path = cfg.out(files::CHAIN_REJECTS);
    let mut done = ids_if_exists::<ChainedRecord, _>(&out_path, |c| c.sample.sample_id.clone())?;
    done.extend(reject_ids(&reject_path)?);

    let input_len = grounded.len();
    let todo: Vec<GroundedSample> =
        grounded.into_iter().filter(|g| !done.contains(&g.sample.sample_id)).collect();
    let skipped = input_len - todo.len();

    let model = build_model_client(cfg)?;
    let results = parallel_map(cfg.jobs, todo, |g| {
        let built = build_chain(model.as_ref(), g, &cfg.chain).map(|built| {
            let chain_text = render_chain(&built.chain, g);
            ChainedRecord {
                sample: g.sample.clone(),
                regions: g.regions().to_vec(),
                keywords: g.keywords.clone(),
                region_relations: None,
                chain: built.chain,
                truncated: built.truncated,
                chain_text,
            }
        });
        (g.sample.sample_id.clone(), built)
    })?;

    let mut chained = Vec::new();
    let mut rejects = Vec::new();
    for (sample_id, result) in results {
        match result {
            Ok(record) => chained.push(record),
            Err(Error::ChainFailed(reason)) => {
                rejects.push(RejectRecord { sample_id, stage: "chain".into(), reason });
            }
            Err(e) => return Err(e),
        }
    }
    chained.sort_by(|a, b| a.sample.sample_id.cmp(&b.sample.sample_id));
    rejects.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    append_jsonl(&out_path, &chained)?;
    append_jsonl(&reject_path, &rejects)?;

    let total = ids_if_exists::<ChainedRecord, _>(&out_path, |c| c.sample.sample_id.clone())?;
    let counts: BTreeMap<String, u64> = [
        ("chained".to_string(), total.len() as u64),
        ("rejected".to_string(), reject_ids(&reject_path)?.len() as u64),
    ]
    .into();
    write_manifest(
        &cfg.out(&files::manifest("chain")),
        &RunManifest::build("chain", cfg.seed, cfg.snapshot(), counts),
    )?;

    let summary = StageSummary { written: chained.len(), skipped, rejected: rejects.len() };
    if cfg.strict && !rejects.is_empty() {
        return Err(Error::ChainFailed(format!(
            "{} samples rejected with --strict set",
            rejects.len()
        )));
    }
    Ok(summary)
}

/// Emit stage: stage-1 decomposition records, stage-2 answer records, and
/// the gold sidecar.
pub fn run_emit(cfg: &RunConfig, input: &Path) -> Result<StageSummary> {
    let chained: Vec<ChainedRecord> = read_jsonl(input)?;
    let stage2_path = cfg.out(files::STAGE2);
    let done = ids_if_exists::<Stage2Record, _>(&stage2_path, |r| r.sample_id.clone())?;

    let mut todo: Vec<&ChainedRecord> =
        chained.iter().filter(|c| !done.contains(&c.sample.sample_id)).collect();
    todo.sort_by(|a, b| a.sample.sample_id.cmp(&b.sample.sample_id));
    let skipped = chained.len() - todo.len();

    let mut stage1: Vec<Stage1Record> = Vec::new();
    let mut stage2: Vec<Stage2Record> = Vec::new();
    let mut gold: Vec<GoldRecord> = Vec::new();
    for record in &todo {
        let gs = GroundedSample::new(
            record.sample.clone(),
            record.regions.clone(),
            record.keywords.clone(),
        )?;
        stage1.extend(decompose(&gs, &record.chain)?);
        stage2.push(emit_stage2(&gs, &record.chain_text)?);
        gold.push(gold_record(&gs));
    }
    append_jsonl(&cfg.out(files::STAGE1), &stage1)?;
    append_jsonl(&stage2_path, &stage2)?;
    append_jsonl(&cfg.out(files::GOLD), &gold)?;

    let stage1_total: Vec<Stage1Record> = read_jsonl(&cfg.out(files::STAGE1))?;
    let stage2_total: Vec<Stage2Record> = read_jsonl(&stage2_path)?;
    let counts: BTreeMap<String, u64> = [
        ("samples".to_string(), stage2_total.len() as u64),
        ("stage1".to_string(), stage1_total.len() as u64),
        ("stage2".to_string(), stage2_total.len() as u64),
    ]
    .into();
    write_manifest(
        &cfg.out(&files::manifest("emit")),
        &RunManifest::build("emit", cfg.seed, cfg.snapshot(), counts),
    )?;
    Ok(StageSummary { written: stage2.len(), skipped, rejected: 0 })
}

/// Inference stage: run each configured strategy over every chained sample.
pub fn run_infer(cfg: &RunConfig, input: &Path, strategies: &[Strategy]) -> Result<StageSummary> {
    let chained: Vec<ChainedRecord> = read_jsonl(input)?;
    let out_path = cfg.out(files::PREDICTIONS);
    let done: HashSet<(String, &'static str)> = if out_path.exists() {
        read_jsonl::<PredictionRecord>(&out_path)?
            .into_iter()
            .map(|p| (p.sample_id, p.strategy.as_str()))
            .collect()
    } else {
        HashSet::new()
    };

    let mut tasks: Vec<(Strategy, &ChainedRecord)> = Vec::new();
    let mut skipped = 0usize;
    for record in &chained {
        for &strategy in strategies {
            if done.contains(&(record.sample.sample_id.clone(), strategy.as_str())) {
                skipped += 1;
            } else {
                tasks.push((strategy, record));
            }
        }
    }

    let model = build_model_client(cfg)?;
    let results = parallel_map(cfg.jobs, tasks, |(strategy, record)| {
        crate::eval::run_strategy(*strategy, model.as_ref(), record, &cfg.matching)
    })?;
    let mut predictions = results.into_iter().collect::<Result<Vec<_>>>()?;
    predictions.sort_by(|a, b| {
        a.sample_id.cmp(&b.sample_id).then(a.strategy.as_str().cmp(b.strategy.as_str()))
    });
    append_jsonl(&out_path, &predictions)?;

    let total = read_jsonl::<PredictionRecord>(&out_path)?.len() as u64;
    let counts: BTreeMap<String, u64> = [("predictions".to_string(), total)].into();
    write_manifest(
        &cfg.out(&files::manifest("infer")),
        &RunManifest::build("infer", cfg.seed, cfg.snapshot(), counts),
    )?;
    Ok(StageSummary { written: predictions.len(), skipped, rejected: 0 })
}

/// Load a grounded index from chained or grounded record files.
pub fn load_grounded_index(path: &Path) -> Result<GroundedIndex> {
    if let Ok(chained) = read_jsonl::<ChainedRecord>(path) {
        return Ok(chained
            .into_iter()
            .map(|c| {
                (
                    c.sample.sample_id.clone(),
                    GroundedInfo { dataset: c.sample.dataset, region_count: c.regions.len() },
                )
            })
            .collect());
    }
    let grounded: Vec<GroundedSample> = read_jsonl(path)?;
    Ok(grounded
        .into_iter()
        .map(|g| {
            (
                g.sample.sample_id.clone(),
                GroundedInfo { dataset: g.sample.dataset, region_count: g.regions().len() },
            )
        })
        .collect())
}

/// Eval stage: join predictions to their grounded samples and write the
/// machine-readable accuracy report.
pub fn run_eval(
    cfg: &RunConfig,
    predictions: &Path,
    grounded: &Path,
    baseline: Strategy,
) -> Result<Report> {
    let preds: Vec<PredictionRecord> = read_jsonl(predictions)?;
    let index = load_grounded_index(grounded)?;
    let report = accuracy_report(&preds, &index, baseline)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(
        cfg.out(files::METRICS),
        format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;
    let counts: BTreeMap<String, u64> = [("predictions".to_string(), preds.len() as u64)].into();
    write_manifest(
        &cfg.out(&files::manifest("eval")),
        &RunManifest::build("eval", cfg.seed, cfg.snapshot(), counts),
    )?;
    Ok(report)
}

/// Report stage: render the accuracy and delta tables as text.
pub fn run_report(
    cfg: &RunConfig,
    predictions: &Path,
    grounded: &Path,
    baseline: Strategy,
) -> Result<String> {
    let report = run_eval(cfg, predictions, grounded, baseline)?;
    let text = render_report_text(&report);
    std::fs::write(cfg.out(files::REPORT), &text)?;
    Ok(text)
}
