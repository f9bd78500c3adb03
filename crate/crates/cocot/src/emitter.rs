//! Two-stage training record emission: per-region decomposition for chain
//! generation, answer-synthesis records, the gold-answer sidecar, and run
//! manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chains::{render_chain, validate_chain};
use crate::error::{Error, Result};
use crate::geometry::{compute_pad_transform, PadTransform, DEFAULT_TARGET_SIDE};
use crate::types::{BBox, GroundedSample, ReasoningChain};

/// Reference hyperparameters recorded for downstream trainers. Training
/// itself is out of scope for this toolkit.
pub const STAGE1_LEARNING_RATE: f64 = 2e-5;
pub const STAGE2_LEARNING_RATE: f64 = 1e-5;
pub const TRAIN_BATCH_SIZE: u32 = 64;
pub const TRAIN_EPOCHS: u32 = 1;

/// Stage-1 record: one region of one sample, with the full rendered chain
/// as the generation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Record {
    pub sample_id: String,
    pub image_path: String,
    pub region_bbox: BBox,
    pub region_crop_transform: PadTransform,
    pub question: String,
    pub description: String,
    pub target_chain_text: String,
}

/// Stage-2 record: answer synthesis from the original image, question, and
/// generated chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    pub sample_id: String,
    pub image_path: String,
    pub question: String,
    pub chain_text: String,
    pub target_answer: String,
}

/// Sidecar preserving the full gold answer list for samples whose stage-2
/// record carries only the first answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub sample_id: String,
    pub answers: Vec<String>,
}

/// One stage-1 record per region the chain references, in first-use order.
/// Regions the chain never selected emit nothing: they carry no supervised
/// chain target.
pub fn decompose(gs: &GroundedSample, chain: &ReasoningChain) -> Result<Vec<Stage1Record>> {
    let violations = validate_chain(chain, gs);
    if !violations.is_empty() {
        return Err(Error::Usage(format!(
            "chain invalid for sample `{}`: {}",
            gs.sample.sample_id,
            violations.join("; ")
        )));
    }
    let chain_text = render_chain(chain, gs);
    chain
        .referenced_regions()
        .into_iter()
        .map(|idx| {
            let region = &gs.regions()[idx];
            let transform = compute_pad_transform(
                region.bbox.width(),
                region.bbox.height(),
                DEFAULT_TARGET_SIDE,
            )?;
            Ok(Stage1Record {
                sample_id: gs.sample.sample_id.clone(),
                image_path: gs.sample.image_path.clone(),
                region_bbox: region.bbox,
                region_crop_transform: transform,
                question: gs.sample.question.clone(),
                description: region.description().to_string(),
                target_chain_text: chain_text.clone(),
            })
        })
        .collect()
}

/// Stage-2 record targeting the first gold answer.
pub fn emit_stage2(gs: &GroundedSample, chain_text: &str) -> Result<Stage2Record> {
    if chain_text.is_empty() {
        return Err(Error::Usage(format!(
            "empty chain text for sample `{}`",
            gs.sample.sample_id
        )));
    }
    Ok(Stage2Record {
        sample_id: gs.sample.sample_id.clone(),
        image_path: gs.sample.image_path.clone(),
        question: gs.sample.question.clone(),
        chain_text: chain_text.to_string(),
        target_answer: gs.sample.answers()[0].clone(),
    })
}

/// Sidecar record retaining every gold answer.
pub fn gold_record(gs: &GroundedSample) -> GoldRecord {
    GoldRecord {
        sample_id: gs.sample.sample_id.clone(),
        answers: gs.sample.answers().to_vec(),
    }
}

/// Fine-tuning reference settings embedded in every manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceHyperparams {
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub batch_size: u32,
    pub epochs: u32,
}

impl Default for ReferenceHyperparams {
    fn default() -> Self {
        ReferenceHyperparams {
            lr_stage1: STAGE1_LEARNING_RATE,
            lr_stage2: STAGE2_LEARNING_RATE,
            batch_size: TRAIN_BATCH_SIZE,
            epochs: TRAIN_EPOCHS,
        }
    }
}

/// Per-stage run manifest: seed, configuration snapshot, output counts,
/// and the reference hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub seed: u64,
    pub stopwords_version: String,
    pub config: serde_json::Value,
    pub counts: BTreeMap<String, u64>,
    pub hyperparams: ReferenceHyperparams,
    /// Unix seconds; honors `SOURCE_DATE_EPOCH` for reproducible output.
    pub timestamp: u64,
}

fn manifest_timestamp() -> u64 {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(secs) = v.parse() {
            return secs;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn build(
        stage: &str,
        seed: u64,
        config: serde_json::Value,
        counts: BTreeMap<String, u64>,
    ) -> RunManifest {
        RunManifest {
            stage: stage.to_string(),
            seed,
            stopwords_version: crate::filter::STOPWORDS_VERSION.to_string(),
            config,
            counts,
            hyperparams: ReferenceHyperparams::default(),
            timestamp: manifest_timestamp(),
        }
    }
}

/// Write a manifest as pretty-printed JSON.
pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(manifest)?))?;
    Ok(())
}
