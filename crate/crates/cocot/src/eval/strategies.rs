//! The six inference strategy runners.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::chains::region_line;
use crate::clients::{crop_ref, ModelClient, ModelRequest};
use crate::error::{Error, Result};
use crate::geometry::crop_spec;
use crate::prompts::{bindings, render, PromptId};
use crate::records::ChainedRecord;
use crate::types::{BBox, PredictionRecord, Strategy};

use super::matching::{answers_match, extract_core_answer, MatchConfig};

static BRACKET_QUAD: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"\[\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\]",
    )
    .unwrap()
});

/// Parse the box a two-stage responder points at. Values all within `[0,1]`
/// are normalized coordinates and need image dimensions to scale; anything
/// else is absolute pixels. Known dimensions clamp the result to bounds.
pub fn parse_viscot_bbox(text: &str, dims: Option<(u32, u32)>) -> Option<BBox> {
    let caps = BRACKET_QUAD.captures(text)?;
    let v: Vec<f64> = (1..=4).map(|i| caps[i].parse::<f64>().unwrap()).collect();
    let normalized = v.iter().all(|&x| (0.0..=1.0).contains(&x));
    let bbox = if normalized {
        let (w, h) = dims?;
        BBox::new(
            v[0] * w as f64,
            v[1] * h as f64,
            v[2] * w as f64,
            v[3] * h as f64,
        )
        .ok()?
    } else {
        BBox::new(v[0], v[1], v[2], v[3]).ok()?
    };
    match dims {
        Some((w, h)) => crop_spec(&bbox, w as i64, h as i64).ok(),
        None => Some(bbox),
    }
}

fn complete(model: &dyn ModelClient, prompt: String, images: Vec<String>) -> Result<String> {
    model.complete(&ModelRequest::new(prompt)?.with_images(images))
}

fn described_regions(item: &ChainedRecord) -> String {
    item.regions
        .iter()
        .enumerate()
        .map(|(i, r)| region_line(i, r))
        .collect::<Vec<_>>()
        .join("; ")
}

fn regions_with_relations(item: &ChainedRecord) -> String {
    item.regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let relation = item
                .region_relations
                .as_ref()
                .and_then(|rels| rels.get(i))
                .map(String::as_str)
                .unwrap_or("related");
            format!("Region {i} ({relation}): {}", r.description())
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn finish(
    item: &ChainedRecord,
    strategy: Strategy,
    raw_response: String,
    flag: Option<String>,
    cfg: &MatchConfig,
) -> PredictionRecord {
    let extracted_answer = extract_core_answer(&raw_response, cfg);
    let correct = answers_match(&raw_response, item.sample.answers(), cfg);
    PredictionRecord {
        sample_id: item.sample.sample_id.clone(),
        strategy,
        raw_response,
        extracted_answer,
        correct,
        region_count: item.regions.len(),
        flag,
    }
}

fn dims(item: &ChainedRecord) -> Option<(u32, u32)> {
    item.sample.image_width.zip(item.sample.image_height)
}

/// Run one strategy over one chained sample and score the response.
pub fn run_strategy(
    strategy: Strategy,
    model: &dyn ModelClient,
    item: &ChainedRecord,
    cfg: &MatchConfig,
) -> Result<PredictionRecord> {
    let sample = &item.sample;
    let image = sample.image_path.clone();
    let question = sample.question.clone();

    let record = match strategy {
        Strategy::Direct => {
            let prompt = render(PromptId::InferDirect, &bindings([("question", question)]))?;
            let raw = complete(model, prompt, vec![image])?;
            finish(item, strategy, raw, None, cfg)
        }
        Strategy::Cocot => {
            let mut analyses = Vec::new();
            for (i, region) in item.regions.iter().enumerate() {
                let prompt = render(
                    PromptId::InferCocotStage1,
                    &bindings([
                        ("description", region.description().to_string()),
                        ("question", question.clone()),
                    ]),
                )?;
                let images = vec![image.clone(), crop_ref(&image, &region.bbox)];
                let analysis = complete(model, prompt, images)?;
                analyses.push(format!("Region {i}: {analysis}"));
            }
            let prompt = render(
                PromptId::InferCocotStage2,
                &bindings([
                    ("question", question),
                    ("chain_context", analyses.join("\n")),
                ]),
            )?;
            let raw = complete(model, prompt, vec![image])?;
            finish(item, strategy, raw, None, cfg)
        }
        Strategy::Viscot => {
            let stage1 = render(
                PromptId::InferViscotStage1,
                &bindings([("question", question.clone())]),
            )?;
            let located = complete(model, stage1, vec![image.clone()])?;
            match parse_viscot_bbox(&located, dims(item)) {
                Some(bbox) => {
                    let stage2 = render(
                        PromptId::InferViscotStage2,
                        &bindings([("question", question)]),
                    )?;
                    let raw = complete(model, stage2, vec![crop_ref(&image, &bbox)])?;
                    finish(item, strategy, raw, None, cfg)
                }
                None => PredictionRecord {
                    sample_id: sample.sample_id.clone(),
                    strategy,
                    raw_response: located,
                    extracted_answer: String::new(),
                    correct: false,
                    region_count: item.regions.len(),
                    flag: Some("bbox_parse_failed".to_string()),
                },
            }
        }
        Strategy::MinusRar => {
            let prompt = render(
                PromptId::InferMinusRar,
                &bindings([
                    ("description", described_regions(item)),
                    ("question", question),
                ]),
            )?;
            let raw = complete(model, prompt, vec![image])?;
            finish(item, strategy, raw, None, cfg)
        }
        Strategy::ReplacedRar => {
            let prompt = render(
                PromptId::InferReplacedRar,
                &bindings([
                    ("content_relation", regions_with_relations(item)),
                    ("question", question),
                ]),
            )?;
            let raw = complete(model, prompt, vec![image])?;
            finish(item, strategy, raw, None, cfg)
        }
        Strategy::QwenRar => {
            if item.chain_text.is_empty() {
                return Err(Error::Usage(format!(
                    "qwen_rar needs chain text for sample `{}`",
                    sample.sample_id
                )));
            }
            let prompt = render(
                PromptId::InferQwenRar,
                &bindings([
                    ("chain_text", item.chain_text.clone()),
                    ("question", question),
                ]),
            )?;
            let raw = complete(model, prompt, vec![image])?;
            finish(item, strategy, raw, None, cfg)
        }
    };
    Ok(record)
}
