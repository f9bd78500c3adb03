//! Registry and renderer for every prompt template used by the pipeline.
//!
//! Bodies are fixed text assets with `{name}` placeholders; rendering is
//! literal single-pass substitution with no recursive expansion, so output
//! is byte-stable. A checksum test pins the bodies against accidental edits.

use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Identifier for each registered template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptId {
    SingleStep,
    MultiStep,
    TrainStage1,
    TrainStage2,
    InferDirect,
    InferCocotStage1,
    InferCocotStage2,
    InferViscotStage1,
    InferViscotStage2,
    InferMinusRar,
    InferReplacedRar,
    InferQwenRar,
    ClassifyQuestionType,
}

impl PromptId {
    pub const ALL: [PromptId; 13] = [
        PromptId::SingleStep,
        PromptId::MultiStep,
        PromptId::TrainStage1,
        PromptId::TrainStage2,
        PromptId::InferDirect,
        PromptId::InferCocotStage1,
        PromptId::InferCocotStage2,
        PromptId::InferViscotStage1,
        PromptId::InferViscotStage2,
        PromptId::InferMinusRar,
        PromptId::InferReplacedRar,
        PromptId::InferQwenRar,
        PromptId::ClassifyQuestionType,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptId::SingleStep => "single_step",
            PromptId::MultiStep => "multi_step",
            PromptId::TrainStage1 => "train_stage1",
            PromptId::TrainStage2 => "train_stage2",
            PromptId::InferDirect => "infer_direct",
            PromptId::InferCocotStage1 => "infer_cocot_stage1",
            PromptId::InferCocotStage2 => "infer_cocot_stage2",
            PromptId::InferViscotStage1 => "infer_viscot_stage1",
            PromptId::InferViscotStage2 => "infer_viscot_stage2",
            PromptId::InferMinusRar => "infer_minus_rar",
            PromptId::InferReplacedRar => "infer_replaced_rar",
            PromptId::InferQwenRar => "infer_qwen_rar",
            PromptId::ClassifyQuestionType => "classify_question_type",
        }
    }
}

impl std::str::FromStr for PromptId {
    type Err = Error;
    fn from_str(s: &str) -> Result<PromptId> {
        PromptId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown prompt id `{s}`")))
    }
}

/// A template body plus the placeholder set derived from it.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: PromptId,
    pub body: &'static str,
    pub required_placeholders: BTreeSet<String>,
}

const SINGLE_STEP: &str = "\
Question: {question}
Keywords: {keywords}
Available region: Region {region_index}: {bbox_content}
Task: Analyze how this region answers the question. Generate a concise explanation (max 30 words).
IMPORTANT: Base your analysis ONLY on what you can actually see in the bbox image above.
Output format: SELECTED_REGION: Region {region_index}, ROLE: direct_answer/evidence, REASONING: [key info] directly answers/provides [question aspect], RELATIONSHIP: none";

const MULTI_STEP: &str = "\
Question: {question}
Progress: Used {used_count}/{total_count} regions. Try to explore most regions before concluding.
Question Type Analysis: {question_type} (Sequential: A->B->C; Parallel: A->B; A->C)
Previous reasoning steps: {previous_steps}
Available regions for this step: {available_regions}
Task: {role_instruction}
Output format: SELECTED_REGION: [Region X], ROLE: [keyword_match/evidence/conclusion], REASONING: [explanation], RELATIONSHIP: [sequential/parallel/none]";

const TRAIN_STAGE1: &str = "\
Question: {question}, Description: {description}
Based on the image and highlighted region, provide a step-by-step reasoning chain to answer the question:";

const TRAIN_STAGE2: &str = "\
Question: {question}, Reasoning Chain: {chain_text}
Based on the reasoning chain, provide the final answer:";

const INFER_DIRECT: &str = "{question}";

const INFER_COCOT_STAGE1: &str = "Based on the description '{description}', analyze this image region and provide relevant information for answering: {question}";

const INFER_COCOT_STAGE2: &str = "Question: {question}, Based on the following analysis: {chain_context}, Provide the final answer:";

const INFER_VISCOT_STAGE1: &str = "<image> {question} Please provide the bounding box coordinate of the region this question asks about.";

const INFER_VISCOT_STAGE2: &str = "<image> {question}";

const INFER_MINUS_RAR: &str = "Description: {description}, Question: {question}, Answer:";

const INFER_REPLACED_RAR: &str = "Content: {content_relation}, Question: {question}, Answer:";

const INFER_QWEN_RAR: &str = "Chain: {chain_text}, Question: {question}, Based on the chain, provide the answer:";

const CLASSIFY_QUESTION_TYPE: &str = "\
Question: {question}
Keywords: {keywords}
Task: Decide which reasoning pattern the question needs (Sequential: A->B->C; Parallel: A->B; A->C).
Answer with a single word: sequential or parallel.";

fn body_for(id: PromptId) -> &'static str {
    match id {
        PromptId::SingleStep => SINGLE_STEP,
        PromptId::MultiStep => MULTI_STEP,
        PromptId::TrainStage1 => TRAIN_STAGE1,
        PromptId::TrainStage2 => TRAIN_STAGE2,
        PromptId::InferDirect => INFER_DIRECT,
        PromptId::InferCocotStage1 => INFER_COCOT_STAGE1,
        PromptId::InferCocotStage2 => INFER_COCOT_STAGE2,
        PromptId::InferViscotStage1 => INFER_VISCOT_STAGE1,
        PromptId::InferViscotStage2 => INFER_VISCOT_STAGE2,
        PromptId::InferMinusRar => INFER_MINUS_RAR,
        PromptId::InferReplacedRar => INFER_REPLACED_RAR,
        PromptId::InferQwenRar => INFER_QWEN_RAR,
        PromptId::ClassifyQuestionType => CLASSIFY_QUESTION_TYPE,
    }
}

/// Scan a body for `{name}` placeholders.
fn scan_placeholders(body: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = body[i + 1..].find('}') {
                let name = &body[i + 1..i + 1 + end];
                if !name.is_empty()
                    && name.chars().all(|c| c.is_ascii_lowercase() || c == '_' || c.is_ascii_digit())
                {
                    out.insert(name.to_string());
                    i += end + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

static REGISTRY: Lazy<BTreeMap<PromptId, PromptTemplate>> = Lazy::new(|| {
    PromptId::ALL
        .iter()
        .map(|&id| {
            let body = body_for(id);
            (
                id,
                PromptTemplate {
                    id,
                    body,
                    required_placeholders: scan_placeholders(body),
                },
            )
        })
        .collect()
});

/// Look up a template by id.
pub fn template(id: PromptId) -> &'static PromptTemplate {
    &REGISTRY[&id]
}

/// All registered templates in enum order.
pub fn all_templates() -> impl Iterator<Item = &'static PromptTemplate> {
    PromptId::ALL.iter().map(|id| &REGISTRY[id])
}

/// Render a template with literal substitution. Bindings must cover the
/// required placeholders exactly: a missing or extra name is a
/// [`Error::Template`].
pub fn render(id: PromptId, bindings: &BTreeMap<String, String>) -> Result<String> {
    let tpl = template(id);
    for name in &tpl.required_placeholders {
        if !bindings.contains_key(name) {
            return Err(Error::Template {
                template: id.as_str().to_string(),
                problem: "missing",
                name: name.clone(),
            });
        }
    }
    for name in bindings.keys() {
        if !tpl.required_placeholders.contains(name) {
            return Err(Error::Template {
                template: id.as_str().to_string(),
                problem: "unexpected",
                name: name.clone(),
            });
        }
    }

    // Single pass over the body: substituted values are never re-scanned.
    let body = tpl.body;
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        // not a registered placeholder: literal braces
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Convenience for building bindings from pairs.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
