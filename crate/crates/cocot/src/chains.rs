//! Relation-aware reasoning chain construction: classify the question
//! type, iteratively select regions through model prompts, parse the
//! structured step outputs, and assemble a branch-structured chain.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::clients::{crop_ref, ModelClient, ModelRequest};
use crate::error::{Error, Result};
use crate::prompts::{render, PromptId};
use crate::types::{
    GroundedSample, QuestionType, ReasoningChain, ReasoningStep, Region, StepRelation, StepRole,
};

/// Knobs for the chain builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainBuilderConfig {
    /// Hard cap on steps; `None` means one step per region.
    pub max_steps: Option<usize>,
    /// Bias the per-step instruction toward visiting most regions before
    /// concluding.
    pub require_exploration: bool,
}

impl Default for ChainBuilderConfig {
    fn default() -> Self {
        ChainBuilderConfig { max_steps: None, require_exploration: true }
    }
}

impl ChainBuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == Some(0) {
            return Err(Error::Config {
                key: "chain.max_steps".into(),
                message: "must be >= 1 when set".into(),
            });
        }
        Ok(())
    }
}

/// A successfully built chain, with a marker for builds cut short by
/// unparseable model output.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltChain {
    pub chain: ReasoningChain,
    pub truncated: bool,
}

/// Ask the model whether the question needs sequential or parallel
/// reasoning. Ambiguous answers default to sequential with a warning.
pub fn classify_question_type(
    model: &dyn ModelClient,
    question: &str,
    keywords: &[String],
) -> Result<QuestionType> {
    if question.is_empty() {
        return Err(Error::Usage("question is empty".into()));
    }
    let prompt = render(
        PromptId::ClassifyQuestionType,
        &crate::prompts::bindings([
            ("question", question.to_string()),
            ("keywords", keywords.join(", ")),
        ]),
    )?;
    let response = model.complete(&ModelRequest::new(prompt)?)?;
    let tokens = crate::filter::tokenize(&response);
    let has_seq = tokens.iter().any(|t| t == "sequential");
    let has_par = tokens.iter().any(|t| t == "parallel");
    Ok(match (has_seq, has_par) {
        (false, true) => QuestionType::Parallel,
        (true, false) => QuestionType::Sequential,
        _ => {
            log::warn!("ambiguous question type answer {response:?}; defaulting to sequential");
            QuestionType::Sequential
        }
    })
}

static FIELD_LABEL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(selected[_\s]?region|role|reasoning|relationship)\s*:").unwrap()
});

static REGION_INDEX: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)region\s*#?\s*(\d+)").unwrap());

static BARE_INDEX: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\(?(\d+)\)?$").unwrap());

fn canonical_label(raw: &str) -> &'static str {
    let lower = raw.to_lowercase();
    if lower.starts_with("selected") {
        "SELECTED_REGION"
    } else if lower.starts_with("role") {
        "ROLE"
    } else if lower.starts_with("reasoning") {
        "REASONING"
    } else {
        "RELATIONSHIP"
    }
}

/// Trim a field value: whitespace, wrapping brackets, trailing separators.
fn clean_value(raw: &str) -> String {
    let mut v = raw.trim();
    loop {
        let before = v;
        v = v.trim_end_matches([',', ';', '.']).trim();
        if v.len() >= 2 && v.starts_with('[') && v.ends_with(']') {
            v = v[1..v.len() - 1].trim();
        }
        if v == before {
            break;
        }
    }
    v.to_string()
}

fn parse_error(field: &str, raw: &str) -> Error {
    Error::Parse { field: field.to_string(), raw: raw.to_string() }
}

/// Parse one structured step out of raw model text.
///
/// Accepts the canonical format
/// `SELECTED_REGION: [Region X], ROLE: [...], REASONING: [...], RELATIONSHIP: [...]`
/// with case-insensitive labels, optional surrounding brackets, and either
/// comma or newline separators, in any field order. Missing fields and
/// unknown role/relation tokens are parse errors naming the field; a region
/// index at or beyond `region_count` is a range error.
pub fn parse_step_output(text: &str, region_count: usize) -> Result<ReasoningStep> {
    if region_count == 0 {
        return Err(Error::Usage("region_count must be >= 1".into()));
    }
    let matches: Vec<(usize, usize, &'static str)> = FIELD_LABEL
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), canonical_label(&c[1]))
        })
        .collect();

    let mut fields: BTreeMap<&'static str, String> = BTreeMap::new();
    for (i, (_, end, label)) in matches.iter().enumerate() {
        let value_end = matches.get(i + 1).map(|m| m.0).unwrap_or(text.len());
        // first occurrence of a label wins
        fields
            .entry(label)
            .or_insert_with(|| clean_value(&text[*end..value_end]));
    }

    let field = |name: &'static str| -> Result<&String> {
        fields.get(name).ok_or_else(|| parse_error(name, text))
    };

    let region_value = field("SELECTED_REGION")?;
    let index: usize = REGION_INDEX
        .captures(region_value)
        .or_else(|| BARE_INDEX.captures(region_value))
        .and_then(|c| c[1].parse().ok())
        .ok_or_else(|| parse_error("SELECTED_REGION", text))?;
    if index >= region_count {
        return Err(Error::Range { index, count: region_count });
    }

    let role_token = field("ROLE")?
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .replace('-', "_");
    let role = match role_token.as_str() {
        "keyword_match" => StepRole::KeywordMatch,
        "evidence" => StepRole::Evidence,
        "conclusion" => StepRole::Conclusion,
        "direct_answer" => StepRole::DirectAnswer,
        _ => return Err(parse_error("ROLE", text)),
    };

    let reasoning = field("REASONING")?.clone();
    if reasoning.is_empty() {
        return Err(parse_error("REASONING", text));
    }

    let relation = match field("RELATIONSHIP")?.to_lowercase().as_str() {
        "sequential" => StepRelation::Sequential,
        "parallel" => StepRelation::Parallel,
        "none" => StepRelation::None,
        _ => return Err(parse_error("RELATIONSHIP", text)),
    };

    ReasoningStep::new(index, role, reasoning, relation)
}

/// One `Region i: [x1, y1, x2, y2] description` listing line.
pub fn region_line(index: usize, region: &Region) -> String {
    format!("Region {index}: {} {}", region.bbox, region.description())
}

fn step_line(number: usize, step: &ReasoningStep) -> String {
    format!(
        "Step {number} [Region {}, {}]: {}",
        step.region_index,
        step.role.as_str(),
        step.reasoning()
    )
}

/// Letter name for a step position: A..Z, then AA, AB, ...
fn step_letter(mut index: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (index % 26) as u8);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

fn role_instruction(first_step: bool, require_exploration: bool) -> &'static str {
    if first_step {
        "Select the entry region that best matches the question keywords."
    } else if require_exploration {
        "Choose the next most relevant region and state its relationship to the previous step. \
         Conclude only once the question is fully answered or regions are exhausted."
    } else {
        "Choose the next most relevant region and state its relationship to the previous step, \
         or conclude if the question is already answered."
    }
}

fn retry_prompt(original: &str, error: &Error) -> String {
    format!(
        "{original}\nYour previous response could not be parsed ({error}). \
         Reply again using exactly the output format."
    )
}

/// Parse a step, retrying once with an error-annotated prompt. The second
/// failure is returned to the caller.
fn request_step(
    model: &dyn ModelClient,
    prompt: &str,
    images: &[String],
    region_count: usize,
    available: &[usize],
) -> Result<ReasoningStep> {
    let attempt = |p: &str| -> Result<ReasoningStep> {
        let req = ModelRequest::new(p)?.with_images(images.to_vec());
        let response = model.complete(&req)?;
        let step = parse_step_output(&response, region_count)?;
        if !available.contains(&step.region_index) {
            return Err(Error::Range { index: step.region_index, count: region_count });
        }
        Ok(step)
    };
    match attempt(prompt) {
        Ok(step) => Ok(step),
        Err(e @ (Error::Parse { .. } | Error::Range { .. })) => {
            log::warn!("step output unparseable ({e}); retrying once");
            attempt(&retry_prompt(prompt, &e))
        }
        Err(e) => Err(e),
    }
}

/// Force the relation pattern the chain structure requires: the first step
/// carries `none`; later steps carry `sequential` unless they open a new
/// branch with `parallel`.
fn normalize_relation(parsed: StepRelation, first_step: bool) -> StepRelation {
    match (first_step, parsed) {
        (true, StepRelation::None) => StepRelation::None,
        (true, other) => {
            log::warn!("first step relation {} coerced to none", other.as_str());
            StepRelation::None
        }
        (false, StepRelation::None) => {
            log::warn!("mid-chain relation none coerced to sequential");
            StepRelation::Sequential
        }
        (false, other) => other,
    }
}

/// Build the reasoning chain for a grounded sample.
///
/// Single-region samples get one single-step prompt. Otherwise the builder
/// iterates: render the multi-step prompt with the progress counter,
/// previous steps and remaining candidate regions; parse the selected step;
/// extend the current branch on `sequential` or open a new branch on
/// `parallel`. It stops on a conclusion/direct-answer role, when regions
/// are exhausted, or at `max_steps`. A step that stays unparseable after
/// one retry truncates the chain (or fails it when no step exists yet).
pub fn build_chain(
    model: &dyn ModelClient,
    gs: &GroundedSample,
    cfg: &ChainBuilderConfig,
) -> Result<BuiltChain> {
    let regions = gs.regions();
    let n = regions.len();
    if n == 0 {
        return Err(Error::Usage("grounded sample has no regions".into()));
    }
    let sample = &gs.sample;
    let keywords = gs.keywords.join(", ");

    if n == 1 {
        let prompt = render(
            PromptId::SingleStep,
            &crate::prompts::bindings([
                ("question", sample.question.clone()),
                ("keywords", keywords),
                ("region_index", "0".to_string()),
                ("bbox_content", format!("{} {}", regions[0].bbox, regions[0].description())),
            ]),
        )?;
        let images = vec![sample.image_path.clone(), crop_ref(&sample.image_path, &regions[0].bbox)];
        let step = request_step(model, &prompt, &images, 1, &[0]).map_err(|e| {
            Error::ChainFailed(format!("sample `{}`: first step unparseable: {e}", sample.sample_id))
        })?;
        let step = ReasoningStep::new(
            step.region_index,
            step.role,
            step.reasoning(),
            normalize_relation(step.relation, true),
        )?;
        let chain = ReasoningChain::new(QuestionType::Sequential, vec![step], vec![vec![0]])?;
        return Ok(BuiltChain { chain, truncated: false });
    }

    let question_type = classify_question_type(model, &sample.question, &gs.keywords)?;
    let max_steps = cfg.max_steps.unwrap_or(n);
    let mut candidates: Vec<usize> = (0..n).collect();
    let mut steps: Vec<ReasoningStep> = Vec::new();
    let mut branches: Vec<Vec<usize>> = Vec::new();
    let mut truncated = false;

    while !candidates.is_empty() && steps.len() < max_steps {
        let previous_steps = if steps.is_empty() {
            "(none)".to_string()
        } else {
            steps
                .iter()
                .enumerate()
                .map(|(i, s)| step_line(i + 1, s))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let available_regions = candidates
            .iter()
            .map(|&i| region_line(i, &regions[i]))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            PromptId::MultiStep,
            &crate::prompts::bindings([
                ("question", sample.question.clone()),
                ("used_count", steps.len().to_string()),
                ("total_count", n.to_string()),
                ("question_type", question_type.as_str().to_string()),
                ("previous_steps", previous_steps),
                ("available_regions", available_regions),
                (
                    "role_instruction",
                    role_instruction(steps.is_empty(), cfg.require_exploration).to_string(),
                ),
            ]),
        )?;
        let mut images = vec![sample.image_path.clone()];
        images.extend(candidates.iter().map(|&i| crop_ref(&sample.image_path, &regions[i].bbox)));

        let step = match request_step(model, &prompt, &images, n, &candidates) {
            Ok(step) => step,
            Err(e @ (Error::Parse { .. } | Error::Range { .. })) => {
                if steps.is_empty() {
                    return Err(Error::ChainFailed(format!(
                        "sample `{}`: first step unparseable: {e}",
                        sample.sample_id
                    )));
                }
                log::warn!(
                    "sample `{}`: truncating chain at {} steps ({e})",
                    sample.sample_id,
                    steps.len()
                );
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };

        let relation = normalize_relation(step.relation, steps.is_empty());
        let step =
            ReasoningStep::new(step.region_index, step.role, step.reasoning(), relation)?;
        let position = steps.len();
        if position == 0 {
            branches.push(vec![0]);
        } else if relation == StepRelation::Parallel {
            branches.push(vec![position]);
        } else {
            branches.last_mut().unwrap().push(position);
        }
        candidates.retain(|&i| i != step.region_index);
        let terminal = step.role.is_terminal();
        steps.push(step);
        if terminal {
            break;
        }
    }

    let chain = ReasoningChain::new(question_type, steps, branches)?;
    Ok(BuiltChain { chain, truncated })
}

/// Deterministic textual form of a chain: one step line per step, branches
/// separated by a blank line, closed by arrow notation over step letters.
pub fn render_chain(chain: &ReasoningChain, gs: &GroundedSample) -> String {
    debug_assert!(validate_chain(chain, gs).is_empty());
    let steps = chain.steps();
    let mut blocks = Vec::new();
    for branch in chain.branches() {
        let block = branch
            .iter()
            .map(|&i| step_line(i + 1, &steps[i]))
            .collect::<Vec<_>>()
            .join("\n");
        blocks.push(block);
    }
    let notation = chain
        .branches()
        .iter()
        .map(|branch| {
            branch.iter().map(|&i| step_letter(i)).collect::<Vec<_>>().join("\u{2192}")
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!("{}\nChain: {notation}", blocks.join("\n\n"))
}

/// Violations of the chain invariants relative to its grounded sample;
/// empty for a well-formed chain.
pub fn validate_chain(chain: &ReasoningChain, gs: &GroundedSample) -> Vec<String> {
    let mut out = chain.structural_violations();
    let count = gs.regions().len();
    for step in chain.steps() {
        if step.region_index >= count {
            out.push(format!(
                "region {} out of range for {count} regions",
                step.region_index
            ));
        }
    }
    out
}
