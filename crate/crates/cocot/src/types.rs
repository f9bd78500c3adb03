//! Shared domain types flowing through every pipeline stage.
//!
//! All types here are immutable value objects validated at construction;
//! decoding goes through the same constructors, so invalid records never
//! materialize. Pixel coordinates live in the original image frame and are
//! stored as integers; fractional coordinates from model output are rounded
//! half-up at ingestion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round half-up to the nearest integer (`-0.5` rounds to `0`).
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Axis-aligned box in original-image pixel coordinates, `x1 < x2`, `y1 < y2`.
///
/// Construction swaps flipped corners before validating, rejects zero-area
/// boxes and non-finite input. Coordinates may be negative until clamped to
/// image bounds by [`crate::geometry::crop_spec`]; pipeline outputs are
/// always clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBBox", into = "RawBBox")]
pub struct BBox {
    x1: i64,
    y1: i64,
    x2: i64,
    y2: i64,
}

#[derive(Serialize, Deserialize)]
struct RawBBox {
    x1: i64,
    y1: i64,
    x2: i64,
    y2: i64,
}

impl TryFrom<RawBBox> for BBox {
    type Error = Error;
    fn try_from(r: RawBBox) -> Result<BBox> {
        BBox::from_pixels(r.x1, r.y1, r.x2, r.y2)
    }
}

impl From<BBox> for RawBBox {
    fn from(b: BBox) -> RawBBox {
        RawBBox { x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 }
    }
}

impl BBox {
    /// Build from possibly fractional, possibly flipped corner coordinates.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<BBox> {
        for (name, v) in [("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)] {
            if !v.is_finite() {
                return Err(Error::Construction(format!("bbox {name} is not finite: {v}")));
            }
        }
        let (x1, x2) = if x1 > x2 { (x2, x1) } else { (x1, x2) };
        let (y1, y2) = if y1 > y2 { (y2, y1) } else { (y1, y2) };
        Self::from_pixels(
            round_half_up(x1),
            round_half_up(y1),
            round_half_up(x2),
            round_half_up(y2),
        )
    }

    /// Build from already-integral coordinates; corners must not be swapped.
    pub fn from_pixels(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<BBox> {
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::Construction(format!(
                "zero-area bbox ({x1},{y1},{x2},{y2})"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> i64 { self.x1 }
    pub fn y1(&self) -> i64 { self.y1 }
    pub fn x2(&self) -> i64 { self.x2 }
    pub fn y2(&self) -> i64 { self.y2 }

    pub fn width(&self) -> i64 { self.x2 - self.x1 }
    pub fn height(&self) -> i64 { self.y2 - self.y1 }
    pub fn area(&self) -> i64 { self.width() * self.height() }

    /// Center point, in fractional pixels.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.x1 + self.x2) as f64 / 2.0,
            (self.y1 + self.y2) as f64 / 2.0,
        )
    }

    /// True when `(x, y)` lies inside the box (closed interval).
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 as f64 && x <= self.x2 as f64 && y >= self.y1 as f64 && y <= self.y2 as f64
    }

    /// Smallest box covering both operands.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Where a region came from in the grounding procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    ModelProposed,
    OcrCorrected,
    OcrKeywordFallback,
}

/// A grounded image region: a box plus the natural-language description
/// the model attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRegion", into = "RawRegion")]
pub struct Region {
    pub bbox: BBox,
    description: String,
    pub source: RegionSource,
}

#[derive(Serialize, Deserialize)]
struct RawRegion {
    bbox: BBox,
    description: String,
    source: RegionSource,
}

impl TryFrom<RawRegion> for Region {
    type Error = Error;
    fn try_from(r: RawRegion) -> Result<Region> {
        Region::new(r.bbox, r.description, r.source)
    }
}

impl From<Region> for RawRegion {
    fn from(r: Region) -> RawRegion {
        RawRegion { bbox: r.bbox, description: r.description, source: r.source }
    }
}

impl Region {
    pub fn new(bbox: BBox, description: impl Into<String>, source: RegionSource) -> Result<Region> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(Error::Construction("region description is empty".into()));
        }
        Ok(Region { bbox, description, source })
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Source dataset tags supported by the filter rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Gqa,
    Docvqa,
    Infovqa,
    Textvqa,
    Visual7w,
    Vqav2,
}

impl Dataset {
    pub const ALL: [Dataset; 6] = [
        Dataset::Gqa,
        Dataset::Docvqa,
        Dataset::Infovqa,
        Dataset::Textvqa,
        Dataset::Visual7w,
        Dataset::Vqav2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dataset::Gqa => "gqa",
            Dataset::Docvqa => "docvqa",
            Dataset::Infovqa => "infovqa",
            Dataset::Textvqa => "textvqa",
            Dataset::Visual7w => "visual7w",
            Dataset::Vqav2 => "vqav2",
        }
    }
}

impl std::str::FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Dataset> {
        match s.to_ascii_lowercase().as_str() {
            "gqa" => Ok(Dataset::Gqa),
            "docvqa" => Ok(Dataset::Docvqa),
            "infovqa" => Ok(Dataset::Infovqa),
            "textvqa" => Ok(Dataset::Textvqa),
            "visual7w" => Ok(Dataset::Visual7w),
            "vqav2" => Ok(Dataset::Vqav2),
            other => Err(Error::Usage(format!("unknown dataset `{other}`"))),
        }
    }
}

/// One image + question + gold answers, the unit flowing through every stage.
///
/// `image_width`/`image_height` are optional: when present they let the
/// pipeline clamp region boxes to image bounds and scale normalized
/// coordinates from model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample", into = "RawSample")]
pub struct Sample {
    pub sample_id: String,
    pub dataset: Dataset,
    pub image_path: String,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
    pub question: String,
    answers: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    sample_id: String,
    dataset: Dataset,
    image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_height: Option<u32>,
    question: String,
    answers: Vec<String>,
}

impl TryFrom<RawSample> for Sample {
    type Error = Error;
    fn try_from(r: RawSample) -> Result<Sample> {
        if r.sample_id.is_empty() {
            return Err(Error::Construction("sample_id is empty".into()));
        }
        if r.answers.is_empty() {
            return Err(Error::Construction(format!(
                "sample `{}` has no gold answers",
                r.sample_id
            )));
        }
        Ok(Sample {
            sample_id: r.sample_id,
            dataset: r.dataset,
            image_path: r.image_path,
            image_width: r.image_width,
            image_height: r.image_height,
            question: r.question,
            answers: r.answers,
        })
    }
}

impl From<Sample> for RawSample {
    fn from(s: Sample) -> RawSample {
        RawSample {
            sample_id: s.sample_id,
            dataset: s.dataset,
            image_path: s.image_path,
            image_width: s.image_width,
            image_height: s.image_height,
            question: s.question,
            answers: s.answers,
        }
    }
}

impl Sample {
    pub fn new(
        sample_id: impl Into<String>,
        dataset: Dataset,
        image_path: impl Into<String>,
        question: impl Into<String>,
        answers: Vec<String>,
    ) -> Result<Sample> {
        RawSample {
            sample_id: sample_id.into(),
            dataset,
            image_path: image_path.into(),
            image_width: None,
            image_height: None,
            question: question.into(),
            answers,
        }
        .try_into()
    }

    pub fn with_dims(mut self, width: u32, height: u32) -> Sample {
        self.image_width = Some(width);
        self.image_height = Some(height);
        self
    }

    /// Gold answers; non-empty by construction.
    pub fn answers(&self) -> &[String] {
        &self.answers
    }
}

/// A sample after grounding: at least one region plus the question keywords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroundedSample", into = "RawGroundedSample")]
pub struct GroundedSample {
    pub sample: Sample,
    regions: Vec<Region>,
    pub keywords: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawGroundedSample {
    sample: Sample,
    regions: Vec<Region>,
    keywords: Vec<String>,
}

impl TryFrom<RawGroundedSample> for GroundedSample {
    type Error = Error;
    fn try_from(r: RawGroundedSample) -> Result<GroundedSample> {
        GroundedSample::new(r.sample, r.regions, r.keywords)
    }
}

impl From<GroundedSample> for RawGroundedSample {
    fn from(g: GroundedSample) -> RawGroundedSample {
        RawGroundedSample { sample: g.sample, regions: g.regions, keywords: g.keywords }
    }
}

impl GroundedSample {
    pub fn new(sample: Sample, regions: Vec<Region>, keywords: Vec<String>) -> Result<GroundedSample> {
        if regions.is_empty() {
            return Err(Error::Construction(format!(
                "grounded sample `{}` has no regions",
                sample.sample_id
            )));
        }
        if let (Some(w), Some(h)) = (sample.image_width, sample.image_height) {
            for (i, r) in regions.iter().enumerate() {
                let b = r.bbox;
                if b.x1() < 0 || b.y1() < 0 || b.x2() > w as i64 || b.y2() > h as i64 {
                    return Err(Error::Construction(format!(
                        "sample `{}` region {i} {b} exceeds image bounds {w}x{h}",
                        sample.sample_id
                    )));
                }
            }
        }
        Ok(GroundedSample { sample, regions, keywords })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }
}

/// One recognized OCR token with its box and confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOcrWord", into = "RawOcrWord")]
pub struct OcrWord {
    text: String,
    pub bbox: BBox,
    confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct RawOcrWord {
    text: String,
    bbox: BBox,
    #[serde(serialize_with = "crate::records::ser_f6")]
    confidence: f64,
}

impl TryFrom<RawOcrWord> for OcrWord {
    type Error = Error;
    fn try_from(r: RawOcrWord) -> Result<OcrWord> {
        OcrWord::new(r.text, r.bbox, r.confidence)
    }
}

impl From<OcrWord> for RawOcrWord {
    fn from(w: OcrWord) -> RawOcrWord {
        RawOcrWord { text: w.text, bbox: w.bbox, confidence: w.confidence }
    }
}

impl OcrWord {
    pub fn new(text: impl Into<String>, bbox: BBox, confidence: f64) -> Result<OcrWord> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::Construction("ocr word text is empty".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Construction(format!(
                "ocr confidence {confidence} outside [0,1]"
            )));
        }
        Ok(OcrWord { text, bbox, confidence })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// All recognized words on one image. Pages with no text are legal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OcrPage {
    pub image_path: String,
    pub words: Vec<OcrWord>,
}

impl OcrPage {
    pub fn new(image_path: impl Into<String>, words: Vec<OcrWord>) -> OcrPage {
        OcrPage { image_path: image_path.into(), words }
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Role a step plays inside a reasoning chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRole {
    KeywordMatch,
    Evidence,
    Conclusion,
    DirectAnswer,
}

impl StepRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepRole::KeywordMatch => "keyword_match",
            StepRole::Evidence => "evidence",
            StepRole::Conclusion => "conclusion",
            StepRole::DirectAnswer => "direct_answer",
        }
    }

    /// A chain stops growing once a step carries one of these roles.
    pub fn is_terminal(&self) -> bool {
        matches!(self, StepRole::Conclusion | StepRole::DirectAnswer)
    }
}

/// How a step attaches to the chain built so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRelation {
    Sequential,
    Parallel,
    None,
}

impl StepRelation {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepRelation::Sequential => "sequential",
            StepRelation::Parallel => "parallel",
            StepRelation::None => "none",
        }
    }
}

/// One reasoning step: which region, what it contributes, how it connects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReasoningStep", into = "RawReasoningStep")]
pub struct ReasoningStep {
    pub region_index: usize,
    pub role: StepRole,
    reasoning: String,
    pub relation: StepRelation,
}

#[derive(Serialize, Deserialize)]
struct RawReasoningStep {
    region_index: usize,
    role: StepRole,
    reasoning: String,
    relation: StepRelation,
}

impl TryFrom<RawReasoningStep> for ReasoningStep {
    type Error = Error;
    fn try_from(r: RawReasoningStep) -> Result<ReasoningStep> {
        ReasoningStep::new(r.region_index, r.role, r.reasoning, r.relation)
    }
}

impl From<ReasoningStep> for RawReasoningStep {
    fn from(s: ReasoningStep) -> RawReasoningStep {
        RawReasoningStep {
            region_index: s.region_index,
            role: s.role,
            reasoning: s.reasoning,
            relation: s.relation,
        }
    }
}

impl ReasoningStep {
    pub fn new(
        region_index: usize,
        role: StepRole,
        reasoning: impl Into<String>,
        relation: StepRelation,
    ) -> Result<ReasoningStep> {
        let reasoning = reasoning.into();
        if reasoning.trim().is_empty() {
            return Err(Error::Construction("step reasoning is empty".into()));
        }
        Ok(ReasoningStep { region_index, role, reasoning, relation })
    }

    pub fn reasoning(&self) -> &str {
        &self.reasoning
    }
}

/// Sequential vs parallel question structure, decided once per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Sequential,
    Parallel,
}

impl QuestionType {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::Sequential => "sequential",
            QuestionType::Parallel => "parallel",
        }
    }
}

/// Ordered steps partitioned into branches.
///
/// Branch structure mirrors the step relations: the chain's first step has
/// relation `none`, each later branch opens with `parallel`, and every
/// non-initial step within a branch is `sequential`. Construction rejects
/// anything else, as well as repeated region indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReasoningChain", into = "RawReasoningChain")]
pub struct ReasoningChain {
    pub question_type: QuestionType,
    steps: Vec<ReasoningStep>,
    branches: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawReasoningChain {
    question_type: QuestionType,
    steps: Vec<ReasoningStep>,
    branches: Vec<Vec<usize>>,
}

impl TryFrom<RawReasoningChain> for ReasoningChain {
    type Error = Error;
    fn try_from(r: RawReasoningChain) -> Result<ReasoningChain> {
        ReasoningChain::new(r.question_type, r.steps, r.branches)
    }
}

impl From<ReasoningChain> for RawReasoningChain {
    fn from(c: ReasoningChain) -> RawReasoningChain {
        RawReasoningChain {
            question_type: c.question_type,
            steps: c.steps,
            branches: c.branches,
        }
    }
}

impl ReasoningChain {
    pub fn new(
        question_type: QuestionType,
        steps: Vec<ReasoningStep>,
        branches: Vec<Vec<usize>>,
    ) -> Result<ReasoningChain> {
        let chain = ReasoningChain { question_type, steps, branches };
        if let Some(problem) = chain.structural_violations().into_iter().next() {
            return Err(Error::Construction(problem));
        }
        Ok(chain)
    }

    pub fn steps(&self) -> &[ReasoningStep] {
        &self.steps
    }

    pub fn branches(&self) -> &[Vec<usize>] {
        &self.branches
    }

    /// Structural invariant check shared by construction and
    /// [`crate::chains::validate_chain`]. Empty when the chain is well formed.
    pub fn structural_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.steps.is_empty() {
            out.push("chain has no steps".to_string());
            return out;
        }
        let mut seen = std::collections::HashSet::new();
        for step in &self.steps {
            if !seen.insert(step.region_index) {
                out.push(format!("region {} repeated", step.region_index));
            }
        }
        // branches must partition 0..len-1 preserving order
        let flat: Vec<usize> = self.branches.iter().flatten().copied().collect();
        let expect: Vec<usize> = (0..self.steps.len()).collect();
        if flat != expect {
            out.push(format!(
                "branches {:?} do not partition step positions 0..{} in order",
                self.branches,
                self.steps.len()
            ));
        } else {
            for (bi, branch) in self.branches.iter().enumerate() {
                for (pos_in_branch, &si) in branch.iter().enumerate() {
                    let rel = self.steps[si].relation;
                    let expected = if si == 0 {
                        StepRelation::None
                    } else if pos_in_branch == 0 {
                        StepRelation::Parallel
                    } else {
                        StepRelation::Sequential
                    };
                    if rel != expected {
                        let what = if si == 0 {
                            "initial relation must be none".to_string()
                        } else {
                            format!(
                                "step {} in branch {} has relation {}, expected {}",
                                si + 1,
                                bi + 1,
                                rel.as_str(),
                                expected.as_str()
                            )
                        };
                        out.push(what);
                    }
                }
            }
        }
        out
    }

    /// Distinct region indices in step order.
    pub fn referenced_regions(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        self.steps
            .iter()
            .filter(|s| seen.insert(s.region_index))
            .map(|s| s.region_index)
            .collect()
    }
}

/// The six inference strategies scored by the evaluation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    Cocot,
    Viscot,
    MinusRar,
    ReplacedRar,
    QwenRar,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Direct,
        Strategy::Cocot,
        Strategy::Viscot,
        Strategy::MinusRar,
        Strategy::ReplacedRar,
        Strategy::QwenRar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Cocot => "cocot",
            Strategy::Viscot => "viscot",
            Strategy::MinusRar => "minus_rar",
            Strategy::ReplacedRar => "replaced_rar",
            Strategy::QwenRar => "qwen_rar",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Strategy> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Strategy::Direct),
            "cocot" => Ok(Strategy::Cocot),
            "viscot" => Ok(Strategy::Viscot),
            "minus_rar" | "-rar" => Ok(Strategy::MinusRar),
            "replaced_rar" => Ok(Strategy::ReplacedRar),
            "qwen_rar" => Ok(Strategy::QwenRar),
            other => Err(Error::Usage(format!("unknown strategy `{other}`"))),
        }
    }
}

/// One model answer attempt: raw response, extracted answer, verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub strategy: Strategy,
    pub raw_response: String,
    pub extracted_answer: String,
    pub correct: bool,
    pub region_count: usize,
    /// Strategy-level failure marker, e.g. `bbox_parse_failed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_identity() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!((b.x1(), b.y1(), b.x2(), b.y2()), (0, 0, 10, 10));
    }

    #[test]
    fn bbox_swap_normalization() {
        let b = BBox::new(10.0, 10.0, 0.0, 0.0).unwrap();
        assert_eq!((b.x1(), b.y1(), b.x2(), b.y2()), (0, 0, 10, 10));
    }

    #[test]
    fn bbox_zero_width_rejected() {
        assert!(matches!(
            BBox::new(5.0, 5.0, 5.0, 9.0),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn bbox_non_finite_rejected() {
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, f64::INFINITY, 1.0, 1.0).is_err());
    }

    #[test]
    fn bbox_rounds_half_up() {
        let b = BBox::new(0.5, 1.49, 10.5, 12.51).unwrap();
        assert_eq!((b.x1(), b.y1(), b.x2(), b.y2()), (1, 1, 11, 13));
    }

    #[test]
    fn region_blank_description_rejected() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(Region::new(b, "   ", RegionSource::ModelProposed).is_err());
    }

    #[test]
    fn sample_requires_answers() {
        assert!(Sample::new("s1", Dataset::Gqa, "img.png", "q?", vec![]).is_err());
    }

    #[test]
    fn ocr_word_confidence_range_enforced_at_decode() {
        let json = r#"{"text":"GDP","bbox":{"x1":0,"y1":0,"x2":5,"y2":5},"confidence":1.2}"#;
        assert!(serde_json::from_str::<OcrWord>(json).is_err());
    }

    #[test]
    fn grounded_sample_requires_regions() {
        let s = Sample::new("s1", Dataset::Gqa, "img.png", "q?", vec!["a".into()]).unwrap();
        assert!(GroundedSample::new(s, vec![], vec![]).is_err());
    }

    #[test]
    fn grounded_sample_bounds_checked_when_dims_known() {
        let s = Sample::new("s1", Dataset::Gqa, "img.png", "q?", vec!["a".into()])
            .unwrap()
            .with_dims(100, 100);
        let big = Region::new(
            BBox::new(0.0, 0.0, 150.0, 50.0).unwrap(),
            "too wide",
            RegionSource::ModelProposed,
        )
        .unwrap();
        assert!(GroundedSample::new(s, vec![big], vec![]).is_err());
    }

    #[test]
    fn chain_rejects_repeated_region() {
        let step = |i, rel| ReasoningStep::new(i, StepRole::Evidence, "r", rel).unwrap();
        let err = ReasoningChain::new(
            QuestionType::Sequential,
            vec![
                step(0, StepRelation::None),
                step(0, StepRelation::Sequential),
            ],
            vec![vec![0, 1]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn chain_relation_pattern_enforced() {
        let step = |i, rel| ReasoningStep::new(i, StepRole::Evidence, "r", rel).unwrap();
        // first step must be none
        assert!(ReasoningChain::new(
            QuestionType::Sequential,
            vec![step(0, StepRelation::Sequential)],
            vec![vec![0]],
        )
        .is_err());
        // branch opener must be parallel
        assert!(ReasoningChain::new(
            QuestionType::Parallel,
            vec![step(0, StepRelation::None), step(1, StepRelation::Sequential)],
            vec![vec![0], vec![1]],
        )
        .is_err());
        // well-formed two-branch chain
        assert!(ReasoningChain::new(
            QuestionType::Parallel,
            vec![
                step(0, StepRelation::None),
                step(1, StepRelation::Sequential),
                step(2, StepRelation::Parallel),
                step(3, StepRelation::Sequential),
            ],
            vec![vec![0, 1], vec![2, 3]],
        )
        .is_ok());
    }

    #[test]
    fn chain_branches_must_partition() {
        let step = |i, rel| ReasoningStep::new(i, StepRole::Evidence, "r", rel).unwrap();
        assert!(ReasoningChain::new(
            QuestionType::Sequential,
            vec![step(0, StepRelation::None), step(1, StepRelation::Sequential)],
            vec![vec![0]],
        )
        .is_err());
    }
}
