//! Multi-region grounding: propose regions with the model, reconcile each
//! box against OCR content, and fall back to keyword word-boxes when the
//! model gives nothing usable.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::clients::{ModelClient, ModelRequest, OcrClient};
use crate::error::{Error, Result};
use crate::filter::extract_keywords;
use crate::geometry::{crop_spec, iou};
use crate::types::{BBox, GroundedSample, OcrPage, OcrWord, Region, RegionSource, Sample};

/// Knobs for the correction search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    /// Minimum content/description similarity for a region to count as
    /// matching; below it the search for a better region kicks in.
    pub similarity_threshold: f64,
    pub max_regions: usize,
    /// Vertical center distance within which OCR words merge into one line.
    pub line_merge_gap_px: i64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig { similarity_threshold: 0.5, max_regions: 8, line_merge_gap_px: 6 }
    }
}

impl GroundingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config {
                key: "grounding.similarity_threshold".into(),
                message: "must be in [0,1]".into(),
            });
        }
        if self.max_regions == 0 {
            return Err(Error::Config {
                key: "grounding.max_regions".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.line_merge_gap_px < 0 {
            return Err(Error::Config {
                key: "grounding.line_merge_gap_px".into(),
                message: "must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Prompt asking the model for candidate regions. The exact response format
/// is recommended, not required: parsing is lenient.
pub fn proposal_prompt(question: &str) -> String {
    format!(
        "Identify the image regions most relevant to answering the question and describe each one. \
List one region per line as Region <i>: [x1, y1, x2, y2] <description>\nQuestion: {question}"
    )
}

static REGION_LINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"\[\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\]\s*:?\s*(.*)$",
    )
    .unwrap()
});

static CANDIDATE_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)region\s*\d+|\[[^\]]*\d[^\]]*,[^\]]*\d[^\]]*\]").unwrap());

/// Parse a region/description list out of raw model text. Malformed entries
/// are skipped with a warning; a response with region-like lines but zero
/// parseable entries is a parse error carrying the raw text.
pub fn parse_proposals(response: &str, max_regions: usize) -> Result<Vec<Region>> {
    let mut regions = Vec::new();
    let mut saw_candidate = false;
    for line in response.lines() {
        if !CANDIDATE_LINE.is_match(line) {
            continue;
        }
        saw_candidate = true;
        let Some(caps) = REGION_LINE.captures(line) else {
            log::warn!("skipping malformed region line: {line:?}");
            continue;
        };
        let coord = |i: usize| caps[i].parse::<f64>().unwrap();
        let bbox = match BBox::new(coord(1), coord(2), coord(3), coord(4)) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("skipping region with invalid box ({e}): {line:?}");
                continue;
            }
        };
        let description = caps[5].trim();
        match Region::new(bbox, description, RegionSource::ModelProposed) {
            Ok(r) => regions.push(r),
            Err(_) => {
                log::warn!("skipping region with empty description: {line:?}");
            }
        }
        if regions.len() == max_regions {
            break;
        }
    }
    if regions.is_empty() && saw_candidate {
        return Err(Error::Parse { field: "regions".into(), raw: response.to_string() });
    }
    Ok(regions)
}

/// Ask the model for regions relevant to the question.
pub fn propose_regions(
    model: &dyn ModelClient,
    image_ref: &str,
    question: &str,
    cfg: &GroundingConfig,
) -> Result<Vec<Region>> {
    if question.is_empty() {
        return Err(Error::Usage("question is empty".into()));
    }
    let req = ModelRequest::new(proposal_prompt(question))?
        .with_images(vec![image_ref.to_string()]);
    let response = model.complete(&req)?;
    parse_proposals(&response, cfg.max_regions)
}

/// Group words into reading-order lines: top-to-bottom by vertical center
/// (within `gap` px of the line anchor), left-to-right within a line.
fn group_lines<'a>(words: &[&'a OcrWord], gap: i64) -> Vec<Vec<&'a OcrWord>> {
    let mut sorted: Vec<&OcrWord> = words.to_vec();
    sorted.sort_by(|a, b| {
        let (ax, ay) = a.bbox.center();
        let (bx, by) = b.bbox.center();
        ay.partial_cmp(&by)
            .unwrap()
            .then(ax.partial_cmp(&bx).unwrap())
            .then(a.text().cmp(b.text()))
    });
    let mut lines: Vec<Vec<&OcrWord>> = Vec::new();
    let mut anchor_y = f64::NEG_INFINITY;
    for w in sorted {
        let (_, cy) = w.bbox.center();
        if lines.is_empty() || cy - anchor_y > gap as f64 {
            lines.push(vec![w]);
            anchor_y = cy;
        } else {
            lines.last_mut().unwrap().push(w);
        }
    }
    for line in &mut lines {
        line.sort_by(|a, b| {
            let (ax, _) = a.bbox.center();
            let (bx, _) = b.bbox.center();
            ax.partial_cmp(&bx).unwrap()
        });
    }
    lines
}

/// Text of all OCR words whose box center falls inside `b`, concatenated in
/// reading order (lines joined by newline, words by space). Empty when no
/// word qualifies.
pub fn region_text(page: &OcrPage, b: &BBox, line_merge_gap_px: i64) -> String {
    let inside: Vec<&OcrWord> = page
        .words
        .iter()
        .filter(|w| {
            let (cx, cy) = w.bbox.center();
            b.contains_point(cx, cy)
        })
        .collect();
    group_lines(&inside, line_merge_gap_px)
        .iter()
        .map(|line| line.iter().map(|w| w.text()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Token-level Jaccard similarity over keyword-normalized tokens. Both
/// sides empty after normalization is a perfect match; exactly one empty
/// is a total mismatch.
pub fn text_similarity(a: &str, b: &str) -> f64 {
    let ta: std::collections::HashSet<String> = extract_keywords(a).into_iter().collect();
    let tb: std::collections::HashSet<String> = extract_keywords(b).into_iter().collect();
    match (ta.is_empty(), tb.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let inter = ta.intersection(&tb).count();
            let union = ta.union(&tb).count();
            inter as f64 / union as f64
        }
    }
}

/// Search the page for a box whose content best matches `description`.
/// Candidates are unions of 1 to 4 contiguous OCR lines; the winner must
/// reach the similarity threshold. Ties break toward smaller area, then
/// topmost, then leftmost.
pub fn search_better_region(
    page: &OcrPage,
    description: &str,
    cfg: &GroundingConfig,
) -> Option<BBox> {
    let all: Vec<&OcrWord> = page.words.iter().collect();
    let lines = group_lines(&all, cfg.line_merge_gap_px);
    if lines.is_empty() {
        return None;
    }
    let line_boxes: Vec<BBox> = lines
        .iter()
        .map(|line| {
            let mut b = line[0].bbox;
            for w in &line[1..] {
                b = b.union(&w.bbox);
            }
            b
        })
        .collect();

    let mut best: Option<(f64, BBox)> = None;
    for start in 0..line_boxes.len() {
        for size in 1..=4usize {
            let end = start + size;
            if end > line_boxes.len() {
                break;
            }
            let mut candidate = line_boxes[start];
            for b in &line_boxes[start + 1..end] {
                candidate = candidate.union(b);
            }
            let sim = text_similarity(
                &region_text(page, &candidate, cfg.line_merge_gap_px),
                description,
            );
            if sim < cfg.similarity_threshold {
                continue;
            }
            let better = match &best {
                None => true,
                Some((best_sim, best_box)) => {
                    sim > *best_sim
                        || (sim == *best_sim
                            && (candidate.area(), candidate.y1(), candidate.x1())
                                < (best_box.area(), best_box.y1(), best_box.x1()))
                }
            };
            if better {
                best = Some((sim, candidate));
            }
        }
    }
    best.map(|(_, b)| b)
}

/// Keep a region whose OCR content already matches its description;
/// otherwise relocate it to the best-matching OCR line group. When nothing
/// on the page qualifies the original box stays, with a warning.
pub fn correct_region(page: &OcrPage, region: &Region, cfg: &GroundingConfig) -> Region {
    let current = text_similarity(
        &region_text(page, &region.bbox, cfg.line_merge_gap_px),
        region.description(),
    );
    if current >= cfg.similarity_threshold {
        return region.clone();
    }
    match search_better_region(page, region.description(), cfg) {
        Some(bbox) => Region::new(bbox, region.description(), RegionSource::OcrCorrected)
            .expect("description validated on the original region"),
        None => {
            log::warn!(
                "no better region found for description {:?} (similarity {current:.3})",
                region.description()
            );
            region.clone()
        }
    }
}

fn normalized_word(text: &str) -> String {
    text.to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect()
}

/// Regions taken straight from OCR word boxes whose normalized text equals
/// a question keyword. Near-duplicate boxes (IoU > 0.9) collapse to the
/// first occurrence.
pub fn fallback_keyword_regions(
    page: &OcrPage,
    keywords: &[String],
    cfg: &GroundingConfig,
) -> Vec<Region> {
    let mut out: Vec<Region> = Vec::new();
    for keyword in keywords {
        for word in &page.words {
            if normalized_word(word.text()) != *keyword {
                continue;
            }
            if out.iter().any(|r| iou(&r.bbox, &word.bbox) > 0.9) {
                continue;
            }
            if let Ok(region) =
                Region::new(word.bbox, keyword.clone(), RegionSource::OcrKeywordFallback)
            {
                out.push(region);
            }
            if out.len() == cfg.max_regions {
                return out;
            }
        }
    }
    out
}

/// Clamp regions to the image when dimensions are known, dropping any that
/// fall fully outside.
fn clamp_regions(sample: &Sample, regions: Vec<Region>) -> Vec<Region> {
    let (Some(w), Some(h)) = (sample.image_width, sample.image_height) else {
        return regions;
    };
    regions
        .into_iter()
        .filter_map(|r| match crop_spec(&r.bbox, w as i64, h as i64) {
            Ok(clamped) => {
                Some(Region::new(clamped, r.description(), r.source).expect("description kept"))
            }
            Err(_) => {
                log::warn!(
                    "dropping region {} fully outside {w}x{h} image of `{}`",
                    r.bbox,
                    sample.sample_id
                );
                None
            }
        })
        .collect()
}

/// The full grounding procedure for one sample: propose, correct against
/// OCR, fall back to keyword boxes, and attach the question keywords.
pub fn ground_sample(
    model: &dyn ModelClient,
    ocr: &dyn OcrClient,
    sample: &Sample,
    cfg: &GroundingConfig,
) -> Result<GroundedSample> {
    let page = ocr.ocr(&sample.image_path)?;
    let keywords = extract_keywords(&sample.question);

    let proposals = match propose_regions(model, &sample.image_path, &sample.question, cfg) {
        Ok(regions) => regions,
        Err(Error::Parse { raw, .. }) => {
            log::warn!(
                "unusable region proposals for `{}`; falling back to OCR keywords: {raw:?}",
                sample.sample_id
            );
            Vec::new()
        }
        Err(e) => return Err(e),
    };

    let corrected: Vec<Region> =
        proposals.iter().map(|r| correct_region(&page, r, cfg)).collect();
    let mut regions = clamp_regions(sample, corrected);

    if regions.is_empty() {
        regions = clamp_regions(sample, fallback_keyword_regions(&page, &keywords, cfg));
    }
    if regions.is_empty() {
        return Err(Error::GroundingFailed(format!(
            "sample `{}`: no regions from proposals or keyword fallback",
            sample.sample_id
        )));
    }
    GroundedSample::new(sample.clone(), regions, keywords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::ScriptedModelClient;
    use crate::clients::{FixtureRule, ScriptedOcrClient};
    use crate::types::Dataset;

    fn word(text: &str, x1: i64, y1: i64, x2: i64, y2: i64) -> OcrWord {
        OcrWord::new(text, BBox::from_pixels(x1, y1, x2, y2).unwrap(), 0.95).unwrap()
    }

    fn cfg() -> GroundingConfig {
        GroundingConfig::default()
    }

    #[test]
    fn parse_well_formed_proposals() {
        let response = "Region 0: [10, 10, 50, 30] price label\n\
                        Region 1: [60, 10, 120, 30] total row\n\
                        Region 2: [10, 40, 50, 60] date field";
        let regions = parse_proposals(response, 8).unwrap();
        assert_eq!(regions.len(), 3);
        assert_eq!(regions[0].description(), "price label");
        assert_eq!(regions[1].bbox, BBox::from_pixels(60, 10, 120, 30).unwrap());
        assert!(regions.iter().all(|r| r.source == RegionSource::ModelProposed));
    }

    #[test]
    fn parse_no_boxes_is_empty() {
        assert!(parse_proposals("I cannot identify specific regions here.", 8)
            .unwrap()
            .is_empty());
        assert!(parse_proposals("", 8).unwrap().is_empty());
    }

    #[test]
    fn parse_skips_malformed_keeps_valid() {
        let response = "Region 0: [10, 10, broken\n\
                        Region 1: [60, 10, 120, 30] total row\n\
                        Region 2: [10, 40, 50, 60] date field";
        let regions = parse_proposals(response, 8).unwrap();
        assert_eq!(regions.len(), 2);
    }

    #[test]
    fn parse_all_malformed_is_parse_error() {
        let response = "Region 0: [10, 10, broken\nRegion 1: [also, bad";
        assert!(matches!(
            parse_proposals(response, 8),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn parse_truncates_to_max_regions() {
        let response = (0..10)
            .map(|i| format!("Region {i}: [{}, 0, {}, 10] r{i}", i * 20, i * 20 + 10))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(parse_proposals(&response, 4).unwrap().len(), 4);
    }

    #[test]
    fn region_text_single_containment() {
        let page = OcrPage::new("i.png", vec![word("GDP", 10, 10, 40, 20)]);
        let b = BBox::from_pixels(0, 0, 50, 30).unwrap();
        assert_eq!(region_text(&page, &b, 6), "GDP");
        assert_eq!(region_text(&OcrPage::new("i.png", vec![]), &b, 6), "");
    }

    #[test]
    fn region_text_reading_order() {
        let page = OcrPage::new(
            "i.png",
            vec![
                word("revenue", 60, 10, 120, 22),
                word("2020", 10, 40, 50, 52),
                word("total", 10, 10, 55, 22),
            ],
        );
        let b = BBox::from_pixels(0, 0, 200, 100).unwrap();
        assert_eq!(region_text(&page, &b, 6), "total revenue\n2020");
    }

    #[test]
    fn similarity_cases() {
        assert_eq!(text_similarity("GDP growth 2019", "GDP growth 2019"), 1.0);
        assert_eq!(text_similarity("alpha", "beta"), 0.0);
        let v = text_similarity("total revenue", "revenue total 2020");
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(text_similarity("", ""), 1.0);
        assert_eq!(text_similarity("the of", "a an"), 1.0, "all stopwords on both sides");
        assert_eq!(text_similarity("", "words"), 0.0);
    }

    fn fixture_page() -> OcrPage {
        OcrPage::new(
            "doc.png",
            vec![
                word("total", 10, 10, 55, 22),
                word("revenue", 60, 10, 120, 22),
                word("2020", 10, 40, 50, 52),
                word("net", 10, 70, 35, 82),
                word("profit", 40, 70, 90, 82),
            ],
        )
    }

    #[test]
    fn search_finds_exact_line() {
        let found = search_better_region(&fixture_page(), "total revenue", &cfg()).unwrap();
        assert_eq!(found, BBox::from_pixels(10, 10, 120, 22).unwrap());
    }

    #[test]
    fn search_empty_page_absent() {
        assert!(search_better_region(&OcrPage::new("i.png", vec![]), "anything", &cfg()).is_none());
    }

    #[test]
    fn search_tie_breaks_to_smaller_box() {
        // two lines each containing exactly "total"; second line is wider
        let page = OcrPage::new(
            "i.png",
            vec![word("total", 10, 10, 40, 20), word("total", 10, 50, 80, 60)],
        );
        let found = search_better_region(&page, "total", &cfg()).unwrap();
        assert_eq!(found, BBox::from_pixels(10, 10, 40, 20).unwrap());
    }

    #[test]
    fn correct_region_keeps_matching_region() {
        let page = fixture_page();
        let region = Region::new(
            BBox::from_pixels(0, 0, 130, 30).unwrap(),
            "total revenue",
            RegionSource::ModelProposed,
        )
        .unwrap();
        let out = correct_region(&page, &region, &cfg());
        assert_eq!(out, region);
    }

    #[test]
    fn correct_region_relocates_wrong_box() {
        let page = fixture_page();
        let region = Region::new(
            BBox::from_pixels(200, 200, 240, 220).unwrap(),
            "total revenue",
            RegionSource::ModelProposed,
        )
        .unwrap();
        let out = correct_region(&page, &region, &cfg());
        assert_eq!(out.bbox, BBox::from_pixels(10, 10, 120, 22).unwrap());
        assert_eq!(out.source, RegionSource::OcrCorrected);
        assert_eq!(out.description(), "total revenue");
    }

    #[test]
    fn correct_region_empty_page_unchanged() {
        let page = OcrPage::new("i.png", vec![]);
        let region = Region::new(
            BBox::from_pixels(5, 5, 20, 20).unwrap(),
            "anything",
            RegionSource::ModelProposed,
        )
        .unwrap();
        assert_eq!(correct_region(&page, &region, &cfg()), region);
    }

    #[test]
    fn fallback_matches_keywords_case_insensitively() {
        let page = OcrPage::new("i.png", vec![word("GDP", 10, 10, 40, 20)]);
        let regions = fallback_keyword_regions(&page, &["gdp".to_string()], &cfg());
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].source, RegionSource::OcrKeywordFallback);
        assert_eq!(regions[0].description(), "gdp");
    }

    #[test]
    fn fallback_no_match_empty() {
        let page = OcrPage::new("i.png", vec![word("GDP", 10, 10, 40, 20)]);
        assert!(fallback_keyword_regions(&page, &["revenue".to_string()], &cfg()).is_empty());
    }

    #[test]
    fn fallback_duplicate_keyword_two_locations() {
        let page = OcrPage::new(
            "i.png",
            vec![word("gdp", 10, 10, 40, 20), word("GDP", 200, 10, 230, 20)],
        );
        assert_eq!(fallback_keyword_regions(&page, &["gdp".to_string()], &cfg()).len(), 2);
    }

    #[test]
    fn fallback_dedups_overlapping_boxes() {
        let page = OcrPage::new(
            "i.png",
            vec![word("gdp", 10, 10, 40, 20), word("gdp", 10, 10, 41, 20)],
        );
        assert_eq!(fallback_keyword_regions(&page, &["gdp".to_string()], &cfg()).len(), 1);
    }

    fn sample() -> Sample {
        Sample::new(
            "s1",
            Dataset::Docvqa,
            "doc.png",
            "What was the total revenue in 2020",
            vec!["42".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn ground_sample_uses_passing_proposals() {
        let model = ScriptedModelClient::new(vec![FixtureRule::substring(
            "Question: What was the total revenue in 2020",
            "Region 0: [0, 0, 130, 30] total revenue",
        )]);
        let ocr = ScriptedOcrClient::new(vec![fixture_page()]);
        let gs = ground_sample(&model, &ocr, &sample(), &cfg()).unwrap();
        assert_eq!(gs.regions().len(), 1);
        assert_eq!(gs.regions()[0].source, RegionSource::ModelProposed);
        assert_eq!(gs.keywords, vec!["total", "revenue", "2020"]);
    }

    #[test]
    fn ground_sample_falls_back_to_keywords() {
        let model = ScriptedModelClient::new(vec![FixtureRule::substring(
            "Question:",
            "I see no regions worth reporting.",
        )]);
        let ocr = ScriptedOcrClient::new(vec![fixture_page()]);
        let gs = ground_sample(&model, &ocr, &sample(), &cfg()).unwrap();
        assert!(!gs.regions().is_empty());
        assert!(gs
            .regions()
            .iter()
            .all(|r| r.source == RegionSource::OcrKeywordFallback));
    }

    #[test]
    fn ground_sample_exhaustion_fails() {
        let model = ScriptedModelClient::new(vec![FixtureRule::substring(
            "Question:",
            "No usable regions.",
        )]);
        let ocr = ScriptedOcrClient::new(vec![OcrPage::new("doc.png", vec![])]);
        assert!(matches!(
            ground_sample(&model, &ocr, &sample(), &cfg()),
            Err(Error::GroundingFailed(_))
        ));
    }
}
