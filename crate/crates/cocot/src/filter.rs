//! Keyword extraction, per-dataset complexity filtering, and the
//! test/train/rest split.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, GroundedSample, Sample};

/// Bump when the embedded stopword list changes; recorded in run manifests
/// so keyword thresholds stay auditable.
pub const STOPWORDS_VERSION: &str = "1";

/// Embedded list of common English function words dropped by
/// [`extract_keywords`]. Fixed and versioned: filter verdicts must be
/// reproducible across runs and machines.
pub const STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers",
    "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what",
    "which", "who", "whom", "this", "that", "these", "those", "am", "is", "are",
    "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
    "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about",
    "against", "between", "into", "through", "during", "before", "after", "above", "below", "to",
    "from", "up", "down", "in", "out", "on", "off", "over", "under", "again",
    "further", "then", "once", "here", "there", "when", "where", "why", "how", "all",
    "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
    "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s",
    "t", "can", "will", "just", "don", "should", "now",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Lowercased alphanumeric tokens of `text`, split on everything else.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Question keywords: lowercased alphanumeric tokens, stopwords removed,
/// deduplicated preserving first occurrence. May be empty.
pub fn extract_keywords(question: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    tokenize(question)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// True when the answer contains a comma, a slash, or the standalone word
/// "and" (case-insensitive). Signals multi-part reasoning.
pub fn is_compound_answer(answer: &str) -> bool {
    answer.contains(',')
        || answer.contains('/')
        || tokenize(answer).iter().any(|t| t == "and")
}

/// Per-dataset complexity rule: strict keyword-count threshold, with an
/// optional compound-answer escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRule {
    pub dataset: Dataset,
    /// Samples pass only with strictly more keywords than this.
    pub min_keywords_exclusive: usize,
    pub compound_answer_enabled: bool,
}

impl FilterRule {
    /// The built-in rule for each dataset.
    pub fn builtin(dataset: Dataset) -> FilterRule {
        let (min_keywords_exclusive, compound_answer_enabled) = match dataset {
            Dataset::Gqa => (6, false),
            Dataset::Docvqa => (4, true),
            Dataset::Infovqa => (4, true),
            Dataset::Textvqa => (3, true),
            Dataset::Visual7w => (3, true),
            Dataset::Vqav2 => (5, true),
        };
        FilterRule { dataset, min_keywords_exclusive, compound_answer_enabled }
    }
}

/// Complexity verdict for one sample under its dataset's rule.
pub fn passes_filter(sample: &Sample, rule: &FilterRule) -> Result<bool> {
    if sample.dataset != rule.dataset {
        return Err(Error::Usage(format!(
            "sample `{}` is {} but rule is for {}",
            sample.sample_id,
            sample.dataset.as_str(),
            rule.dataset.as_str()
        )));
    }
    if extract_keywords(&sample.question).len() > rule.min_keywords_exclusive {
        return Ok(true);
    }
    Ok(rule.compound_answer_enabled && sample.answers().iter().any(|a| is_compound_answer(a)))
}

/// Number of samples randomly withheld as the test set.
pub const TEST_SET_SIZE: usize = 500;

/// Fraction of the remaining samples allocated to training (floored).
pub const TRAIN_FRACTION_PERCENT: usize = 20;

/// Deterministic three-way split: 500 test samples drawn uniformly without
/// replacement, then 20% (floored) of the remainder as train, then the rest.
/// Each output preserves the input ordering of its members.
pub fn split_dataset(
    samples: Vec<Sample>,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    let n = samples.len();
    if n < TEST_SET_SIZE {
        return Err(Error::Usage(format!(
            "split requires at least {TEST_SET_SIZE} samples, got {n}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let test_idx: std::collections::HashSet<usize> =
        rand::seq::index::sample(&mut rng, n, TEST_SET_SIZE).into_iter().collect();

    let remaining: Vec<usize> = (0..n).filter(|i| !test_idx.contains(i)).collect();
    let train_count = remaining.len() * TRAIN_FRACTION_PERCENT / 100;
    let train_idx: std::collections::HashSet<usize> =
        rand::seq::index::sample(&mut rng, remaining.len(), train_count)
            .into_iter()
            .map(|k| remaining[k])
            .collect();

    let mut test = Vec::with_capacity(TEST_SET_SIZE);
    let mut train = Vec::with_capacity(train_count);
    let mut rest = Vec::with_capacity(n - TEST_SET_SIZE - train_count);
    for (i, s) in samples.into_iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(s);
        } else if train_idx.contains(&i) {
            train.push(s);
        } else {
            rest.push(s);
        }
    }
    Ok((test, train, rest))
}

/// Fraction of grounded samples with two or more regions.
pub fn multi_region_ratio(grounded: &[GroundedSample]) -> Result<f64> {
    if grounded.is_empty() {
        return Err(Error::Usage("multi_region_ratio of empty list".into()));
    }
    let multi = grounded.iter().filter(|g| g.regions().len() >= 2).count();
    Ok(multi as f64 / grounded.len() as f64)
}
