//! Robust answer matching: core-answer extraction from verbose responses,
//! normalization, and the three-way match rule (lexical, numeric,
//! short-gold containment).

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matcher knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Drop leading articles (a/an/the) during normalization.
    pub strip_articles: bool,
    /// Relative tolerance for numeric equality.
    pub numeric_rel_tol: f64,
    /// Containment matching applies only to golds with at most this many
    /// tokens, so long answers cannot match by accident.
    pub containment_max_gold_tokens: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            strip_articles: true,
            numeric_rel_tol: 1e-6,
            containment_max_gold_tokens: 3,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.numeric_rel_tol < 0.0 {
            return Err(Error::Config {
                key: "match.numeric_rel_tol".into(),
                message: "must be >= 0".into(),
            });
        }
        Ok(())
    }
}

static PERCENT_AFTER_NUMBER: Lazy<Regex> = Lazy::new(|| Regex::new(r"(\d)\s+%").unwrap());

/// Lowercase, strip punctuation except `.`/`-`/`%` inside number tokens,
/// collapse whitespace, and (optionally) drop leading articles.
pub fn normalize_answer(answer: &str, cfg: &MatchConfig) -> String {
    let lower = answer.to_lowercase();
    // "5.0 %" reads as one number token
    let joined = PERCENT_AFTER_NUMBER.replace_all(&lower, "$1%");
    let chars: Vec<char> = joined.chars().collect();
    let mut out = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let next = chars.get(i + 1).copied();
        let prev_digit = prev.is_some_and(|p| p.is_ascii_digit());
        let next_digit = next.is_some_and(|n| n.is_ascii_digit());
        let keep = match c {
            _ if c.is_alphanumeric() => true,
            '.' => prev_digit && next_digit,
            '%' => prev_digit,
            '-' => next_digit && (prev_digit || !prev.is_some_and(|p| p.is_alphanumeric())),
            '\'' | '\u{2019}' => continue,
            _ => false,
        };
        if keep {
            out.push(c);
        } else {
            out.push(' ');
        }
    }
    let mut tokens: Vec<&str> = out.split_whitespace().collect();
    if cfg.strip_articles {
        while matches!(tokens.first(), Some(&"a") | Some(&"an") | Some(&"the")) {
            tokens.remove(0);
        }
    }
    tokens.join(" ")
}

/// Byte offset just past the last answer marker, if any.
fn last_marker_end(lower: &str) -> Option<usize> {
    let mut best = None;
    for marker in ["answer is", "answer:"] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(marker) {
            let end = from + pos + marker.len();
            best = Some(best.map_or(end, |b: usize| b.max(end)));
            from = end;
        }
    }
    best
}

/// Cut a marker tail at the end of its sentence: the first `.` that is not
/// between two digits, or the first newline.
fn cut_sentence(segment: &str) -> &str {
    let chars: Vec<(usize, char)> = segment.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if c == '\n' {
            return &segment[..i];
        }
        if c == '.' {
            let prev_digit = k > 0 && chars[k - 1].1.is_ascii_digit();
            let next_digit = chars.get(k + 1).is_some_and(|&(_, n)| n.is_ascii_digit());
            if !(prev_digit && next_digit) {
                return &segment[..i];
            }
        }
    }
    segment
}

/// Pull the answer out of a verbose response: the tail after the last
/// "answer is"/"answer:" marker (up to sentence end), otherwise the last
/// non-empty line; normalized either way.
pub fn extract_core_answer(response: &str, cfg: &MatchConfig) -> String {
    let lower = response.to_lowercase();
    if let Some(end) = last_marker_end(&lower) {
        let tail = cut_sentence(&response[end..]);
        let normalized = normalize_answer(tail, cfg);
        if !normalized.is_empty() {
            return normalized;
        }
    }
    let last_line = response.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    normalize_answer(last_line, cfg)
}

/// Parse a normalized token string as a number; a single trailing percent
/// sign is ignored, so "5" ≡ "5%" ≡ "5.0".
fn parse_numeric(s: &str) -> Option<f64> {
    let trimmed = s.strip_suffix('%').unwrap_or(s);
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numbers_equal(a: f64, b: f64, rel_tol: f64) -> bool {
    a == b || (a - b).abs() <= rel_tol * a.abs().max(b.abs())
}

fn contains_contiguous(haystack: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Does the prediction match any gold answer? True on normalized equality
/// of the extracted core, numeric equality within the relative tolerance,
/// or a short gold appearing contiguously in the prediction's tokens.
pub fn answers_match(prediction: &str, golds: &[String], cfg: &MatchConfig) -> bool {
    let core = extract_core_answer(prediction, cfg);
    let core_number = parse_numeric(&core);
    let full = normalize_answer(prediction, cfg);
    let full_tokens: Vec<&str> = full.split_whitespace().collect();

    golds.iter().any(|gold| {
        let g = normalize_answer(gold, cfg);
        if g.is_empty() {
            return core.is_empty();
        }
        if core == g {
            return true;
        }
        if let (Some(a), Some(b)) = (core_number, parse_numeric(&g)) {
            if numbers_equal(a, b, cfg.numeric_rel_tol) {
                return true;
            }
        }
        let g_tokens: Vec<&str> = g.split_whitespace().collect();
        g_tokens.len() <= cfg.containment_max_gold_tokens
            && contains_contiguous(&full_tokens, &g_tokens)
    })
}
