//! Evaluation harness: robust answer matching, the six inference strategy
//! runners, and single/multi-region accuracy reporting.

mod matching;
mod report;
mod strategies;

pub use matching::{answers_match, extract_core_answer, normalize_answer, MatchConfig};
pub use report::{
    accuracy_report, render_report_text, GroundedIndex, GroundedInfo, Report, ReportRow,
    SplitAccuracy,
};
pub use strategies::{parse_viscot_bbox, run_strategy};
