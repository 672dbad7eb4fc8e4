//! Metrics and bookkeeping: pass@1, benchmark tables, dataset composition
//! statistics.
//!
//! Ratios are kept exact internally; display rounding is half-up to two
//! decimals, so shard composition laws can be checked in rational
//! arithmetic.

use std::collections::{BTreeMap, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::grader::VerdictValue;
use crate::prefbuild::LabeledPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    Greedy,
    Sampled,
}

/// Aggregate correctness over one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset_tag: String,
    pub total: u64,
    pub correct: u64,
    pub decoding: Decoding,
}

impl EvalResult {
    pub fn new(dataset_tag: impl Into<String>, correct: u64, total: u64, decoding: Decoding) -> Self {
        assert!(total > 0, "total must be positive");
        assert!(correct <= total, "correct cannot exceed total");
        EvalResult { dataset_tag: dataset_tag.into(), total, correct, decoding }
    }

    /// Exact pass@1 percentage as a rational: 100 * correct / total.
    pub fn pass_at_1_exact(&self) -> BigRational {
        BigRational::new(BigInt::from(self.correct) * 100, BigInt::from(self.total))
    }

    /// Display form: rounded half-up to 2 decimals.
    pub fn pass_at_1_display(&self) -> String {
        round_half_up_2(&self.pass_at_1_exact())
    }

    /// Pools two disjoint shards of the same benchmark.
    pub fn merge(&self, other: &EvalResult) -> EvalResult {
        EvalResult {
            dataset_tag: self.dataset_tag.clone(),
            total: self.total + other.total,
            correct: self.correct + other.correct,
            decoding: self.decoding,
        }
    }
}

/// Rounds a nonnegative rational percentage half-up at 2 decimals, rendered
/// with exactly two fraction digits.
pub fn round_half_up_2(value: &BigRational) -> String {
    let scaled = value * BigRational::from_integer(BigInt::from(100));
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let rounded = (scaled + half).floor().to_integer();
    let hundred = BigInt::from(100);
    let whole = &rounded / &hundred;
    let frac = &rounded % &hundred;
    format!("{whole}.{frac:02}")
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("duplicate problem_id {0} in verdict set")]
    DuplicateProblem(String),
    #[error("empty verdict set")]
    Empty,
}

/// One graded test item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradedItem {
    pub problem_id: String,
    pub verdict: VerdictValue,
}

/// Computes pass@1 over a verdict set that covers each problem exactly once.
pub fn pass_at_1(
    dataset_tag: &str,
    items: &[GradedItem],
    decoding: Decoding,
) -> Result<EvalResult, ReportError> {
    if items.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut seen = HashSet::new();
    let mut correct = 0u64;
    for item in items {
        if !seen.insert(item.problem_id.as_str()) {
            return Err(ReportError::DuplicateProblem(item.problem_id.clone()));
        }
        if item.verdict == VerdictValue::Correct {
            correct += 1;
        }
    }
    Ok(EvalResult::new(dataset_tag, correct, items.len() as u64, decoding))
}

/// Composition statistics for a corpus and its labeled pools.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_problems: usize,
    pub counts_per_source: BTreeMap<String, usize>,
    pub counts_per_round: BTreeMap<u32, usize>,
    pub filter_dropped: usize,
    /// Per iteration: questions whose sampled responses were all positive.
    pub all_positive_per_iteration: BTreeMap<u32, usize>,
}

pub fn dataset_stats(
    corpus: &Corpus,
    pools: &[(u32, &LabeledPool)],
    filter_dropped: usize,
) -> DatasetStats {
    let mut counts_per_source = BTreeMap::new();
    let mut counts_per_round = BTreeMap::new();
    for problem in corpus.iter() {
        *counts_per_source
            .entry(problem.source.as_str().to_string())
            .or_insert(0) += 1;
        let round = problem.lineage.as_ref().map(|l| l.round).unwrap_or(0);
        *counts_per_round.entry(round).or_insert(0) += 1;
    }
    let all_positive_per_iteration = pools
        .iter()
        .map(|(iteration, pool)| (*iteration, pool.all_positive_count()))
        .collect();
    DatasetStats {
        total_problems: corpus.len(),
        counts_per_source,
        counts_per_round,
        filter_dropped,
        all_positive_per_iteration,
    }
}

impl DatasetStats {
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| metric | value |\n|---|---|\n");
        out.push_str(&format!("| total problems | {} |\n", self.total_problems));
        for (source, count) in &self.counts_per_source {
            out.push_str(&format!("| source: {source} | {count} |\n"));
        }
        for (round, count) in &self.counts_per_round {
            out.push_str(&format!("| round {round} | {count} |\n"));
        }
        out.push_str(&format!("| filter dropped | {} |\n", self.filter_dropped));
        for (iteration, count) in &self.all_positive_per_iteration {
            out.push_str(&format!("| all-positive (iteration {iteration}) | {count} |\n"));
        }
        out
    }
}

/// A benchmark table: dataset rows, one column per model.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub markdown: String,
    pub csv: String,
}

/// Renders `(model, result)` pairs as markdown and CSV, datasets as rows and
/// models as columns. Row and column order follow first appearance.
pub fn benchmark_table(results: &[(String, EvalResult)]) -> RenderedTable {
    let mut models: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), String> = BTreeMap::new();
    for (model, result) in results {
        if !models.iter().any(|m| m == model) {
            models.push(model);
        }
        if !datasets.iter().any(|d| *d == result.dataset_tag) {
            datasets.push(&result.dataset_tag);
        }
        cells.insert(
            (result.dataset_tag.as_str(), model.as_str()),
            result.pass_at_1_display(),
        );
    }

    let mut markdown = String::new();
    markdown.push_str("| Test Set |");
    for model in &models {
        markdown.push_str(&format!(" {model} |"));
    }
    markdown.push('\n');
    markdown.push_str("|---|");
    for _ in &models {
        markdown.push_str("---|");
    }
    markdown.push('\n');

    let mut csv = String::new();
    csv.push_str("test_set");
    for model in &models {
        csv.push_str(&format!(",{model}"));
    }
    csv.push('\n');

    for dataset in &datasets {
        markdown.push_str(&format!("| {dataset} |"));
        csv.push_str(dataset);
        for model in &models {
            let cell = cells.get(&(*dataset, *model)).cloned().unwrap_or_default();
            markdown.push_str(&format!(" {cell} |"));
            csv.push_str(&format!(",{cell}"));
        }
        markdown.push('\n');
        csv.push('\n');
    }

    RenderedTable { markdown, csv }
}
