//! Data model and persistence for problems, solutions, and lineage.
//!
//! Corpora are stored as JSONL: one record per line, keys in fixed order,
//! UTF-8, newline-terminated. Files written by [`save_corpus`] are canonical
//! and round-trip byte-identically through [`load_corpus`].

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Where a problem came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Seed,
    AskMeAnything,
    SuggesterEditor,
    Dmath,
    ExternalTest,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Seed => "seed",
            Source::AskMeAnything => "ask_me_anything",
            Source::SuggesterEditor => "suggester_editor",
            Source::Dmath => "dmath",
            Source::ExternalTest => "external_test",
        }
    }

    /// Generated sources must carry lineage; root sources must not.
    pub fn is_generated(&self) -> bool {
        matches!(self, Source::AskMeAnything | Source::SuggesterEditor)
    }
}

/// Link from a generated problem back to the problem it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lineage {
    pub parent_id: String,
    pub round: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub number_target: Option<String>,
}

/// A math word problem with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gold_answer: Option<String>,
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lineage: Option<Lineage>,
    pub dataset_tag: String,
}

impl Problem {
    /// Structural validity: lineage present iff the source is generated.
    pub fn validate(&self) -> Result<(), CorpusError> {
        match (&self.lineage, self.source.is_generated()) {
            (Some(_), false) => Err(CorpusError::Invalid {
                id: self.id.clone(),
                reason: format!("source {} must not carry lineage", self.source.as_str()),
            }),
            (None, true) => Err(CorpusError::Invalid {
                id: self.id.clone(),
                reason: format!("source {} requires lineage", self.source.as_str()),
            }),
            _ => Ok(()),
        }
    }
}

/// Who produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    Teacher,
    Student,
}

/// A free-text solution to one problem.
///
/// `char_length` is derived (count of chars in `text`) and is not part of
/// the JSONL record; it is recomputed on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    pub problem_id: String,
    pub author: Author,
    pub sample_index: u32,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extracted_answer: Option<String>,
    #[serde(skip)]
    pub char_length: usize,
}

impl Solution {
    pub fn new(
        problem_id: impl Into<String>,
        author: Author,
        sample_index: u32,
        text: impl Into<String>,
        extracted_answer: Option<String>,
    ) -> Self {
        let text = text.into();
        let char_length = text.chars().count();
        Solution {
            problem_id: problem_id.into(),
            author,
            sample_index,
            text,
            extracted_answer,
            char_length,
        }
    }
}

/// Run metadata attached to an in-memory corpus. Not persisted in the JSONL
/// and excluded from corpus equality.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub tool_version: String,
    pub config_digest: Option<String>,
    pub source_counts: BTreeMap<String, usize>,
}

/// An ordered set of problems indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    problems: Vec<Problem>,
    index: HashMap<String, usize>,
    pub provenance: Provenance,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.problems == other.problems
    }
}

impl Corpus {
    pub fn new() -> Self {
        Corpus {
            provenance: Provenance {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                ..Provenance::default()
            },
            ..Corpus::default()
        }
    }

    pub fn from_problems(problems: Vec<Problem>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for problem in problems {
            corpus.push(problem)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, problem: Problem) -> Result<(), CorpusError> {
        problem.validate()?;
        if self.index.contains_key(&problem.id) {
            return Err(CorpusError::DuplicateId {
                id: problem.id.clone(),
                detail: "duplicate id on insert".to_string(),
            });
        }
        *self
            .provenance
            .source_counts
            .entry(problem.source.as_str().to_string())
            .or_insert(0) += 1;
        self.index.insert(problem.id.clone(), self.problems.len());
        self.problems.push(problem);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.index.get(id).map(|&i| &self.problems[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Problem> {
        self.problems.iter()
    }

    /// Checks that every generated problem's lineage chain exists in this
    /// corpus and terminates at a non-generated problem within `max_rounds`
    /// steps.
    pub fn validate_lineage(&self, max_rounds: u32) -> Result<(), CorpusError> {
        for problem in &self.problems {
            let mut current = problem;
            let mut steps = 0u32;
            while let Some(lineage) = &current.lineage {
                steps += 1;
                if steps > max_rounds {
                    return Err(CorpusError::Invalid {
                        id: problem.id.clone(),
                        reason: format!("lineage chain exceeds {max_rounds} steps"),
                    });
                }
                current = self.get(&lineage.parent_id).ok_or_else(|| CorpusError::Invalid {
                    id: problem.id.clone(),
                    reason: format!("lineage parent {} not in corpus", lineage.parent_id),
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate id {id}: {detail}")]
    DuplicateId { id: String, detail: String },
    #[error("invalid problem {id}: {reason}")]
    Invalid { id: String, reason: String },
}

fn open_reader(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Loads a corpus from a JSONL file, one problem per line.
///
/// Parse errors carry the 1-based line number. Duplicate ids are an
/// integrity error naming both offending lines.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let reader = open_reader(path)?;
    let mut corpus = Corpus::new();
    let mut seen_lines: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let problem: Problem = serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
            path: path.display().to_string(),
            line: line_no,
            source,
        })?;
        if let Some(&first) = seen_lines.get(&problem.id) {
            return Err(CorpusError::DuplicateId {
                id: problem.id,
                detail: format!("lines {first} and {line_no}"),
            });
        }
        seen_lines.insert(problem.id.clone(), line_no);
        corpus.push(problem)?;
    }
    Ok(corpus)
}

/// Writes a corpus as canonical JSONL: fixed key order, UTF-8, one record
/// per line, newline-terminated.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    for problem in corpus.iter() {
        let line = serde_json::to_string(problem).expect("problem serializes");
        writeln!(writer, "{line}").map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    writer.flush().map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Union of several corpora. Ids must be disjoint; per-source counts are
/// accumulated into the merged provenance.
pub fn merge_corpora(parts: &[Corpus]) -> Result<Corpus, CorpusError> {
    let mut merged = Corpus::new();
    for part in parts {
        for problem in part.iter() {
            if merged.contains(&problem.id) {
                return Err(CorpusError::DuplicateId {
                    id: problem.id.clone(),
                    detail: "id collision across merged parts".to_string(),
                });
            }
            merged.push(problem.clone())?;
        }
    }
    Ok(merged)
}

/// Loads solutions from a JSONL file, recomputing `char_length` per record.
pub fn load_solutions(path: impl AsRef<Path>) -> Result<Vec<Solution>, CorpusError> {
    let path = path.as_ref();
    let reader = open_reader(path)?;
    let mut solutions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let mut solution: Solution =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                source,
            })?;
        solution.char_length = solution.text.chars().count();
        solutions.push(solution);
    }
    Ok(solutions)
}

/// Writes solutions as canonical JSONL (fields: problem_id, author,
/// sample_index, text, extracted_answer).
pub fn save_solutions(solutions: &[Solution], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    for solution in solutions {
        let line = serde_json::to_string(solution).expect("solution serializes");
        writeln!(writer, "{line}").map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    writer.flush().map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}
