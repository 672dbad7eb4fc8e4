//! Student-response sampling, positive/negative labeling, preference-set
//! construction with the synthetic-negative rule, ablation variants, and
//! SFT/DPO/KTO training-file emission.
//!
//! For each question the teacher solution is positive by construction;
//! sampled student solutions are graded against it and partitioned into
//! positives and negatives. Questions where every sample is positive borrow
//! one negative from each of four distinct donor questions, so the final
//! dataset is the union over questions of the full positive x negative
//! cross product.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatRequest, Message};
use crate::corpus::{Author, Corpus, Problem, Solution};
use crate::grader::{self, GradeMode, GraderError, Judge};

/// Borrowed negatives per all-positive question.
pub const BORROWED_NEGATIVES_PER_QUESTION: usize = 4;

/// Decoding parameters for student-response sampling and the seed for the
/// synthetic-negative borrowing draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k: u32,
    pub top_p: f64,
    pub temperature: f64,
    pub rng_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { k: 4, top_p: 0.95, temperature: 0.7, rng_seed: 0 }
    }
}

/// Dataset-variant switches.
///
/// `teacher_positive_only` drops model-generated positives;
/// `drop_all_positive_questions` skips questions with no native negatives
/// instead of borrowing; `exclude_teacher_when_all_positive` excludes the teacher
/// solution from the positives of all-positive questions, so their positive
/// set holds exactly the k student solutions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub teacher_positive_only: bool,
    pub drop_all_positive_questions: bool,
    pub exclude_teacher_when_all_positive: bool,
}

/// Labeled solutions for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPool {
    pub problem_id: String,
    pub question: String,
    /// Positive solutions, teacher first.
    pub positives: Vec<Solution>,
    /// Native negatives: this question's own non-matching samples.
    pub negatives: Vec<Solution>,
    /// Synthetic negatives borrowed from other questions, with donor ids.
    pub borrowed_negatives: Vec<(Solution, String)>,
}

impl QuestionPool {
    /// All sampled responses matched the teacher (no native negatives).
    pub fn is_all_positive(&self) -> bool {
        self.negatives.is_empty()
    }
}

/// Labeled pools for a whole corpus, in problem order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPool {
    pub questions: Vec<QuestionPool>,
}

impl LabeledPool {
    pub fn all_positive_count(&self) -> usize {
        self.questions.iter().filter(|q| q.is_all_positive()).count()
    }
}

/// One (question, chosen, rejected) training triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub question_id: String,
    pub question: String,
    pub chosen: Solution,
    pub rejected: Solution,
    pub rejected_is_borrowed: bool,
}

/// Writes pairs as JSONL, one pair per line.
pub fn save_pairs(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<(), PrefBuildError> {
    let path = path.as_ref();
    let mut writer = create_writer(path)?;
    for pair in pairs {
        write_line(&mut writer, path, pair)?;
    }
    writer.flush().map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads pairs from JSONL, recomputing derived solution lengths.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>, PrefBuildError> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs = Vec::new();
    for line in body.lines().filter(|l| !l.is_empty()) {
        let mut pair: PreferencePair =
            serde_json::from_str(line).map_err(|source| PrefBuildError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, source),
            })?;
        pair.chosen.char_length = pair.chosen.text.chars().count();
        pair.rejected.char_length = pair.rejected.text.chars().count();
        pairs.push(pair);
    }
    Ok(pairs)
}

#[derive(Debug, thiserror::Error)]
pub enum PrefBuildError {
    #[error("sampling failed for problem {problem_id} at draws {failed_indices:?}: {last_error}")]
    Sampling {
        problem_id: String,
        failed_indices: Vec<u32>,
        last_error: String,
    },
    #[error("problem {problem_id} needs exactly one teacher and {expected} student solutions, found {found}")]
    SolutionMismatch {
        problem_id: String,
        expected: u32,
        found: String,
    },
    #[error("cannot borrow negatives: only {available} donor questions with native negatives, need {needed}")]
    NotEnoughDonors { available: usize, needed: usize },
    #[error("question {problem_id} retained with no negatives")]
    EmptyNegatives { problem_id: String },
    #[error("missing teacher solution for problem {0}")]
    MissingSolution(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Samples exactly k student responses for one problem, sample_index 0..k.
pub fn sample_responses(
    problem: &Problem,
    backend: &Backend,
    model: &str,
    config: &SamplingConfig,
) -> Result<Vec<Solution>, PrefBuildError> {
    if config.k == 0 {
        return Err(PrefBuildError::Sampling {
            problem_id: problem.id.clone(),
            failed_indices: Vec::new(),
            last_error: "k must be at least 1".to_string(),
        });
    }
    let mut solutions = Vec::with_capacity(config.k as usize);
    let mut failed = Vec::new();
    let mut last_error = String::new();
    for sample_index in 0..config.k {
        let request = ChatRequest {
            model_name: model.to_string(),
            messages: vec![Message::user(&problem.question)],
            temperature: config.temperature,
            top_p: config.top_p,
            max_tokens: 1024,
            sample_index,
        };
        match backend.complete(&request) {
            Ok(response) => {
                let extracted = grader::extract_final_answer(&response.content)
                    .map(|n| n.canonical());
                solutions.push(Solution::new(
                    &problem.id,
                    Author::Student,
                    sample_index,
                    response.content,
                    extracted,
                ));
            }
            Err(err) => {
                last_error = err.to_string();
                failed.push(sample_index);
            }
        }
    }
    if !failed.is_empty() {
        return Err(PrefBuildError::Sampling {
            problem_id: problem.id.clone(),
            failed_indices: failed,
            last_error,
        });
    }
    Ok(solutions)
}

/// Grades every student solution against its teacher solution and
/// partitions per question into positives (teacher first, then matching
/// students) and native negatives. Un-gradable solutions are labeled
/// negative. No borrowing happens here.
pub fn label_pool(
    problems: &[Problem],
    teacher_solutions: &[Solution],
    student_solutions: &[Solution],
    grade_mode: GradeMode,
    judge: Option<&Judge<'_>>,
) -> Result<LabeledPool, PrefBuildError> {
    let mut questions = Vec::with_capacity(problems.len());
    for problem in problems {
        let teacher: Vec<&Solution> = teacher_solutions
            .iter()
            .filter(|s| s.problem_id == problem.id && s.author == Author::Teacher)
            .collect();
        if teacher.len() != 1 {
            return Err(PrefBuildError::SolutionMismatch {
                problem_id: problem.id.clone(),
                expected: 1,
                found: format!("{} teacher solutions", teacher.len()),
            });
        }
        let teacher = teacher[0];
        let mut students: Vec<&Solution> = student_solutions
            .iter()
            .filter(|s| s.problem_id == problem.id && s.author == Author::Student)
            .collect();
        students.sort_by_key(|s| s.sample_index);

        let mut positives = vec![teacher.clone()];
        let mut negatives = Vec::new();
        for student in students {
            let verdict = grader::grade(
                &problem.question,
                &teacher.text,
                &student.text,
                grade_mode,
                judge,
            );
            match verdict {
                Ok(v) if v.is_correct() => positives.push(student.clone()),
                Ok(_) => negatives.push(student.clone()),
                Err(GraderError::Ungradable) => {
                    eprintln!(
                        "[warn] {} sample {} labeled negative: un-gradable",
                        problem.id, student.sample_index
                    );
                    negatives.push(student.clone());
                }
                Err(GraderError::JudgeFormat { .. }) => {
                    eprintln!(
                        "[warn] {} sample {} labeled negative: judge output had no verdict",
                        problem.id, student.sample_index
                    );
                    negatives.push(student.clone());
                }
                Err(other) => {
                    return Err(match other {
                        GraderError::Backend(e) => PrefBuildError::Backend(e),
                        e => PrefBuildError::SolutionMismatch {
                            problem_id: problem.id.clone(),
                            expected: 1,
                            found: format!("grading failure: {e}"),
                        },
                    })
                }
            }
        }
        questions.push(QuestionPool {
            problem_id: problem.id.clone(),
            question: problem.question.clone(),
            positives,
            negatives,
            borrowed_negatives: Vec::new(),
        });
    }
    Ok(LabeledPool { questions })
}

/// For each all-positive question, borrows one uniformly-chosen negative
/// from each of four distinct donor questions (donor != self, donor has
/// native negatives). Deterministic given `rng_seed`. Questions that
/// already hold borrowed negatives are left untouched.
pub fn inject_synthetic_negatives(
    mut pool: LabeledPool,
    rng_seed: u64,
) -> Result<LabeledPool, PrefBuildError> {
    let donor_candidates: Vec<usize> = pool
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| !q.negatives.is_empty())
        .map(|(i, _)| i)
        .collect();
    let needs_borrowing: Vec<usize> = pool
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.is_all_positive() && q.borrowed_negatives.is_empty())
        .map(|(i, _)| i)
        .collect();
    if needs_borrowing.is_empty() {
        return Ok(pool);
    }
    if donor_candidates.len() < BORROWED_NEGATIVES_PER_QUESTION {
        return Err(PrefBuildError::NotEnoughDonors {
            available: donor_candidates.len(),
            needed: BORROWED_NEGATIVES_PER_QUESTION,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for question_idx in needs_borrowing {
        // Donors are distinct and never the question itself (it has no
        // negatives, so it is not a candidate anyway).
        let mut donors = donor_candidates.clone();
        donors.shuffle(&mut rng);
        donors.truncate(BORROWED_NEGATIVES_PER_QUESTION);
        let mut borrowed = Vec::with_capacity(BORROWED_NEGATIVES_PER_QUESTION);
        for donor_idx in donors {
            let donor = &pool.questions[donor_idx];
            let pick = rng.random_range(0..donor.negatives.len());
            borrowed.push((donor.negatives[pick].clone(), donor.problem_id.clone()));
        }
        pool.questions[question_idx].borrowed_negatives = borrowed;
    }
    Ok(pool)
}

/// Emits the full cross product positives x negatives per question,
/// honoring the ablation flags.
pub fn build_preference_dataset(
    pool: &LabeledPool,
    flags: &AblationFlags,
) -> Result<Vec<PreferencePair>, PrefBuildError> {
    let mut pairs = Vec::new();
    for question in &pool.questions {
        if flags.drop_all_positive_questions && question.is_all_positive() {
            continue;
        }
        let mut positives: Vec<&Solution> = question.positives.iter().collect();
        if flags.exclude_teacher_when_all_positive && question.is_all_positive() {
            positives.retain(|s| s.author != Author::Teacher);
        }
        if flags.teacher_positive_only {
            positives.retain(|s| s.author == Author::Teacher);
        }
        let negatives: Vec<(&Solution, bool)> = question
            .negatives
            .iter()
            .map(|s| (s, false))
            .chain(question.borrowed_negatives.iter().map(|(s, _)| (s, true)))
            .collect();
        if negatives.is_empty() {
            return Err(PrefBuildError::EmptyNegatives {
                problem_id: question.problem_id.clone(),
            });
        }
        for chosen in &positives {
            for (rejected, is_borrowed) in &negatives {
                pairs.push(PreferencePair {
                    question_id: question.problem_id.clone(),
                    question: question.question.clone(),
                    chosen: (*chosen).clone(),
                    rejected: (*rejected).clone(),
                    rejected_is_borrowed: *is_borrowed,
                });
            }
        }
    }
    Ok(pairs)
}

/// Instruction-format template for one SFT record.
pub fn sft_text(question: &str, answer: &str) -> String {
    format!("USER:\n{question}\n\nASSISTANT:\n{answer}")
}

/// Byte offset where the answer begins inside [`sft_text`] output.
pub fn sft_completion_start(question: &str) -> usize {
    "USER:\n".len() + question.len() + "\n\nASSISTANT:\n".len()
}

#[derive(Debug, Serialize, Deserialize)]
struct SftRecord<'a> {
    id: &'a str,
    text: String,
    completion_start: usize,
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, PrefBuildError> {
    let file = File::create(path).map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufWriter::new(file))
}

fn write_line(
    writer: &mut BufWriter<File>,
    path: &Path,
    value: &impl Serialize,
) -> Result<(), PrefBuildError> {
    let line = serde_json::to_string(value).expect("record serializes");
    writeln!(writer, "{line}").map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes one SFT record per problem: the instruction-format `text` plus
/// the byte offset where loss-bearing answer tokens begin.
pub fn emit_sft(
    corpus: &Corpus,
    teacher_solutions: &[Solution],
    path: impl AsRef<Path>,
) -> Result<(), PrefBuildError> {
    let path = path.as_ref();
    let mut writer = create_writer(path)?;
    for problem in corpus.iter() {
        let teacher = teacher_solutions
            .iter()
            .find(|s| s.problem_id == problem.id && s.author == Author::Teacher)
            .ok_or_else(|| PrefBuildError::MissingSolution(problem.id.clone()))?;
        let record = SftRecord {
            id: &problem.id,
            text: sft_text(&problem.question, &teacher.text),
            completion_start: sft_completion_start(&problem.question),
        };
        write_line(&mut writer, path, &record)?;
    }
    writer.flush().map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DpoRecord<'a> {
    prompt: &'a str,
    chosen: &'a str,
    rejected: &'a str,
}

/// Writes one (prompt, chosen, rejected) record per preference pair.
pub fn emit_dpo(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<(), PrefBuildError> {
    let path = path.as_ref();
    let mut writer = create_writer(path)?;
    for pair in pairs {
        let record = DpoRecord {
            prompt: &pair.question,
            chosen: &pair.chosen.text,
            rejected: &pair.rejected.text,
        };
        write_line(&mut writer, path, &record)?;
    }
    writer.flush().map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct KtoRecord<'a> {
    prompt: &'a str,
    completion: &'a str,
    label: &'a str,
}

/// Unrolls each pair into a desirable and an undesirable record and
/// deduplicates identical (prompt, completion) records, keeping first
/// occurrence order.
pub fn emit_kto(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<(), PrefBuildError> {
    let path = path.as_ref();
    let mut writer = create_writer(path)?;
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for pair in pairs {
        for (completion, label) in [
            (&pair.chosen.text, "desirable"),
            (&pair.rejected.text, "undesirable"),
        ] {
            let key = (pair.question.clone(), completion.clone());
            if seen.insert(key) {
                let record = KtoRecord { prompt: &pair.question, completion, label };
                write_line(&mut writer, path, &record)?;
            }
        }
    }
    writer.flush().map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Training hyperparameters recorded as pass-through metadata for
/// downstream trainers. Not consumed by this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyperparams {
    pub sft_learning_rate: f64,
    pub preference_learning_rate_iteration2: f64,
    pub preference_learning_rate_iteration3: f64,
    pub beta: f64,
    pub per_device_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub epochs: u32,
}

impl Default for TrainingHyperparams {
    fn default() -> Self {
        TrainingHyperparams {
            sft_learning_rate: 1e-6,
            preference_learning_rate_iteration2: 1e-6,
            preference_learning_rate_iteration3: 1e-7,
            beta: 0.3,
            per_device_batch_size: 3,
            gradient_accumulation_steps: 11,
            epochs: 1,
        }
    }
}

/// Sidecar metadata written next to emitted training files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionSidecar {
    pub sampling: SamplingConfig,
    pub flags: AblationFlags,
    pub iteration: u32,
    pub config_digest: Option<String>,
    pub training_hyperparams: TrainingHyperparams,
}

pub fn write_sidecar(sidecar: &EmissionSidecar, path: impl AsRef<Path>) -> Result<(), PrefBuildError> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    std::fs::write(path, body).map_err(|source| PrefBuildError::Io {
        path: path.display().to_string(),
        source,
    })
}
