//! End-to-end composition of the pipeline stages.
//!
//! One run takes a seed corpus through expansion, hardening, teacher
//! solving, student sampling, grading, preference-pair construction, and
//! training-file emission, writing every artifact under a run directory.
//! All outputs are deterministic for fixed inputs, cache state, and rng
//! seed; re-running with a warm cache reproduces the same bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agentgen::{self, AgentContext, AgentError, HardenConfig};
use crate::backend::{parallel_map, sha256_hex, Backend, BackendError};
use crate::corpus::{
    self, load_corpus, merge_corpora, save_corpus, save_solutions, Author, Corpus, CorpusError,
    Problem, Solution,
};
use crate::grader::{self, GradeMode, GraderError, Judge, JudgeKind, VerdictValue};
use crate::prefbuild::{
    self, AblationFlags, EmissionSidecar, LabeledPool, PrefBuildError, SamplingConfig,
    TrainingHyperparams,
};
use crate::report::{dataset_stats, DatasetStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub teacher_model: String,
    pub student_model: String,
    pub judge_model: String,
    pub harden: HardenConfig,
    pub sampling: SamplingConfig,
    pub grade_mode: GradeMode,
    pub flags: AblationFlags,
    /// Keep seed problems (with teacher re-solutions) in the final corpus.
    pub include_seeds: bool,
    /// Which learning iteration this dataset feeds; metadata only. The
    /// student backend decides whose samples are graded.
    pub iteration: u32,
    pub max_parallel: usize,
    pub config_digest: Option<String>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            teacher_model: "teacher".to_string(),
            student_model: "student".to_string(),
            judge_model: "judge".to_string(),
            harden: HardenConfig::default(),
            sampling: SamplingConfig::default(),
            grade_mode: GradeMode::NumericOracle,
            flags: AblationFlags::default(),
            include_seeds: true,
            iteration: 2,
            max_parallel: 4,
            config_digest: None,
        }
    }
}

/// Teacher-side backend (agents, solutions, judge) and student-side backend
/// (response sampling). Iteration #3 is the same pipeline with a different
/// student backend.
pub struct PipelineBackends<'a> {
    pub teacher: &'a Backend,
    pub student: &'a Backend,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    PrefBuild(#[from] PrefBuildError),
    #[error(transparent)]
    Grader(#[from] GraderError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

/// One graded (problem, sample) outcome, as written to verdicts.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub problem_id: String,
    pub sample_index: u32,
    pub verdict: VerdictValue,
    pub judge: JudgeKind,
    pub raw_judge_output_digest: String,
}

/// Grades every student solution against its problem's teacher solution,
/// producing one record per (problem, sample). Un-gradable or
/// format-failing judgments are recorded as incorrect.
pub fn grade_solutions(
    problems: &[Problem],
    teacher_solutions: &[Solution],
    student_solutions: &[Solution],
    mode: GradeMode,
    judge: Option<&Judge<'_>>,
) -> Result<Vec<VerdictRecord>, PipelineError> {
    let mut records = Vec::new();
    for problem in problems {
        let teacher = teacher_solutions
            .iter()
            .find(|s| s.problem_id == problem.id && s.author == Author::Teacher)
            .ok_or_else(|| PrefBuildError::MissingSolution(problem.id.clone()))?;
        let mut students: Vec<&Solution> = student_solutions
            .iter()
            .filter(|s| s.problem_id == problem.id && s.author == Author::Student)
            .collect();
        students.sort_by_key(|s| s.sample_index);
        for student in students {
            let record = match grader::grade(&problem.question, &teacher.text, &student.text, mode, judge)
            {
                Ok(verdict) => VerdictRecord {
                    problem_id: problem.id.clone(),
                    sample_index: student.sample_index,
                    verdict: verdict.value,
                    judge: verdict.judge,
                    raw_judge_output_digest: sha256_hex(&verdict.raw_judge_output),
                },
                Err(GraderError::Ungradable) => VerdictRecord {
                    problem_id: problem.id.clone(),
                    sample_index: student.sample_index,
                    verdict: VerdictValue::Incorrect,
                    judge: JudgeKind::NumericOracle,
                    raw_judge_output_digest: sha256_hex(""),
                },
                Err(GraderError::JudgeFormat { raw_output }) => VerdictRecord {
                    problem_id: problem.id.clone(),
                    sample_index: student.sample_index,
                    verdict: VerdictValue::Incorrect,
                    judge: JudgeKind::Llm,
                    raw_judge_output_digest: sha256_hex(&raw_output),
                },
                Err(other) => return Err(other.into()),
            };
            records.push(record);
        }
    }
    Ok(records)
}

pub fn save_verdicts(records: &[VerdictRecord], path: &Path) -> Result<(), PipelineError> {
    let mut body = String::new();
    for record in records {
        body.push_str(&serde_json::to_string(record).expect("record serializes"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io_err(path))
}

pub fn load_verdicts(path: &Path) -> Result<Vec<VerdictRecord>, PipelineError> {
    let body = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for line in body.lines().filter(|l| !l.is_empty()) {
        let record: VerdictRecord =
            serde_json::from_str(line).map_err(|source| CorpusError::Parse {
                path: path.display().to_string(),
                line: 0,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Counters reported after a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed_count: usize,
    pub expanded_count: usize,
    pub hardened_count: usize,
    /// Hardened problems dropped by the teacher-solution length filter.
    pub filter_dropped: usize,
    /// Seeds whose expansion or hardening failed to parse (skipped).
    pub generation_failures: usize,
    pub corpus_size: usize,
    pub all_positive_questions: usize,
    pub pair_count: usize,
    pub stats: DatasetStats,
}

/// Paths of the artifacts a run writes.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub corpus: PathBuf,
    pub teacher_solutions: PathBuf,
    pub student_solutions: PathBuf,
    pub verdicts: PathBuf,
    pub sft: PathBuf,
    pub dpo: PathBuf,
    pub kto: PathBuf,
    pub stats: PathBuf,
    pub sidecar: PathBuf,
}

impl RunPaths {
    pub fn under(run_dir: &Path) -> Self {
        RunPaths {
            corpus: run_dir.join("corpus.jsonl"),
            teacher_solutions: run_dir.join("teacher_solutions.jsonl"),
            student_solutions: run_dir.join("student_solutions.jsonl"),
            verdicts: run_dir.join("verdicts.jsonl"),
            sft: run_dir.join("sft.jsonl"),
            dpo: run_dir.join("dpo.jsonl"),
            kto: run_dir.join("kto.jsonl"),
            stats: run_dir.join("stats.json"),
            sidecar: run_dir.join("emission_sidecar.json"),
        }
    }
}

/// Expands and hardens seeds into the generated corpus. Per-seed generation
/// failures are skipped with a warning; backend failures abort.
pub fn build_generated_corpus(
    seeds: &Corpus,
    backends: &PipelineBackends<'_>,
    options: &PipelineOptions,
) -> Result<(Corpus, PipelineSummary), PipelineError> {
    let ctx = AgentContext::new(backends.teacher, &options.teacher_model);
    let mut summary = PipelineSummary { seed_count: seeds.len(), ..Default::default() };

    let seed_list: Vec<&Problem> = seeds.iter().collect();
    let expansions = parallel_map(seed_list.clone(), options.max_parallel, |seed| {
        if seed.gold_answer.is_none() {
            return Ok(Vec::new());
        }
        agentgen::expand_ask_me_anything(seed, &ctx)
    });
    let mut expanded = Vec::new();
    for result in expansions {
        match result {
            Ok(problems) => expanded.extend(problems),
            Err(AgentError::Unparseable(id)) => {
                eprintln!("[warn] expansion skipped for seed {id}: unparseable response");
                summary.generation_failures += 1;
            }
            Err(AgentError::Backend(e)) => return Err(e.into()),
            Err(other) => return Err(other.into()),
        }
    }
    summary.expanded_count = expanded.len();

    let hardenings = parallel_map(seed_list, options.max_parallel, |seed| {
        agentgen::harden(seed, &options.harden, &ctx)
    });
    let mut hardened = Vec::new();
    for result in hardenings {
        match result {
            Ok(Some(problem)) => hardened.push(problem),
            Ok(None) => summary.filter_dropped += 1,
            Err(AgentError::Unparseable(id)) | Err(AgentError::EmptyEditorOutput(id)) => {
                eprintln!("[warn] hardening skipped for seed {id}");
                summary.generation_failures += 1;
            }
            Err(AgentError::Backend(e)) => return Err(e.into()),
            Err(other) => return Err(other.into()),
        }
    }
    summary.hardened_count = hardened.len();

    let mut parts = Vec::new();
    if options.include_seeds {
        parts.push(seeds.clone());
    }
    parts.push(Corpus::from_problems(expanded)?);
    parts.push(Corpus::from_problems(hardened)?);
    let corpus = merge_corpora(&parts)?;
    summary.corpus_size = corpus.len();
    Ok((corpus, summary))
}

/// Full pipeline over a seed corpus; writes every artifact under `run_dir`
/// and returns the run summary.
pub fn run_pipeline(
    seeds: &Corpus,
    backends: &PipelineBackends<'_>,
    options: &PipelineOptions,
    run_dir: &Path,
) -> Result<PipelineSummary, PipelineError> {
    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let paths = RunPaths::under(run_dir);

    let (corpus, mut summary) = build_generated_corpus(seeds, backends, options)?;
    save_corpus(&corpus, &paths.corpus)?;

    let ctx = AgentContext::new(backends.teacher, &options.teacher_model);
    let problem_list: Vec<&Problem> = corpus.iter().collect();
    let teacher_solutions: Vec<Solution> =
        parallel_map(problem_list.clone(), options.max_parallel, |problem| {
            agentgen::solve(problem, &ctx)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
    save_solutions(&teacher_solutions, &paths.teacher_solutions)?;

    let student_solutions: Vec<Solution> =
        parallel_map(problem_list, options.max_parallel, |problem| {
            prefbuild::sample_responses(problem, backends.student, &options.student_model, &options.sampling)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    save_solutions(&student_solutions, &paths.student_solutions)?;

    let judge = Judge::new(backends.teacher, &options.judge_model);
    let judge_ref = match options.grade_mode {
        GradeMode::NumericOracle => None,
        _ => Some(&judge),
    };
    let verdicts = grade_solutions(
        corpus.problems(),
        &teacher_solutions,
        &student_solutions,
        options.grade_mode,
        judge_ref,
    )?;
    save_verdicts(&verdicts, &paths.verdicts)?;

    let pool = prefbuild::label_pool(
        corpus.problems(),
        &teacher_solutions,
        &student_solutions,
        options.grade_mode,
        judge_ref,
    )?;
    summary.all_positive_questions = pool.all_positive_count();
    let pool = if options.flags.drop_all_positive_questions {
        pool
    } else {
        prefbuild::inject_synthetic_negatives(pool, options.sampling.rng_seed)?
    };
    let pairs = prefbuild::build_preference_dataset(&pool, &options.flags)?;
    summary.pair_count = pairs.len();

    prefbuild::emit_sft(&corpus, &teacher_solutions, &paths.sft)?;
    prefbuild::emit_dpo(&pairs, &paths.dpo)?;
    prefbuild::emit_kto(&pairs, &paths.kto)?;

    summary.stats = dataset_stats(&corpus, &[(options.iteration, &pool)], summary.filter_dropped);
    let stats_body = serde_json::to_string_pretty(&summary.stats).expect("stats serialize");
    std::fs::write(&paths.stats, stats_body).map_err(io_err(&paths.stats))?;

    let sidecar = EmissionSidecar {
        sampling: options.sampling.clone(),
        flags: options.flags,
        iteration: options.iteration,
        config_digest: options.config_digest.clone(),
        training_hyperparams: TrainingHyperparams::default(),
    };
    prefbuild::write_sidecar(&sidecar, &paths.sidecar)?;

    Ok(summary)
}

/// Labels a pool from already-materialized solutions, for staged CLI use.
pub fn build_pool_from_files(
    problems_path: &Path,
    teacher_path: &Path,
    student_path: &Path,
    grade_mode: GradeMode,
    judge: Option<&Judge<'_>>,
    rng_seed: u64,
    flags: &AblationFlags,
) -> Result<(LabeledPool, Vec<prefbuild::PreferencePair>), PipelineError> {
    let problems = load_corpus(problems_path)?;
    let teacher_solutions = corpus::load_solutions(teacher_path)?;
    let student_solutions = corpus::load_solutions(student_path)?;
    let pool = prefbuild::label_pool(
        problems.problems(),
        &teacher_solutions,
        &student_solutions,
        grade_mode,
        judge,
    )?;
    let pool = if flags.drop_all_positive_questions {
        pool
    } else {
        prefbuild::inject_synthetic_negatives(pool, rng_seed)?
    };
    let pairs = prefbuild::build_preference_dataset(&pool, flags)?;
    Ok((pool, pairs))
}
