//! One function per subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mathforge_core::agentgen::{self, AgentContext, AgentError, HardenConfig};
use mathforge_core::backend::parallel_map;
use mathforge_core::contam::{self, ContamConfig, RawDoc};
use mathforge_core::corpus::{
    load_corpus, load_solutions, save_corpus, save_solutions, Corpus, Problem, Solution,
};
use mathforge_core::grader::{GradeMode, Judge};
use mathforge_core::pipeline::{
    self, grade_solutions, load_verdicts, save_verdicts, PipelineBackends,
};
use mathforge_core::prefbuild::{self, EmissionSidecar, TrainingHyperparams};
use mathforge_core::report::{self, Decoding, GradedItem};

use crate::config::ResolvedConfig;
use crate::logging;

pub fn expand(config: &ResolvedConfig, seeds_path: &Path, out_path: &Path) -> Result<()> {
    config.require_models()?;
    let seeds = load_corpus(seeds_path)?;
    let backend = config.build_backend()?;
    let ctx = AgentContext::new(&backend, &config.teacher_model);
    let seed_list: Vec<&Problem> = seeds.iter().filter(|p| p.gold_answer.is_some()).collect();
    let results = parallel_map(seed_list, config.backend.max_parallel, |seed| {
        agentgen::expand_ask_me_anything(seed, &ctx)
    });
    let mut corpus = Corpus::new();
    let mut skipped = 0usize;
    for result in results {
        match result {
            Ok(problems) => {
                for problem in problems {
                    corpus.push(problem)?;
                }
            }
            Err(AgentError::Unparseable(id)) => {
                logging::info("expansion_skipped", &[("seed", id)]);
                skipped += 1;
            }
            Err(other) => return Err(other.into()),
        }
    }
    save_corpus(&corpus, out_path)?;
    logging::info(
        "expand_done",
        &[
            ("generated", corpus.len().to_string()),
            ("skipped_seeds", skipped.to_string()),
            ("out", out_path.display().to_string()),
        ],
    );
    Ok(())
}

pub fn harden(
    config: &ResolvedConfig,
    seeds_path: &Path,
    out_path: &Path,
    rounds_override: Option<u32>,
) -> Result<()> {
    config.require_models()?;
    let seeds = load_corpus(seeds_path)?;
    let backend = config.build_backend()?;
    let ctx = AgentContext::new(&backend, &config.teacher_model);
    let harden_config = HardenConfig {
        rounds: rounds_override.unwrap_or(config.rounds),
        max_teacher_answer_chars: config.max_teacher_answer_chars,
    };
    let seed_list: Vec<&Problem> = seeds.iter().collect();
    let results = parallel_map(seed_list, config.backend.max_parallel, |seed| {
        agentgen::harden(seed, &harden_config, &ctx)
    });
    let mut corpus = Corpus::new();
    let mut dropped = 0usize;
    let mut skipped = 0usize;
    for result in results {
        match result {
            Ok(Some(problem)) => corpus.push(problem)?,
            Ok(None) => dropped += 1,
            Err(AgentError::EmptyEditorOutput(id)) | Err(AgentError::Unparseable(id)) => {
                logging::info("harden_skipped", &[("seed", id)]);
                skipped += 1;
            }
            Err(other) => return Err(other.into()),
        }
    }
    save_corpus(&corpus, out_path)?;
    logging::info(
        "harden_done",
        &[
            ("hardened", corpus.len().to_string()),
            ("filter_dropped", dropped.to_string()),
            ("skipped_seeds", skipped.to_string()),
        ],
    );
    Ok(())
}

pub fn solve(config: &ResolvedConfig, problems_path: &Path, out_path: &Path) -> Result<()> {
    config.require_models()?;
    let corpus = load_corpus(problems_path)?;
    let backend = config.build_backend()?;
    let ctx = AgentContext::new(&backend, &config.teacher_model);
    let problem_list: Vec<&Problem> = corpus.iter().collect();
    let solutions: Vec<Solution> = parallel_map(problem_list, config.backend.max_parallel, |p| {
        agentgen::solve(p, &ctx)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    save_solutions(&solutions, out_path)?;
    logging::info("solve_done", &[("solutions", solutions.len().to_string())]);
    Ok(())
}

pub fn grade(
    config: &ResolvedConfig,
    problems_path: &Path,
    teacher_path: &Path,
    student_path: &Path,
    out_path: &Path,
    mode: GradeMode,
) -> Result<()> {
    let corpus = load_corpus(problems_path)?;
    let teacher_solutions = load_solutions(teacher_path)?;
    let student_solutions = load_solutions(student_path)?;
    let backend;
    let judge_storage;
    let judge = match mode {
        GradeMode::NumericOracle => None,
        _ => {
            config.require_models()?;
            backend = config.build_backend()?;
            judge_storage = Judge::new(&backend, &config.judge_model);
            Some(&judge_storage)
        }
    };
    let records = grade_solutions(
        corpus.problems(),
        &teacher_solutions,
        &student_solutions,
        mode,
        judge,
    )?;
    save_verdicts(&records, out_path)?;
    logging::info("grade_done", &[("verdicts", records.len().to_string())]);
    Ok(())
}

pub struct PrefsInputs<'a> {
    pub problems: &'a Path,
    pub teacher_solutions: &'a Path,
    /// When absent, k responses per problem are sampled from the student
    /// model instead of read from a file.
    pub student_solutions: Option<&'a Path>,
    pub out_dir: &'a Path,
}

pub fn prefs(config: &ResolvedConfig, inputs: &PrefsInputs<'_>) -> Result<()> {
    let corpus = load_corpus(inputs.problems)?;
    let teacher_solutions = load_solutions(inputs.teacher_solutions)?;
    let backend = config.build_backend()?;

    let student_solutions = match inputs.student_solutions {
        Some(path) => load_solutions(path)?,
        None => {
            config.require_models()?;
            let problem_list: Vec<&Problem> = corpus.iter().collect();
            parallel_map(problem_list, config.backend.max_parallel, |problem| {
                prefbuild::sample_responses(problem, &backend, &config.student_model, &config.sampling)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect()
        }
    };

    let judge_storage;
    let judge = match config.grade_mode {
        GradeMode::NumericOracle => None,
        _ => {
            config.require_models()?;
            judge_storage = Judge::new(&backend, &config.judge_model);
            Some(&judge_storage)
        }
    };

    let pool = prefbuild::label_pool(
        corpus.problems(),
        &teacher_solutions,
        &student_solutions,
        config.grade_mode,
        judge,
    )?;
    let all_positive = pool.all_positive_count();
    let pool = if config.flags.drop_all_positive_questions {
        pool
    } else {
        prefbuild::inject_synthetic_negatives(pool, config.sampling.rng_seed)?
    };
    let pairs = prefbuild::build_preference_dataset(&pool, &config.flags)?;

    std::fs::create_dir_all(inputs.out_dir)
        .with_context(|| format!("cannot create {}", inputs.out_dir.display()))?;
    let pairs_path = inputs.out_dir.join("pairs.jsonl");
    prefbuild::save_pairs(&pairs, &pairs_path)?;
    save_solutions(&student_solutions, inputs.out_dir.join("student_solutions.jsonl"))?;
    let sidecar = EmissionSidecar {
        sampling: config.sampling.clone(),
        flags: config.flags,
        iteration: config.iteration,
        config_digest: Some(config.digest()),
        training_hyperparams: TrainingHyperparams::default(),
    };
    prefbuild::write_sidecar(&sidecar, inputs.out_dir.join("emission_sidecar.json"))?;
    logging::info(
        "prefs_done",
        &[
            ("pairs", pairs.len().to_string()),
            ("all_positive_questions", all_positive.to_string()),
            ("out_dir", inputs.out_dir.display().to_string()),
        ],
    );
    Ok(())
}

pub enum EmitFormat {
    Sft,
    Dpo,
    Kto,
}

pub fn parse_emit_format(raw: &str) -> Result<EmitFormat> {
    match raw {
        "sft" => Ok(EmitFormat::Sft),
        "dpo" => Ok(EmitFormat::Dpo),
        "kto" => Ok(EmitFormat::Kto),
        other => bail!("unknown emit format {other:?} (expected sft, dpo, or kto)"),
    }
}

pub fn emit(
    format: EmitFormat,
    problems: Option<&Path>,
    teacher_solutions: Option<&Path>,
    pairs: Option<&Path>,
    out_path: &Path,
) -> Result<()> {
    match format {
        EmitFormat::Sft => {
            let problems = problems.context("--problems is required for sft")?;
            let teacher = teacher_solutions.context("--teacher-solutions is required for sft")?;
            let corpus = load_corpus(problems)?;
            let solutions = load_solutions(teacher)?;
            prefbuild::emit_sft(&corpus, &solutions, out_path)?;
        }
        EmitFormat::Dpo => {
            let pairs = pairs.context("--pairs is required for dpo")?;
            let pairs = prefbuild::load_pairs(pairs)?;
            prefbuild::emit_dpo(&pairs, out_path)?;
        }
        EmitFormat::Kto => {
            let pairs = pairs.context("--pairs is required for kto")?;
            let pairs = prefbuild::load_pairs(pairs)?;
            prefbuild::emit_kto(&pairs, out_path)?;
        }
    }
    logging::info("emit_done", &[("out", out_path.display().to_string())]);
    Ok(())
}

fn corpus_to_docs(corpus: &Corpus, include_answer_text: bool) -> Vec<RawDoc> {
    corpus
        .iter()
        .map(|p| {
            let text = match (&p.gold_answer, include_answer_text) {
                (Some(answer), true) => format!("{}\n{}", p.question, answer),
                _ => p.question.clone(),
            };
            RawDoc { id: p.id.clone(), text }
        })
        .collect()
}

pub fn contam(
    config: &ContamConfig,
    train_path: &Path,
    test_path: &Path,
    report_path: Option<&Path>,
) -> Result<()> {
    let train = load_corpus(train_path)?;
    let test = load_corpus(test_path)?;
    let stopwords = contam::default_stopword_set();
    let report = contam::detect(
        &corpus_to_docs(&test, config.include_answer_text),
        &corpus_to_docs(&train, config.include_answer_text),
        config,
        &stopwords,
    );
    print!("{}", report.summary_table());
    if let Some(path) = report_path {
        let body = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    }
    logging::info("contam_done", &[("flagged", report.flagged_count.to_string())]);
    Ok(())
}

pub fn eval(verdicts_path: &Path, dataset_tag: &str, out_format: &str) -> Result<()> {
    let records = load_verdicts(verdicts_path)?;
    let items: Vec<GradedItem> = records
        .iter()
        .map(|r| GradedItem { problem_id: r.problem_id.clone(), verdict: r.verdict })
        .collect();
    let result = report::pass_at_1(dataset_tag, &items, Decoding::Greedy)?;
    match out_format {
        "json" => println!("{}", serde_json::to_string_pretty(&result)?),
        "csv" => {
            let table = report::benchmark_table(&[("model".to_string(), result)]);
            print!("{}", table.csv);
        }
        _ => {
            let table = report::benchmark_table(&[("model".to_string(), result.clone())]);
            print!("{}", table.markdown);
            println!(
                "\npass@1: {} ({}/{})",
                result.pass_at_1_display(),
                result.correct,
                result.total
            );
        }
    }
    Ok(())
}

pub fn stats(problems_path: &Path, out_format: &str) -> Result<()> {
    let corpus = load_corpus(problems_path)?;
    let stats = report::dataset_stats(&corpus, &[], 0);
    match out_format {
        "json" => println!("{}", serde_json::to_string_pretty(&stats)?),
        _ => print!("{}", stats.render_markdown()),
    }
    Ok(())
}

pub fn run_pipeline(config: &ResolvedConfig, seeds_path: &Path, run_dir: &PathBuf) -> Result<()> {
    config.require_models()?;
    let seeds = load_corpus(seeds_path)?;
    let backend = config.build_backend()?;
    let backends = PipelineBackends { teacher: &backend, student: &backend };
    let options = config.pipeline_options();
    std::fs::create_dir_all(run_dir)
        .with_context(|| format!("cannot create {}", run_dir.display()))?;
    std::fs::write(run_dir.join("config.digest"), config.digest())
        .context("cannot write config digest")?;
    let summary = pipeline::run_pipeline(&seeds, &backends, &options, run_dir)?;
    logging::info(
        "pipeline_done",
        &[
            ("seeds", summary.seed_count.to_string()),
            ("expanded", summary.expanded_count.to_string()),
            ("hardened", summary.hardened_count.to_string()),
            ("filter_dropped", summary.filter_dropped.to_string()),
            ("corpus_size", summary.corpus_size.to_string()),
            ("all_positive_questions", summary.all_positive_questions.to_string()),
            ("pairs", summary.pair_count.to_string()),
            ("run_dir", run_dir.display().to_string()),
        ],
    );
    Ok(())
}
