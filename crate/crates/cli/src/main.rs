//! `mathforge`: subcommand front-end for the dataset pipeline.

mod commands;
mod config;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_grade_mode, FileConfig, ResolvedConfig};

#[derive(Parser)]
#[command(
    name = "mathforge",
    version,
    about = "Synthesize math word problems, build preference datasets, and audit them"
)]
struct Cli {
    /// Run configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand seed problems into one variant per number target.
    Expand {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Harden seed problems through the suggester/editor rounds.
    Harden {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rounds: Option<u32>,
    },
    /// Generate teacher solutions for a problem corpus.
    Solve {
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grade student solutions against teacher solutions.
    Grade {
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        teacher_solutions: PathBuf,
        #[arg(long)]
        student_solutions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// llm | numeric_oracle | llm_with_fallback (overrides config).
        #[arg(long)]
        grade_mode: Option<String>,
    },
    /// Label pools, inject synthetic negatives, and build preference pairs.
    Prefs {
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        teacher_solutions: PathBuf,
        /// Student solutions JSONL; sampled from the student model when omitted.
        #[arg(long)]
        student_solutions: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Learning iteration this dataset feeds (2 or 3).
        #[arg(long)]
        iteration: Option<u32>,
        #[arg(long)]
        grade_mode: Option<String>,
        #[arg(long)]
        rng_seed: Option<u64>,
        #[arg(long)]
        teacher_positive_only: bool,
        #[arg(long)]
        drop_all_positive_questions: bool,
        #[arg(long)]
        exclude_teacher_when_all_positive: bool,
    },
    /// Emit a training file (sft, dpo, or kto) from materialized inputs.
    Emit {
        #[arg(long)]
        format: String,
        #[arg(long)]
        problems: Option<PathBuf>,
        #[arg(long)]
        teacher_solutions: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contamination check of a test corpus against a training corpus.
    Contam {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        include_answer_text: bool,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// pass@1 from a verdicts file (one verdict per problem).
    Eval {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        dataset_tag: String,
        /// markdown | csv | json
        #[arg(long, default_value = "markdown")]
        out_format: String,
    },
    /// Corpus composition statistics.
    Stats {
        #[arg(long)]
        problems: PathBuf,
        /// markdown | json
        #[arg(long, default_value = "markdown")]
        out_format: String,
    },
    /// Full pipeline: expand, harden, solve, sample, grade, prefs, emit.
    Pipeline {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<ResolvedConfig> {
    let file = match path {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    ResolvedConfig::from_file_config(&file)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Expand { seeds, out } => {
            let config = load_config(&cli.config)?;
            commands::expand(&config, &seeds, &out)
        }
        Command::Harden { seeds, out, rounds } => {
            let config = load_config(&cli.config)?;
            commands::harden(&config, &seeds, &out, rounds)
        }
        Command::Solve { problems, out } => {
            let config = load_config(&cli.config)?;
            commands::solve(&config, &problems, &out)
        }
        Command::Grade {
            problems,
            teacher_solutions,
            student_solutions,
            out,
            grade_mode,
        } => {
            let config = load_config(&cli.config)?;
            let mode = match grade_mode {
                Some(raw) => parse_grade_mode(&raw)?,
                None => config.grade_mode,
            };
            commands::grade(&config, &problems, &teacher_solutions, &student_solutions, &out, mode)
        }
        Command::Prefs {
            problems,
            teacher_solutions,
            student_solutions,
            out_dir,
            iteration,
            grade_mode,
            rng_seed,
            teacher_positive_only,
            drop_all_positive_questions,
            exclude_teacher_when_all_positive,
        } => {
            let mut config = load_config(&cli.config)?;
            if let Some(raw) = grade_mode {
                config.grade_mode = parse_grade_mode(&raw)?;
            }
            if let Some(iteration) = iteration {
                config.iteration = iteration;
            }
            if let Some(seed) = rng_seed {
                config.sampling.rng_seed = seed;
            }
            config.flags.teacher_positive_only |= teacher_positive_only;
            config.flags.drop_all_positive_questions |= drop_all_positive_questions;
            config.flags.exclude_teacher_when_all_positive |= exclude_teacher_when_all_positive;
            commands::prefs(
                &config,
                &commands::PrefsInputs {
                    problems: &problems,
                    teacher_solutions: &teacher_solutions,
                    student_solutions: student_solutions.as_deref(),
                    out_dir: &out_dir,
                },
            )
        }
        Command::Emit { format, problems, teacher_solutions, pairs, out } => {
            let format = commands::parse_emit_format(&format)?;
            commands::emit(
                format,
                problems.as_deref(),
                teacher_solutions.as_deref(),
                pairs.as_deref(),
                &out,
            )
        }
        Command::Contam { train, test, n, k, threshold, include_answer_text, report } => {
            let config = load_config(&cli.config)?;
            let mut contam_config = config.contam.clone();
            if let Some(n) = n {
                contam_config.ngram_n = n;
            }
            if let Some(k) = k {
                contam_config.top_k = k;
            }
            if let Some(threshold) = threshold {
                contam_config.threshold = threshold;
            }
            contam_config.include_answer_text |= include_answer_text;
            commands::contam(&contam_config, &train, &test, report.as_deref())
        }
        Command::Eval { verdicts, dataset_tag, out_format } => {
            commands::eval(&verdicts, &dataset_tag, &out_format)
        }
        Command::Stats { problems, out_format } => commands::stats(&problems, &out_format),
        Command::Pipeline { seeds, run_dir } => {
            let config = load_config(&cli.config)?;
            commands::run_pipeline(&config, &seeds, &run_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            logging::error("stage_failed", &[("error", format!("{err:#}"))]);
            ExitCode::FAILURE
        }
    }
}
