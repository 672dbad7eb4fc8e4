//! Run configuration: a flat, commented TOML file with CLI-flag overrides.
//!
//! Every run resolves to a [`ResolvedConfig`] whose digest is stamped into
//! the run's outputs, so artifacts are traceable to the exact settings that
//! produced them.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mathforge_core::backend::{Backend, BackendConfig, BackendMode, RetryPolicy};
use mathforge_core::contam::ContamConfig;
use mathforge_core::grader::GradeMode;
use mathforge_core::pipeline::PipelineOptions;
use mathforge_core::prefbuild::{AblationFlags, SamplingConfig};

/// On-disk configuration. All fields optional; missing values fall back to
/// defaults, except model names which are required by the subcommands that
/// call a backend.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // Backend.
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub mode: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub max_parallel: Option<usize>,
    pub retry_attempts: Option<u32>,
    pub retry_initial_backoff_ms: Option<u64>,
    /// Mock fixtures JSONL ({"prompt", "reply"} records) loaded in mock mode.
    pub fixtures_path: Option<PathBuf>,

    // Models. No defaults: the judge and generators are named explicitly.
    pub teacher_model: Option<String>,
    pub student_model: Option<String>,
    pub judge_model: Option<String>,

    // Agents.
    pub rounds: Option<u32>,
    pub max_teacher_answer_chars: Option<usize>,
    pub include_seeds: Option<bool>,

    // Sampling.
    pub k: Option<u32>,
    pub top_p: Option<f64>,
    pub temperature: Option<f64>,
    pub rng_seed: Option<u64>,

    // Grading and iteration.
    pub grade_mode: Option<String>,
    pub iteration: Option<u32>,

    // Ablations.
    pub teacher_positive_only: Option<bool>,
    pub drop_all_positive_questions: Option<bool>,
    pub exclude_teacher_when_all_positive: Option<bool>,

    // Contamination.
    pub contam_top_k: Option<usize>,
    pub contam_ngram_n: Option<usize>,
    pub contam_threshold: Option<f64>,
    pub contam_include_answer_text: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: FileConfig = toml::from_str(&body)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok(config)
    }
}

/// Fully-resolved settings for one run.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub backend: BackendConfig,
    pub fixtures_path: Option<PathBuf>,
    pub teacher_model: String,
    pub student_model: String,
    pub judge_model: String,
    pub rounds: u32,
    pub max_teacher_answer_chars: usize,
    pub include_seeds: bool,
    pub sampling: SamplingConfig,
    pub grade_mode: GradeMode,
    pub iteration: u32,
    pub flags: AblationFlags,
    pub contam: ContamConfig,
}

fn parse_mode(raw: &str) -> Result<BackendMode> {
    match raw {
        "live" => Ok(BackendMode::Live),
        "mock" => Ok(BackendMode::Mock),
        "cache_only" => Ok(BackendMode::CacheOnly),
        other => bail!("unknown backend mode {other:?} (expected live, mock, or cache_only)"),
    }
}

pub fn parse_grade_mode(raw: &str) -> Result<GradeMode> {
    match raw {
        "llm" => Ok(GradeMode::Llm),
        "numeric_oracle" => Ok(GradeMode::NumericOracle),
        "llm_with_fallback" => Ok(GradeMode::LlmWithFallback),
        other => bail!(
            "unknown grade mode {other:?} (expected llm, numeric_oracle, or llm_with_fallback)"
        ),
    }
}

impl ResolvedConfig {
    pub fn from_file_config(file: &FileConfig) -> Result<Self> {
        let mode = match file.mode.as_deref() {
            Some(raw) => parse_mode(raw)?,
            None => BackendMode::Mock,
        };
        let backend = BackendConfig {
            endpoint: file.endpoint.clone().unwrap_or_default(),
            api_key_env: file.api_key_env.clone().unwrap_or_default(),
            max_parallel: file.max_parallel.unwrap_or(4),
            retry: RetryPolicy {
                attempts: file.retry_attempts.unwrap_or(5),
                initial_backoff: Duration::from_millis(file.retry_initial_backoff_ms.unwrap_or(1000)),
            },
            cache_dir: file.cache_dir.clone(),
            mode,
        };
        let grade_mode = match file.grade_mode.as_deref() {
            Some(raw) => parse_grade_mode(raw)?,
            None => GradeMode::NumericOracle,
        };
        Ok(ResolvedConfig {
            backend,
            fixtures_path: file.fixtures_path.clone(),
            teacher_model: file.teacher_model.clone().unwrap_or_default(),
            student_model: file.student_model.clone().unwrap_or_default(),
            judge_model: file.judge_model.clone().unwrap_or_default(),
            rounds: file.rounds.unwrap_or(2),
            max_teacher_answer_chars: file.max_teacher_answer_chars.unwrap_or(1800),
            include_seeds: file.include_seeds.unwrap_or(true),
            sampling: SamplingConfig {
                k: file.k.unwrap_or(4),
                top_p: file.top_p.unwrap_or(0.95),
                temperature: file.temperature.unwrap_or(0.7),
                rng_seed: file.rng_seed.unwrap_or(0),
            },
            grade_mode,
            iteration: file.iteration.unwrap_or(2),
            flags: AblationFlags {
                teacher_positive_only: file.teacher_positive_only.unwrap_or(false),
                drop_all_positive_questions: file.drop_all_positive_questions.unwrap_or(false),
                exclude_teacher_when_all_positive: file.exclude_teacher_when_all_positive.unwrap_or(false),
            },
            contam: ContamConfig {
                top_k: file.contam_top_k.unwrap_or(10),
                ngram_n: file.contam_ngram_n.unwrap_or(1),
                threshold: file.contam_threshold.unwrap_or(0.5),
                include_answer_text: file.contam_include_answer_text.unwrap_or(false),
            },
        })
    }

    /// SHA-256 of the canonical resolved-config JSON.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        mathforge_core::backend::sha256_hex(&canonical)
    }

    /// Model names are required wherever a backend is actually called.
    pub fn require_models(&self) -> Result<()> {
        for (field, value) in [
            ("teacher_model", &self.teacher_model),
            ("student_model", &self.student_model),
            ("judge_model", &self.judge_model),
        ] {
            if value.is_empty() {
                bail!("{field} must be set in the config file (no built-in default)");
            }
        }
        Ok(())
    }

    /// Builds the gateway and loads mock fixtures when configured.
    pub fn build_backend(&self) -> Result<Backend> {
        let backend = Backend::new(self.backend.clone());
        if let Some(path) = &self.fixtures_path {
            let count = backend
                .load_fixtures(path)
                .with_context(|| format!("cannot load fixtures from {}", path.display()))?;
            crate::logging::info("fixtures_loaded", &[("count", count.to_string())]);
        }
        Ok(backend)
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            teacher_model: self.teacher_model.clone(),
            student_model: self.student_model.clone(),
            judge_model: self.judge_model.clone(),
            harden: mathforge_core::agentgen::HardenConfig {
                rounds: self.rounds,
                max_teacher_answer_chars: self.max_teacher_answer_chars,
            },
            sampling: self.sampling.clone(),
            grade_mode: self.grade_mode,
            flags: self.flags,
            include_seeds: self.include_seeds,
            iteration: self.iteration,
            max_parallel: self.backend.max_parallel,
            config_digest: Some(self.digest()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_mock_oracle() {
        let resolved = ResolvedConfig::from_file_config(&FileConfig::default()).unwrap();
        assert_eq!(resolved.backend.mode, BackendMode::Mock);
        assert_eq!(resolved.sampling.k, 4);
        assert_eq!(resolved.sampling.top_p, 0.95);
        assert_eq!(resolved.sampling.temperature, 0.7);
        assert_eq!(resolved.rounds, 2);
        assert_eq!(resolved.max_teacher_answer_chars, 1800);
        assert_eq!(resolved.contam.top_k, 10);
        assert_eq!(resolved.contam.threshold, 0.5);
        assert!(resolved.require_models().is_err());
    }

    #[test]
    fn toml_round_trip_and_digest_stability() {
        let body = r#"
# comment lines are allowed
mode = "mock"
teacher_model = "t-model"
student_model = "s-model"
judge_model = "j-model"
k = 2
rng_seed = 9
"#;
        let file: FileConfig = toml::from_str(body).unwrap();
        let resolved = ResolvedConfig::from_file_config(&file).unwrap();
        assert!(resolved.require_models().is_ok());
        assert_eq!(resolved.sampling.k, 2);
        assert_eq!(resolved.sampling.rng_seed, 9);
        let resolved_again = ResolvedConfig::from_file_config(&file).unwrap();
        assert_eq!(resolved.digest(), resolved_again.digest());

        let different: FileConfig = toml::from_str("k = 3").unwrap();
        let other = ResolvedConfig::from_file_config(&different).unwrap();
        assert_ne!(resolved.digest(), other.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("no_such_key = 1").is_err());
    }
}
