//! Generation agents: number-target question expansion, the
//! suggester/editor hardening loop, and teacher solution generation.

mod prompts;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatRequest, Message};
use crate::corpus::{Author, Lineage, Problem, Solution, Source};
use crate::grader;

pub use prompts::{
    editor_user_message, render_expansion_prompt, AgentPromptSet, EDITOR_SYSTEM_PROMPT,
    EXPANSION_PROMPT_TEMPLATE, SUGGESTER_SYSTEM_PROMPT,
};

/// Number words recognized as targets beyond literal numbers.
pub const NUMBER_WORD_LEXICON: &[&str] = &[
    "half", "twice", "double", "thrice", "triple", "one", "two", "three", "four", "five", "six",
    "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    LiteralNumber,
    NumberWord,
}

/// A number (or number word) in a question that can become the unknown of a
/// generated variant. `position` is the byte offset of the surface in the
/// question; the final answer-target carries the question length as its
/// position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberTarget {
    pub surface: String,
    pub kind: TargetKind,
    pub position: usize,
}

/// Hardening loop parameters: round count and the teacher-solution length
/// filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardenConfig {
    pub rounds: u32,
    pub max_teacher_answer_chars: usize,
}

impl Default for HardenConfig {
    fn default() -> Self {
        HardenConfig { rounds: 2, max_teacher_answer_chars: 1800 }
    }
}

/// Backend handle plus decode settings shared by the agent calls.
pub struct AgentContext<'a> {
    pub backend: &'a Backend,
    pub model: String,
    pub prompts: AgentPromptSet,
    /// Decoding temperature for generation calls (expansion, suggester,
    /// editor).
    pub generation_temperature: f64,
    /// Decoding temperature for teacher solution calls.
    pub solve_temperature: f64,
    pub max_tokens: u32,
}

impl<'a> AgentContext<'a> {
    pub fn new(backend: &'a Backend, model: impl Into<String>) -> Self {
        AgentContext {
            backend,
            model: model.into(),
            prompts: AgentPromptSet::default(),
            generation_temperature: 1.0,
            solve_temperature: 0.0,
            max_tokens: 2048,
        }
    }

    fn generation_request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model_name: self.model.clone(),
            messages,
            temperature: self.generation_temperature,
            top_p: 1.0,
            max_tokens: self.max_tokens,
            sample_index: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("seed {0} has no gold answer; expansion requires one")]
    MissingGoldAnswer(String),
    #[error("no parseable question blocks in expansion response for seed {0}")]
    Unparseable(String),
    #[error("editor produced empty output for seed {0}")]
    EmptyEditorOutput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

// Grouped-comma literals: 48, 1,234, 1,234.50, 3.5. A bare trailing comma
// or period is punctuation, not part of the number.
static LITERAL_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d+(?:,\d{3})*(?:\.\d+)?").expect("literal pattern compiles"));

static NUMBER_WORD: LazyLock<Regex> = LazyLock::new(|| {
    let alternatives = NUMBER_WORD_LEXICON.join("|");
    Regex::new(&format!(r"(?i)\b(?:{alternatives})\b")).expect("word pattern compiles")
});

/// Finds expansion targets: literal numbers and lexicon number-words in
/// question order, then the gold answer as the final target.
pub fn find_number_targets(question: &str, gold_answer: &str) -> Vec<NumberTarget> {
    let mut targets: Vec<NumberTarget> = LITERAL_NUMBER
        .find_iter(question)
        .map(|m| NumberTarget {
            surface: m.as_str().to_string(),
            kind: TargetKind::LiteralNumber,
            position: m.start(),
        })
        .chain(NUMBER_WORD.find_iter(question).map(|m| NumberTarget {
            surface: m.as_str().to_string(),
            kind: TargetKind::NumberWord,
            position: m.start(),
        }))
        .collect();
    targets.sort_by_key(|t| t.position);
    let answer_surface = gold_answer.trim().to_string();
    let kind = if grader::normalize_number(&answer_surface).is_some() {
        TargetKind::LiteralNumber
    } else {
        TargetKind::NumberWord
    };
    targets.push(NumberTarget { surface: answer_surface, kind, position: question.len() });
    targets
}

/// Splits an expansion response into (target, question) blocks. Tolerant of
/// surrounding whitespace only; blocks missing a question marker are
/// dropped.
pub fn parse_expansion_response(response: &str) -> Vec<(String, String)> {
    let mut blocks = Vec::new();
    for chunk in response.split("<target>").skip(1) {
        let Some((target_part, question_part)) = chunk.split_once("<question>") else {
            continue;
        };
        let target = target_part.trim();
        let question = question_part.trim();
        if target.is_empty() || question.is_empty() {
            continue;
        }
        blocks.push((target.to_string(), question.to_string()));
    }
    blocks
}

/// Expands one seed into a problem per target: renders the few-shot prompt
/// with the seed as Example 4, calls the backend once, and parses the
/// target/question blocks. Blocks that fail to parse are dropped with a
/// warning; zero parseable blocks is a generation error.
pub fn expand_ask_me_anything(
    seed: &Problem,
    ctx: &AgentContext<'_>,
) -> Result<Vec<Problem>, AgentError> {
    let answer = seed
        .gold_answer
        .as_deref()
        .ok_or_else(|| AgentError::MissingGoldAnswer(seed.id.clone()))?;
    let prompt = ctx.prompts.render_expansion(&seed.question, answer);
    let request = ctx.generation_request(vec![Message::user(prompt)]);
    let response = ctx.backend.complete(&request)?;
    let blocks = parse_expansion_response(&response.content);
    let marker_count = response.content.matches("<target>").count();
    if blocks.len() < marker_count {
        eprintln!(
            "[warn] seed {}: dropped {} unparseable expansion block(s)",
            seed.id,
            marker_count - blocks.len()
        );
    }
    if blocks.is_empty() {
        return Err(AgentError::Unparseable(seed.id.clone()));
    }
    Ok(blocks
        .into_iter()
        .enumerate()
        .map(|(i, (target, question))| Problem {
            id: format!("{}-ama{}", seed.id, i + 1),
            question,
            gold_answer: None,
            source: Source::AskMeAnything,
            lineage: Some(Lineage {
                parent_id: seed.id.clone(),
                round: 1,
                number_target: Some(target),
            }),
            dataset_tag: seed.dataset_tag.clone(),
        })
        .collect())
}

/// Generates the teacher solution for a problem, with the extracted final
/// answer filled in.
pub fn solve(problem: &Problem, ctx: &AgentContext<'_>) -> Result<Solution, AgentError> {
    let request = ChatRequest {
        model_name: ctx.model.clone(),
        messages: vec![Message::user(&problem.question)],
        temperature: ctx.solve_temperature,
        top_p: 1.0,
        max_tokens: ctx.max_tokens,
        sample_index: 0,
    };
    let response = ctx.backend.complete(&request)?;
    let extracted = grader::extract_final_answer(&response.content).map(|n| n.canonical());
    Ok(Solution::new(&problem.id, Author::Teacher, 0, response.content, extracted))
}

/// Runs the suggester/editor loop for `config.rounds` rounds, then filters
/// on the teacher-solution length. Returns `None` when the final problem's
/// teacher solution exceeds `max_teacher_answer_chars`.
pub fn harden(
    seed: &Problem,
    config: &HardenConfig,
    ctx: &AgentContext<'_>,
) -> Result<Option<Problem>, AgentError> {
    let mut current = seed.question.clone();
    for _ in 0..config.rounds {
        // Each round's suggester sees only the current problem text.
        let suggest_request = ctx.generation_request(vec![
            Message::system(&ctx.prompts.suggester_system_prompt),
            Message::user(&current),
        ]);
        let suggestions = ctx.backend.complete(&suggest_request)?.content;

        let edit_request = ctx.generation_request(vec![
            Message::system(&ctx.prompts.editor_system_prompt),
            Message::user(editor_user_message(&current, &suggestions)),
        ]);
        let edited = ctx.backend.complete(&edit_request)?.content;
        if edited.trim().is_empty() {
            return Err(AgentError::EmptyEditorOutput(seed.id.clone()));
        }
        current = edited.trim().to_string();
    }

    let hardened = Problem {
        id: format!("{}-se", seed.id),
        question: current,
        gold_answer: None,
        source: Source::SuggesterEditor,
        lineage: Some(Lineage {
            parent_id: seed.id.clone(),
            round: config.rounds,
            number_target: None,
        }),
        dataset_tag: seed.dataset_tag.clone(),
    };
    let teacher = solve(&hardened, ctx)?;
    if teacher.char_length > config.max_teacher_answer_chars {
        return Ok(None);
    }
    Ok(Some(hardened))
}
