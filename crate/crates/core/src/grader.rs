//! Answer-correctness judgment.
//!
//! Two judges share one verdict type: an LLM judge that sends the
//! exact-match evaluation prompt and parses its "Final Verdict:" line, and a
//! deterministic numeric oracle that extracts final answers from solution
//! text and compares them in exact rational arithmetic. The oracle is the
//! offline cross-check for the LLM judge.

use std::str::FromStr;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatRequest, Message, Role};

/// System prompt for the exact-match judge, sent byte-exactly.
pub const JUDGE_SYSTEM_PROMPT: &str = "As an expert Math teacher, your role is to evaluate a student's answer to a word problem. The problem is accompanied by a correct solution provided by the problem setter. It is important to remember that there may be various methods to solve a word problem, so the student's steps might not always align with those in the problem setter's solution. However, the final answer, typically a number, should be unique and match the problem setter's answer. Your task involves analyzing the student's solution to identify any mistakes and determine whether the answer can be modified to correct the error. If the student's answer is unfixable, consider creating practice problems to help improve their understanding.\n\nUse the following format:\n\nError Analysis:\nIn one sentence, extract the final answer from the problem setter's solution and compare it with the student's answer. Do they match?\n\nFinal Verdict:\nCorrect/Incorrect";

/// Builds the judge's user message from the three texts.
pub fn judge_user_message(question: &str, setter_solution: &str, student_solution: &str) -> String {
    format!(
        "Question:\n{question}\n\nProblem Setter's answer:\n{setter_solution}\n\nStudent answer:\n{student_solution}"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictValue {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Llm,
    NumericOracle,
}

/// Outcome of grading one student solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub value: VerdictValue,
    pub error_analysis: String,
    pub judge: JudgeKind,
    pub raw_judge_output: String,
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        self.value == VerdictValue::Correct
    }
}

/// An exact number parsed out of solution text.
///
/// The value is an arbitrary-precision rational, so "1,234", "1234" and
/// "1234.0" normalize to the same value, and fractions like "1/3" are held
/// exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedNumber {
    pub value: BigRational,
    pub original_surface: String,
}

impl NormalizedNumber {
    pub fn from_parts(value: BigRational, surface: impl Into<String>) -> Self {
        NormalizedNumber {
            value,
            original_surface: surface.into(),
        }
    }

    /// Canonical rendering: terminating decimals print as decimals, other
    /// rationals as `p/q`.
    pub fn canonical(&self) -> String {
        let numer = self.value.numer();
        let denom = self.value.denom();
        if denom.is_one() {
            return numer.to_string();
        }
        // Terminating decimal iff denom = 2^a * 5^b.
        let mut d = denom.clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let mut scale = 0u32;
        while (&d % &two).is_zero() {
            d /= &two;
            scale += 1;
        }
        let mut fives = 0u32;
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return format!("{}/{}", numer, denom);
        }
        let digits = scale.max(fives);
        let scaled = self.value.clone() * BigRational::from_integer(BigInt::from(10).pow(digits));
        let scaled_int = scaled.to_integer();
        let negative = scaled_int.is_negative();
        let mut body = scaled_int.abs().to_string();
        let digits = digits as usize;
        while body.len() <= digits {
            body.insert(0, '0');
        }
        body.insert(body.len() - digits, '.');
        let body = body.trim_end_matches('0').trim_end_matches('.').to_string();
        let body = if body.is_empty() { "0".to_string() } else { body };
        if negative {
            format!("-{body}")
        } else {
            body
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraderError {
    #[error("judge output has no Final Verdict line")]
    JudgeFormat { raw_output: String },
    #[error("un-gradable: no final answer extractable from the setter solution")]
    Ungradable,
    #[error("llm grading requires a judge backend and model")]
    MissingJudge,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

// Numbers may carry a leading $, internal commas, a decimal part, and a
// trailing %. Fractions (3/4) and ratios (3:4) are matched first so the
// slash or colon is not split into two separate numbers.
static NUMBER_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?x)
        -?\$?\d[\d,]*(?:\.\d+)?\s*/\s*\d[\d,]*(?:\.\d+)?
      | -?\$?\d[\d,]*(?:\.\d+)?\s*:\s*\d[\d,]*(?:\.\d+)?
      | -?\$?\d[\d,]*(?:\.\d+)?%?
    ")
    .expect("number pattern compiles")
});

static ANSWER_IS_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)answer\s+is").expect("answer pattern compiles"));
static THEREFORE_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\btherefore\b").expect("therefore pattern compiles"));

fn parse_plain_decimal(digits: &str) -> Option<BigRational> {
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let int_part = if int_part.is_empty() { "0" } else { int_part };
    let numer_str = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(&numer_str).ok()?;
    let denom = BigInt::from(10).pow(frac_part.len() as u32);
    Some(BigRational::new(numer, denom))
}

/// Parses one numeric surface form to an exact rational. Accepts plain
/// numbers with $/,/% decoration, fractions `a/b`, and ratios `a:b`.
pub fn normalize_number(surface: &str) -> Option<NormalizedNumber> {
    let cleaned: String = surface
        .chars()
        .filter(|c| !matches!(c, '$' | ',' | '%' | ' '))
        .collect();
    let cleaned = cleaned.trim();
    if cleaned.is_empty() {
        return None;
    }
    let (negative, body) = match cleaned.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, cleaned),
    };
    let value = if let Some((a, b)) = body.split_once('/').or_else(|| body.split_once(':')) {
        let numer = parse_plain_decimal(a)?;
        let denom = parse_plain_decimal(b)?;
        if denom.is_zero() {
            return None;
        }
        numer / denom
    } else {
        parse_plain_decimal(body)?
    };
    let value = if negative { -value } else { value };
    Some(NormalizedNumber::from_parts(value, surface.trim()))
}

fn split_sentences(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let boundary = match b {
            b'\n' => true,
            b'.' | b'!' | b'?' => {
                // A period inside 1,234.50 is not a boundary.
                bytes
                    .get(i + 1)
                    .map(|&next| next.is_ascii_whitespace())
                    .unwrap_or(true)
            }
            _ => false,
        };
        if boundary {
            let sentence = text[start..i].trim();
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

fn last_number_in(sentence: &str) -> Option<NormalizedNumber> {
    NUMBER_PATTERN
        .find_iter(sentence)
        .filter_map(|m| normalize_number(m.as_str()))
        .last()
}

/// Deterministic final-answer extraction.
///
/// Picks the last sentence matching "answer is", else the last sentence
/// containing "=", else the last sentence containing "therefore", else the
/// last sentence containing any number, and returns the last number in that
/// sentence. Absent when the text holds no number at all.
pub fn extract_final_answer(solution_text: &str) -> Option<NormalizedNumber> {
    let sentences = split_sentences(solution_text);
    let with_numbers: Vec<&str> = sentences
        .iter()
        .copied()
        .filter(|s| last_number_in(s).is_some())
        .collect();
    if with_numbers.is_empty() {
        return None;
    }
    let pick = with_numbers
        .iter()
        .rev()
        .find(|s| ANSWER_IS_PATTERN.is_match(s))
        .or_else(|| with_numbers.iter().rev().find(|s| s.contains('=')))
        .or_else(|| with_numbers.iter().rev().find(|s| THEREFORE_PATTERN.is_match(s)))
        .unwrap_or(with_numbers.last().expect("nonempty"));
    last_number_in(pick)
}

/// True iff |a - b| <= rel_tol * max(1, |b|), evaluated exactly.
pub fn numbers_equal(a: &NormalizedNumber, b: &NormalizedNumber, rel_tol: f64) -> bool {
    let tol = BigRational::from_float(rel_tol).unwrap_or_else(BigRational::zero);
    let diff = (&a.value - &b.value).abs();
    let scale = b.value.abs().max(BigRational::one());
    diff <= tol * scale
}

/// Default relative tolerance: absorbs float-formatting noise while
/// rejecting genuinely different integers.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeMode {
    Llm,
    NumericOracle,
    LlmWithFallback,
}

/// LLM judge configuration: which backend and model to send the grading
/// prompt to.
pub struct Judge<'a> {
    pub backend: &'a Backend,
    pub model: String,
}

impl<'a> Judge<'a> {
    pub fn new(backend: &'a Backend, model: impl Into<String>) -> Self {
        Judge {
            backend,
            model: model.into(),
        }
    }
}

/// Builds the full grading request for one (question, setter, student)
/// triple. Exposed so tests can assert the prompt bytes and register mock
/// fixtures.
pub fn judge_request(
    model: &str,
    question: &str,
    setter_solution: &str,
    student_solution: &str,
) -> ChatRequest {
    ChatRequest {
        model_name: model.to_string(),
        messages: vec![
            Message {
                role: Role::System,
                content: JUDGE_SYSTEM_PROMPT.to_string(),
            },
            Message {
                role: Role::User,
                content: judge_user_message(question, setter_solution, student_solution),
            },
        ],
        temperature: 0.0,
        top_p: 1.0,
        max_tokens: 512,
        sample_index: 0,
    }
}

fn parse_verdict_line(raw: &str) -> Option<(VerdictValue, usize)> {
    let lower = raw.to_lowercase();
    let marker = "final verdict:";
    let idx = lower.rfind(marker)?;
    let after = &lower[idx + marker.len()..];
    // Value may be on the same line or the next non-empty line.
    for line in after.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.contains("incorrect") {
            return Some((VerdictValue::Incorrect, idx));
        }
        if line.contains("correct") {
            return Some((VerdictValue::Correct, idx));
        }
        break;
    }
    None
}

fn parse_error_analysis(raw: &str, verdict_idx: usize) -> String {
    let lower = raw.to_lowercase();
    let marker = "error analysis:";
    match lower[..verdict_idx].rfind(marker) {
        Some(idx) => raw[idx + marker.len()..verdict_idx].trim().to_string(),
        None => String::new(),
    }
}

/// Grades via the LLM judge: sends the evaluation prompt byte-exactly and
/// parses the last "Final Verdict:" occurrence case-insensitively.
pub fn grade_llm(
    question: &str,
    setter_solution: &str,
    student_solution: &str,
    judge: &Judge<'_>,
) -> Result<Verdict, GraderError> {
    let request = judge_request(&judge.model, question, setter_solution, student_solution);
    let response = judge.backend.complete(&request)?;
    let raw = response.content;
    match parse_verdict_line(&raw) {
        Some((value, idx)) => Ok(Verdict {
            value,
            error_analysis: parse_error_analysis(&raw, idx),
            judge: JudgeKind::Llm,
            raw_judge_output: raw,
        }),
        None => Err(GraderError::JudgeFormat { raw_output: raw }),
    }
}

/// Grades via the numeric oracle: extract both final answers and compare at
/// the default tolerance. Pure; performs no backend calls.
pub fn grade_numeric_oracle(
    setter_solution: &str,
    student_solution: &str,
) -> Result<Verdict, GraderError> {
    let setter = extract_final_answer(setter_solution).ok_or(GraderError::Ungradable)?;
    let student = extract_final_answer(student_solution);
    let (value, analysis) = match &student {
        Some(student) => {
            if numbers_equal(student, &setter, DEFAULT_REL_TOL) {
                (
                    VerdictValue::Correct,
                    format!(
                        "The student's final answer of {} matches the problem setter's {}.",
                        student.canonical(),
                        setter.canonical()
                    ),
                )
            } else {
                (
                    VerdictValue::Incorrect,
                    format!(
                        "The student's final answer of {} does not match the problem setter's {}.",
                        student.canonical(),
                        setter.canonical()
                    ),
                )
            }
        }
        None => (
            VerdictValue::Incorrect,
            "No final answer could be extracted from the student's solution.".to_string(),
        ),
    };
    Ok(Verdict {
        value,
        error_analysis: analysis,
        judge: JudgeKind::NumericOracle,
        raw_judge_output: String::new(),
    })
}

/// Dispatches to the configured judge. `LlmWithFallback` uses the numeric
/// oracle only when the LLM judge fails to produce a parseable verdict.
pub fn grade(
    question: &str,
    setter_solution: &str,
    student_solution: &str,
    mode: GradeMode,
    judge: Option<&Judge<'_>>,
) -> Result<Verdict, GraderError> {
    match mode {
        GradeMode::NumericOracle => grade_numeric_oracle(setter_solution, student_solution),
        GradeMode::Llm => {
            let judge = judge.ok_or(GraderError::MissingJudge)?;
            grade_llm(question, setter_solution, student_solution, judge)
        }
        GradeMode::LlmWithFallback => {
            let judge = judge.ok_or(GraderError::MissingJudge)?;
            match grade_llm(question, setter_solution, student_solution, judge) {
                Ok(verdict) => Ok(verdict),
                // Only judge-output failures fall back; transport problems
                // propagate so infrastructure errors stay visible.
                Err(GraderError::JudgeFormat { .. }) => {
                    grade_numeric_oracle(setter_solution, student_solution)
                }
                Err(other) => Err(other),
            }
        }
    }
}
