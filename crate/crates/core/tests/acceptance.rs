//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.
//!
//! Criterion 5 (public-dataset contamination replication) needs real data
//! and is `#[ignore]`d; see its doc comment for how to run it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mathforge_core::agentgen::{editor_user_message, AgentPromptSet};
use mathforge_core::backend::{Backend, BackendConfig};
use mathforge_core::contam::{
    build_tfidf, cosine_topk, default_stopword_set, detect, jaccard_ngram, ContamConfig, RawDoc,
    TokenizedDoc,
};
use mathforge_core::corpus::{Author, Corpus, Problem, Solution, Source};
use mathforge_core::grader::{
    self, extract_final_answer, grade, judge_request, normalize_number, numbers_equal, GradeMode,
    Judge, VerdictValue, JUDGE_SYSTEM_PROMPT,
};
use mathforge_core::pipeline::{
    run_pipeline, PipelineBackends, PipelineOptions,
};
use mathforge_core::prefbuild::{
    build_preference_dataset, emit_sft, inject_synthetic_negatives, AblationFlags, LabeledPool,
    PreferencePair, QuestionPool, SamplingConfig,
};
use mathforge_core::report::{Decoding, EvalResult};

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

const BILLY_QUESTION: &str = "Billy is volunteering his time to help people do their taxes. He can help 2 people per hour for 3 hours a day. If he takes 20% of the days between March 1st and April 19th off, and helps people on all the other days. How many people does he help? (Remember there are 31 days in March.)";

const BILLY_SETTER_ANSWER: &str = "First find the number of days between March 1st and April 19th: 31 days + 19 days = 50 days

Then subtract the percentage of time Billy takes off from 100% to find the percentage of time he works: 100% - 20% = 80%

Then multiply that number by 80% to find the number of days Billy works: 50 days * 80% = 40 days

Then find how many people Billy can help per day: 2 people/hour * 3 hours/day = 6 people/day

Then multiply the number of people he helps per day by the number of days he works to find the total number of people he helps: 6 people/day * 40 days = 240 people";

const BILLY_STUDENT_ANSWER: &str = "First, let's calculate the total number of days between March 1st and April 19th.

March has 31 days, and April has 30 days. So, the total number of days from March 1st to April 19th is:

31 (March) + 19 (April) = 50 days

Now, let's calculate how many days Billy takes off. He takes 20% of the 50 days off.

20% of 50 days = 0.20 * 50 = 10 days

So, Billy takes 10 days off. This leaves him with:
50 days - 10 days = 40 days

Billy helps people for 3 hours a day, and he can help 2 people per hour. So, in one day, he can help:

3 hours/day * 2 people/hour = 6 people/day

Now, let's calculate how many people he helps over the 40 days he works:

40 days * 6 people/day = 240 people

Therefore, Billy helps 240 people.";

const BILLY_JUDGE_REPLY: &str = "Error Analysis:
The student's final answer of helping 240 people matches the problem setter's solution.

Final Verdict:
Correct";

fn solution(problem_id: &str, author: Author, sample_index: u32, text: &str) -> Solution {
    Solution::new(problem_id, author, sample_index, text, None)
}

/// Builds a random pool. Questions are all-positive with probability
/// `all_positive_share`; at least `min_donors` questions keep native
/// negatives.
fn random_pool(rng: &mut ChaCha8Rng, all_positive_share: f64, min_donors: usize) -> LabeledPool {
    let question_count = rng.random_range(min_donors.max(5)..20);
    let mut questions = Vec::with_capacity(question_count);
    let mut donor_count = 0;
    for i in 0..question_count {
        let id = format!("q{i}");
        let force_donor = question_count - i <= min_donors.saturating_sub(donor_count);
        let all_positive = !force_donor && rng.random_bool(all_positive_share);
        let positive_students = rng.random_range(0..4usize);
        let mut positives = vec![solution(&id, Author::Teacher, 0, &format!("teacher {i}"))];
        for s in 0..positive_students {
            positives.push(solution(&id, Author::Student, s as u32, &format!("pos {i}.{s}")));
        }
        let negatives = if all_positive {
            Vec::new()
        } else {
            donor_count += 1;
            (0..rng.random_range(1..5usize))
                .map(|s| solution(&id, Author::Student, s as u32, &format!("neg {i}.{s}")))
                .collect()
        };
        questions.push(QuestionPool {
            problem_id: id.clone(),
            question: format!("question {i}"),
            positives,
            negatives,
            borrowed_negatives: Vec::new(),
        });
    }
    LabeledPool { questions }
}

// ---------------------------------------------------------------------------
// 1. Preference counting law
// ---------------------------------------------------------------------------

/// Independent enumerator: nested loops over the labeled sets, no reuse of
/// the implementation's pairing code.
fn brute_force_pairs(pool: &LabeledPool) -> Vec<(String, String, String)> {
    let mut pairs = Vec::new();
    for question in &pool.questions {
        let mut negatives: Vec<&str> = question.negatives.iter().map(|s| s.text.as_str()).collect();
        negatives.extend(question.borrowed_negatives.iter().map(|(s, _)| s.text.as_str()));
        for positive in &question.positives {
            for negative in &negatives {
                pairs.push((
                    question.problem_id.clone(),
                    positive.text.clone(),
                    negative.to_string(),
                ));
            }
        }
    }
    pairs
}

#[test]
fn acceptance_1_preference_counting_law() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..500 {
        let pool = random_pool(&mut rng, 0.3, 4);
        let pool = inject_synthetic_negatives(pool, trial as u64).expect("injection");
        let pairs = build_preference_dataset(&pool, &AblationFlags::default()).expect("pairs");

        let expected_count: usize = pool
            .questions
            .iter()
            .map(|q| q.positives.len() * (q.negatives.len() + q.borrowed_negatives.len()))
            .sum();
        assert_eq!(pairs.len(), expected_count, "count law failed at trial {trial}");

        let mut actual: Vec<(String, String, String)> = pairs
            .iter()
            .map(|p| (p.question_id.clone(), p.chosen.text.clone(), p.rejected.text.clone()))
            .collect();
        let mut expected = brute_force_pairs(&pool);
        actual.sort();
        expected.sort();
        assert_eq!(actual, expected, "pair multiset mismatch at trial {trial}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10s");
    println!("ACCEPTANCE 1 preference counting law over 500 pools ({elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------
// 2. Synthetic-negative validity
// ---------------------------------------------------------------------------

/// Brute-force validity checker over (pool before, pool after) injection.
fn check_borrowing(original: &LabeledPool, injected: &LabeledPool) -> Result<(), String> {
    let native_negatives: HashMap<&str, Vec<&str>> = original
        .questions
        .iter()
        .map(|q| (q.problem_id.as_str(), q.negatives.iter().map(|s| s.text.as_str()).collect()))
        .collect();
    for (before, after) in original.questions.iter().zip(&injected.questions) {
        if !before.negatives.is_empty() {
            if !after.borrowed_negatives.is_empty() {
                return Err(format!("{} has natives but borrowed", before.problem_id));
            }
            continue;
        }
        if after.borrowed_negatives.len() != 4 {
            return Err(format!(
                "{} borrowed {} (want 4)",
                before.problem_id,
                after.borrowed_negatives.len()
            ));
        }
        let mut donors = HashSet::new();
        for (borrowed, donor_id) in &after.borrowed_negatives {
            if donor_id == &before.problem_id {
                return Err(format!("{} borrowed from itself", before.problem_id));
            }
            if !donors.insert(donor_id.as_str()) {
                return Err(format!("{} has repeated donor {donor_id}", before.problem_id));
            }
            let donor_pool = native_negatives
                .get(donor_id.as_str())
                .ok_or_else(|| format!("unknown donor {donor_id}"))?;
            if donor_pool.is_empty() {
                return Err(format!("donor {donor_id} had no native negatives"));
            }
            if !donor_pool.contains(&borrowed.text.as_str()) {
                return Err(format!("borrowed text not in donor {donor_id}'s negatives"));
            }
        }
    }
    Ok(())
}

#[test]
fn acceptance_2_synthetic_negative_validity() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut pools_with_all_positive = 0;
    let mut trial = 0u64;
    while pools_with_all_positive < 1000 {
        let original = random_pool(&mut rng, 0.4, 4);
        if original.questions.iter().all(|q| !q.negatives.is_empty()) {
            trial += 1;
            continue;
        }
        pools_with_all_positive += 1;
        let injected = inject_synthetic_negatives(original.clone(), trial).expect("injection");
        if let Err(violation) = check_borrowing(&original, &injected) {
            panic!("violation in pool {trial}: {violation}");
        }
        trial += 1;
    }
    println!("ACCEPTANCE 2 synthetic-negative validity over 1000 pools: PASS");
}

// ---------------------------------------------------------------------------
// 3. Format fidelity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_format_fidelity() {
    // SFT golden set: 100 random items, template re-spelled here.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut problems = Vec::new();
    let mut teachers = Vec::new();
    for i in 0..100 {
        let question = format!(
            "Problem {i}: a shop sells {} pencils at {} cents each. What is the total?",
            rng.random_range(2..90),
            rng.random_range(3..25)
        );
        let answer = format!("Multiply to get {}.\nThe answer is {}.", i * 3, i * 3);
        problems.push(Problem {
            id: format!("g{i:03}"),
            question,
            gold_answer: None,
            source: Source::Seed,
            lineage: None,
            dataset_tag: "golden".to_string(),
        });
        teachers.push(Solution::new(format!("g{i:03}"), Author::Teacher, 0, answer, None));
    }
    let corpus = Corpus::from_problems(problems.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sft_path = dir.path().join("sft.jsonl");
    emit_sft(&corpus, &teachers, &sft_path).unwrap();
    let body = std::fs::read_to_string(&sft_path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 100);
    for (i, line) in lines.iter().enumerate() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        let text = record["text"].as_str().unwrap();
        let expected = format!("USER:\n{}\n\nASSISTANT:\n{}", problems[i].question, teachers[i].text);
        assert_eq!(text, expected, "sft record {i} deviates from the template");
        let start = record["completion_start"].as_u64().unwrap() as usize;
        assert_eq!(&text[start..], teachers[i].text);
    }

    // Grading prompt byte-exactness for the Billy fixture. The expected
    // strings are frozen here, independent of the prompt builders.
    let request = judge_request("judge-model", BILLY_QUESTION, BILLY_SETTER_ANSWER, BILLY_STUDENT_ANSWER);
    let expected_system = "As an expert Math teacher, your role is to evaluate a student's answer to a word problem. The problem is accompanied by a correct solution provided by the problem setter. It is important to remember that there may be various methods to solve a word problem, so the student's steps might not always align with those in the problem setter's solution. However, the final answer, typically a number, should be unique and match the problem setter's answer. Your task involves analyzing the student's solution to identify any mistakes and determine whether the answer can be modified to correct the error. If the student's answer is unfixable, consider creating practice problems to help improve their understanding.\n\nUse the following format:\n\nError Analysis:\nIn one sentence, extract the final answer from the problem setter's solution and compare it with the student's answer. Do they match?\n\nFinal Verdict:\nCorrect/Incorrect";
    assert_eq!(request.messages[0].content, expected_system);
    assert_eq!(JUDGE_SYSTEM_PROMPT, expected_system);
    let expected_user = format!(
        "Question:\n{BILLY_QUESTION}\n\nProblem Setter's answer:\n{BILLY_SETTER_ANSWER}\n\nStudent answer:\n{BILLY_STUDENT_ANSWER}"
    );
    assert_eq!(request.messages[1].content, expected_user);

    // The fixture verdict parses to Correct with the analysis sentence.
    let backend = Backend::new(BackendConfig::mock());
    backend.register_fixture(expected_user, BILLY_JUDGE_REPLY);
    let judge = Judge::new(&backend, "judge-model");
    let verdict = grade(
        BILLY_QUESTION,
        BILLY_SETTER_ANSWER,
        BILLY_STUDENT_ANSWER,
        GradeMode::Llm,
        Some(&judge),
    )
    .unwrap();
    assert_eq!(verdict.value, VerdictValue::Correct);
    assert_eq!(
        verdict.error_analysis,
        "The student's final answer of helping 240 people matches the problem setter's solution."
    );
    println!("ACCEPTANCE 3 format fidelity (sft golden set + grading prompt): PASS");
}

// ---------------------------------------------------------------------------
// 4. Contamination math
// ---------------------------------------------------------------------------

fn oracle_cosine_rank(
    train: &[(String, Vec<String>)],
    query: &[String],
    k: usize,
) -> Vec<String> {
    let n = train.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, tokens) in train {
        let unique: HashSet<&str> = tokens.iter().map(|s| s.as_str()).collect();
        for token in unique {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let idf = |token: &str| -> f64 {
        let df = df.get(token).copied().unwrap_or(0) as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    };
    let weights = |tokens: &[String], restrict: bool| -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for token in tokens {
            if restrict && !df.contains_key(token.as_str()) {
                continue;
            }
            *counts.entry(token.clone()).or_insert(0.0) += 1.0;
        }
        let mut vector: BTreeMap<String, f64> =
            counts.into_iter().map(|(t, c)| (t.clone(), c * idf(&t))).collect();
        let norm = vector.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for value in vector.values_mut() {
                *value /= norm;
            }
        }
        vector
    };
    let query_vector = weights(query, true);
    let mut scored: Vec<(String, f64)> = train
        .iter()
        .map(|(id, tokens)| {
            let doc_vector = weights(tokens, false);
            let dot = query_vector
                .iter()
                .filter_map(|(t, qw)| doc_vector.get(t).map(|dw| qw * dw))
                .sum::<f64>();
            (id.clone(), dot)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
    });
    scored.into_iter().take(k).map(|(id, _)| id).collect()
}

#[test]
fn acceptance_4_contamination_math() {
    // Exact hand value.
    let a: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let b: Vec<String> = ["b", "c", "d"].iter().map(|s| s.to_string()).collect();
    assert_eq!(jaccard_ngram(&a, &b, 1), 0.5);

    // Non-increasing in n over 1,000 random pairs. Documents are drawn
    // without internal token repetition, where the property provably holds
    // (repetition can invert it, e.g. [a,a,b,b,a] vs [a,a,b,b,a,c]).
    let vocab: Vec<String> = (0..25).map(|i| format!("w{i:02}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for pair in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng| {
            let mut words = vocab.clone();
            words.shuffle(rng);
            let len = rng.random_range(1..15);
            words.truncate(len);
            words
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let mut previous = jaccard_ngram(&a, &b, 1);
        for n in 2..6 {
            let current = jaccard_ngram(&a, &b, n);
            assert!(
                current <= previous,
                "pair {pair}: jaccard rose from {previous} to {current} at n={n}"
            );
            previous = current;
        }
    }

    // cosine_topk against the brute-force oracle on 200-doc corpora.
    let corpus_vocab: Vec<String> = (0..30).map(|i| format!("term{i:02}")).collect();
    for corpus_trial in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + corpus_trial);
        let train: Vec<(String, Vec<String>)> = (0..200)
            .map(|i| {
                let len = rng.random_range(4..12);
                let tokens: Vec<String> = (0..len)
                    .map(|_| corpus_vocab[rng.random_range(0..corpus_vocab.len())].clone())
                    .collect();
                (format!("doc{i:03}"), tokens)
            })
            .collect();
        let docs: Vec<TokenizedDoc> = train
            .iter()
            .map(|(id, tokens)| TokenizedDoc { doc_id: id.clone(), tokens: tokens.clone() })
            .collect();
        let index = build_tfidf(&docs);
        for _ in 0..20 {
            let len = rng.random_range(3..10);
            let query: Vec<String> = (0..len)
                .map(|_| corpus_vocab[rng.random_range(0..corpus_vocab.len())].clone())
                .collect();
            let got: Vec<String> =
                cosine_topk(&query, &index, 10).into_iter().map(|(id, _)| id).collect();
            let want = oracle_cosine_rank(&train, &query, 10);
            assert_eq!(got, want, "ranking mismatch in corpus {corpus_trial}");
        }
    }
    println!("ACCEPTANCE 4 contamination math (jaccard exact, monotone, cosine oracle): PASS");
}

// ---------------------------------------------------------------------------
// 5. Contamination replication on public datasets (optional)
// ---------------------------------------------------------------------------

fn load_question_docs(path: &str) -> Vec<RawDoc> {
    let body = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {path}: {e}"));
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let value: serde_json::Value =
                serde_json::from_str(line).unwrap_or_else(|e| panic!("{path}:{}: {e}", i + 1));
            let text = value
                .get("question")
                .and_then(|v| v.as_str())
                .or_else(|| value.get("text").and_then(|v| v.as_str()))
                .or_else(|| value.get("problem").and_then(|v| v.as_str()))
                .unwrap_or_else(|| panic!("{path}:{}: no question/text/problem field", i + 1));
            RawDoc { id: format!("{i}"), text: text.to_string() }
        })
        .collect()
}

/// Optional live check against the public GSM8K test set and the public
/// 200K training corpus. Set MATHFORGE_GSM8K_TEST_JSONL and
/// MATHFORGE_TRAIN_JSONL (plus optionally MATHFORGE_SEED_TRAIN_JSONL), then
/// run `cargo test --test acceptance --release -- --ignored --nocapture`.
#[test]
#[ignore = "needs the public GSM8K test set and 200K training corpus on disk"]
fn acceptance_5_contamination_replication() {
    let test_path = std::env::var("MATHFORGE_GSM8K_TEST_JSONL")
        .expect("set MATHFORGE_GSM8K_TEST_JSONL to the GSM8K test JSONL");
    let train_path = std::env::var("MATHFORGE_TRAIN_JSONL")
        .expect("set MATHFORGE_TRAIN_JSONL to the training corpus JSONL");
    let started = Instant::now();
    let test_docs = load_question_docs(&test_path);
    let train_docs = load_question_docs(&train_path);
    let stopwords = default_stopword_set();

    let config = ContamConfig::default();
    let report = detect(&test_docs, &train_docs, &config, &stopwords);
    println!("n=1 flagged_count = {}", report.flagged_count);
    assert!(
        (7..=9).contains(&report.flagged_count),
        "n=1 flagged {} (want 8 +/- 1)",
        report.flagged_count
    );

    let config_n2 = ContamConfig { ngram_n: 2, ..ContamConfig::default() };
    let report_n2 = detect(&test_docs, &train_docs, &config_n2, &stopwords);
    println!("n=2 flagged_count = {}", report_n2.flagged_count);
    assert_eq!(report_n2.flagged_count, 0, "n=2 must flag nothing");

    if let Ok(seed_path) = std::env::var("MATHFORGE_SEED_TRAIN_JSONL") {
        let seed_docs = load_question_docs(&seed_path);
        let seed_report = detect(&test_docs, &seed_docs, &config, &stopwords);
        println!("seed-only flagged_count = {}", seed_report.flagged_count);
        assert!(
            (6..=8).contains(&seed_report.flagged_count),
            "seed-only flagged {} (want 7 +/- 1)",
            seed_report.flagged_count
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}, budget 10 min");
    println!("ACCEPTANCE 5 contamination replication ({elapsed:?}): PASS");
}

/// Offline companion to criterion 5: a planted corpus with known ground
/// truth reproduces the same counting shape at the same settings. Eight
/// test docs are token-reversals of training docs (unigram overlap 1.0,
/// bigram overlap 0.0); seven of their training counterparts sit in the
/// seed subset.
#[test]
fn acceptance_5_planted_contamination_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let plant_tokens = |plant: usize| -> Vec<String> {
        (0..8).map(|j| format!("plantword{plant}x{j}")).collect()
    };

    let mut seed_subset: Vec<RawDoc> = (0..7)
        .map(|plant| RawDoc { id: format!("seed{plant}"), text: plant_tokens(plant).join(" ") })
        .collect();
    for i in 0..400 {
        let words: Vec<String> = (0..rng.random_range(5..12))
            .map(|_| format!("trainword{}", rng.random_range(0..600)))
            .collect();
        seed_subset.push(RawDoc { id: format!("seedfill{i}"), text: words.join(" ") });
    }
    let mut train_full = seed_subset.clone();
    train_full.push(RawDoc { id: "expansion7".to_string(), text: plant_tokens(7).join(" ") });
    for i in 0..1600 {
        let words: Vec<String> = (0..rng.random_range(5..12))
            .map(|_| format!("trainword{}", rng.random_range(0..600)))
            .collect();
        train_full.push(RawDoc { id: format!("genfill{i}"), text: words.join(" ") });
    }

    let mut test_docs: Vec<RawDoc> = (0..8)
        .map(|plant| {
            let mut tokens = plant_tokens(plant);
            tokens.reverse();
            RawDoc { id: format!("test{plant}"), text: tokens.join(" ") }
        })
        .collect();
    for i in 8..1319 {
        let words: Vec<String> = (0..rng.random_range(5..12))
            .map(|_| format!("testword{}", rng.random_range(0..600)))
            .collect();
        test_docs.push(RawDoc { id: format!("test{i}"), text: words.join(" ") });
    }

    let stopwords = default_stopword_set();
    let config = ContamConfig::default();
    let full = detect(&test_docs, &train_full, &config, &stopwords);
    assert_eq!(full.flagged_count, 8, "full training set must flag the 8 plants");

    let seeds_only = detect(&test_docs, &seed_subset, &config, &stopwords);
    assert_eq!(seeds_only.flagged_count, 7, "seed subset holds 7 of the plants");

    let bigram = ContamConfig { ngram_n: 2, ..ContamConfig::default() };
    let none = detect(&test_docs, &train_full, &bigram, &stopwords);
    assert_eq!(none.flagged_count, 0, "reversed plants share no bigrams");
    println!("ACCEPTANCE 5 (planted companion) contamination counts 8/7/0: PASS");
}

// ---------------------------------------------------------------------------
// 6. Numeric-oracle correctness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_numeric_oracle() {
    // Billy: both the setter's and the student's texts extract 240.
    let student = extract_final_answer(BILLY_STUDENT_ANSWER).expect("student extract");
    assert_eq!(student.value, normalize_number("240").unwrap().value);
    let setter = extract_final_answer(BILLY_SETTER_ANSWER).expect("setter extract");
    assert_eq!(setter.value, normalize_number("240").unwrap().value);

    // Normalization equivalences.
    let forms = ["1,234", "1234", "1234.0"];
    for a in &forms {
        for b in &forms {
            let left = normalize_number(a).unwrap();
            let right = normalize_number(b).unwrap();
            assert_eq!(left.value, right.value, "{a} != {b}");
            assert!(numbers_equal(&left, &right, 0.0));
        }
    }

    // Oracle vs scripted LLM judge on a 200-item fixture set. By
    // construction the judge errs on 8 items, so agreement is 96%.
    let backend = Backend::new(BackendConfig::mock());
    let judge = Judge::new(&backend, "judge-model");
    let mut agree = 0usize;
    let total = 200usize;
    for i in 0..total {
        let question = format!("Fixture question {i}?");
        let setter = format!("Work it out. The answer is {i}.");
        let student_value = if i % 2 == 0 { i } else { i + 1 };
        let student = format!("I think the answer is {student_value}.");

        // The scripted judge inverts the numeric truth on every 25th item.
        let numeric_truth = i % 2 == 0;
        let judge_says_correct = if i % 25 == 0 { !numeric_truth } else { numeric_truth };
        let reply = format!(
            "Error Analysis:\nScripted comparison for item {i}.\n\nFinal Verdict:\n{}",
            if judge_says_correct { "Correct" } else { "Incorrect" }
        );
        backend.register_fixture(
            grader::judge_user_message(&question, &setter, &student),
            reply,
        );

        let llm = grade(&question, &setter, &student, GradeMode::Llm, Some(&judge)).unwrap();
        let oracle = grade(&question, &setter, &student, GradeMode::NumericOracle, None).unwrap();
        if llm.value == oracle.value {
            agree += 1;
        }
    }
    assert_eq!(agree, 192, "fixture set is built for exactly 192/200 agreement");
    let agreement = agree as f64 / total as f64;
    assert!(agreement >= 0.95, "agreement {agreement} below 0.95");
    println!("ACCEPTANCE 6 numeric oracle (billy=240, equivalences, agreement {:.1}%): PASS", agreement * 100.0);
}

// ---------------------------------------------------------------------------
// 7. End-to-end mock pipeline
// ---------------------------------------------------------------------------

fn e2e_seed(i: usize) -> Problem {
    Problem {
        id: format!("seed{i:02}"),
        question: format!(
            "Vendor {i} sells {} apples and {} pears every day. How many fruits in {} days?",
            i + 2,
            i + 3,
            i + 4
        ),
        gold_answer: Some(format!("{}", (2 * i + 5) * (i + 4))),
        source: Source::Seed,
        lineage: None,
        dataset_tag: "e2e".to_string(),
    }
}

fn register_e2e_fixtures(backend: &Backend, seeds: &Corpus) {
    let prompts = AgentPromptSet::default();
    for problem in seeds.iter() {
        let answer = problem.gold_answer.clone().unwrap();
        let targets = mathforge_core::agentgen::find_number_targets(&problem.question, &answer);
        let mut seen = HashSet::new();
        let reply: String = targets
            .iter()
            .filter(|t| seen.insert(t.surface.clone()))
            .map(|t| {
                format!(
                    "<target> {}\n\n<question>\nVariant of {} with unknown {}. What is it?\n\n",
                    t.surface, problem.id, t.surface
                )
            })
            .collect();
        backend.register_fixture(prompts.render_expansion(&problem.question, &answer), reply);
    }

    // Seed 7's hardened variant gets a >1800-char teacher solution and must
    // be dropped by the length filter.
    if let Some(seed7) = seeds.get("seed07") {
        let seed7 = seed7.question.clone();
        backend.register_fixture(&seed7, "Plenty of fruit arithmetic.");
        backend.register_fixture(
            editor_user_message(&seed7, "Plenty of fruit arithmetic."),
            "An over-complicated fruit question?",
        );
        backend.register_fixture("An over-complicated fruit question?", "x".repeat(1801));
    }

    // Three seed questions get matching teacher and student answers, so
    // their questions become all-positive and exercise borrowing.
    for i in [1usize, 2, 3] {
        if let Some(problem) = seeds.get(&format!("seed{i:02}")) {
            backend.register_fixture(
                problem.question.clone(),
                format!("All counts agree. The answer is {i}."),
            );
        }
    }
}

#[test]
fn acceptance_7_end_to_end_mock_pipeline() {
    let started = Instant::now();
    let seeds = Corpus::from_problems((0..25).map(e2e_seed).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let run = |run_dir: &Path| {
        let backend = Backend::new(BackendConfig::mock());
        register_e2e_fixtures(&backend, &seeds);
        let backends = PipelineBackends { teacher: &backend, student: &backend };
        let options = PipelineOptions {
            harden: mathforge_core::agentgen::HardenConfig {
                rounds: 1,
                max_teacher_answer_chars: 1800,
            },
            sampling: SamplingConfig { rng_seed: 7, ..SamplingConfig::default() },
            max_parallel: 4,
            ..PipelineOptions::default()
        };
        run_pipeline(&seeds, &backends, &options, run_dir).expect("pipeline run")
    };

    let summary_a = run(&dir.path().join("run_a"));
    let summary_b = run(&dir.path().join("run_b"));
    assert_eq!(summary_a, summary_b, "summaries differ between runs");

    assert_eq!(summary_a.seed_count, 25);
    assert_eq!(summary_a.filter_dropped, 1, "the oversized fixture must be dropped");
    assert_eq!(summary_a.hardened_count, 24);
    assert_eq!(summary_a.all_positive_questions, 3, "the three fixtured seeds");
    assert!(summary_a.expanded_count >= 25);
    assert_eq!(
        summary_a.corpus_size,
        25 + summary_a.expanded_count + summary_a.hardened_count
    );

    let file_names = [
        "corpus.jsonl",
        "teacher_solutions.jsonl",
        "student_solutions.jsonl",
        "verdicts.jsonl",
        "sft.jsonl",
        "dpo.jsonl",
        "kto.jsonl",
        "stats.json",
        "emission_sidecar.json",
    ];
    for name in file_names {
        let a = std::fs::read(dir.path().join("run_a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("run_b").join(name)).unwrap();
        assert_eq!(a, b, "{name} not byte-identical across runs");
    }

    // The dropped hardened problem is absent; other hardened ones present.
    let corpus_body = std::fs::read_to_string(dir.path().join("run_a/corpus.jsonl")).unwrap();
    assert!(!corpus_body.contains("\"seed07-se\""));
    assert!(corpus_body.contains("\"seed08-se\""));

    // The counting law holds on the emitted files: dpo records = pairs.
    let dpo_lines = std::fs::read_to_string(dir.path().join("run_a/dpo.jsonl"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(dpo_lines, summary_a.pair_count);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60s");
    println!(
        "ACCEPTANCE 7 end-to-end mock pipeline (25 seeds, {} pairs, deterministic, {elapsed:?}): PASS",
        summary_a.pair_count
    );
}

// ---------------------------------------------------------------------------
// 8. Ablation subset law
// ---------------------------------------------------------------------------

fn pair_key(pair: &PreferencePair) -> (String, String, String) {
    (pair.question_id.clone(), pair.chosen.text.clone(), pair.rejected.text.clone())
}

#[test]
fn acceptance_8_ablation_subset_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for trial in 0..100 {
        let pool = random_pool(&mut rng, 0.3, 4);
        // Guarantee at least one model-generated positive somewhere.
        let pool = {
            let mut pool = pool;
            if !pool.questions.iter().any(|q| q.positives.len() > 1) {
                let first = &mut pool.questions[0];
                let id = first.problem_id.clone();
                first.positives.push(solution(&id, Author::Student, 9, "extra positive"));
            }
            inject_synthetic_negatives(pool, trial).expect("injection")
        };

        let default_pairs = build_preference_dataset(&pool, &AblationFlags::default()).unwrap();
        let teacher_only = build_preference_dataset(
            &pool,
            &AblationFlags { teacher_positive_only: true, ..Default::default() },
        )
        .unwrap();
        let default_keys: HashSet<_> = default_pairs.iter().map(pair_key).collect();
        for pair in &teacher_only {
            assert!(
                default_keys.contains(&pair_key(pair)),
                "teacher-only pair missing from default output at trial {trial}"
            );
        }
        assert!(
            teacher_only.len() < default_pairs.len(),
            "teacher-only output must be a strict subset when model positives exist"
        );

        let dropped = build_preference_dataset(
            &pool,
            &AblationFlags { drop_all_positive_questions: true, ..Default::default() },
        )
        .unwrap();
        assert!(
            dropped.iter().all(|p| !p.rejected_is_borrowed),
            "drop_all_positive_questions output contains a borrowed negative"
        );
        let all_positive_ids: HashSet<&str> = pool
            .questions
            .iter()
            .filter(|q| q.is_all_positive())
            .map(|q| q.problem_id.as_str())
            .collect();
        assert!(dropped.iter().all(|p| !all_positive_ids.contains(p.question_id.as_str())));
    }
    println!("ACCEPTANCE 8 ablation subset law over 100 pools: PASS");
}

// ---------------------------------------------------------------------------
// 9. pass@1 arithmetic
// ---------------------------------------------------------------------------

#[test]
fn acceptance_9_pass_at_1_arithmetic() {
    let headline = EvalResult::new("gsm8k", 1145, 1319, Decoding::Greedy);
    assert_eq!(headline.pass_at_1_display(), "86.81");

    // Shard-composition law, exact in rational arithmetic.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..500 {
        let total_a = rng.random_range(1..2000u64);
        let total_b = rng.random_range(1..2000u64);
        let correct_a = rng.random_range(0..=total_a);
        let correct_b = rng.random_range(0..=total_b);
        let a = EvalResult::new("d", correct_a, total_a, Decoding::Greedy);
        let b = EvalResult::new("d", correct_b, total_b, Decoding::Greedy);
        let merged = a.merge(&b);
        let union = EvalResult::new("d", correct_a + correct_b, total_a + total_b, Decoding::Greedy);
        assert_eq!(merged.pass_at_1_exact(), union.pass_at_1_exact());
        use num_bigint::BigInt;
        use num_rational::BigRational;
        let weighted = (a.pass_at_1_exact() * BigRational::from_integer(BigInt::from(total_a))
            + b.pass_at_1_exact() * BigRational::from_integer(BigInt::from(total_b)))
            / BigRational::from_integer(BigInt::from(total_a + total_b));
        assert_eq!(weighted, merged.pass_at_1_exact());
    }
    println!("ACCEPTANCE 9 pass@1 arithmetic (86.81 headline, shard law): PASS");
}

// ---------------------------------------------------------------------------
// Iteration symmetry (supporting invariant for the iterative builds)
// ---------------------------------------------------------------------------

#[test]
fn iteration_symmetry_swapped_student_backends() {
    let seeds = Corpus::from_problems((0..6).map(e2e_seed).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let run = |run_dir: &Path, student_reply: &str| {
        let teacher = Backend::new(BackendConfig::mock());
        register_e2e_fixtures(&teacher, &seeds);
        let student = Backend::new(BackendConfig::mock());
        // The student model answers one question differently per iteration.
        let question = seeds.get("seed04").unwrap().question.clone();
        student.register_fixture(question, student_reply);
        let backends = PipelineBackends { teacher: &teacher, student: &student };
        let options = PipelineOptions {
            harden: mathforge_core::agentgen::HardenConfig {
                rounds: 1,
                max_teacher_answer_chars: 1800,
            },
            ..PipelineOptions::default()
        };
        run_pipeline(&seeds, &backends, &options, run_dir).expect("pipeline run")
    };

    run(&dir.path().join("iter2"), "Model two answers 13.");
    run(&dir.path().join("iter3"), "Model three answers 14.");

    // Same pipeline, swapped student backend: problem and teacher files are
    // byte-identical, only student solution texts (and what derives from
    // them) differ.
    for name in ["corpus.jsonl", "teacher_solutions.jsonl", "sft.jsonl"] {
        let a = std::fs::read(dir.path().join("iter2").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("iter3").join(name)).unwrap();
        assert_eq!(a, b, "{name} must not depend on the student backend");
    }
    let students_a = std::fs::read(dir.path().join("iter2/student_solutions.jsonl")).unwrap();
    let students_b = std::fs::read(dir.path().join("iter3/student_solutions.jsonl")).unwrap();
    assert_ne!(students_a, students_b, "student solutions must reflect the swapped backend");
    println!("iteration symmetry with swapped student backends: PASS");
}
