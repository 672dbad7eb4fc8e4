//! Four-step contamination detection between a test set and a training set.
//!
//! 1. Preprocess: lowercase, punctuation to spaces, whitespace tokenize,
//!    drop stopwords.
//! 2. TF-IDF vectorize the training corpus and retrieve the top-k most
//!    cosine-similar training docs per test doc.
//! 3. Score each candidate pair by n-gram Jaccard similarity.
//! 4. Flag a test doc when its best Jaccard overlap reaches the threshold;
//!    report the flagged count and per-doc evidence.

mod stopwords;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use stopwords::DEFAULT_STOPWORDS;

/// A preprocessed document: lowercase tokens with stopwords removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

/// Knobs for the detection pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContamConfig {
    pub top_k: usize,
    pub ngram_n: usize,
    pub threshold: f64,
    /// When true, the compared text is question + solution concatenated;
    /// default is question text only.
    pub include_answer_text: bool,
}

impl Default for ContamConfig {
    fn default() -> Self {
        ContamConfig { top_k: 10, ngram_n: 1, threshold: 0.5, include_answer_text: false }
    }
}

/// Lowercases, replaces every non-alphanumeric character with a space,
/// splits on Unicode whitespace, and drops stopwords. Digits are kept as
/// tokens.
pub fn preprocess(text: &str, stopword_lexicon: &HashSet<&str>) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|token| !stopword_lexicon.contains(token))
        .map(|token| token.to_string())
        .collect()
}

pub fn default_stopword_set() -> HashSet<&'static str> {
    DEFAULT_STOPWORDS.iter().copied().collect()
}

/// TF-IDF index over a tokenized training corpus.
///
/// tf is the raw term count, idf = ln((1+N)/(1+df)) + 1, and every document
/// vector is L2-normalized (empty documents stay zero).
#[derive(Debug, Clone)]
pub struct TfidfIndex {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    doc_ids: Vec<String>,
    /// Per-document sparse vectors: (term index, normalized weight), sorted
    /// by term index.
    doc_vectors: Vec<Vec<(usize, f64)>>,
    /// Inverted postings: term index -> (doc index, normalized weight).
    postings: Vec<Vec<(usize, f64)>>,
}

impl TfidfIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_vector(&self, idx: usize) -> &[(usize, f64)] {
        &self.doc_vectors[idx]
    }

    /// Projects a tokenized query onto the training vocabulary
    /// (out-of-vocabulary terms dropped) and L2-normalizes.
    pub fn vectorize_query(&self, tokens: &[String]) -> Vec<(usize, f64)> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for token in tokens {
            if let Some(&term_idx) = self.vocabulary.get(token) {
                *counts.entry(term_idx).or_insert(0.0) += 1.0;
            }
        }
        let mut vector: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(term_idx, tf)| (term_idx, tf * self.idf[term_idx]))
            .collect();
        vector.sort_by_key(|&(term_idx, _)| term_idx);
        l2_normalize(&mut vector);
        vector
    }
}

fn l2_normalize(vector: &mut [(usize, f64)]) {
    let norm = vector.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for entry in vector.iter_mut() {
            entry.1 /= norm;
        }
    }
}

/// Builds the TF-IDF index over training documents.
pub fn build_tfidf(docs: &[TokenizedDoc]) -> TfidfIndex {
    // Deterministic vocabulary: terms sorted lexicographically.
    let mut terms: BTreeSet<&str> = BTreeSet::new();
    for doc in docs {
        for token in &doc.tokens {
            terms.insert(token);
        }
    }
    let vocabulary: HashMap<String, usize> = terms
        .into_iter()
        .enumerate()
        .map(|(idx, term)| (term.to_string(), idx))
        .collect();

    let mut df = vec![0usize; vocabulary.len()];
    for doc in docs {
        let mut seen: HashSet<usize> = HashSet::new();
        for token in &doc.tokens {
            seen.insert(vocabulary[token.as_str()]);
        }
        for term_idx in seen {
            df[term_idx] += 1;
        }
    }
    let n = docs.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
        .collect();

    let mut doc_vectors = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for token in &doc.tokens {
            *counts.entry(vocabulary[token.as_str()]).or_insert(0.0) += 1.0;
        }
        let mut vector: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(term_idx, tf)| (term_idx, tf * idf[term_idx]))
            .collect();
        vector.sort_by_key(|&(term_idx, _)| term_idx);
        l2_normalize(&mut vector);
        doc_vectors.push(vector);
    }

    let mut postings: Vec<Vec<(usize, f64)>> = vec![Vec::new(); vocabulary.len()];
    for (doc_idx, vector) in doc_vectors.iter().enumerate() {
        for &(term_idx, weight) in vector {
            postings[term_idx].push((doc_idx, weight));
        }
    }

    TfidfIndex {
        vocabulary,
        idf,
        doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
        doc_vectors,
        postings,
    }
}

/// Top-k training docs by cosine similarity to the query, descending, ties
/// broken by ascending doc id. Returns fewer than k when the corpus is
/// smaller.
pub fn cosine_topk(
    query_tokens: &[String],
    index: &TfidfIndex,
    k: usize,
) -> Vec<(String, f64)> {
    let query = index.vectorize_query(query_tokens);
    let mut scores = vec![0.0f64; index.len()];
    for &(term_idx, query_weight) in &query {
        for &(doc_idx, doc_weight) in &index.postings[term_idx] {
            scores[doc_idx] += query_weight * doc_weight;
        }
    }
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| index.doc_ids[a.0].cmp(&index.doc_ids[b.0]))
    });
    ranked
        .into_iter()
        .take(k)
        .map(|(doc_idx, score)| (index.doc_ids[doc_idx].clone(), score))
        .collect()
}

/// Jaccard similarity over the n-gram *sets* of two token sequences; 0 when
/// either set is empty.
pub fn jaccard_ngram(tokens_a: &[String], tokens_b: &[String], n: usize) -> f64 {
    assert!(n >= 1, "n must be >= 1");
    let grams_a = ngram_set(tokens_a, n);
    let grams_b = ngram_set(tokens_b, n);
    if grams_a.is_empty() || grams_b.is_empty() {
        return 0.0;
    }
    let intersection = grams_a.intersection(&grams_b).count();
    let union = grams_a.len() + grams_b.len() - intersection;
    intersection as f64 / union as f64
}

fn ngram_set(tokens: &[String], n: usize) -> HashSet<Vec<&str>> {
    if tokens.len() < n {
        return HashSet::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(|s| s.as_str()).collect())
        .collect()
}

/// One candidate training match for a test doc.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchEvidence {
    pub train_doc_id: String,
    pub cosine: f64,
    pub jaccard: f64,
}

/// Per-test-doc outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocReport {
    pub test_doc_id: String,
    pub matches: Vec<MatchEvidence>,
    pub max_jaccard: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub config: ContamConfig,
    pub test_doc_count: usize,
    pub train_doc_count: usize,
    pub flagged_count: usize,
    pub docs: Vec<DocReport>,
}

impl ContaminationReport {
    /// Human-readable summary: flagged docs with their best match.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "test docs: {}  train docs: {}  n: {}  k: {}  threshold: {}\n",
            self.test_doc_count,
            self.train_doc_count,
            self.config.ngram_n,
            self.config.top_k,
            self.config.threshold
        ));
        out.push_str(&format!("flagged: {}\n", self.flagged_count));
        for doc in self.docs.iter().filter(|d| d.flagged) {
            let best = doc.matches.iter().max_by(|a, b| {
                a.jaccard
                    .partial_cmp(&b.jaccard)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            if let Some(best) = best {
                out.push_str(&format!(
                    "  {}  ~  {}  (jaccard {:.4}, cosine {:.4})\n",
                    doc.test_doc_id, best.train_doc_id, best.jaccard, best.cosine
                ));
            }
        }
        out
    }
}

/// Raw input document for detection.
#[derive(Debug, Clone)]
pub struct RawDoc {
    pub id: String,
    pub text: String,
}

/// Runs the full pipeline: preprocess both corpora, index the training set,
/// retrieve top-k cosine candidates per test doc, score them with n-gram
/// Jaccard, and flag at the threshold.
pub fn detect(
    test_docs: &[RawDoc],
    train_docs: &[RawDoc],
    config: &ContamConfig,
    stopword_lexicon: &HashSet<&str>,
) -> ContaminationReport {
    let train_tokens: Vec<TokenizedDoc> = train_docs
        .iter()
        .map(|d| TokenizedDoc { doc_id: d.id.clone(), tokens: preprocess(&d.text, stopword_lexicon) })
        .collect();
    let index = build_tfidf(&train_tokens);
    let train_by_id: HashMap<&str, &TokenizedDoc> =
        train_tokens.iter().map(|d| (d.doc_id.as_str(), d)).collect();

    let mut docs = Vec::with_capacity(test_docs.len());
    let mut flagged_count = 0;
    for test in test_docs {
        let tokens = preprocess(&test.text, stopword_lexicon);
        let candidates = cosine_topk(&tokens, &index, config.top_k);
        let matches: Vec<MatchEvidence> = candidates
            .into_iter()
            .map(|(train_doc_id, cosine)| {
                let train = train_by_id[train_doc_id.as_str()];
                let jaccard = jaccard_ngram(&tokens, &train.tokens, config.ngram_n);
                MatchEvidence { train_doc_id, cosine, jaccard }
            })
            .collect();
        let max_jaccard = matches.iter().map(|m| m.jaccard).fold(0.0f64, f64::max);
        let flagged = max_jaccard >= config.threshold;
        if flagged {
            flagged_count += 1;
        }
        docs.push(DocReport { test_doc_id: test.id.clone(), matches, max_jaccard, flagged });
    }

    ContaminationReport {
        config: config.clone(),
        test_doc_count: test_docs.len(),
        train_doc_count: train_docs.len(),
        flagged_count,
        docs,
    }
}
