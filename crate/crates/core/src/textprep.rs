//! Statement text to TF-IDF weighted document-term matrix.
//!
//! The per-document pipeline runs in a fixed order:
//!
//! 1. cut the voting record (everything from the first marker phrase on),
//! 2. lowercase,
//! 3. tokenize on runs of Unicode letters (digits and punctuation vanish),
//! 4. drop stopwords and member names,
//! 5. lemmatize with the ordered suffix-rule table.
//!
//! Marker matching is case-insensitive, so cutting before or after
//! lowercasing yields the same text; the implementation lowercases first.
//!
//! Term weights follow the usual log-scaled TF-IDF:
//!
//! ```text
//! w(n, m) = (1 + ln c_nm) * (ln(D / df(m)) + 1)    if c_nm > 0
//!         = 0                                      otherwise
//! ```

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const DEFAULT_NAMES: &str = include_str!("../data/names.txt");
pub const DEFAULT_VOTING_MARKERS: &str = include_str!("../data/voting_markers.txt");
pub const DEFAULT_LEMMAS: &str = include_str!("../data/lemmas.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub date: NaiveDate,
    pub text: String,
}

/// Row label carried through every matrix built from the corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DocKey {
    pub id: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub key: DocKey,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
}

/// Exception dictionary plus ordered suffix rewrites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaRules {
    pub exceptions: BTreeMap<String, String>,
    pub suffix_rules: Vec<SuffixRule>,
    /// A suffix rule only fires when at least this many characters remain.
    pub min_stem: usize,
}

impl Default for LemmaRules {
    fn default() -> Self {
        LemmaRules::parse(DEFAULT_LEMMAS).expect("bundled lemma table parses")
    }
}

impl LemmaRules {
    /// Parse the line-oriented table format.
    ///
    /// `word -> lemma` adds an exception, `-suffix -> -replacement` appends a
    /// suffix rule (an empty replacement is written `-`). Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut exceptions = BTreeMap::new();
        let mut suffix_rules = Vec::new();
        for (lineno, line) in table_lines(text) {
            let (lhs, rhs) = line
                .split_once("->")
                .map(|(l, r)| (l.trim(), r.trim()))
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("lemma table line {lineno}: expected `a -> b`"))
                })?;
            match (lhs.strip_prefix('-'), rhs.strip_prefix('-')) {
                (Some(suffix), Some(replacement)) if !suffix.is_empty() => {
                    suffix_rules.push(SuffixRule {
                        suffix: suffix.to_string(),
                        replacement: replacement.to_string(),
                    })
                }
                (None, None) if !lhs.is_empty() && !rhs.is_empty() => {
                    exceptions.insert(lhs.to_string(), rhs.to_string());
                }
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "lemma table line {lineno}: mixed or empty rule `{line}`"
                    )))
                }
            }
        }
        Ok(LemmaRules { exceptions, suffix_rules, min_stem: 3 })
    }

    pub fn lemmatize(&self, word: &str) -> String {
        if let Some(lemma) = self.exceptions.get(word) {
            return lemma.clone();
        }
        let n_chars = word.chars().count();
        for rule in &self.suffix_rules {
            if word.ends_with(rule.suffix.as_str())
                && n_chars - rule.suffix.chars().count() >= self.min_stem
            {
                let mut out = String::from(&word[..word.len() - rule.suffix.len()]);
                out.push_str(&rule.replacement);
                return match self.exceptions.get(&out) {
                    Some(lemma) => lemma.clone(),
                    None => out,
                };
            }
        }
        word.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub stopwords: BTreeSet<String>,
    pub names: BTreeSet<String>,
    pub voting_markers: Vec<String>,
    pub lemma: LemmaRules,
    /// Terms present in fewer documents than this are dropped from the matrix.
    pub min_df: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: parse_word_set(DEFAULT_STOPWORDS),
            names: parse_word_set(DEFAULT_NAMES),
            voting_markers: parse_word_list(DEFAULT_VOTING_MARKERS),
            lemma: LemmaRules::default(),
            min_df: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let entries = self
            .stopwords
            .iter()
            .chain(self.names.iter())
            .chain(self.voting_markers.iter())
            .chain(self.lemma.exceptions.iter().flat_map(|(k, v)| [k, v]))
            .chain(self.lemma.suffix_rules.iter().flat_map(|r| [&r.suffix, &r.replacement]));
        for entry in entries {
            if entry.chars().any(char::is_uppercase) {
                return Err(Error::InvalidConfig(format!("table entry `{entry}` is not lowercase")));
            }
        }
        if self.voting_markers.iter().any(|m| m.trim().is_empty()) {
            return Err(Error::InvalidConfig("empty voting marker".into()));
        }
        if self.min_df == 0 {
            return Err(Error::InvalidConfig("min_df must be at least 1".into()));
        }
        Ok(())
    }
}

fn table_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

/// One entry per non-comment line, lowercased and trimmed.
pub fn parse_word_list(text: &str) -> Vec<String> {
    table_lines(text).map(|(_, l)| l.to_lowercase()).collect()
}

pub fn parse_word_set(text: &str) -> BTreeSet<String> {
    parse_word_list(text).into_iter().collect()
}

/// Sort a corpus by release date, rejecting duplicate dates and empty texts.
pub fn sort_corpus(docs: &mut [RawDocument]) -> Result<()> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    docs.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));
    for pair in docs.windows(2) {
        if pair[0].date == pair[1].date {
            return Err(Error::DuplicateDate(pair[1].date, "statement corpus"));
        }
    }
    if let Some(doc) = docs.iter().find(|d| d.text.trim().is_empty()) {
        return Err(Error::EmptyDocument { id: doc.id.clone() });
    }
    Ok(())
}

fn strip_voting_section(lower: &str, markers: &[String]) -> usize {
    markers
        .iter()
        .filter_map(|m| lower.find(m.as_str()))
        .min()
        .unwrap_or(lower.len())
}

pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()).collect()
}

pub fn preprocess(doc: &RawDocument, cfg: &PreprocessConfig) -> Result<TokenizedDocument> {
    let empty = || Error::EmptyDocument { id: doc.id.clone() };
    if doc.text.trim().is_empty() {
        return Err(empty());
    }
    let lower = doc.text.to_lowercase();
    let kept = &lower[..strip_voting_section(&lower, &cfg.voting_markers)];
    let tokens: Vec<String> = tokenize(kept)
        .into_iter()
        .filter(|t| !cfg.stopwords.contains(*t) && !cfg.names.contains(*t))
        .map(|t| cfg.lemma.lemmatize(t))
        .collect();
    if tokens.is_empty() {
        return Err(empty());
    }
    Ok(TokenizedDocument {
        key: DocKey { id: doc.id.clone(), date: doc.date },
        tokens,
    })
}

/// Sorted, duplicate-free term list with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms<I: IntoIterator<Item = String>>(terms: I) -> Self {
        let set: BTreeSet<String> = terms.into_iter().collect();
        let terms: Vec<String> = set.into_iter().collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, idx: usize) -> Option<&str> {
        self.terms.get(idx).map(String::as_str)
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn lookup(&self, term: &str) -> Result<usize> {
        self.id(term).ok_or_else(|| Error::UnknownTerm(term.to_string()))
    }

    /// Map tokens to column ids, skipping tokens outside the vocabulary.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Raw term counts `c_nm`, documents on rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    counts: Vec<u32>,
    n_docs: usize,
    vocabulary: Vocabulary,
    doc_index: Vec<DocKey>,
}

impl CountMatrix {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn get(&self, doc: usize, term: usize) -> u32 {
        self.counts[doc * self.n_terms() + term]
    }

    pub fn row(&self, doc: usize) -> &[u32] {
        let m = self.n_terms();
        &self.counts[doc * m..(doc + 1) * m]
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn doc_index(&self) -> &[DocKey] {
        &self.doc_index
    }

    /// Number of documents containing the term at least once.
    pub fn doc_freq(&self, term: usize) -> usize {
        (0..self.n_docs).filter(|&d| self.get(d, term) > 0).count()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_docs, self.n_terms(), |i, j| f64::from(self.get(i, j)))
    }
}

pub fn build_matrix(corpus: &[TokenizedDocument]) -> Result<CountMatrix> {
    build_matrix_with_min_df(corpus, 1)
}

/// Bag-of-words counts; only terms seen in at least `min_df` documents get a column.
pub fn build_matrix_with_min_df(corpus: &[TokenizedDocument], min_df: usize) -> Result<CountMatrix> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(doc) = corpus.iter().find(|d| d.tokens.is_empty()) {
        return Err(Error::EmptyDocument { id: doc.key.id.clone() });
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let vocabulary = Vocabulary::from_terms(
        df.into_iter().filter(|&(_, f)| f >= min_df.max(1)).map(|(t, _)| t.to_string()),
    );
    let m = vocabulary.len();
    let mut counts = vec![0u32; corpus.len() * m];
    for (d, doc) in corpus.iter().enumerate() {
        for j in vocabulary.encode(&doc.tokens) {
            counts[d * m + j] += 1;
        }
        if counts[d * m..(d + 1) * m].iter().all(|&c| c == 0) {
            return Err(Error::EmptyDocument { id: doc.key.id.clone() });
        }
    }
    Ok(CountMatrix {
        counts,
        n_docs: corpus.len(),
        vocabulary,
        doc_index: corpus.iter().map(|d| d.key.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDocTermMatrix {
    pub weights: DMatrix<f64>,
    pub vocabulary: Vocabulary,
    pub doc_index: Vec<DocKey>,
}

/// Weight of a single cell given its count, its document frequency, and the corpus size.
pub fn tfidf_weight(count: u32, df: usize, n_docs: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let tf = 1.0 + libm::log(f64::from(count));
    let idf = libm::log(n_docs as f64 / df as f64) + 1.0;
    tf * idf
}

pub fn tfidf(counts: &CountMatrix) -> WeightedDocTermMatrix {
    let n = counts.n_docs();
    let df: Vec<usize> = (0..counts.n_terms()).map(|j| counts.doc_freq(j)).collect();
    let weights = DMatrix::from_fn(n, counts.n_terms(), |i, j| tfidf_weight(counts.get(i, j), df[j], n));
    WeightedDocTermMatrix {
        weights,
        vocabulary: counts.vocabulary.clone(),
        doc_index: counts.doc_index.clone(),
    }
}
