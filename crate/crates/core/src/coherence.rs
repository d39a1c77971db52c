//! Intrinsic topic coherence from document co-occurrence, and topic-count
//! selection by maximal mean coherence.
//!
//! For a topic's top words `w_1..w_N`, ordered from heaviest to lightest:
//!
//! ```text
//! raw  = Σ_{i=2..N} Σ_{j<i} ln((D(w_i, w_j) + 1) / D(w_j))
//! star = 2/(N(N−1)) · Σ_{i=2..N} Σ_{j<i} ln((P(w_i, w_j) + ε) / P(w_j))
//! ```
//!
//! where `D(·)` counts documents and `P(·) = D(·)/D`. The heavier word
//! always conditions the lighter one, so both scores depend on word order.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lda::{fit_lda, LdaConfig};
use crate::nmf::{fit, top_terms, NmfConfig};
use crate::textprep::{CountMatrix, WeightedDocTermMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceConfig {
    pub top_n: usize,
    pub epsilon: f64,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig { top_n: 15, epsilon: 1e-12, k_min: 3, k_max: 30 }
    }
}

impl CoherenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_n < 2 {
            return Err(Error::InvalidConfig("coherence needs at least two top words".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("coherence epsilon must be positive".into()));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig("empty or zero-based k range".into()));
        }
        Ok(())
    }
}

/// Single and pairwise document frequencies for a word list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocFreqs {
    pub single: Vec<usize>,
    /// Symmetric; the diagonal repeats `single`.
    pub pair: Vec<Vec<usize>>,
    pub n_docs: usize,
}

pub fn doc_freqs(counts: &CountMatrix, words: &[usize]) -> Result<DocFreqs> {
    if let Some(&w) = words.iter().find(|&&w| w >= counts.n_terms()) {
        return Err(Error::UnknownTerm(alloc::format!("term id {w}")));
    }
    let presence: Vec<Vec<bool>> = words
        .iter()
        .map(|&w| (0..counts.n_docs()).map(|d| counts.get(d, w) > 0).collect())
        .collect();
    let n = words.len();
    let mut pair = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = presence[i].iter().zip(&presence[j]).filter(|(a, b)| **a && **b).count();
            pair[i][j] = c;
            pair[j][i] = c;
        }
    }
    let single = (0..n).map(|i| pair[i][i]).collect();
    Ok(DocFreqs { single, pair, n_docs: counts.n_docs() })
}

/// Same as [`doc_freqs`] but addressed by term string.
pub fn doc_freqs_by_term(counts: &CountMatrix, words: &[&str]) -> Result<DocFreqs> {
    let ids = words
        .iter()
        .map(|w| counts.vocabulary().lookup(w))
        .collect::<Result<Vec<_>>>()?;
    doc_freqs(counts, &ids)
}

fn pair_terms(top_words: &[usize], counts: &CountMatrix) -> Result<(DocFreqs, usize)> {
    let freqs = doc_freqs(counts, top_words)?;
    if let Some(j) = freqs.single.iter().position(|&d| d == 0) {
        return Err(Error::UnknownTerm(alloc::format!(
            "term id {} never occurs in the corpus",
            top_words[j]
        )));
    }
    Ok((freqs, top_words.len()))
}

pub fn tc_lcp_raw(top_words: &[usize], counts: &CountMatrix) -> Result<f64> {
    let (f, n) = pair_terms(top_words, counts)?;
    let mut total = 0.0;
    for i in 1..n {
        for j in 0..i {
            total += libm::log((f.pair[i][j] as f64 + 1.0) / f.single[j] as f64);
        }
    }
    Ok(total)
}

/// `2 / (N (N − 1))`.
pub fn pair_normalizer(n: usize) -> f64 {
    2.0 / (n as f64 * (n as f64 - 1.0))
}

pub fn tc_lcp_star(top_words: &[usize], counts: &CountMatrix, epsilon: f64) -> Result<f64> {
    if top_words.len() < 2 {
        return Err(Error::InvalidConfig("coherence needs at least two top words".into()));
    }
    let (f, n) = pair_terms(top_words, counts)?;
    let d = f.n_docs as f64;
    let mut total = 0.0;
    for i in 1..n {
        for j in 0..i {
            let joint = f.pair[i][j] as f64 / d;
            let marginal = f.single[j] as f64 / d;
            total += libm::log((joint + epsilon) / marginal);
        }
    }
    Ok(pair_normalizer(n) * total)
}

/// Something that can fit a `k`-topic model and rank each topic's terms.
pub trait TopicModeler {
    fn name(&self) -> &'static str;

    fn top_terms(
        &mut self,
        weights: &WeightedDocTermMatrix,
        counts: &CountMatrix,
        k: usize,
        n: usize,
    ) -> Result<Vec<Vec<usize>>>;
}

/// NMF on the TF-IDF matrix; terms ranked by `H`.
#[derive(Debug, Clone)]
pub struct NmfModeler {
    pub base: NmfConfig,
}

impl TopicModeler for NmfModeler {
    fn name(&self) -> &'static str {
        "nmf"
    }

    fn top_terms(
        &mut self,
        weights: &WeightedDocTermMatrix,
        _counts: &CountMatrix,
        k: usize,
        n: usize,
    ) -> Result<Vec<Vec<usize>>> {
        let cfg = NmfConfig { k, ..self.base.clone() };
        let model = fit(&weights.weights, &cfg)?;
        (0..k).map(|t| top_terms(&model.h, t, n)).collect()
    }
}

/// LDA on the token stream; terms ranked by estimated `β`.
///
/// `alpha_numerator` rescales the document prior with the topic count
/// (`α = alpha_numerator / k`); when unset the base `alpha` is used as is.
#[derive(Debug, Clone)]
pub struct LdaModeler {
    pub base: LdaConfig,
    pub corpus: Vec<Vec<usize>>,
    pub alpha_numerator: Option<f64>,
}

impl TopicModeler for LdaModeler {
    fn name(&self) -> &'static str {
        "lda"
    }

    fn top_terms(
        &mut self,
        _weights: &WeightedDocTermMatrix,
        counts: &CountMatrix,
        k: usize,
        n: usize,
    ) -> Result<Vec<Vec<usize>>> {
        let alpha = self.alpha_numerator.map_or(self.base.alpha, |a| a / k as f64);
        let cfg = LdaConfig { topics: k, alpha, ..self.base.clone() };
        let (_, post) = fit_lda(&self.corpus, counts.n_terms(), &cfg)?;
        (0..k).map(|t| post.top_terms(t, n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KScore {
    pub k: usize,
    pub topic_scores: Vec<f64>,
    pub mean: f64,
    pub top_terms: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub model: &'static str,
    pub per_k: Vec<KScore>,
    pub best_k: usize,
}

/// Means closer than this (relative) count as tied; the smaller `k` wins ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

pub fn select_k(
    weights: &WeightedDocTermMatrix,
    counts: &CountMatrix,
    cfg: &CoherenceConfig,
    modeler: &mut dyn TopicModeler,
) -> Result<CoherenceReport> {
    cfg.validate()?;
    let limit = counts.n_docs().min(counts.n_terms());
    if cfg.k_max > limit {
        return Err(Error::InvalidConfig(alloc::format!(
            "k range up to {} exceeds min(n, m) = {limit}",
            cfg.k_max
        )));
    }
    let mut per_k = Vec::with_capacity(cfg.k_max - cfg.k_min + 1);
    let mut best: Option<(usize, f64)> = None;
    for k in cfg.k_min..=cfg.k_max {
        let tops = modeler.top_terms(weights, counts, k, cfg.top_n)?;
        let topic_scores = tops
            .iter()
            .map(|t| tc_lcp_star(t, counts, cfg.epsilon))
            .collect::<Result<Vec<_>>>()?;
        let mean = topic_scores.iter().sum::<f64>() / topic_scores.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(alloc::format!("mean coherence at k = {k}")));
        }
        match best {
            Some((_, m)) if mean <= m + TIE_TOLERANCE * m.abs().max(1.0) => {}
            _ => best = Some((k, mean)),
        }
        per_k.push(KScore { k, topic_scores, mean, top_terms: tops });
    }
    let best_k = best.map(|(k, _)| k).expect("non-empty k range");
    Ok(CoherenceReport { model: modeler.name(), per_k, best_k })
}
