//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Each token's topic is resampled from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) (n_kw + η) / (n_k + Mη)
//! ```
//!
//! with the token's own assignment removed from the counts. Tokens are
//! visited in corpus order and every draw consumes exactly one value from a
//! single seeded stream, so a seed pins the whole chain.
//!
//! Point estimates come from the final state only; averaging over sweeps
//! would mix label-switched samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nmf::rank_row;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub burn_in: usize,
    /// Total sweeps, burn-in included.
    pub sweeps: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// `α = 50/K`, `η = 0.025`, 500 burn-in sweeps out of 2000.
    pub fn new(topics: usize, seed: u64) -> Self {
        LdaConfig {
            topics,
            alpha: 50.0 / topics.max(1) as f64,
            eta: 0.025,
            burn_in: 500,
            sweeps: 2000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::InvalidConfig("lda: at least one topic required".into()));
        }
        if !(self.alpha > 0.0 && self.eta > 0.0) || !self.alpha.is_finite() || !self.eta.is_finite() {
            return Err(Error::InvalidConfig("lda: alpha and eta must be positive".into()));
        }
        if self.sweeps <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "lda: sweeps ({}) must exceed burn_in ({})",
                self.sweeps, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Token assignments and the count tables they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    /// Term id of every token, per document.
    pub words: Vec<Vec<usize>>,
    /// Topic of every token, per document.
    pub z: Vec<Vec<usize>>,
    pub n_dk: Vec<Vec<u32>>,
    pub n_kw: Vec<Vec<u32>>,
    pub n_k: Vec<u32>,
    pub n_d: Vec<u32>,
    pub vocab_size: usize,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

fn check_corpus(corpus: &[Vec<usize>], vocab_size: usize) -> Result<()> {
    if corpus.is_empty() || corpus.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&w) = corpus.iter().flatten().find(|&&w| w >= vocab_size) {
        return Err(Error::UnknownTerm(format!("term id {w} (vocabulary size {vocab_size})")));
    }
    Ok(())
}

fn topic_from_unit(u: f64, topics: usize) -> usize {
    ((u * topics as f64) as usize).min(topics - 1)
}

/// Uniform topic per token, one draw per token in corpus order.
pub fn draw_initial_topics<R: RngCore>(corpus: &[Vec<usize>], topics: usize, rng: &mut R) -> Vec<Vec<usize>> {
    corpus
        .iter()
        .map(|doc| doc.iter().map(|_| topic_from_unit(rng.random::<f64>(), topics)).collect())
        .collect()
}

pub fn init_state(corpus: &[Vec<usize>], vocab_size: usize, cfg: &LdaConfig) -> Result<GibbsState> {
    cfg.validate()?;
    check_corpus(corpus, vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let z = draw_initial_topics(corpus, cfg.topics, &mut rng);
    GibbsState::from_assignments(corpus.to_vec(), z, vocab_size, cfg.topics, rng)
}

impl GibbsState {
    /// Build the count tables implied by explicit assignments.
    pub fn from_assignments(
        words: Vec<Vec<usize>>,
        z: Vec<Vec<usize>>,
        vocab_size: usize,
        topics: usize,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        check_corpus(&words, vocab_size)?;
        if z.len() != words.len() || z.iter().zip(&words).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::DimensionMismatch {
                context: "lda assignments",
                expected: (words.len(), 0),
                found: (z.len(), 0),
            });
        }
        if z.iter().flatten().any(|&k| k >= topics) {
            return Err(Error::TopicOutOfRange { topic: topics, k: topics });
        }
        let mut n_dk = vec![vec![0u32; topics]; words.len()];
        let mut n_kw = vec![vec![0u32; vocab_size]; topics];
        let mut n_k = vec![0u32; topics];
        for (d, (doc, zs)) in words.iter().zip(&z).enumerate() {
            for (&w, &k) in doc.iter().zip(zs) {
                n_dk[d][k] += 1;
                n_kw[k][w] += 1;
                n_k[k] += 1;
            }
        }
        let n_d = words.iter().map(|d| d.len() as u32).collect();
        Ok(GibbsState {
            words,
            z,
            n_dk,
            n_kw,
            n_k,
            n_d,
            vocab_size,
            rng,
            scratch: vec![0.0; topics],
        })
    }

    pub fn topics(&self) -> usize {
        self.n_k.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.n_d.iter().map(|&n| n as usize).sum()
    }

    /// Verify every count table against the others and against the assignments.
    pub fn check_counts(&self) -> Result<()> {
        let topics = self.topics();
        for (d, row) in self.n_dk.iter().enumerate() {
            if row.iter().sum::<u32>() != self.n_d[d] {
                return Err(Error::NegativeCount("document-topic totals"));
            }
        }
        for k in 0..topics {
            if self.n_kw[k].iter().sum::<u32>() != self.n_k[k] {
                return Err(Error::NegativeCount("topic-term totals"));
            }
        }
        if self.n_k.iter().map(|&n| n as usize).sum::<usize>() != self.total_tokens() {
            return Err(Error::NegativeCount("topic totals"));
        }
        let rebuilt = GibbsState::from_assignments(
            self.words.clone(),
            self.z.clone(),
            self.vocab_size,
            topics,
            self.rng.clone(),
        )?;
        if rebuilt.n_dk != self.n_dk || rebuilt.n_kw != self.n_kw || rebuilt.n_k != self.n_k {
            return Err(Error::NegativeCount("assignment/count agreement"));
        }
        Ok(())
    }

    fn remove(&mut self, d: usize, i: usize) -> Result<()> {
        let (w, k) = (self.words[d][i], self.z[d][i]);
        let under = || Error::NegativeCount("gibbs decrement");
        self.n_dk[d][k] = self.n_dk[d][k].checked_sub(1).ok_or_else(under)?;
        self.n_kw[k][w] = self.n_kw[k][w].checked_sub(1).ok_or_else(under)?;
        self.n_k[k] = self.n_k[k].checked_sub(1).ok_or_else(under)?;
        Ok(())
    }

    fn add(&mut self, d: usize, i: usize, k: usize) {
        let w = self.words[d][i];
        self.z[d][i] = k;
        self.n_dk[d][k] += 1;
        self.n_kw[k][w] += 1;
        self.n_k[k] += 1;
    }

    fn fill_weights(&mut self, d: usize, w: usize, cfg: &LdaConfig) -> f64 {
        let m_eta = self.vocab_size as f64 * cfg.eta;
        let mut total = 0.0;
        for k in 0..self.n_k.len() {
            let p = (f64::from(self.n_dk[d][k]) + cfg.alpha) * (f64::from(self.n_kw[k][w]) + cfg.eta)
                / (f64::from(self.n_k[k]) + m_eta);
            self.scratch[k] = p;
            total += p;
        }
        total
    }

    /// Normalized full conditional of token `i` in document `d`, its own
    /// assignment excluded. The state is left unchanged.
    pub fn full_conditional(&self, d: usize, i: usize, cfg: &LdaConfig) -> Result<Vec<f64>> {
        let mut probe = self.clone();
        probe.remove(d, i)?;
        let total = probe.fill_weights(d, probe.words[d][i], cfg);
        Ok(probe.scratch.iter().map(|p| p / total).collect())
    }

    /// Draw a new topic for one token and return it.
    pub fn resample_token(&mut self, d: usize, i: usize, cfg: &LdaConfig) -> Result<usize> {
        self.remove(d, i)?;
        let total = self.fill_weights(d, self.words[d][i], cfg);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonFinite(format!("gibbs normalizer for document {d}, token {i}")));
        }
        let target = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = self.scratch.len() - 1;
        for (k, &p) in self.scratch.iter().enumerate() {
            acc += p;
            if target < acc {
                chosen = k;
                break;
            }
        }
        self.add(d, i, chosen);
        Ok(chosen)
    }
}

/// One pass over every token in corpus order.
pub fn gibbs_sweep(state: &mut GibbsState, cfg: &LdaConfig) -> Result<()> {
    for d in 0..state.words.len() {
        for i in 0..state.words[d].len() {
            state.resample_token(d, i, cfg)?;
        }
    }
    Ok(())
}

/// Topic shares per document and term distributions per topic.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaPosterior {
    /// `D × K`, rows on the simplex.
    pub theta: DMatrix<f64>,
    /// `K × M`, rows on the simplex.
    pub beta: DMatrix<f64>,
}

impl LdaPosterior {
    pub fn top_terms(&self, topic: usize, n: usize) -> Result<Vec<usize>> {
        if topic >= self.beta.nrows() {
            return Err(Error::TopicOutOfRange { topic, k: self.beta.nrows() });
        }
        rank_row(self.beta.row(topic).iter().copied(), n)
    }
}

pub fn estimate(state: &GibbsState, cfg: &LdaConfig) -> LdaPosterior {
    let topics = state.topics();
    let k_alpha = topics as f64 * cfg.alpha;
    let m_eta = state.vocab_size as f64 * cfg.eta;
    let theta = DMatrix::from_fn(state.words.len(), topics, |d, k| {
        (f64::from(state.n_dk[d][k]) + cfg.alpha) / (f64::from(state.n_d[d]) + k_alpha)
    });
    let beta = DMatrix::from_fn(topics, state.vocab_size, |k, w| {
        (f64::from(state.n_kw[k][w]) + cfg.eta) / (f64::from(state.n_k[k]) + m_eta)
    });
    LdaPosterior { theta, beta }
}

pub fn fit_lda(corpus: &[Vec<usize>], vocab_size: usize, cfg: &LdaConfig) -> Result<(GibbsState, LdaPosterior)> {
    let mut state = init_state(corpus, vocab_size, cfg)?;
    for _ in 0..cfg.sweeps {
        gibbs_sweep(&mut state, cfg)?;
    }
    let posterior = estimate(&state, cfg);
    Ok((state, posterior))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `blocks` disjoint vocabularies; each document draws only from one.
    pub(crate) fn planted_corpus(seed: u64, blocks: usize, terms: usize, docs: usize, len: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..blocks * docs)
            .map(|d| {
                let b = d % blocks;
                (0..len).map(|_| b * terms + rng.random_range(0..terms)).collect()
            })
            .collect()
    }

    #[test]
    fn single_token_single_topic() {
        let cfg = LdaConfig { sweeps: 2, burn_in: 1, ..LdaConfig::new(1, 0) };
        let state = init_state(&[vec![0]], 1, &cfg).unwrap();
        assert_eq!(state.z, [[0]]);
        assert_eq!(state.n_dk, [[1]]);
    }

    #[test]
    fn init_is_consistent_and_deterministic() {
        let corpus = planted_corpus(1, 3, 8, 4, 30);
        let cfg = LdaConfig::new(4, 11);
        let a = init_state(&corpus, 24, &cfg).unwrap();
        a.check_counts().unwrap();
        assert_eq!(a, init_state(&corpus, 24, &cfg).unwrap());
        assert_eq!(a.total_tokens(), 12 * 30);
    }

    #[test]
    fn one_topic_sweep_is_identity() {
        let corpus = planted_corpus(2, 2, 5, 3, 10);
        let cfg = LdaConfig::new(1, 5);
        let mut state = init_state(&corpus, 10, &cfg).unwrap();
        let before = state.z.clone();
        gibbs_sweep(&mut state, &cfg).unwrap();
        assert_eq!(state.z, before);
    }

    #[test]
    fn conditional_normalizer_positive() {
        let corpus = planted_corpus(3, 2, 5, 3, 10);
        let cfg = LdaConfig::new(3, 5);
        let state = init_state(&corpus, 10, &cfg).unwrap();
        for d in 0..corpus.len() {
            for i in 0..corpus[d].len() {
                let p = state.full_conditional(d, i, &cfg).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn empty_topic_has_uniform_beta() {
        let cfg = LdaConfig { alpha: 0.5, ..LdaConfig::new(2, 0) };
        let state = GibbsState::from_assignments(
            vec![vec![0, 1, 2]],
            vec![vec![0, 0, 0]],
            4,
            2,
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let post = estimate(&state, &cfg);
        for w in 0..4 {
            assert!((post.beta[(1, w)] - 0.25).abs() < 1e-15);
        }
        // single document, everything in topic 0
        let expect0 = (3.0 + 0.5) / (3.0 + 2.0 * 0.5);
        assert!((post.theta[(0, 0)] - expect0).abs() < 1e-15);
        assert!((post.theta[(0, 1)] - 0.5 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn exchangeable_under_document_permutation() {
        // Record the stream for order [A, B]; replay it block-swapped for [B, A].
        struct Replay(Vec<u64>, usize);
        impl RngCore for Replay {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.1 += 1;
                self.0[self.1 - 1]
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {
                unimplemented!()
            }
        }
        let doc_a = vec![0, 1, 1, 2];
        let doc_b = vec![2, 3, 3];
        let mut src = ChaCha8Rng::seed_from_u64(42);
        let stream: Vec<u64> = (0..7).map(|_| src.next_u64()).collect();

        let mut forward = Replay(stream.clone(), 0);
        let z_ab = draw_initial_topics(&[doc_a.clone(), doc_b.clone()], 3, &mut forward);
        let swapped: Vec<u64> = stream[4..].iter().chain(&stream[..4]).copied().collect();
        let mut backward = Replay(swapped, 0);
        let z_ba = draw_initial_topics(&[doc_b.clone(), doc_a.clone()], 3, &mut backward);

        let rng = ChaCha8Rng::seed_from_u64(0);
        let s_ab = GibbsState::from_assignments(vec![doc_a.clone(), doc_b.clone()], z_ab, 4, 3, rng.clone()).unwrap();
        let s_ba = GibbsState::from_assignments(vec![doc_b, doc_a], z_ba, 4, 3, rng).unwrap();
        assert_eq!(s_ab.n_dk[0], s_ba.n_dk[1]);
        assert_eq!(s_ab.n_dk[1], s_ba.n_dk[0]);
        assert_eq!(s_ab.n_kw, s_ba.n_kw);
        assert_eq!(s_ab.n_k, s_ba.n_k);
    }

    #[test]
    fn config_validation() {
        assert!(LdaConfig { sweeps: 10, burn_in: 10, ..LdaConfig::new(3, 0) }.validate().is_err());
        assert!(LdaConfig { eta: 0.0, ..LdaConfig::new(3, 0) }.validate().is_err());
        let cfg = LdaConfig::new(3, 0);
        assert!((cfg.alpha - 50.0 / 3.0).abs() < 1e-15 && cfg.eta == 0.025);
        assert!(matches!(init_state(&[vec![5]], 3, &cfg), Err(Error::UnknownTerm(_))));
    }

    #[test]
    fn planted_two_topics_recovered() {
        let corpus = planted_corpus(7, 2, 10, 15, 40);
        let cfg = LdaConfig { alpha: 0.5, burn_in: 100, sweeps: 300, ..LdaConfig::new(2, 3) };
        let (state, post) = fit_lda(&corpus, 20, &cfg).unwrap();
        state.check_counts().unwrap();
        for k in 0..2 {
            let low: f64 = (0..10).map(|w| post.beta[(k, w)]).sum();
            assert!(low.max(1.0 - low) >= 0.9, "topic {k} block mass {low}");
            assert!((post.beta.row(k).sum() - 1.0).abs() < 1e-12);
        }
        let (_, again) = fit_lda(&corpus, 20, &cfg).unwrap();
        assert_eq!(post, again);
    }

    #[test]
    fn paper_hyperparameters_run() {
        let corpus = planted_corpus(9, 3, 6, 4, 25);
        let cfg = LdaConfig { burn_in: 20, sweeps: 50, ..LdaConfig::new(3, 1) };
        let (_, post) = fit_lda(&corpus, 18, &cfg).unwrap();
        for d in 0..post.theta.nrows() {
            assert!((post.theta.row(d).sum() - 1.0).abs() < 1e-12);
        }
        assert!(post.theta.iter().chain(post.beta.iter()).all(|&p| p > 0.0 && p < 1.0));
    }
}
