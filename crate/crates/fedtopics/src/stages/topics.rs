use std::path::Path;

use fedtopics_core::coherence::{select_k, CoherenceConfig, CoherenceReport, LdaModeler, NmfModeler, TopicModeler};
use fedtopics_core::lda::{fit_lda, LdaConfig};
use fedtopics_core::nmf::{self, NmfConfig, NmfInit};
use fedtopics_core::textprep::{build_matrix_with_min_df, preprocess, tfidf, CountMatrix, WeightedDocTermMatrix};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::artifact::{fmt_f64, json_f64, read_json, StageWriter, Table};
use crate::config::{PipelineConfig, TopicModel};
use crate::error::{PipelineError, Result};
use crate::ingest::{preprocess_config, read_corpus};

struct Prepared {
    counts: CountMatrix,
    weights: WeightedDocTermMatrix,
    /// Token ids per document, restricted to the vocabulary.
    tokens: Vec<Vec<usize>>,
}

fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let docs = read_corpus(&cfg.paths.statements_dir)?;
    let pre = preprocess_config(cfg)?;
    let tokenized = docs.iter().map(|d| preprocess(d, &pre)).collect::<std::result::Result<Vec<_>, _>>()?;
    let counts = build_matrix_with_min_df(&tokenized, pre.min_df)?;
    let weights = tfidf(&counts);
    let tokens = tokenized.iter().map(|d| counts.vocabulary().encode(&d.tokens)).collect();
    log::info!("document-term matrix: {} statements x {} terms", counts.n_docs(), counts.n_terms());
    Ok(Prepared { counts, weights, tokens })
}

fn nmf_config(cfg: &PipelineConfig, k: usize) -> NmfConfig {
    NmfConfig {
        max_iter: cfg.topics.nmf.max_iter,
        rel_tol: cfg.topics.nmf.rel_tol,
        init: cfg.nmf_init(),
        ..NmfConfig::new(k)
    }
}

fn lda_config(cfg: &PipelineConfig, k: usize) -> LdaConfig {
    let l = &cfg.topics.lda;
    LdaConfig {
        topics: k,
        alpha: l.alpha_numerator / k as f64,
        eta: l.eta,
        burn_in: l.burn_in,
        sweeps: l.sweeps,
        seed: cfg.seed,
    }
}

fn fits_lda(cfg: &PipelineConfig) -> bool {
    cfg.topics.model == TopicModel::Lda || cfg.topics.compare_lda
}

fn terms(counts: &CountMatrix, ids: &[usize]) -> String {
    let vocab = counts.vocabulary();
    ids.iter().filter_map(|&i| vocab.term(i)).collect::<Vec<_>>().join(" ")
}

fn coherence_table(report: &CoherenceReport, counts: &CountMatrix) -> Table {
    let mut t = Table::new(["k", "topic_id", "coherence", "mean_coherence", "top_terms"]);
    for score in &report.per_k {
        for (topic, (&c, top)) in score.topic_scores.iter().zip(&score.top_terms).enumerate() {
            t.push(vec![
                score.k.to_string(),
                (topic + 1).to_string(),
                fmt_f64(c),
                fmt_f64(score.mean),
                terms(counts, top),
            ]);
        }
    }
    t
}

pub(super) fn run_select_k(cfg: &PipelineConfig, w: &mut StageWriter) -> Result<()> {
    let prep = prepare(cfg)?;
    let t = &cfg.topics;
    let ccfg = CoherenceConfig { top_n: t.top_n, epsilon: t.epsilon, k_min: t.k_min, k_max: t.k_max };

    let mut modelers: Vec<Box<dyn TopicModeler>> = vec![Box::new(NmfModeler { base: nmf_config(cfg, t.k_min) })];
    if fits_lda(cfg) {
        modelers.push(Box::new(LdaModeler {
            base: lda_config(cfg, t.k_min),
            corpus: prep.tokens.clone(),
            alpha_numerator: Some(t.lda.alpha_numerator),
        }));
    }
    let mut reports = Vec::new();
    for m in &mut modelers {
        let report = select_k(&prep.weights, &prep.counts, &ccfg, m.as_mut())?;
        log::info!("{}: mean coherence is highest at k = {}", report.model, report.best_k);
        w.table(&format!("select_k/coherence_{}.csv", report.model), &coherence_table(&report, &prep.counts))?;
        reports.push(report);
    }

    let mean_at = |model: &str, k: usize| {
        reports
            .iter()
            .find(|r| r.model == model)
            .and_then(|r| r.per_k.iter().find(|s| s.k == k))
            .map_or(String::new(), |s| fmt_f64(s.mean))
    };
    let mut comparison = Table::new(["k", "nmf_mean_coherence", "lda_mean_coherence"]);
    for k in t.k_min..=t.k_max {
        comparison.push(vec![k.to_string(), mean_at("nmf", k), mean_at("lda", k)]);
    }
    w.table("select_k/comparison.csv", &comparison)?;

    let primary = reports.iter().find(|r| r.model == t.model.as_str()).expect("primary model was swept");
    let by_model: serde_json::Map<String, Value> =
        reports.iter().map(|r| (r.model.to_string(), Value::from(r.best_k))).collect();
    w.json(
        "select_k/selection.json",
        json!({
            "model": t.model.as_str(),
            "best_k": primary.best_k,
            "best_k_by_model": by_model,
            "k_min": t.k_min,
            "k_max": t.k_max,
            "top_n": t.top_n,
            "epsilon": t.epsilon,
        }),
    )
}

/// Topic count: configured, or the coherence-selected one.
fn chosen_k(cfg: &PipelineConfig, out: &Path) -> Result<usize> {
    if let Some(k) = cfg.topics.k {
        return Ok(k);
    }
    let path = out.join("select_k/selection.json");
    let doc = read_json(&path)?;
    doc["best_k"].as_u64().map(|k| k as usize).ok_or_else(|| PipelineError::MissingArtifact {
        stage: "topics",
        producer: "select-k",
        artifact: "select_k/selection.json: best_k".into(),
    })
}

fn dated_matrix(prep: &Prepared, m: &DMatrix<f64>, columns: Vec<String>) -> Table {
    let mut t = Table::new(["date".to_string(), "id".to_string()].into_iter().chain(columns));
    for (i, key) in prep.counts.doc_index().iter().enumerate() {
        let mut row = vec![key.date.to_string(), key.id.clone()];
        row.extend(m.row(i).iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    t
}

fn theme_headers(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("theme_{i}")).collect()
}

fn topic_term_table(prep: &Prepared, m: &DMatrix<f64>) -> Table {
    let vocab = prep.counts.vocabulary();
    let mut t = Table::new(std::iter::once("theme".to_string()).chain(vocab.terms().iter().cloned()));
    for (k, row) in m.row_iter().enumerate() {
        let mut cells = vec![format!("theme_{}", k + 1)];
        cells.extend(row.iter().map(|v| fmt_f64(*v)));
        t.push(cells);
    }
    t
}

fn top_terms_table(prep: &Prepared, m: &DMatrix<f64>, ranked: &[Vec<usize>]) -> Table {
    let vocab = prep.counts.vocabulary();
    let mut t = Table::new(["theme", "rank", "term", "weight"]);
    for (k, ids) in ranked.iter().enumerate() {
        for (r, &j) in ids.iter().enumerate() {
            t.push(vec![
                format!("theme_{}", k + 1),
                (r + 1).to_string(),
                vocab.term(j).unwrap_or_default().to_string(),
                fmt_f64(m[(k, j)]),
            ]);
        }
    }
    t
}

pub(super) fn run_topics(cfg: &PipelineConfig, out: &Path, w: &mut StageWriter) -> Result<()> {
    let prep = prepare(cfg)?;
    let k = chosen_k(cfg, out)?;
    let top_n = cfg.topics.top_n.min(prep.counts.n_terms());
    let vocab_terms: Vec<String> = prep.counts.vocabulary().terms().to_vec();

    let mut counts_t = Table::new(["date".to_string(), "id".to_string()].into_iter().chain(vocab_terms.iter().cloned()));
    for (i, key) in prep.counts.doc_index().iter().enumerate() {
        let mut row = vec![key.date.to_string(), key.id.clone()];
        row.extend(prep.counts.row(i).iter().map(u32::to_string));
        counts_t.push(row);
    }
    w.table("topics/dtm_counts.csv", &counts_t)?;
    w.table("topics/dtm_tfidf.csv", &dated_matrix(&prep, &prep.weights.weights, vocab_terms.clone()))?;
    let mut vocab_t = Table::new(["term_id", "term", "doc_freq"]);
    for (j, term) in vocab_terms.iter().enumerate() {
        vocab_t.push(vec![j.to_string(), term.clone(), prep.counts.doc_freq(j).to_string()]);
    }
    w.table("topics/vocabulary.csv", &vocab_t)?;

    let ncfg = nmf_config(cfg, k);
    let model = nmf::fit(&prep.weights.weights, &ncfg)?;
    if !model.converged {
        log::warn!("nmf stopped after {} iterations without meeting rel_tol", model.iterations);
    }
    let nmf_top = (0..k).map(|t| nmf::top_terms(&model.h, t, top_n)).collect::<std::result::Result<Vec<_>, _>>()?;
    w.table("topics/nmf_w.csv", &dated_matrix(&prep, &model.w, theme_headers(k)))?;
    w.table("topics/nmf_h.csv", &topic_term_table(&prep, &model.h))?;
    w.table("topics/nmf_top_terms.csv", &top_terms_table(&prep, &model.h, &nmf_top))?;
    let (init, seed) = match ncfg.init {
        NmfInit::Nndsvd => ("nndsvd", Value::Null),
        NmfInit::Random { seed } => ("random", Value::from(seed)),
    };
    w.json(
        "topics/nmf.json",
        json!({
            "k": k,
            "init": init,
            "seed": seed,
            "iterations": model.iterations,
            "converged": model.converged,
            "final_objective": json_f64(model.final_objective()),
            "max_iter": ncfg.max_iter,
            "rel_tol": ncfg.rel_tol,
        }),
    )?;

    let mut themes = model.w.clone();
    if fits_lda(cfg) {
        let lcfg = lda_config(cfg, k);
        let (state, post) = fit_lda(&prep.tokens, prep.counts.n_terms(), &lcfg)?;
        let lda_top = (0..k).map(|t| post.top_terms(t, top_n)).collect::<std::result::Result<Vec<_>, _>>()?;
        w.table("topics/lda_theta.csv", &dated_matrix(&prep, &post.theta, theme_headers(k)))?;
        w.table("topics/lda_beta.csv", &topic_term_table(&prep, &post.beta))?;
        w.table("topics/lda_top_terms.csv", &top_terms_table(&prep, &post.beta, &lda_top))?;
        w.json(
            "topics/lda.json",
            json!({
                "K": k,
                "alpha": lcfg.alpha,
                "eta": lcfg.eta,
                "sweeps": lcfg.sweeps,
                "burn_in": lcfg.burn_in,
                "seed": lcfg.seed,
                "tokens": state.total_tokens(),
            }),
        )?;
        if cfg.topics.model == TopicModel::Lda {
            themes = post.theta;
        }
    }
    w.table("topics/theme_weights.csv", &dated_matrix(&prep, &themes, theme_headers(k)))?;
    w.json("topics/themes.json", json!({ "model": cfg.topics.model.as_str(), "k": k }))
}
