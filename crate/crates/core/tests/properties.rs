use chrono::NaiveDate;
use fedtopics_core::coherence::{tc_lcp_star, CoherenceConfig};
use fedtopics_core::econometrics::ols;
use fedtopics_core::lda::{fit_lda, LdaConfig};
use fedtopics_core::nmf::{self, NmfConfig};
use fedtopics_core::termstructure::{kalman_filter, kalman_smooth, StateSpaceModel, YieldPanel};
use fedtopics_core::textprep::{build_matrix, tfidf, DocKey, TokenizedDocument};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(i as u64)
}

fn documents(raw: &[Vec<u8>]) -> Vec<TokenizedDocument> {
    raw.iter()
        .enumerate()
        .map(|(i, ids)| TokenizedDocument {
            key: DocKey { id: format!("d{i}"), date: day(i) },
            tokens: ids.iter().map(|t| format!("w{t}")).collect(),
        })
        .collect()
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..12, 1..15), 3..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tfidf_is_positive_exactly_where_counts_are(raw in corpus_strategy()) {
        let counts = build_matrix(&documents(&raw)).unwrap();
        let w = tfidf(&counts);
        for d in 0..counts.n_docs() {
            for j in 0..counts.n_terms() {
                prop_assert_eq!(w.weights[(d, j)] > 0.0, counts.get(d, j) > 0);
            }
        }
    }

    #[test]
    fn nmf_factors_stay_non_negative(raw in corpus_strategy(), k in 1usize..4) {
        let counts = build_matrix(&documents(&raw)).unwrap();
        let a = tfidf(&counts).weights;
        prop_assume!(k <= a.nrows().min(a.ncols()));
        let cfg = NmfConfig { max_iter: 50, ..NmfConfig::new(k) };
        let model = nmf::fit(&a, &cfg).unwrap();
        prop_assert!(model.w.iter().chain(model.h.iter()).all(|&x| x >= 0.0));
        prop_assert!(model.objective_trace.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-10) + 1e-300));
    }

    #[test]
    fn coherence_terms_are_bounded(raw in corpus_strategy()) {
        let counts = build_matrix(&documents(&raw)).unwrap();
        prop_assume!(counts.n_terms() >= 2);
        let eps = CoherenceConfig::default().epsilon;
        let top: Vec<usize> = (0..counts.n_terms().min(6)).collect();
        let score = tc_lcp_star(&top, &counts, eps).unwrap();
        // Every pair term is at most ln(1 + eps / P(w_j)) <= ln(1 + eps * D).
        prop_assert!(score <= (1.0 + eps * counts.n_docs() as f64).ln() + 1e-15);
    }

    #[test]
    fn lda_posteriors_lie_on_the_simplex(raw in corpus_strategy(), seed in 0u64..1000) {
        let tokens: Vec<Vec<usize>> = raw.iter().map(|d| d.iter().map(|&t| usize::from(t)).collect()).collect();
        let cfg = LdaConfig { burn_in: 5, sweeps: 10, ..LdaConfig::new(3, seed) };
        let (state, post) = fit_lda(&tokens, 12, &cfg).unwrap();
        prop_assert!(state.check_counts().is_ok());
        for row in post.theta.row_iter().chain(post.beta.row_iter()) {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal(seed in 0u64..10_000, n in 10usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || rng.random::<f64>() - 0.5;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { next() });
        let y: Vec<f64> = (0..n).map(|_| next()).collect();
        let names = vec!["const".to_string(), "a".to_string(), "b".to_string()];
        let fit = ols(&y, &x, &names).unwrap();
        for j in 0..3 {
            let dot: f64 = x.column(j).iter().zip(&fit.residuals).map(|(a, r)| a * r).sum();
            prop_assert!(dot.abs() < 1e-8);
        }
    }
}

#[test]
fn smoother_meets_filter_at_the_last_date() {
    let z = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
    let model = StateSpaceModel::new(
        z,
        DMatrix::from_element(1, 1, 0.8),
        DVector::from_element(1, 1.0),
        DVector::from_column_slice(&[0.2, 0.3]),
        DMatrix::from_element(1, 1, 0.1),
        DVector::from_element(1, 1.0),
        DMatrix::from_element(1, 1, 0.5),
    )
    .unwrap();
    let yields = DMatrix::from_row_slice(5, 2, &[1.0, 0.4, 1.2, 0.7, 0.9, 0.5, 1.4, 0.6, 1.1, 0.5]);
    let panel = YieldPanel::new((0..5).map(day).collect(), vec![12, 60], yields).unwrap();
    let filter = kalman_filter(&model, &panel).unwrap();
    let smooth = kalman_smooth(&model, &filter).unwrap();
    assert!((&smooth.smoothed[4] - &filter.filtered[4]).amax() < 1e-12);
    assert!((&smooth.smoothed_cov[4] - &filter.filtered_cov[4]).amax() < 1e-12);
    assert!(filter.loglik.is_finite());
}
