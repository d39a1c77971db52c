//! Non-negative matrix factorization `A ≈ W H` by multiplicative updates.
//!
//! `W` is documents × topics, `H` is topics × terms. The loss is
//! `½‖A − WH‖²_F`; each step rescales `H` and then `W` elementwise:
//!
//! ```text
//! H ← H ⊙ (WᵀA) ⊘ (WᵀWH + g)
//! W ← W ⊙ (AHᵀ) ⊘ (WHHᵀ + g)      (with the freshly updated H)
//! ```
//!
//! The guard `g` keeps denominators away from zero. Adding a non-negative
//! constant to the denominator still majorizes the loss, so the steps stay
//! monotone.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmfInit {
    /// Non-negative double SVD; deterministic without a seed.
    Nndsvd,
    /// Uniform entries scaled to the data magnitude.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfConfig {
    pub k: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub init: NmfInit,
    pub denom_guard: f64,
}

impl NmfConfig {
    pub fn new(k: usize) -> Self {
        NmfConfig {
            k,
            max_iter: 1000,
            rel_tol: 1e-6,
            init: NmfInit::Nndsvd,
            denom_guard: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig("nmf: k and max_iter must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.denom_guard > 0.0) {
            return Err(Error::InvalidConfig("nmf: rel_tol and denom_guard must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    /// Document-topic weights, `n × k`.
    pub w: DMatrix<f64>,
    /// Topic-term weights, `k × m`.
    pub h: DMatrix<f64>,
    /// Loss at the initial point followed by the loss after every step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl NmfModel {
    pub fn k(&self) -> usize {
        self.h.nrows()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

fn check_dims(a: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != a.nrows() || w.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch {
            context: "nmf W",
            expected: (a.nrows(), h.nrows()),
            found: w.shape(),
        });
    }
    if h.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "nmf H",
            expected: (w.ncols(), a.ncols()),
            found: h.shape(),
        });
    }
    Ok(())
}

/// `½‖A − WH‖²_F`.
pub fn objective(a: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    check_dims(a, w, h)?;
    let resid = a - w * h;
    Ok(0.5 * resid.iter().map(|r| r * r).sum::<f64>())
}

/// One multiplicative step: `H` first, then `W` against the new `H`.
pub fn update_step(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    guard: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_dims(a, w, h)?;
    let numer_h = w.tr_mul(a);
    let denom_h = w.tr_mul(w) * h;
    let h_next = h.zip_zip_map(&numer_h, &denom_h, |x, n, d| x * n / (d + guard));

    let numer_w = a * h_next.transpose();
    let denom_w = w * (&h_next * h_next.transpose());
    let w_next = w.zip_zip_map(&numer_w, &denom_w, |x, n, d| x * n / (d + guard));

    if !h_next.iter().chain(w_next.iter()).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("nmf update step".into()));
    }
    Ok((w_next, h_next))
}

fn validate_input(a: &DMatrix<f64>, k: usize) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("nmf input matrix".into()));
    }
    if a.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidConfig("nmf input has negative entries".into()));
    }
    let limit = a.nrows().min(a.ncols());
    if k > limit {
        return Err(Error::InvalidConfig(format!("nmf: k = {k} exceeds min(n, m) = {limit}")));
    }
    Ok(())
}

/// Starting factors for `fit`. Entries below the guard are lifted to it so
/// that no topic row or column is stuck at an exact zero.
pub fn initialize(a: &DMatrix<f64>, cfg: &NmfConfig) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    validate_input(a, cfg.k)?;
    let (mut w, mut h) = match cfg.init {
        NmfInit::Nndsvd => nndsvd(a, cfg.k),
        NmfInit::Random { seed } => random_init(a, cfg.k, seed),
    };
    let g = cfg.denom_guard;
    w.apply(|x| *x = x.max(g));
    h.apply(|x| *x = x.max(g));
    Ok((w, h))
}

fn random_init(a: &DMatrix<f64>, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = a.mean().max(0.0);
    let scale = libm::sqrt(mean / k as f64);
    let w = DMatrix::from_fn(a.nrows(), k, |_, _| scale * rng.random::<f64>());
    let h = DMatrix::from_fn(k, a.ncols(), |_, _| scale * rng.random::<f64>());
    (w, h)
}

fn nndsvd(a: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = a.shape();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let mut w = DMatrix::zeros(n, k);
    let mut h = DMatrix::zeros(k, m);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let s = svd.singular_values[idx];
        let x = u.column(idx);
        let y = v_t.row(idx).transpose();
        if j == 0 {
            let scale = libm::sqrt(s);
            w.set_column(0, &x.map(|e| scale * e.abs()));
            h.set_row(0, &y.map(|e| scale * e.abs()).transpose());
            continue;
        }
        let (xp, xn) = (x.map(|e| e.max(0.0)), x.map(|e| (-e).max(0.0)));
        let (yp, yn) = (y.map(|e| e.max(0.0)), y.map(|e| (-e).max(0.0)));
        let (xpn, xnn, ypn, ynn) = (xp.norm(), xn.norm(), yp.norm(), yn.norm());
        let (mp, mn) = (xpn * ypn, xnn * ynn);
        let (uu, vv, sigma, nu, nv) = if mp > mn {
            (xp, yp, mp, xpn, ypn)
        } else {
            (xn, yn, mn, xnn, ynn)
        };
        if sigma <= 0.0 {
            continue;
        }
        let scale = libm::sqrt(s * sigma);
        w.set_column(j, &(uu * (scale / nu)));
        h.set_row(j, &(vv * (scale / nv)).transpose());
    }
    (w, h)
}

pub fn fit(a: &DMatrix<f64>, cfg: &NmfConfig) -> Result<NmfModel> {
    let (w, h) = initialize(a, cfg)?;
    fit_from(a, w, h, cfg)
}

/// Iterate from caller-supplied factors; `cfg.init` is ignored.
pub fn fit_from(a: &DMatrix<f64>, w0: DMatrix<f64>, h0: DMatrix<f64>, cfg: &NmfConfig) -> Result<NmfModel> {
    cfg.validate()?;
    validate_input(a, cfg.k)?;
    if w0.ncols() != cfg.k {
        return Err(Error::DimensionMismatch {
            context: "nmf initial W",
            expected: (a.nrows(), cfg.k),
            found: w0.shape(),
        });
    }
    let (mut w, mut h) = (w0, h0);
    let mut prev = objective(a, &w, &h)?;
    if !prev.is_finite() {
        return Err(Error::NonFinite("nmf objective".into()));
    }
    let mut trace = Vec::with_capacity(cfg.max_iter + 1);
    trace.push(prev);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let (w_next, h_next) = update_step(a, &w, &h, cfg.denom_guard)?;
        w = w_next;
        h = h_next;
        iterations += 1;
        let cur = objective(a, &w, &h)?;
        if !cur.is_finite() {
            return Err(Error::NonFinite("nmf objective".into()));
        }
        trace.push(cur);
        if cur == 0.0 || (prev - cur).abs() <= cfg.rel_tol * prev.abs() {
            converged = true;
            break;
        }
        prev = cur;
    }
    Ok(NmfModel { w, h, objective_trace: trace, iterations, converged })
}

/// Indices of the `n` heaviest terms of a topic, ties broken by lower index.
pub fn top_terms(h: &DMatrix<f64>, topic: usize, n: usize) -> Result<Vec<usize>> {
    if topic >= h.nrows() {
        return Err(Error::TopicOutOfRange { topic, k: h.nrows() });
    }
    rank_row(h.row(topic).iter().copied(), n)
}

pub(crate) fn rank_row(row: impl Iterator<Item = f64>, n: usize) -> Result<Vec<usize>> {
    let values: Vec<f64> = row.collect();
    if n == 0 || n > values.len() {
        return Err(Error::InvalidConfig(format!(
            "top-term count {n} outside 1..={}",
            values.len()
        )));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    idx.truncate(n);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>())
    }

    fn naive_objective(a: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let mut wh = 0.0;
                for k in 0..w.ncols() {
                    wh += w[(i, k)] * h[(k, j)];
                }
                total += (a[(i, j)] - wh) * (a[(i, j)] - wh);
            }
        }
        0.5 * total
    }

    /// Three disjoint term blocks of five terms; each document uses one block.
    pub(crate) fn planted_blocks(seed: u64, blocks: usize, terms: usize, docs: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(blocks * docs, blocks * terms, |i, j| {
            if i / docs == j / terms {
                1.0 + 4.0 * rng.random::<f64>()
            } else {
                0.0
            }
        })
    }

    #[test]
    fn objective_cases() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let z = DMatrix::zeros(1, 1);
        assert_eq!(objective(&a, &z, &z).unwrap(), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_matrix(&mut rng, 4, 2);
        let h = random_matrix(&mut rng, 2, 5);
        assert_eq!(objective(&(&w * &h), &w, &h).unwrap(), 0.0);

        let a = random_matrix(&mut rng, 4, 5);
        let got = objective(&a, &w, &h).unwrap();
        assert!((got - naive_objective(&a, &w, &h)).abs() < 1e-12);

        assert!(matches!(
            objective(&a, &h, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exact_product_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_matrix(&mut rng, 6, 3).add_scalar(0.1);
        let h = random_matrix(&mut rng, 3, 8).add_scalar(0.1);
        let a = &w * &h;
        let (w2, h2) = update_step(&a, &w, &h, 1e-300).unwrap();
        for (x, y) in w.iter().zip(w2.iter()).chain(h.iter().zip(h2.iter())) {
            assert!((y / x - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_matrix(&mut rng, 7, 1).add_scalar(0.5);
        let v = random_matrix(&mut rng, 1, 9).add_scalar(0.5);
        let a = &u * &v;
        let cfg = NmfConfig { max_iter: 500, rel_tol: 1e-300, init: NmfInit::Random { seed: 4 }, ..NmfConfig::new(1) };
        let model = fit(&a, &cfg).unwrap();
        assert!(model.final_objective() < 1e-8, "{}", model.final_objective());
    }

    #[test]
    fn full_rank_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_matrix(&mut rng, 4, 4);
        let h = random_matrix(&mut rng, 4, 10);
        let a = &w * &h;
        let cfg = NmfConfig { max_iter: 20_000, rel_tol: 1e-12, ..NmfConfig::new(4) };
        let model = fit(&a, &cfg).unwrap();
        let rel = (&a - &model.w * &model.h).norm() / a.norm();
        assert!(rel < 1e-3, "relative residual {rel}");
    }

    #[test]
    fn seeded_random_is_deterministic() {
        let a = planted_blocks(6, 2, 4, 3);
        let cfg = NmfConfig { init: NmfInit::Random { seed: 9 }, ..NmfConfig::new(2) };
        assert_eq!(fit(&a, &cfg).unwrap(), fit(&a, &cfg).unwrap());
        let nndsvd = NmfConfig::new(2);
        assert_eq!(fit(&a, &nndsvd).unwrap(), fit(&a, &nndsvd).unwrap());
    }

    #[test]
    fn planted_two_block_support() {
        let a = planted_blocks(7, 2, 6, 5);
        for init in [NmfInit::Nndsvd, NmfInit::Random { seed: 1 }] {
            let model = fit(&a, &NmfConfig { init, max_iter: 5000, rel_tol: 1e-14, ..NmfConfig::new(2) }).unwrap();
            let mut blocks = vec![];
            for t in 0..2 {
                let row = model.h.row(t);
                let max = row.max();
                let support: Vec<usize> = (0..12).filter(|&j| row[j] > 1e-6 * max).map(|j| j / 6).collect();
                assert!(support.iter().all(|&b| b == support[0]), "{init:?} topic {t} mixes blocks");
                blocks.push(support[0]);
                let top = top_terms(&model.h, t, 6).unwrap();
                assert!(top.iter().all(|&j| j / 6 == support[0]));
            }
            blocks.sort();
            assert_eq!(blocks, [0, 1]);
        }
    }

    #[test]
    fn k_larger_than_matrix_rejected() {
        let a = DMatrix::from_element(2, 5, 1.0);
        assert!(matches!(fit(&a, &NmfConfig::new(3)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn top_term_ordering() {
        let h = DMatrix::from_row_slice(1, 3, &[0.1, 0.9, 0.5]);
        assert_eq!(top_terms(&h, 0, 2).unwrap(), [1, 2]);
        let h = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        assert_eq!(top_terms(&h, 0, 2).unwrap(), [0, 1]);
        assert_eq!(top_terms(&h, 1, 1), Err(Error::TopicOutOfRange { topic: 1, k: 1 }));
        assert!(top_terms(&h, 0, 3).is_err());
    }

    #[test]
    fn scaled_input_keeps_rankings() {
        let a = planted_blocks(8, 3, 5, 4);
        let cfg = NmfConfig { max_iter: 200, rel_tol: 1e-300, init: NmfInit::Random { seed: 3 }, ..NmfConfig::new(3) };
        let (w0, h0) = initialize(&a, &cfg).unwrap();
        let c: f64 = 7.5;
        let base = fit_from(&a, w0.clone(), h0.clone(), &cfg).unwrap();
        let scaled = fit_from(&(&a * c), w0 * c.sqrt(), h0 * c.sqrt(), &cfg).unwrap();
        for t in 0..3 {
            assert_eq!(top_terms(&base.h, t, 5).unwrap(), top_terms(&scaled.h, t, 5).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn steps_are_monotone_and_non_negative(seed in 0u64..10_000, n in 2usize..12, m in 2usize..15, k in 1usize..4) {
            let k = k.min(n).min(m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, m);
            let mut w = random_matrix(&mut rng, n, k);
            let mut h = random_matrix(&mut rng, k, m);
            let mut prev = objective(&a, &w, &h).unwrap();
            for _ in 0..30 {
                let (w2, h2) = update_step(&a, &w, &h, 1e-12).unwrap();
                prop_assert!(w2.iter().chain(h2.iter()).all(|&x| x >= 0.0));
                let cur = objective(&a, &w2, &h2).unwrap();
                prop_assert!(cur <= prev + 1e-10 * prev);
                prev = cur;
                w = w2;
                h = h2;
            }
        }
    }
}
