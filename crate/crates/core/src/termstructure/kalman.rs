//! Linear Gaussian state space with a mean-adjusted state:
//!
//! ```text
//! y_t     = Z (x_t + μ) + ε_t,      ε_t ~ N(0, H),  H diagonal
//! x_{t+1} = T x_t + R η_t,          η_t ~ N(0, Q)
//! x_1     ~ N(a0 − μ, P0)
//! ```
//!
//! `x_t = f_t − μ` is the demeaned factor vector. Filter and smoother work on
//! `x_t` and report state means back in factor coordinates (`+ μ`).
//! Measurement rows that are `NaN` at a date are dropped for that date.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::twostep::spectral_radius;
use super::{symmetrize, FactorSeries, FactorSource, YieldPanel};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    /// Measurement loadings, `N × m`.
    pub z: DMatrix<f64>,
    /// Transition `T` (the VAR matrix `A`), `m × m`.
    pub transition: DMatrix<f64>,
    /// Factor means `μ`.
    pub mu: DVector<f64>,
    /// Shock selection `R`, `m × g`.
    pub r: DMatrix<f64>,
    /// Diagonal of `H`.
    pub h: DVector<f64>,
    /// State shock covariance `Q`, `g × g`.
    pub q: DMatrix<f64>,
    /// Initial factor mean (factor coordinates).
    pub a0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl StateSpaceModel {
    /// Model with `R = I`.
    pub fn new(
        z: DMatrix<f64>,
        transition: DMatrix<f64>,
        mu: DVector<f64>,
        h: DVector<f64>,
        q: DMatrix<f64>,
        a0: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let m = transition.nrows();
        let model = StateSpaceModel { z, transition, mu, r: DMatrix::identity(m, m), h, q, a0, p0 };
        model.validate()?;
        Ok(model)
    }

    pub fn n_obs(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.z.ncols()
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.h)
    }

    /// Reported, not enforced.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.transition)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.z.shape();
        let g = self.q.nrows();
        let check = |context, expected: (usize, usize), found: (usize, usize)| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context, expected, found })
            }
        };
        check("transition", (m, m), self.transition.shape())?;
        check("mu", (m, 1), self.mu.shape())?;
        check("selection R", (m, g), self.r.shape())?;
        check("Q", (g, g), self.q.shape())?;
        check("H diagonal", (n, 1), self.h.shape())?;
        check("a0", (m, 1), self.a0.shape())?;
        check("P0", (m, m), self.p0.shape())?;
        if self.h.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("measurement variances must be positive and finite".into()));
        }
        let all = [&self.z, &self.transition, &self.r, &self.q, &self.p0];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite()))
            || self.mu.iter().chain(self.a0.iter()).any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("state-space parameters".into()));
        }
        Ok(())
    }

    fn state_noise(&self) -> DMatrix<f64> {
        let mut rqr = &self.r * &self.q * self.r.transpose();
        symmetrize(&mut rqr);
        rqr
    }
}

/// Per-date filter quantities. State means are in factor coordinates; `v`,
/// `F`, `K` and `F⁻¹` are restricted to the rows observed at that date.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    /// `a_t + μ`: prediction of `f_t` from data before `t`.
    pub predicted: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub filtered: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    pub innovations: Vec<DVector<f64>>,
    pub innovation_cov: Vec<DMatrix<f64>>,
    pub innovation_cov_inv: Vec<DMatrix<f64>>,
    /// `K_t = T P_t Zᵀ F_t⁻¹`.
    pub gains: Vec<DMatrix<f64>>,
    /// Measurement rows used at each date.
    pub observed: Vec<Vec<usize>>,
    pub loglik: f64,
}

impl KalmanOutput {
    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn filtered_factors(&self, panel: &YieldPanel) -> FactorSeries {
        to_series(panel, &self.filtered, FactorSource::Filtered)
    }
}

fn to_series(panel: &YieldPanel, states: &[DVector<f64>], source: FactorSource) -> FactorSeries {
    let m = states.first().map_or(0, |s| s.len());
    let values = DMatrix::from_fn(states.len(), m, |t, j| states[t][j]);
    FactorSeries { dates: panel.dates.clone(), values, source }
}

fn check_panel(model: &StateSpaceModel, panel: &YieldPanel) -> Result<()> {
    model.validate()?;
    if panel.maturities.len() != model.n_obs() {
        return Err(Error::DimensionMismatch {
            context: "panel vs measurement loadings",
            expected: (model.n_obs(), model.n_state()),
            found: (panel.maturities.len(), model.n_state()),
        });
    }
    Ok(())
}

fn observed_rows(panel: &YieldPanel, t: usize) -> Vec<usize> {
    (0..panel.maturities.len()).filter(|&j| !panel.yields[(t, j)].is_nan()).collect()
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>()
}

pub fn kalman_filter(model: &StateSpaceModel, panel: &YieldPanel) -> Result<KalmanOutput> {
    check_panel(model, panel)?;
    let n_t = panel.len();
    let tm = &model.transition;
    let rqr = model.state_noise();
    let mut out = KalmanOutput {
        predicted: Vec::with_capacity(n_t),
        predicted_cov: Vec::with_capacity(n_t),
        filtered: Vec::with_capacity(n_t),
        filtered_cov: Vec::with_capacity(n_t),
        innovations: Vec::with_capacity(n_t),
        innovation_cov: Vec::with_capacity(n_t),
        innovation_cov_inv: Vec::with_capacity(n_t),
        gains: Vec::with_capacity(n_t),
        observed: Vec::with_capacity(n_t),
        loglik: 0.0,
    };
    let mut a = &model.a0 - &model.mu;
    let mut p = model.p0.clone();
    symmetrize(&mut p);

    for t in 0..n_t {
        let rows = observed_rows(panel, t);
        let z = model.z.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&j| panel.yields[(t, j)]));
        let v = y - &z * (&a + &model.mu);
        let pz = &p * z.transpose();
        let mut f = &z * &pz;
        for (k, &j) in rows.iter().enumerate() {
            f[(k, k)] += model.h[j];
        }
        symmetrize(&mut f);
        let chol = f.clone().cholesky().ok_or(Error::NotPositiveDefinite { index: t })?;
        let f_inv = chol.inverse();
        let pzf = &pz * &f_inv;

        let a_tt = &a + &pzf * &v;
        let mut p_tt = &p - &pzf * pz.transpose();
        symmetrize(&mut p_tt);
        let gain = tm * &pzf;

        let quad = v.dot(&(&f_inv * &v));
        let contrib = -0.5 * (rows.len() as f64 * LN_2PI + log_det(&chol) + quad);
        if !contrib.is_finite() {
            return Err(Error::NonFinite(alloc::format!("log-likelihood at date index {t}")));
        }
        out.loglik += contrib;

        out.predicted.push(&a + &model.mu);
        out.predicted_cov.push(p.clone());
        out.filtered.push(&a_tt + &model.mu);
        out.filtered_cov.push(p_tt.clone());
        out.innovations.push(v);
        out.innovation_cov.push(f);
        out.innovation_cov_inv.push(f_inv);
        out.gains.push(gain);
        out.observed.push(rows);

        a = tm * a_tt;
        p = tm * p_tt * tm.transpose() + &rqr;
        symmetrize(&mut p);
    }
    Ok(out)
}

/// Prediction-error-decomposition log-likelihood.
pub fn loglik(model: &StateSpaceModel, panel: &YieldPanel) -> Result<f64> {
    kalman_filter(model, panel).map(|o| o.loglik)
}

/// Same value as [`loglik`], computed in information form. With diagonal `H`
/// the `N × N` innovation covariance never has to be factored:
///
/// ```text
/// M_t     = P_t⁻¹ + Zᵀ H⁻¹ Z
/// ln|F_t| = ln|H| + ln|P_t| + ln|M_t|
/// vᵀF⁻¹v  = vᵀH⁻¹v − wᵀ M_t⁻¹ w,      w = Zᵀ H⁻¹ v
/// a_t|t   = a_t + M_t⁻¹ w,            P_t|t = M_t⁻¹
/// ```
///
/// Requires `P_t` positive definite, which holds whenever `P0` and `Q` are.
pub fn loglik_fast(model: &StateSpaceModel, panel: &YieldPanel) -> Result<f64> {
    check_panel(model, panel)?;
    let (n, m) = model.z.shape();
    let tm = &model.transition;
    let rqr = model.state_noise();
    let h_inv = model.h.map(|v| 1.0 / v);
    let zh = DMatrix::from_fn(m, n, |i, j| model.z[(j, i)] * h_inv[j]);
    let full_info = &zh * &model.z;
    let full_log_h: f64 = model.h.iter().map(|v| libm::log(*v)).sum();
    let complete = !panel.has_missing();

    let mut a = &model.a0 - &model.mu;
    let mut p = model.p0.clone();
    symmetrize(&mut p);
    let mut total = 0.0;
    let mut v = DVector::zeros(n);

    for t in 0..panel.len() {
        let p_chol = p.clone().cholesky().ok_or(Error::NotPositiveDefinite { index: t })?;
        let fitted = &model.z * (&a + &model.mu);
        let mut quad = 0.0;
        let mut count = 0usize;
        let mut w = DVector::zeros(m);
        let mut log_h = full_log_h;
        let mut info = if complete { full_info.clone() } else { DMatrix::zeros(m, m) };
        for j in 0..n {
            let y = panel.yields[(t, j)];
            if y.is_nan() {
                log_h -= libm::log(model.h[j]);
                continue;
            }
            v[j] = y - fitted[j];
            quad += v[j] * v[j] * h_inv[j];
            w.axpy(v[j], &zh.column(j), 1.0);
            count += 1;
            if !complete {
                let zj = model.z.row(j);
                info += zj.transpose() * zj * h_inv[j];
            }
        }
        let mut mmat = p_chol.inverse() + info;
        symmetrize(&mut mmat);
        let m_chol = mmat.cholesky().ok_or(Error::NotPositiveDefinite { index: t })?;
        let m_inv_w = m_chol.solve(&w);
        quad -= w.dot(&m_inv_w);
        let log_f = if count == 0 { 0.0 } else { log_h + log_det(&p_chol) + log_det(&m_chol) };
        let contrib = -0.5 * (count as f64 * LN_2PI + log_f + quad);
        if !contrib.is_finite() {
            return Err(Error::NonFinite(alloc::format!("log-likelihood at date index {t}")));
        }
        total += contrib;

        let (a_tt, p_tt) = if count == 0 { (a.clone(), p.clone()) } else { (&a + m_inv_w, m_chol.inverse()) };
        a = tm * a_tt;
        p = tm * p_tt * tm.transpose() + &rqr;
        symmetrize(&mut p);
    }
    Ok(total)
}

/// Backward-pass output, indexed by date like the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherOutput {
    /// `E[f_t | all data]`.
    pub smoothed: Vec<DVector<f64>>,
    /// `V_t = Var[x_t | all data]`.
    pub smoothed_cov: Vec<DMatrix<f64>>,
    /// `r_{t−1}`: the weighted sum of innovations from `t` on.
    pub r: Vec<DVector<f64>>,
    /// `N_{t−1}`: the variance of `r_{t−1}`.
    pub n: Vec<DMatrix<f64>>,
    pub u: Vec<DVector<f64>>,
    pub d: Vec<DMatrix<f64>>,
    /// Smoothed measurement disturbances on the observed rows.
    pub eps: Vec<DVector<f64>>,
    pub eps_cov: Vec<DMatrix<f64>>,
    /// Smoothed state disturbances `η̂_t = Q Rᵀ r_t`.
    pub eta: Vec<DVector<f64>>,
    pub eta_cov: Vec<DMatrix<f64>>,
}

impl SmootherOutput {
    pub fn factors(&self, panel: &YieldPanel) -> FactorSeries {
        to_series(panel, &self.smoothed, FactorSource::Smoothed)
    }
}

pub fn kalman_smooth(model: &StateSpaceModel, filter: &KalmanOutput) -> Result<SmootherOutput> {
    model.validate()?;
    let n_t = filter.len();
    let m = model.n_state();
    let tm = &model.transition;
    let qr = &model.q * model.r.transpose();

    let mut out = SmootherOutput {
        smoothed: Vec::with_capacity(n_t),
        smoothed_cov: Vec::with_capacity(n_t),
        r: Vec::with_capacity(n_t),
        n: Vec::with_capacity(n_t),
        u: Vec::with_capacity(n_t),
        d: Vec::with_capacity(n_t),
        eps: Vec::with_capacity(n_t),
        eps_cov: Vec::with_capacity(n_t),
        eta: Vec::with_capacity(n_t),
        eta_cov: Vec::with_capacity(n_t),
    };
    let mut r = DVector::zeros(m);
    let mut nmat = DMatrix::zeros(m, m);

    for t in (0..n_t).rev() {
        let rows = &filter.observed[t];
        let z = model.z.select_rows(rows.iter());
        let f_inv = &filter.innovation_cov_inv[t];
        let v = &filter.innovations[t];
        let k = &filter.gains[t];
        let p = &filter.predicted_cov[t];
        let l = tm - k * &z;
        let h = DVector::from_iterator(rows.len(), rows.iter().map(|&j| model.h[j]));

        let u = f_inv * v - k.transpose() * &r;
        let mut d = f_inv + k.transpose() * &nmat * k;
        symmetrize(&mut d);
        let eps = u.component_mul(&h);
        let mut eps_cov = DMatrix::from_diagonal(&h) - DMatrix::from_fn(h.len(), h.len(), |i, j| h[i] * d[(i, j)] * h[j]);
        symmetrize(&mut eps_cov);
        let eta = &qr * &r;
        let mut eta_cov = &model.q - &qr * &nmat * qr.transpose();
        symmetrize(&mut eta_cov);

        let zf = z.transpose() * f_inv;
        r = &zf * v + l.transpose() * &r;
        nmat = &zf * &z + l.transpose() * &nmat * &l;
        symmetrize(&mut nmat);

        let smoothed = &filter.predicted[t] + p * &r;
        let mut v_t = p - p * &nmat * p;
        symmetrize(&mut v_t);

        out.smoothed.push(smoothed);
        out.smoothed_cov.push(v_t);
        out.r.push(r.clone());
        out.n.push(nmat.clone());
        out.u.push(u);
        out.d.push(d);
        out.eps.push(eps);
        out.eps_cov.push(eps_cov);
        out.eta.push(eta);
        out.eta_cov.push(eta_cov);
    }
    for list in [&mut out.smoothed, &mut out.r, &mut out.u, &mut out.eps, &mut out.eta] {
        list.reverse();
    }
    for list in [&mut out.smoothed_cov, &mut out.n, &mut out.d, &mut out.eps_cov, &mut out.eta_cov] {
        list.reverse();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::termstructure::loadings::{ns_loadings, DEFAULT_LAMBDA};
    use crate::termstructure::simulate::simulate_panel;
    use crate::termstructure::tests::business_days;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Joint Gaussian of the stacked observations implied by the model,
    /// built by propagating moments directly.
    struct Dense {
        x_mean: DVector<f64>,
        x_cov: DMatrix<f64>,
        y_mean: DVector<f64>,
        y_cov: DMatrix<f64>,
        xy_cov: DMatrix<f64>,
    }

    fn dense(model: &StateSpaceModel, t_len: usize) -> Dense {
        let (n, m) = model.z.shape();
        let tm = &model.transition;
        let rqr = &model.r * &model.q * model.r.transpose();
        let mut means = vec![&model.a0 - &model.mu];
        let mut vars = vec![model.p0.clone()];
        for t in 1..t_len {
            means.push(tm * &means[t - 1]);
            vars.push(tm * &vars[t - 1] * tm.transpose() + &rqr);
        }
        let mut x_cov = DMatrix::zeros(t_len * m, t_len * m);
        for s in 0..t_len {
            let mut block = vars[s].clone();
            for t in s..t_len {
                // Cov(x_t, x_s) = T^{t−s} Var(x_s).
                x_cov.view_mut((t * m, s * m), (m, m)).copy_from(&block);
                x_cov.view_mut((s * m, t * m), (m, m)).copy_from(&block.transpose());
                block = tm * block;
            }
        }
        let x_mean = DVector::from_fn(t_len * m, |i, _| means[i / m][i % m] + model.mu[i % m]);
        let mut zbig = DMatrix::zeros(t_len * n, t_len * m);
        let mut hbig = DMatrix::zeros(t_len * n, t_len * n);
        for t in 0..t_len {
            zbig.view_mut((t * n, t * m), (n, m)).copy_from(&model.z);
            for j in 0..n {
                hbig[(t * n + j, t * n + j)] = model.h[j];
            }
        }
        Dense {
            y_mean: &zbig * &x_mean,
            y_cov: &zbig * &x_cov * zbig.transpose() + hbig,
            xy_cov: &x_cov * zbig.transpose(),
            x_mean,
            x_cov,
        }
    }

    fn stacked(panel: &YieldPanel) -> DVector<f64> {
        DVector::from_iterator(panel.yields.len(), panel.yields.transpose().iter().copied())
    }

    fn gaussian_logpdf(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let chol = cov.clone().cholesky().unwrap();
        let d = y - mean;
        let quad = d.dot(&chol.solve(&d));
        -0.5 * (y.len() as f64 * (2.0 * core::f64::consts::PI).ln() + log_det(&chol) + quad)
    }

    fn toy(seed: u64) -> (StateSpaceModel, YieldPanel) {
        let z = ns_loadings(&[3.0, 24.0, 120.0], DEFAULT_LAMBDA).unwrap().z;
        let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.0, 0.8, -0.1, 0.05, 0.0, 0.7]);
        let q = DMatrix::from_row_slice(3, 3, &[0.3, 0.05, 0.0, 0.05, 0.4, 0.1, 0.0, 0.1, 0.6]);
        let p0 = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.8, 0.0, 0.1, 0.0, 1.2]);
        let model = StateSpaceModel::new(
            z,
            a,
            DVector::from_column_slice(&[4.0, -1.0, 0.5]),
            DVector::from_column_slice(&[0.05, 0.02, 0.08]),
            q,
            DVector::from_column_slice(&[4.5, -0.5, 0.0]),
            p0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (panel, _) = simulate_panel(&model, business_days(4), vec![3, 24, 120], &mut rng).unwrap();
        (model, panel)
    }

    #[test]
    fn loglik_matches_dense_joint_gaussian() {
        for seed in 0..5 {
            let (model, panel) = toy(seed);
            let d = dense(&model, 4);
            let oracle = gaussian_logpdf(&stacked(&panel), &d.y_mean, &d.y_cov);
            let got = loglik(&model, &panel).unwrap();
            assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
            let fast = loglik_fast(&model, &panel).unwrap();
            assert!((fast - oracle).abs() < 1e-8, "{fast} vs {oracle}");
        }
    }

    #[test]
    fn smoothed_means_and_variances_match_dense_conditioning() {
        let (model, panel) = toy(7);
        let d = dense(&model, 4);
        let y = stacked(&panel);
        let chol = d.y_cov.clone().cholesky().unwrap();
        let cond_mean = &d.x_mean + &d.xy_cov * chol.solve(&(&y - &d.y_mean));
        let cond_cov = &d.x_cov - &d.xy_cov * chol.solve(&d.xy_cov.transpose());
        let f = kalman_filter(&model, &panel).unwrap();
        let s = kalman_smooth(&model, &f).unwrap();
        for t in 0..4 {
            for j in 0..3 {
                assert!((s.smoothed[t][j] - cond_mean[t * 3 + j]).abs() < 1e-8);
                for k in 0..3 {
                    assert!((s.smoothed_cov[t][(j, k)] - cond_cov[(t * 3 + j, t * 3 + k)]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn smoother_meets_filter_at_the_end_and_reduces_variance() {
        let (model, panel) = toy(3);
        let f = kalman_filter(&model, &panel).unwrap();
        let s = kalman_smooth(&model, &f).unwrap();
        assert!((&s.smoothed[3] - &f.filtered[3]).amax() < 1e-12);
        for t in 0..4 {
            let gap = &f.predicted_cov[t] - &s.smoothed_cov[t];
            let min_eig = gap.symmetric_eigenvalues().min();
            assert!(min_eig > -1e-10, "P − V not PSD at {t}: {min_eig}");
            for c in [&f.predicted_cov[t], &f.filtered_cov[t], &s.smoothed_cov[t], &f.innovation_cov[t]] {
                assert!((c - c.transpose()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_disturbances_match_dense_conditioning() {
        // ε̂_t = y_t − Z(α̂_t + μ) and η̂_t = x̂_{t+1} − T x̂_t must agree with
        // the disturbance recursions.
        let (model, panel) = toy(5);
        let f = kalman_filter(&model, &panel).unwrap();
        let s = kalman_smooth(&model, &f).unwrap();
        for t in 0..4 {
            let resid = panel.observation(t) - &model.z * &s.smoothed[t];
            assert!((&resid - &s.eps[t]).amax() < 1e-10);
            if t < 3 {
                let xt = &s.smoothed[t] - &model.mu;
                let xn = &s.smoothed[t + 1] - &model.mu;
                let implied = xn - &model.transition * xt;
                assert!((&implied - &s.eta[t]).amax() < 1e-10);
            }
        }
        assert!(s.eta[3].amax() == 0.0);
    }

    #[test]
    fn local_level_matches_scalar_recursion() {
        let model = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DVector::from_element(1, 2.0),
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        let ys = [1.4, 0.2, 2.9];
        let panel = YieldPanel::new(business_days(3), vec![1], DMatrix::from_column_slice(3, 1, &ys)).unwrap();
        let out = kalman_filter(&model, &panel).unwrap();

        let (mut a, mut p, mut ll) = (1.0_f64, 3.0_f64, 0.0_f64);
        for (t, y) in ys.iter().enumerate() {
            let v = y - a;
            let f = p + 2.0;
            let k = p / f;
            ll += -0.5 * ((2.0 * core::f64::consts::PI).ln() + f.ln() + v * v / f);
            assert!((out.predicted[t][0] - a).abs() < 1e-14);
            assert!((out.innovation_cov[t][(0, 0)] - f).abs() < 1e-14);
            assert!((out.filtered[t][0] - (a + k * v)).abs() < 1e-14);
            assert!((out.filtered_cov[t][(0, 0)] - p * (1.0 - k)).abs() < 1e-14);
            a += k * v;
            p = p * (1.0 - k) + 0.5;
        }
        assert!((out.loglik - ll).abs() < 1e-12);
    }

    #[test]
    fn huge_measurement_noise_keeps_state_at_prior() {
        let (mut model, panel) = toy(1);
        model.h.fill(1e12);
        let out = kalman_filter(&model, &panel).unwrap();
        for t in 0..4 {
            assert!(out.gains[t].amax() < 1e-9);
            assert!((&out.filtered[t] - &out.predicted[t]).amax() < 1e-9);
        }
    }

    #[test]
    fn indefinite_innovation_covariance_reports_date() {
        let (mut model, panel) = toy(1);
        model.p0 = -DMatrix::identity(3, 3) * 10.0;
        assert_eq!(kalman_filter(&model, &panel), Err(Error::NotPositiveDefinite { index: 0 }));
    }

    #[test]
    fn missing_rows_are_dropped() {
        let (model, panel) = toy(9);
        let mut y = panel.yields.clone();
        y[(1, 2)] = f64::NAN;
        y[(2, 0)] = f64::NAN;
        y[(2, 1)] = f64::NAN;
        let holed = YieldPanel::with_missing(panel.dates.clone(), panel.maturities.clone(), y).unwrap();
        let out = kalman_filter(&model, &holed).unwrap();
        assert_eq!(out.observed[2], vec![2]);

        // Oracle: condition only on observed coordinates of the stacked vector.
        let d = dense(&model, 4);
        let keep: Vec<usize> = (0..12).filter(|&i| !holed.yields[(i / 3, i % 3)].is_nan()).collect();
        let ys = stacked(&holed).select_rows(keep.iter());
        let mean = d.y_mean.select_rows(keep.iter());
        let cov = d.y_cov.select_rows(keep.iter()).select_columns(keep.iter());
        let oracle = gaussian_logpdf(&ys, &mean, &cov);
        assert!((out.loglik - oracle).abs() < 1e-8);
        assert!((loglik_fast(&model, &holed).unwrap() - oracle).abs() < 1e-8);

        let s = kalman_smooth(&model, &out).unwrap();
        let chol = cov.cholesky().unwrap();
        let xy = d.xy_cov.select_columns(keep.iter());
        let cond = &d.x_mean + &xy * chol.solve(&(ys - mean));
        for t in 0..4 {
            for j in 0..3 {
                assert!((s.smoothed[t][j] - cond[t * 3 + j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn doubling_noise_lowers_expected_loglik() {
        let (model, _) = toy(0);
        let mut doubled = model.clone();
        doubled.h *= 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut gap = 0.0;
        for _ in 0..100 {
            let (panel, _) = simulate_panel(&model, business_days(20), vec![3, 24, 120], &mut rng).unwrap();
            gap += loglik(&model, &panel).unwrap() - loglik(&doubled, &panel).unwrap();
        }
        assert!(gap > 0.0, "{gap}");
    }

    #[test]
    fn fast_and_dense_agree_on_longer_panel() {
        let (model, _) = toy(0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (panel, _) = simulate_panel(&model, business_days(300), vec![3, 24, 120], &mut rng).unwrap();
        let a = loglik(&model, &panel).unwrap();
        let b = loglik_fast(&model, &panel).unwrap();
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }
}
