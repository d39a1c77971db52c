//! Maximum likelihood for the Diebold-Li state space.
//!
//! Free parameters, packed in this order:
//! transition entries (row-major), factor means, `ln diag H`, the lower
//! Cholesky factor of `Q` with log-diagonal, and optionally `ln λ`.
//! The initial state `N(a0, P0)` is held at the two-step values.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::kalman::{kalman_filter, kalman_smooth, loglik_fast, KalmanOutput, SmootherOutput, StateSpaceModel};
use super::loadings::{ns_loadings, DEFAULT_LAMBDA};
use super::twostep::TwoStepFit;
use super::YieldPanel;
use crate::error::{Error, Result};
use crate::optim::{minimize, BfgsOptions, BfgsReport};

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    /// Starting (or fixed) decay rate.
    pub lambda: f64,
    pub estimate_lambda: bool,
    pub bfgs: BfgsOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { lambda: DEFAULT_LAMBDA, estimate_lambda: false, bfgs: BfgsOptions::default() }
    }
}

/// Variances the optimizer starts from; the dynamics always start at the
/// two-step VAR(1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MleStart {
    /// `H = I`, `Q = I`.
    UnitVariances,
    /// `H` from the cross-section residuals, `Q` from the VAR residuals.
    TwoStepVariances,
}

impl MleStart {
    pub fn as_str(self) -> &'static str {
        match self {
            MleStart::UnitVariances => "unit-variances",
            MleStart::TwoStepVariances => "two-step-variances",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub model: StateSpaceModel,
    pub lambda: f64,
    /// Log-likelihood at the unit-variance start.
    pub init_loglik: f64,
    /// The start whose optimum is reported.
    pub start: MleStart,
    pub loglik: f64,
    pub filter: KalmanOutput,
    pub smoother: SmootherOutput,
    pub optimizer: BfgsReport,
}

impl MleFit {
    /// False when the optimizer stopped on a cap; the model is then the best
    /// point it reached.
    pub fn converged(&self) -> bool {
        self.optimizer.converged
    }
}

struct Layout {
    m: usize,
    n: usize,
    estimate_lambda: bool,
}

impl Layout {
    fn len(&self) -> usize {
        let m = self.m;
        m * m + m + self.n + m * (m + 1) / 2 + usize::from(self.estimate_lambda)
    }

    /// Slots of `ln diag H` and the Cholesky factor of `Q`.
    fn variance_range(&self) -> core::ops::Range<usize> {
        let start = self.m * self.m + self.m;
        start..start + self.n + self.m * (self.m + 1) / 2
    }

    fn pack(&self, model: &StateSpaceModel, lambda: f64) -> Result<Vec<f64>> {
        let m = self.m;
        let mut psi = Vec::with_capacity(self.len());
        for i in 0..m {
            for j in 0..m {
                psi.push(model.transition[(i, j)]);
            }
        }
        psi.extend(model.mu.iter());
        psi.extend(model.h.iter().map(|v| libm::log(*v)));
        let l = model.q.clone().cholesky().ok_or(Error::NotPositiveDefinite { index: 0 })?.l();
        for i in 0..m {
            for j in 0..=i {
                psi.push(if i == j { libm::log(l[(i, i)]) } else { l[(i, j)] });
            }
        }
        if self.estimate_lambda {
            psi.push(libm::log(lambda));
        }
        Ok(psi)
    }

    /// Rebuilds the model from `psi`, reusing `z` unless `λ` is free.
    fn unpack(&self, psi: &[f64], base: &StateSpaceModel, maturities: &[f64], lambda: f64) -> Result<(StateSpaceModel, f64)> {
        let m = self.m;
        let mut at = 0;
        let mut take = |k: usize| {
            let s = &psi[at..at + k];
            at += k;
            s
        };
        let transition = DMatrix::from_row_slice(m, m, take(m * m));
        let mu = DVector::from_column_slice(take(m));
        let h = DVector::from_iterator(self.n, take(self.n).iter().map(|v| libm::exp(*v)));
        let mut l = DMatrix::zeros(m, m);
        let tri = take(m * (m + 1) / 2);
        let mut k = 0;
        for i in 0..m {
            for j in 0..=i {
                l[(i, j)] = if i == j { libm::exp(tri[k]) } else { tri[k] };
                k += 1;
            }
        }
        let (z, lambda) = if self.estimate_lambda {
            let lambda = libm::exp(take(1)[0]);
            (ns_loadings(maturities, lambda)?.z, lambda)
        } else {
            (base.z.clone(), lambda)
        };
        let model = StateSpaceModel {
            z,
            transition,
            mu,
            r: base.r.clone(),
            h,
            q: &l * l.transpose(),
            a0: base.a0.clone(),
            p0: base.p0.clone(),
        };
        Ok((model, lambda))
    }
}

/// Starting model: transition and means from the VAR, unit variances, and
/// the initial state at the two-step factor mean with the VAR residual
/// covariance.
pub fn initial_model(panel: &YieldPanel, init: &TwoStepFit, lambda: f64) -> Result<StateSpaceModel> {
    let n = panel.maturities.len();
    let z = ns_loadings(&panel.maturities_months(), lambda)?.z;
    StateSpaceModel::new(
        z,
        init.var.a.clone(),
        init.var.mu.clone(),
        DVector::from_element(n, 1.0),
        DMatrix::identity(3, 3),
        init.factors.mean(),
        init.var.q.clone(),
    )
}

/// [`initial_model`] with `Q` set to the VAR residual covariance and each
/// `H` entry to the mean squared cross-section residual at that maturity.
pub fn two_step_variance_model(panel: &YieldPanel, init: &TwoStepFit, lambda: f64) -> Result<StateSpaceModel> {
    let mut model = initial_model(panel, init, lambda)?;
    let fitted = &init.factors.values * model.z.transpose();
    for j in 0..panel.maturities.len() {
        let (mut sum, mut count) = (0.0, 0usize);
        for t in 0..panel.len() {
            let e = panel.yields[(t, j)] - fitted[(t, j)];
            if e.is_finite() {
                sum += e * e;
                count += 1;
            }
        }
        model.h[j] = if count > 0 { (sum / count as f64).max(1e-8) } else { 1.0 };
    }
    if init.var.q.clone().cholesky().is_some() {
        model.q = init.var.q.clone();
    }
    model.validate()?;
    Ok(model)
}

/// Fits from the unit-variance start and from the two-step-variance start
/// and keeps the higher likelihood; ties go to the unit-variance start.
pub fn mle_fit(panel: &YieldPanel, init: &TwoStepFit, opts: &MleOptions) -> Result<MleFit> {
    let unit = fit_from(panel, initial_model(panel, init, opts.lambda)?, MleStart::UnitVariances, opts);
    let informed = fit_from(panel, two_step_variance_model(panel, init, opts.lambda)?, MleStart::TwoStepVariances, opts);
    let (mut best, init_loglik) = match (unit, informed) {
        (Ok(u), Ok(i)) => {
            let init_loglik = u.init_loglik;
            (if i.loglik > u.loglik { i } else { u }, init_loglik)
        }
        (Ok(u), Err(_)) => {
            let init_loglik = u.init_loglik;
            (u, init_loglik)
        }
        (Err(e), Ok(i)) => {
            let start = initial_model(panel, init, opts.lambda)?;
            let init_loglik = loglik_fast(&start, panel).map_err(|_| e)?;
            (i, init_loglik)
        }
        (Err(e), Err(_)) => return Err(e),
    };
    best.init_loglik = init_loglik;
    Ok(best)
}

/// Maximum likelihood from one starting model; `a0`, `P0` and `R` stay fixed
/// at the start's values.
fn fit_from(panel: &YieldPanel, start: StateSpaceModel, origin: MleStart, opts: &MleOptions) -> Result<MleFit> {
    let layout = Layout { m: 3, n: panel.maturities.len(), estimate_lambda: opts.estimate_lambda };
    let maturities = panel.maturities_months();
    let scale = (panel.len() * panel.maturities.len()) as f64;

    let init_loglik = loglik_fast(&start, panel)?;
    let objective = |psi: &[f64]| match layout.unpack(psi, &start, &maturities, opts.lambda) {
        Ok((model, _)) => loglik_fast(&model, panel).map_or(f64::INFINITY, |ll| -ll / scale),
        Err(_) => f64::INFINITY,
    };

    // Variances first, with the VAR dynamics held at their OLS values: from
    // unit variances a joint search tends to collapse a state shock onto a
    // degenerate boundary.
    let mut psi = layout.pack(&start, opts.lambda)?;
    let variances = layout.variance_range();
    let warm = minimize(
        |sub: &[f64]| {
            let mut full = psi.clone();
            full[variances.clone()].copy_from_slice(sub);
            objective(&full)
        },
        &psi[variances.clone()],
        &opts.bfgs,
    );
    if warm.f.is_finite() {
        psi[variances].copy_from_slice(&warm.x);
    }
    let mut report = minimize(objective, &psi, &opts.bfgs);
    report.evaluations += warm.evaluations;
    report.iterations += warm.iterations;
    if !report.f.is_finite() {
        return Err(Error::NonFinite("maximum-likelihood objective".into()));
    }
    let (model, lambda) = layout.unpack(&report.x, &start, &maturities, opts.lambda)?;
    let filter = kalman_filter(&model, panel)?;
    let smoother = kalman_smooth(&model, &filter)?;
    Ok(MleFit { loglik: filter.loglik, model, lambda, init_loglik, start: origin, filter, smoother, optimizer: report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termstructure::simulate::simulate_panel;
    use crate::termstructure::tests::business_days;
    use crate::termstructure::twostep::two_step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn truth(maturities: &[u32]) -> StateSpaceModel {
        let taus: Vec<f64> = maturities.iter().map(|&m| f64::from(m)).collect();
        let n = taus.len();
        StateSpaceModel::new(
            ns_loadings(&taus, DEFAULT_LAMBDA).unwrap().z,
            DMatrix::from_row_slice(3, 3, &[0.98, 0.02, 0.0, 0.0, 0.95, 0.03, 0.0, 0.0, 0.9]),
            DVector::from_column_slice(&[5.0, -1.5, 0.3]),
            DVector::from_fn(n, |i, _| 0.002 + 0.0005 * i as f64),
            DMatrix::from_row_slice(3, 3, &[0.010, 0.002, 0.0, 0.002, 0.020, 0.003, 0.0, 0.003, 0.050]),
            DVector::from_column_slice(&[5.0, -1.5, 0.3]),
            DMatrix::identity(3, 3) * 0.1,
        )
        .unwrap()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn pack_unpack_round_trip() {
        let model = truth(&[3, 12, 60, 120]);
        for estimate_lambda in [false, true] {
            let layout = Layout { m: 3, n: 4, estimate_lambda };
            let psi = layout.pack(&model, DEFAULT_LAMBDA).unwrap();
            assert_eq!(psi.len(), layout.len());
            let (back, lambda) = layout.unpack(&psi, &model, &[3.0, 12.0, 60.0, 120.0], DEFAULT_LAMBDA).unwrap();
            assert!((back.q - &model.q).amax() < 1e-14);
            assert!((back.h - &model.h).amax() < 1e-15);
            assert!((back.z - &model.z).amax() < 1e-14);
            assert!((lambda - DEFAULT_LAMBDA).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_dominates_truth_and_start() {
        let maturities = [3, 12, 24, 60, 120, 360];
        let model = truth(&maturities);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (panel, factors) = simulate_panel(&model, business_days(600), maturities.to_vec(), &mut rng).unwrap();
        let init = two_step(&panel, DEFAULT_LAMBDA).unwrap();
        let fit = mle_fit(&panel, &init, &MleOptions::default()).unwrap();

        let mut reference = model.clone();
        reference.a0 = init.factors.mean();
        reference.p0 = init.var.q.clone();
        let true_ll = loglik_fast(&reference, &panel).unwrap();
        assert!(fit.loglik >= fit.init_loglik);
        assert!(fit.loglik >= true_ll - 1e-6, "{} < {}", fit.loglik, true_ll);
        for (est, tru) in fit.model.h.iter().zip(model.h.iter()) {
            assert!((est / tru - 1.0).abs() < 0.35, "{est} vs {tru}");
        }

        let smoothed = fit.smoother.factors(&panel);
        for j in 0..3 {
            let rho = correlation(smoothed.values.column(j).as_slice(), factors.column(j).as_slice());
            assert!(rho > 0.9, "factor {j}: {rho}");
        }
    }

    #[test]
    fn reported_fit_is_the_better_start() {
        let maturities = [3, 12, 24, 60, 120, 360];
        let model = truth(&maturities);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (panel, _) = simulate_panel(&model, business_days(300), maturities.to_vec(), &mut rng).unwrap();
        let init = two_step(&panel, DEFAULT_LAMBDA).unwrap();
        let opts = MleOptions::default();
        let informed = two_step_variance_model(&panel, &init, DEFAULT_LAMBDA).unwrap();
        assert!(informed.h.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(informed.q, init.var.q);

        let unit = fit_from(&panel, initial_model(&panel, &init, DEFAULT_LAMBDA).unwrap(), MleStart::UnitVariances, &opts).unwrap();
        let other = fit_from(&panel, informed, MleStart::TwoStepVariances, &opts).unwrap();
        let fit = mle_fit(&panel, &init, &opts).unwrap();
        assert_eq!(fit.loglik, unit.loglik.max(other.loglik));
        assert_eq!(fit.init_loglik, unit.init_loglik);
        let expected = if other.loglik > unit.loglik { MleStart::TwoStepVariances } else { MleStart::UnitVariances };
        assert_eq!(fit.start, expected);
    }

    #[test]
    fn lambda_can_be_estimated() {
        let maturities = [3, 6, 12, 24, 60, 120, 240, 360];
        let model = truth(&maturities);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (panel, _) = simulate_panel(&model, business_days(300), maturities.to_vec(), &mut rng).unwrap();
        let init = two_step(&panel, DEFAULT_LAMBDA).unwrap();
        let opts = MleOptions { lambda: 0.05, estimate_lambda: true, ..Default::default() };
        let fit = mle_fit(&panel, &init, &opts).unwrap();
        assert!(fit.loglik >= fit.init_loglik);
        assert!((fit.lambda - DEFAULT_LAMBDA).abs() < 0.02, "{}", fit.lambda);
    }
}
