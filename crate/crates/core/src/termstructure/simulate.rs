//! Gaussian simulation from a VAR(1) or a full state-space model.

use alloc::vec::Vec;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kalman::StateSpaceModel;
use super::YieldPanel;
use crate::error::{Error, Result};

fn lower_factor(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidConfig(alloc::format!("{what} is not positive definite")))
}

fn normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `T × k` draws of `f_t = μ + A(f_{t−1} − μ) + η_t`, started at `μ` after a
/// 200-step burn-in.
pub fn simulate_var1<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    mu: &DVector<f64>,
    q: &DMatrix<f64>,
    t: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let k = mu.len();
    let chol = lower_factor(q, "VAR innovation covariance")?;
    let mut x = DVector::zeros(k);
    for _ in 0..200 {
        x = a * &x + &chol * normal_vector(k, rng);
    }
    let mut out = DMatrix::zeros(t, k);
    for i in 0..t {
        x = a * &x + &chol * normal_vector(k, rng);
        out.set_row(i, &(&x + mu).transpose());
    }
    Ok(out)
}

/// Panel and true factor path drawn from `model`. The first state is drawn
/// from `N(a0, P0)`; the measurement matrix `model.z` must line up with
/// `maturities`.
pub fn simulate_panel<R: Rng + ?Sized>(
    model: &StateSpaceModel,
    dates: Vec<NaiveDate>,
    maturities: Vec<u32>,
    rng: &mut R,
) -> Result<(YieldPanel, DMatrix<f64>)> {
    model.validate()?;
    let (n, m) = model.z.shape();
    let t = dates.len();
    let p0 = lower_factor(&model.p0, "initial state covariance")?;
    let q = lower_factor(&model.q, "state covariance")?;
    let rq = &model.r * q;
    let mut x = &model.a0 - &model.mu + p0 * normal_vector(m, rng);
    let mut yields = DMatrix::zeros(t, n);
    let mut factors = DMatrix::zeros(t, m);
    for i in 0..t {
        let f = &x + &model.mu;
        let noise = DVector::from_fn(n, |j, _| libm::sqrt(model.h[j]) * rng.sample::<f64, _>(StandardNormal));
        yields.set_row(i, &(&model.z * &f + noise).transpose());
        factors.set_row(i, &f.transpose());
        x = &model.transition * &x + &rq * normal_vector(rq.ncols(), rng);
    }
    Ok((YieldPanel::new(dates, maturities, yields)?, factors))
}
