//! Per-date Nelson-Siegel least squares followed by a VAR(1) on the factors.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::loadings::{ns_loadings, NsLoadings};
use super::{symmetrize, FactorSeries, FactorSource, YieldPanel};
use crate::error::{Error, Result};

/// Relative pivot threshold for rank checks on small least-squares systems.
const RANK_TOL: f64 = 1e-10;

/// Least-squares solver for one loading matrix, factored once.
#[derive(Debug, Clone)]
pub struct CrossSection {
    loadings: NsLoadings,
    pinv: DMatrix<f64>,
}

impl CrossSection {
    pub fn new(loadings: NsLoadings) -> Result<Self> {
        let pinv = pseudo_inverse(&loadings.z, "Nelson-Siegel loadings")?;
        Ok(CrossSection { loadings, pinv })
    }

    pub fn loadings(&self) -> &NsLoadings {
        &self.loadings
    }

    /// Factors for one date. Cells that are `NaN` are left out of the fit.
    pub fn fit(&self, y: &[f64]) -> Result<DVector<f64>> {
        let z = &self.loadings.z;
        if y.len() != z.nrows() {
            return Err(Error::DimensionMismatch {
                context: "cross-section",
                expected: (z.nrows(), 1),
                found: (y.len(), 1),
            });
        }
        if y.iter().all(|v| !v.is_nan()) {
            return Ok(&self.pinv * DVector::from_column_slice(y));
        }
        let rows: Vec<usize> = (0..y.len()).filter(|&i| !y[i].is_nan()).collect();
        if rows.len() < z.ncols() {
            return Err(Error::RankDeficient("cross-section with too few observed maturities"));
        }
        let zs = z.select_rows(rows.iter());
        let ys = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
        Ok(pseudo_inverse(&zs, "Nelson-Siegel loadings")? * ys)
    }
}

/// `(XᵀX)⁻¹Xᵀ` through a thin QR, with a relative pivot check.
fn pseudo_inverse(x: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient(what));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if !(scale > 0.0) || r.diagonal().iter().any(|d| d.abs() <= RANK_TOL * scale) {
        return Err(Error::RankDeficient(what));
    }
    let rinv = r.try_inverse().ok_or(Error::RankDeficient(what))?;
    Ok(rinv * qr.q().transpose())
}

/// One-off cross-sectional fit.
pub fn fit_cross_section(y: &[f64], loadings: &NsLoadings) -> Result<DVector<f64>> {
    CrossSection::new(loadings.clone())?.fit(y)
}

/// `(f_t − μ) = A (f_{t−1} − μ) + η_t`, estimated by OLS without intercept on
/// the demeaned series.
#[derive(Debug, Clone, PartialEq)]
pub struct Var1Fit {
    pub mu: DVector<f64>,
    pub a: DMatrix<f64>,
    /// Residual covariance with a degrees-of-freedom correction
    /// (`T − 1` equations, `k` regressors each).
    pub q: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

impl Var1Fit {
    /// Largest eigenvalue modulus of `A`; below 1 means stationary.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

pub(crate) fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0, f64::max)
}

/// VAR(1) on the rows of `series` (`T × k`).
pub fn var1(series: &DMatrix<f64>) -> Result<Var1Fit> {
    let (t, k) = series.shape();
    if t < k + 2 {
        return Err(Error::InvalidConfig(format!("VAR(1) needs at least {} dates, got {t}", k + 2)));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("VAR(1) input".into()));
    }
    let mu = series.row_mean().transpose();
    let mut x = series.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
        let spread = col.amax();
        if spread <= 1e-12 * mu[j].abs().max(1.0) {
            return Err(Error::ZeroVariance(format!("factor {j} is constant")));
        }
    }
    let lagged = x.rows(0, t - 1).into_owned();
    let current = x.rows(1, t - 1).into_owned();
    let coef = pseudo_inverse(&lagged, "VAR(1) regressors")? * &current;
    let a = coef.transpose();
    let residuals = &current - &lagged * &coef;
    let mut q = residuals.transpose() * &residuals / (t - 1 - k) as f64;
    symmetrize(&mut q);
    Ok(Var1Fit { mu, a, q, residuals })
}

#[derive(Debug, Clone)]
pub struct TwoStepFit {
    pub cross_section: CrossSection,
    pub factors: FactorSeries,
    pub var: Var1Fit,
}

/// Nelson-Siegel OLS at each date, then VAR(1) on the resulting factors.
pub fn two_step(panel: &YieldPanel, lambda: f64) -> Result<TwoStepFit> {
    if panel.len() < 5 {
        return Err(Error::InvalidConfig(format!("two-step needs at least 5 dates, got {}", panel.len())));
    }
    let cs = CrossSection::new(ns_loadings(&panel.maturities_months(), lambda)?)?;
    let mut values = DMatrix::zeros(panel.len(), 3);
    let mut row = Vec::with_capacity(panel.maturities.len());
    for t in 0..panel.len() {
        row.clear();
        row.extend(panel.yields.row(t).iter().copied());
        values.set_row(t, &cs.fit(&row)?.transpose());
    }
    let var = var1(&values)?;
    let factors = FactorSeries { dates: panel.dates.clone(), values, source: FactorSource::TwoStepOls };
    Ok(TwoStepFit { cross_section: cs, factors, var })
}
