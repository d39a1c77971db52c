//! Yield-curve factors: Nelson-Siegel cross-sections, the two-step
//! OLS + VAR(1) estimator, and the state-space model with Kalman filter,
//! smoother and maximum likelihood.
//!
//! Units follow the usual Diebold-Li convention: maturities in months, yields
//! in percent per annum, `λ` per month.

mod kalman;
mod loadings;
mod mle;
mod simulate;
mod twostep;

use alloc::format;
use alloc::vec::Vec;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use kalman::{
    kalman_filter, kalman_smooth, loglik, loglik_fast, KalmanOutput, SmootherOutput, StateSpaceModel,
};
pub use loadings::{
    curvature_argmax, curvature_loading, empirical_proxies, ns_loadings, slope_loading, NsLoadings, Proxies,
    DEFAULT_LAMBDA,
};
pub use mle::{initial_model, mle_fit, two_step_variance_model, MleFit, MleOptions, MleStart};
pub use simulate::{simulate_panel, simulate_var1};
pub use twostep::{fit_cross_section, two_step, var1, CrossSection, TwoStepFit, Var1Fit};

/// Daily yields: `dates × maturities`, percent per annum.
///
/// Missing cells are `NaN` and only allowed through
/// [`YieldPanel::with_missing`]; the filter then drops those measurement rows
/// for the affected dates.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldPanel {
    pub dates: Vec<NaiveDate>,
    pub maturities: Vec<u32>,
    pub yields: DMatrix<f64>,
}

impl YieldPanel {
    /// Complete panel; any missing cell is an error.
    pub fn new(dates: Vec<NaiveDate>, maturities: Vec<u32>, yields: DMatrix<f64>) -> Result<Self> {
        let panel = Self::with_missing(dates, maturities, yields)?;
        if let Some(i) = panel.yields.iter().position(|v| v.is_nan()) {
            let t = panel.yields.nrows();
            return Err(Error::MissingObservation { date: i % t, maturity: i / t });
        }
        Ok(panel)
    }

    /// Panel that may contain `NaN` cells.
    pub fn with_missing(dates: Vec<NaiveDate>, maturities: Vec<u32>, yields: DMatrix<f64>) -> Result<Self> {
        if yields.shape() != (dates.len(), maturities.len()) {
            return Err(Error::DimensionMismatch {
                context: "yield panel",
                expected: (dates.len(), maturities.len()),
                found: yields.shape(),
            });
        }
        if maturities.iter().any(|&m| m == 0) || maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("maturities must be positive and strictly increasing".into()));
        }
        for w in dates.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateDate(w[1], "yield panel"));
            }
            if w[1] < w[0] {
                return Err(Error::InvalidConfig(format!("yield panel dates out of order at {}", w[1])));
            }
        }
        if yields.iter().any(|v| v.is_infinite()) {
            return Err(Error::NonFinite("yield panel".into()));
        }
        Ok(YieldPanel { dates, maturities, yields })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn maturity_index(&self, months: u32) -> Option<usize> {
        self.maturities.binary_search(&months).ok()
    }

    pub fn maturities_months(&self) -> Vec<f64> {
        self.maturities.iter().map(|&m| f64::from(m)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.yields.iter().any(|v| v.is_nan())
    }

    pub fn observation(&self, t: usize) -> DVector<f64> {
        self.yields.row(t).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSource {
    TwoStepOls,
    Filtered,
    Smoothed,
}

impl FactorSource {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorSource::TwoStepOls => "two-step-ols",
            FactorSource::Filtered => "filtered",
            FactorSource::Smoothed => "smoothed",
        }
    }
}

/// Level, slope and curvature per date (columns 0, 1, 2 of `values`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSeries {
    pub dates: Vec<NaiveDate>,
    pub values: DMatrix<f64>,
    pub source: FactorSource,
}

impl FactorSeries {
    pub fn level(&self) -> Vec<f64> {
        self.values.column(0).iter().copied().collect()
    }

    pub fn slope(&self) -> Vec<f64> {
        self.values.column(1).iter().copied().collect()
    }

    pub fn curvature(&self) -> Vec<f64> {
        self.values.column(2).iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Column means.
    pub fn mean(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn business_days(n: usize) -> Vec<NaiveDate> {
        let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            use chrono::Datelike;
            if d.weekday().num_days_from_monday() < 5 {
                out.push(d);
            }
            d = d.succ_opt().unwrap();
        }
        out
    }

    pub(crate) fn panel_from_rows(maturities: &[u32], rows: &[&[f64]]) -> YieldPanel {
        let y = DMatrix::from_fn(rows.len(), maturities.len(), |i, j| rows[i][j]);
        YieldPanel::new(business_days(rows.len()), maturities.to_vec(), y).unwrap()
    }

    #[test]
    fn panel_validation() {
        let dates = business_days(2);
        let y = DMatrix::from_element(2, 2, 1.0);
        assert!(YieldPanel::new(dates.clone(), vec![12, 3], y.clone()).is_err());
        let dup = vec![dates[0], dates[0]];
        assert_eq!(
            YieldPanel::new(dup, vec![3, 12], y.clone()),
            Err(Error::DuplicateDate(dates[0], "yield panel"))
        );
        let mut holes = y.clone();
        holes[(1, 0)] = f64::NAN;
        assert_eq!(
            YieldPanel::new(dates.clone(), vec![3, 12], holes.clone()),
            Err(Error::MissingObservation { date: 1, maturity: 0 })
        );
        assert!(YieldPanel::with_missing(dates, vec![3, 12], holes).unwrap().has_missing());
    }
}
