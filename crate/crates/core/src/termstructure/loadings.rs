//! Nelson-Siegel factor loadings and model-free curve proxies.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::YieldPanel;
use crate::error::{Error, Result};

/// Decay rate (per month) that puts the curvature hump near 30 months.
pub const DEFAULT_LAMBDA: f64 = 0.0609;

/// Below this `λτ` the loadings switch to their Taylor series.
const SERIES_CUTOFF: f64 = 1e-8;

/// `(1 − e^{−x}) / x`, continuous at zero.
pub fn slope_loading(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -libm::expm1(-x) / x
    }
}

/// `(1 − e^{−x}) / x − e^{−x}`, continuous at zero.
pub fn curvature_loading(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        x / 2.0 - x * x / 3.0
    } else {
        slope_loading(x) - libm::exp(-x)
    }
}

/// Measurement loadings `Z` (N × 3) for a fixed decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NsLoadings {
    pub lambda: f64,
    pub maturities: Vec<f64>,
    pub z: DMatrix<f64>,
}

pub fn ns_loadings(maturities: &[f64], lambda: f64) -> Result<NsLoadings> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(bad) = maturities.iter().find(|&&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidConfig(format!("maturity must be positive, got {bad}")));
    }
    let z = DMatrix::from_fn(maturities.len(), 3, |i, j| {
        let x = lambda * maturities[i];
        match j {
            0 => 1.0,
            1 => slope_loading(x),
            _ => curvature_loading(x),
        }
    });
    Ok(NsLoadings { lambda, maturities: maturities.to_vec(), z })
}

/// Integer maturity in `1..=max_months` where the curvature loading peaks.
/// Ties go to the shorter maturity.
pub fn curvature_argmax(lambda: f64, max_months: u32) -> u32 {
    let mut best = (1, f64::NEG_INFINITY);
    for tau in 1..=max_months {
        let v = curvature_loading(lambda * f64::from(tau));
        if v > best.1 {
            best = (tau, v);
        }
    }
    best.0
}

/// Model-free level, slope and curvature read straight off the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Proxies {
    pub level: Vec<f64>,
    pub slope: Vec<f64>,
    pub curvature: Vec<f64>,
}

/// Level `y(360)`, slope `y(3) − y(360)`, curvature `2y(36) − y(3) − y(360)`.
pub fn empirical_proxies(panel: &YieldPanel) -> Result<Proxies> {
    let col = |m: u32| panel.maturity_index(m).ok_or(Error::MissingMaturity(m));
    let (short, mid, long) = (col(3)?, col(36)?, col(360)?);
    let y = &panel.yields;
    let rows = 0..panel.len();
    Ok(Proxies {
        level: rows.clone().map(|t| y[(t, long)]).collect(),
        slope: rows.clone().map(|t| y[(t, short)] - y[(t, long)]).collect(),
        curvature: rows.map(|t| 2.0 * y[(t, mid)] - y[(t, short)] - y[(t, long)]).collect(),
    })
}
