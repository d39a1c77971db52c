//! Daily event datasets and the OLS specifications run on them.
//!
//! A [`DailyDataset`] lines up absolute one-day factor changes, theme-weight
//! changes on statement days, an event dummy, a crisis dummy and three
//! controls. [`ols`] drops collinear regressors (later columns first) and
//! records what it dropped.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::termstructure::FactorSeries;

/// Relative tolerance under which a column's component orthogonal to the
/// earlier kept columns counts as zero.
pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Inclusive date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidConfig(format!("date range ends ({end}) before it starts ({start})")));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    /// The financial-crisis window, 2007-02-27 through 2011-04-13.
    pub fn crisis() -> Self {
        DateRange {
            start: NaiveDate::from_ymd_opt(2007, 2, 27).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2011, 4, 13).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Factor {
    Level,
    Slope,
    Curvature,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Level, Factor::Slope, Factor::Curvature];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::Level => "level",
            Factor::Slope => "slope",
            Factor::Curvature => "curvature",
        }
    }
}

/// Theme weights of one statement, dated by release.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementWeights {
    pub date: NaiveDate,
    pub weights: Vec<f64>,
}

pub const CONTROL_NAMES: [&str; 3] = ["term_spread", "credit_spread", "vix"];

/// Daily controls keyed by date: term spread, credit spread, VIX.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Controls {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<[f64; 3]>,
}

impl Controls {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<[f64; 3]>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "controls",
                expected: (dates.len(), 3),
                found: (values.len(), 3),
            });
        }
        for w in dates.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateDate(w[0], "controls"));
            }
            if w[1] < w[0] {
                return Err(Error::InvalidConfig(format!("controls dates out of order at {}", w[1])));
            }
        }
        Ok(Controls { dates, values })
    }

    /// Complete control row for `date`, if any.
    pub fn get(&self, date: NaiveDate) -> Option<[f64; 3]> {
        let i = self.dates.binary_search(&date).ok()?;
        let row = self.values[i];
        row.iter().all(|v| v.is_finite()).then_some(row)
    }
}

/// Rows dropped while building a dataset, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcludedRow {
    pub date: NaiveDate,
    pub reason: &'static str,
}

/// A statement and the trading day it is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventMapping {
    pub statement: NaiveDate,
    pub trading_day: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyDataset {
    pub dates: Vec<NaiveDate>,
    /// `|Δ level|, |Δ slope|, |Δ curvature|` per row.
    pub abs_change: DMatrix<f64>,
    /// `ΔTheme_k`, nonzero only on event days.
    pub dtheme: DMatrix<f64>,
    pub event: Vec<f64>,
    pub crisis: Vec<f64>,
    /// Term spread, credit spread, VIX per row.
    pub controls: DMatrix<f64>,
    pub excluded: Vec<ExcludedRow>,
    pub mappings: Vec<EventMapping>,
}

impl DailyDataset {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_themes(&self) -> usize {
        self.dtheme.ncols()
    }

    pub fn dependent(&self, factor: Factor) -> Vec<f64> {
        self.abs_change.column(factor.index()).iter().copied().collect()
    }

    /// Statement mappings that moved off the release date.
    pub fn shifted_mappings(&self) -> impl Iterator<Item = &EventMapping> {
        self.mappings.iter().filter(|m| m.statement != m.trading_day)
    }
}

/// Aligns factor changes, theme changes and controls on the factor calendar.
///
/// Each statement is attributed to the first calendar date on or after its
/// release. `ΔTheme` on that day is the statement's weights minus the
/// previous statement's; the first statement has no predecessor and gets 0.
/// Statements released before the calendar starts only serve as
/// predecessors. The first calendar day has no `|Δ|` and is excluded, as are
/// days without a complete control row.
pub fn build_daily(
    factors: &FactorSeries,
    statements: &[StatementWeights],
    controls: &Controls,
    crisis: DateRange,
) -> Result<DailyDataset> {
    let dates = &factors.dates;
    if dates.len() < 2 {
        return Err(Error::EmptySample);
    }
    if factors.values.ncols() != 3 || factors.values.nrows() != dates.len() {
        return Err(Error::DimensionMismatch {
            context: "factor series",
            expected: (dates.len(), 3),
            found: factors.values.shape(),
        });
    }
    let k = statements.first().map_or(0, |s| s.weights.len());
    if let Some(bad) = statements.iter().find(|s| s.weights.len() != k) {
        return Err(Error::DimensionMismatch {
            context: "statement theme weights",
            expected: (1, k),
            found: (1, bad.weights.len()),
        });
    }
    for w in statements.windows(2) {
        if w[1].date == w[0].date {
            return Err(Error::DuplicateDate(w[0].date, "statements"));
        }
        if w[1].date < w[0].date {
            return Err(Error::InvalidConfig(format!("statements out of order at {}", w[1].date)));
        }
    }

    // Calendar row -> (statement index) for event days.
    let mut event_at: Vec<Option<usize>> = vec![None; dates.len()];
    let mut mappings = Vec::new();
    for (s, stmt) in statements.iter().enumerate() {
        if stmt.date < dates[0] {
            continue;
        }
        let row = dates.partition_point(|&d| d < stmt.date);
        if row == dates.len() {
            return Err(Error::UnmatchedStatementDate(stmt.date));
        }
        if event_at[row].is_some() {
            return Err(Error::DuplicateDate(dates[row], "statement trading days"));
        }
        event_at[row] = Some(s);
        mappings.push(EventMapping { statement: stmt.date, trading_day: dates[row] });
    }

    let mut keep = Vec::new();
    let mut excluded = vec![ExcludedRow { date: dates[0], reason: "first day has no change" }];
    let mut control_rows = Vec::new();
    for t in 1..dates.len() {
        match controls.get(dates[t]) {
            Some(c) => {
                keep.push(t);
                control_rows.push(c);
            }
            None => excluded.push(ExcludedRow { date: dates[t], reason: "missing controls" }),
        }
    }

    let n = keep.len();
    let values = &factors.values;
    let abs_change = DMatrix::from_fn(n, 3, |i, j| (values[(keep[i], j)] - values[(keep[i] - 1, j)]).abs());
    if abs_change.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("factor changes".into()));
    }
    let mut dtheme = DMatrix::zeros(n, k);
    let mut event = vec![0.0; n];
    for (i, &t) in keep.iter().enumerate() {
        if let Some(s) = event_at[t] {
            event[i] = 1.0;
            if s > 0 {
                for j in 0..k {
                    dtheme[(i, j)] = statements[s].weights[j] - statements[s - 1].weights[j];
                }
            }
        }
    }
    let crisis_dummy = keep.iter().map(|&t| f64::from(u8::from(crisis.contains(dates[t])))).collect();
    Ok(DailyDataset {
        dates: keep.iter().map(|&t| dates[t]).collect(),
        abs_change,
        dtheme,
        event,
        crisis: crisis_dummy,
        controls: DMatrix::from_fn(n, 3, |i, j| control_rows[i][j]),
        excluded,
        mappings,
    })
}

/// Rows of `ds` dated inside `range`.
pub fn subsample(ds: &DailyDataset, range: DateRange) -> Result<DailyDataset> {
    let rows: Vec<usize> = (0..ds.len()).filter(|&i| range.contains(ds.dates[i])).collect();
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Ok(DailyDataset {
        dates: rows.iter().map(|&i| ds.dates[i]).collect(),
        abs_change: ds.abs_change.select_rows(rows.iter()),
        dtheme: ds.dtheme.select_rows(rows.iter()),
        event: pick(&ds.event),
        crisis: pick(&ds.crisis),
        controls: ds.controls.select_rows(rows.iter()),
        excluded: ds.excluded.clone(),
        mappings: ds.mappings.iter().filter(|m| range.contains(m.trading_day)).copied().collect(),
    })
}

/// A regressor removed before fitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Retained regressors, in the order of the estimates below.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
    pub dropped: Vec<DroppedColumn>,
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.std_errors[i])
    }

    /// Reorders the estimates to follow `order`; names not in `order` keep
    /// their relative position at the end.
    fn reorder(&mut self, order: &[String]) {
        let mut idx: Vec<usize> = (0..self.names.len()).collect();
        let rank = |name: &String| order.iter().position(|o| o == name).unwrap_or(usize::MAX);
        idx.sort_by_key(|&i| rank(&self.names[i]));
        let take = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        self.coefficients = take(&self.coefficients);
        self.std_errors = take(&self.std_errors);
        self.t_stats = take(&self.t_stats);
        self.names = idx.iter().map(|&i| self.names[i].clone()).collect();
    }
}

/// Significance marker from two-sided normal critical values at 1%, 5%, 10%.
pub fn stars(t: f64) -> &'static str {
    let a = t.abs();
    if a >= 2.576 {
        "***"
    } else if a >= 1.960 {
        "**"
    } else if a >= 1.645 {
        "*"
    } else {
        ""
    }
}

/// Least squares of `y` on the columns of `x` with classical standard errors.
///
/// Columns are screened in order with modified Gram-Schmidt: a column whose
/// component orthogonal to the columns kept so far is below
/// [`COLLINEARITY_TOL`] times its own norm is dropped and recorded. The
/// survivors are fitted by QR. R² is centred; the adjusted R² counts
/// regressors other than a constant column.
pub fn ols(y: &[f64], x: &DMatrix<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(Error::DimensionMismatch { context: "ols", expected: (n, p), found: (y.len(), names.len()) });
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression data".into()));
    }
    let mean = y.iter().sum::<f64>() / n.max(1) as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if n == 0 || tss <= 1e-300 || y.iter().all(|&v| v == y[0]) {
        return Err(Error::ZeroVariance("dependent variable".into()));
    }

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut resid = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&resid);
                resid.axpy(-c, q, 1.0);
            }
        }
        let rn = resid.norm();
        if norm == 0.0 || rn <= COLLINEARITY_TOL * norm {
            let reason = if norm == 0.0 {
                "all zero".to_string()
            } else {
                let earlier: Vec<&str> = kept.iter().map(|&i: &usize| names[i].as_str()).collect();
                format!("perfectly collinear with {}", earlier.join(", "))
            };
            dropped.push(DroppedColumn { name: names[j].clone(), reason });
        } else {
            basis.push(resid / rn);
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::AllColumnsDropped);
    }
    let k = kept.len();
    if n <= k {
        return Err(Error::InvalidConfig(format!("ols needs more than {k} observations, got {n}")));
    }

    let xk = x.select_columns(kept.iter());
    let yv = DVector::from_column_slice(y);
    let qr = xk.clone().qr();
    let r = qr.r();
    let r_inv = r.try_inverse().ok_or(Error::RankDeficient("retained regressors"))?;
    let beta = &r_inv * (qr.q().transpose() * &yv);
    let resid = &yv - &xk * &beta;
    let ssr = resid.norm_squared();
    let s2 = ssr / (n - k) as f64;
    let cov_diag = (&r_inv * r_inv.transpose()).diagonal();
    let std_errors: Vec<f64> = cov_diag.iter().map(|v| libm::sqrt(s2 * v)).collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let t_stats = coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect();

    let has_const = kept.iter().any(|&j| {
        let c = x.column(j);
        c[0] != 0.0 && c.iter().all(|&v| v == c[0])
    });
    let regressors = k - usize::from(has_const);
    let r2 = 1.0 - ssr / tss;
    let adj = if n > regressors + 1 {
        1.0 - (1.0 - r2) * (n - 1) as f64 / (n - regressors - 1) as f64
    } else {
        f64::NAN
    };

    Ok(OlsFit {
        names: kept.iter().map(|&j| names[j].clone()).collect(),
        coefficients,
        std_errors,
        t_stats,
        r_squared: r2,
        adj_r_squared: adj,
        n,
        dropped,
        residuals: resid.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventSpec {
    pub dependent: Factor,
    pub with_crisis: bool,
    pub include_controls: bool,
}

impl EventSpec {
    pub fn new(dependent: Factor) -> Self {
        EventSpec { dependent, with_crisis: false, include_controls: true }
    }
}

/// Regressor table under construction.
#[derive(Default)]
struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Design {
    fn push(&mut self, name: impl Into<String>, col: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(col);
    }

    fn controls(&mut self, ds: &DailyDataset) {
        for (j, name) in CONTROL_NAMES.iter().enumerate() {
            self.push(*name, ds.controls.column(j).iter().copied().collect());
        }
    }

    fn matrix(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, self.columns.len(), |i, j| self.columns[j][i])
    }
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `|Δ factor|` on a constant and the event dummy, optionally with the crisis
/// dummy and its interaction, and the controls.
pub fn event_study(ds: &DailyDataset, spec: EventSpec) -> Result<OlsFit> {
    let n = ds.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if ds.event.iter().all(|&e| e == ds.event[0]) {
        return Err(Error::ZeroVariance("event dummy has no variation in the sample".into()));
    }
    let mut d = Design::default();
    d.push("const", vec![1.0; n]);
    d.push("event", ds.event.clone());
    if spec.with_crisis {
        d.push("crisis", ds.crisis.clone());
        d.push("event_x_crisis", product(&ds.event, &ds.crisis));
    }
    if spec.include_controls {
        d.controls(ds);
    }
    ols(&ds.dependent(spec.dependent), &d.matrix(n), &d.names)
}

/// One theme-regression specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecConfig {
    pub dependent: Factor,
    /// Zero-based theme columns to include.
    pub themes: Vec<usize>,
    pub include_crisis: bool,
    pub include_interactions: bool,
    pub include_controls: bool,
    pub sample: Option<DateRange>,
    pub crisis_window: DateRange,
}

impl SpecConfig {
    /// Baseline: every theme, controls, no crisis terms, full sample.
    pub fn baseline(dependent: Factor, n_themes: usize) -> Self {
        SpecConfig {
            dependent,
            themes: (0..n_themes).collect(),
            include_crisis: false,
            include_interactions: false,
            include_controls: true,
            sample: None,
            crisis_window: DateRange::crisis(),
        }
    }

    /// Baseline plus the crisis dummy and theme × crisis interactions.
    pub fn with_crisis(dependent: Factor, n_themes: usize) -> Self {
        SpecConfig { include_crisis: true, include_interactions: true, ..Self::baseline(dependent, n_themes) }
    }
}

pub fn theme_name(k: usize) -> String {
    format!("dtheme_{}", k + 1)
}

pub fn interaction_name(k: usize) -> String {
    format!("dtheme_{}_x_crisis", k + 1)
}

/// `|Δ factor|` on theme changes, with optional crisis terms and controls.
///
/// Collinearity screening keeps, in priority order, the constant, the
/// controls, the crisis dummy, the interactions and then the theme main
/// effects, so a theme that only moves inside the crisis window loses its
/// main effect rather than its interaction, and among collinear themes the
/// later one goes. Estimates are reported as constant, themes, crisis,
/// interactions, controls.
pub fn theme_regression(ds: &DailyDataset, spec: &SpecConfig) -> Result<OlsFit> {
    if spec.crisis_window.end < spec.crisis_window.start {
        return Err(Error::InvalidConfig("crisis window is not well ordered".into()));
    }
    if let Some(&bad) = spec.themes.iter().find(|&&k| k >= ds.n_themes()) {
        return Err(Error::TopicOutOfRange { topic: bad, k: ds.n_themes() });
    }
    let sampled;
    let ds = match spec.sample {
        Some(range) => {
            sampled = subsample(ds, range)?;
            &sampled
        }
        None => ds,
    };
    let n = ds.len();
    let crisis: Vec<f64> = ds.dates.iter().map(|&d| f64::from(u8::from(spec.crisis_window.contains(d)))).collect();
    let theme_col = |k: usize| ds.dtheme.column(k).iter().copied().collect::<Vec<_>>();

    let mut d = Design::default();
    d.push("const", vec![1.0; n]);
    if spec.include_controls {
        d.controls(ds);
    }
    if spec.include_crisis {
        d.push("crisis", crisis.clone());
    }
    if spec.include_interactions {
        for &k in &spec.themes {
            d.push(interaction_name(k), product(&theme_col(k), &crisis));
        }
    }
    for &k in &spec.themes {
        d.push(theme_name(k), theme_col(k));
    }

    let mut order = vec!["const".to_string()];
    order.extend(spec.themes.iter().map(|&k| theme_name(k)));
    order.push("crisis".into());
    order.extend(spec.themes.iter().map(|&k| interaction_name(k)));
    order.extend(CONTROL_NAMES.iter().map(|s| s.to_string()));

    let mut fit = ols(&ds.dependent(spec.dependent), &d.matrix(n), &d.names)?;
    fit.reorder(&order);
    Ok(fit)
}
