use std::path::Path;

use fedtopics_core::econometrics::{
    build_daily, event_study, stars, theme_regression, DailyDataset, DateRange, EventSpec, Factor, OlsFit, SpecConfig,
    StatementWeights,
};
use fedtopics_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{read_factors, read_theme_weights};
use crate::artifact::{fmt_f64, StageWriter, Table};
use crate::config::{PipelineConfig, TopicModel};
use crate::error::{PipelineError, Result};
use crate::ingest::read_controls;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub name: String,
    pub reason: String,
}

/// One fitted specification as stored in `regress/estimates.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub table: String,
    pub dependent: String,
    pub n: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub coefficients: Vec<Coefficient>,
    pub dropped: Vec<Dropped>,
}

impl RegressionResult {
    fn new(table: &str, dependent: Factor, fit: &OlsFit) -> Self {
        RegressionResult {
            table: table.to_string(),
            dependent: dependent.name().to_string(),
            n: fit.n,
            r_squared: fit.r_squared,
            adj_r_squared: fit.adj_r_squared,
            coefficients: (0..fit.names.len())
                .map(|i| Coefficient {
                    name: fit.names[i].clone(),
                    estimate: fit.coefficients[i],
                    std_error: fit.std_errors[i],
                    t_stat: fit.t_stats[i],
                    stars: stars(fit.t_stats[i]).to_string(),
                })
                .collect(),
            dropped: fit.dropped.iter().map(|d| Dropped { name: d.name.clone(), reason: d.reason.clone() }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub table: String,
    pub dependent: String,
    pub reason: String,
}

enum Job {
    Event(EventSpec),
    Theme { spec: SpecConfig, lda: bool },
}

/// Theme subsets to regress on: every theme, or every pair when the weights
/// sum to one.
fn theme_sets(k: usize, simplex: bool) -> Vec<(String, Vec<usize>)> {
    if !simplex || k < 3 {
        return vec![(String::new(), (0..k).collect())];
    }
    let mut sets = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            sets.push((format!("_pair_{}_{}", i + 1, j + 1), vec![i, j]));
        }
    }
    sets
}

fn jobs(cfg: &PipelineConfig, k: usize, with_lda: bool, crisis: DateRange) -> Result<Vec<(String, Factor, Job)>> {
    let r = &cfg.regress;
    let mut out = Vec::new();
    for dep in Factor::ALL {
        for (table, with_crisis) in [("event_study", false), ("event_study_crisis", true)] {
            let spec = EventSpec { dependent: dep, with_crisis, include_controls: r.event_controls };
            out.push((table.to_string(), dep, Job::Event(spec)));
        }
    }
    let simplex = cfg.topics.model == TopicModel::Lda;
    let theme = |themes: &[usize], dep: Factor, crisis_terms: bool, sample: Option<DateRange>| SpecConfig {
        themes: themes.to_vec(),
        include_crisis: crisis_terms,
        include_interactions: crisis_terms,
        sample,
        crisis_window: crisis,
        ..SpecConfig::baseline(dep, k)
    };
    for (suffix, themes) in theme_sets(k, simplex) {
        for dep in Factor::ALL {
            for (family, crisis_terms) in [("themes_baseline", false), ("themes_crisis", true)] {
                let spec = theme(&themes, dep, crisis_terms, None);
                out.push((format!("{family}{suffix}"), dep, Job::Theme { spec, lda: false }));
            }
            for s in &r.subsamples {
                let range = DateRange::new(s.start, s.end)?;
                let spec = theme(&themes, dep, s.crisis, Some(range));
                out.push((format!("subsample_{}{suffix}", s.name), dep, Job::Theme { spec, lda: false }));
            }
        }
    }
    if with_lda && !simplex {
        for (suffix, themes) in theme_sets(k, true) {
            for dep in Factor::ALL {
                let table = format!("lda{suffix}");
                out.push((table.clone(), dep, Job::Theme { spec: theme(&themes, dep, false, None), lda: true }));
                let spec = theme(&themes, dep, true, None);
                out.push((format!("{table}_crisis"), dep, Job::Theme { spec, lda: true }));
            }
        }
    }
    Ok(out)
}

/// Specifications the sample cannot support are reported, not fatal.
fn skippable(e: &PipelineError) -> bool {
    matches!(
        e,
        PipelineError::Core(
            CoreError::EmptySample | CoreError::ZeroVariance(_) | CoreError::AllColumnsDropped | CoreError::InvalidConfig(_)
        )
    )
}

pub(super) fn run(cfg: &PipelineConfig, out: &Path, w: &mut StageWriter) -> Result<()> {
    let source = cfg.curve.factor_source.source();
    let factors = read_factors(&out.join("curve/factors.csv"), source)?;
    let controls = read_controls(&cfg.paths.controls)?;
    let crisis = cfg.regress.crisis_window()?;
    let last = *factors.dates.last().expect("non-empty factor series");

    let mut excluded = Table::new(["date", "reason"]);
    let mut in_range = |weights: Vec<StatementWeights>| -> Vec<StatementWeights> {
        let (keep, late): (Vec<_>, Vec<_>) = weights.into_iter().partition(|s| s.date <= last);
        for s in late {
            log::warn!("statement of {} is after the last factor date {last}; left out", s.date);
            excluded.push(vec![s.date.to_string(), "statement after the last factor date".into()]);
        }
        keep
    };
    let statements = in_range(read_theme_weights(&out.join("topics/theme_weights.csv"))?);
    let lda_path = out.join("topics/lda_theta.csv");
    let lda_statements = if lda_path.exists() { Some(read_theme_weights(&lda_path)?) } else { None };
    let lda_statements = lda_statements.map(|s| s.into_iter().filter(|s| s.date <= last).collect::<Vec<_>>());

    let ds = build_daily(&factors, &statements, &controls, crisis)?;
    let lda_ds: Option<DailyDataset> =
        lda_statements.as_ref().map(|s| build_daily(&factors, s, &controls, crisis)).transpose()?;
    for row in &ds.excluded {
        excluded.push(vec![row.date.to_string(), row.reason.to_string()]);
    }
    let mut event_days = Table::new(["statement", "trading_day", "shifted"]);
    for m in &ds.mappings {
        if m.statement != m.trading_day {
            log::info!("statement of {} is attributed to trading day {}", m.statement, m.trading_day);
        }
        event_days.push(vec![m.statement.to_string(), m.trading_day.to_string(), (m.statement != m.trading_day).to_string()]);
    }

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (table, dep, job) in jobs(cfg, ds.n_themes(), lda_ds.is_some(), crisis)? {
        let fit = match &job {
            Job::Event(spec) => event_study(&ds, *spec).map_err(PipelineError::from),
            Job::Theme { spec, lda } => {
                let data = if *lda { lda_ds.as_ref().expect("lda dataset") } else { &ds };
                theme_regression(data, spec).map_err(PipelineError::from)
            }
        };
        match fit {
            Ok(fit) => results.push(RegressionResult::new(&table, dep, &fit)),
            Err(e) if skippable(&e) => {
                log::warn!("{table} ({}): not estimable: {e}", dep.name());
                skipped.push(Skipped { table, dependent: dep.name().to_string(), reason: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }

    let mut est = Table::new(["table", "dependent", "regressor", "estimate", "std_error", "t_stat", "stars"]);
    let mut fits = Table::new(["table", "dependent", "n", "r_squared", "adj_r_squared", "dropped"]);
    for r in &results {
        for c in &r.coefficients {
            est.push(vec![
                r.table.clone(),
                r.dependent.clone(),
                c.name.clone(),
                fmt_f64(c.estimate),
                fmt_f64(c.std_error),
                fmt_f64(c.t_stat),
                c.stars.clone(),
            ]);
        }
        let dropped = r.dropped.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join(";");
        fits.push(vec![
            r.table.clone(),
            r.dependent.clone(),
            r.n.to_string(),
            fmt_f64(r.r_squared),
            fmt_f64(r.adj_r_squared),
            dropped,
        ]);
    }
    let mut skipped_t = Table::new(["table", "dependent", "reason"]);
    for s in &skipped {
        skipped_t.push(vec![s.table.clone(), s.dependent.clone(), s.reason.clone()]);
    }
    w.table("regress/estimates.csv", &est)?;
    w.table("regress/fits.csv", &fits)?;
    w.table("regress/skipped.csv", &skipped_t)?;
    w.table("regress/event_days.csv", &event_days)?;
    w.table("regress/excluded_rows.csv", &excluded)?;
    w.json(
        "regress/estimates.json",
        json!({
            "factor_source": source.as_str(),
            "observations": ds.len(),
            "event_days": ds.event.iter().filter(|&&e| e == 1.0).count(),
            "crisis_window": { "start": crisis.start.to_string(), "end": crisis.end.to_string() },
            "results": results,
            "skipped": skipped,
        }),
    )
}
