use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use fedtopics_core::econometrics::Factor;
use serde_json::{json, Value};

use super::{read_factors, read_theme_weights, RegressionResult};
use crate::artifact::{fmt_f64, json_f64, parse_f64, read_json, StageWriter, Table, HASH_COLUMN, STAGE_COLUMN};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};

/// A produced table without its provenance columns.
fn read_plain(path: &Path) -> Result<Table> {
    let mut t = Table::read(path)?;
    let keep: Vec<usize> = (0..t.header.len())
        .filter(|&j| t.header[j] != STAGE_COLUMN && t.header[j] != HASH_COLUMN)
        .collect();
    let pick = |row: &Vec<String>| keep.iter().map(|&j| row[j].clone()).collect::<Vec<_>>();
    t.header = pick(&t.header);
    t.rows = t.rows.iter().map(pick).collect();
    Ok(t)
}

fn coherence(out: &Path, w: &mut StageWriter) -> Result<()> {
    let selection = read_json(&out.join("select_k/selection.json"))?;
    let mut t = Table::new(["model", "k", "mean_coherence", "selected"]);
    for model in ["nmf", "lda"] {
        let path = out.join(format!("select_k/coherence_{model}.csv"));
        if !path.exists() {
            continue;
        }
        let best = selection["best_k_by_model"][model].as_u64().map(|k| k.to_string());
        let table = read_plain(&path)?;
        let (kc, mc) = (table.column("k"), table.column("mean_coherence"));
        let (Some(kc), Some(mc)) = (kc, mc) else {
            return Err(PipelineError::Parse { path, line: 1, column: "k".into(), message: "column missing".into() });
        };
        let mut seen = std::collections::BTreeSet::new();
        for row in &table.rows {
            let k: usize = row[kc].parse().unwrap_or(0);
            if seen.insert(k) {
                let selected = best.as_deref() == Some(row[kc].as_str());
                t.push(vec![model.into(), row[kc].clone(), row[mc].clone(), selected.to_string()]);
            }
        }
    }
    w.table("report/coherence_vs_k.csv", &t)?;
    w.table("report/coherence_comparison.csv", &read_plain(&out.join("select_k/comparison.csv"))?)
}

fn themes(cfg: &PipelineConfig, out: &Path, w: &mut StageWriter) -> Result<()> {
    let crisis = cfg.regress.crisis_window()?;
    let weights = read_theme_weights(&out.join("topics/theme_weights.csv"))?;
    let meta = read_json(&out.join("topics/themes.json"))?;
    let k = weights.first().map_or(0, |s| s.weights.len());
    let mut t = Table::new(
        std::iter::once("date".to_string())
            .chain((1..=k).map(|i| format!("theme_{i}")))
            .chain(std::iter::once("crisis".to_string())),
    );
    for s in &weights {
        let mut row = vec![s.date.to_string()];
        row.extend(s.weights.iter().map(|v| fmt_f64(*v)));
        row.push(u8::from(crisis.contains(s.date)).to_string());
        t.push(row);
    }
    w.table("report/theme_weights.csv", &t)?;
    w.json(
        "report/crisis_shading.json",
        json!({
            "label": "crisis",
            "start": crisis.start.to_string(),
            "end": crisis.end.to_string(),
            "theme_model": meta["model"],
            "k": k,
        }),
    )
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn factors_vs_proxies(cfg: &PipelineConfig, out: &Path, w: &mut StageWriter) -> Result<()> {
    let source = cfg.curve.factor_source.source();
    let factors = read_factors(&out.join("curve/factors.csv"), source)?;
    let proxies_path = out.join("curve/proxies.csv");
    let proxies = read_plain(&proxies_path)?;
    let mut by_date: BTreeMap<NaiveDate, [f64; 3]> = BTreeMap::new();
    for row in &proxies.rows {
        let date = NaiveDate::parse_from_str(&row[0], crate::ingest::DATE_FORMAT).map_err(|e| PipelineError::Parse {
            path: proxies_path.clone(),
            line: 0,
            column: "date".into(),
            message: e.to_string(),
        })?;
        let v = |j: usize| parse_f64(&row[j]).unwrap_or(f64::NAN);
        by_date.insert(date, [v(1), v(2), v(3)]);
    }

    let mut t = Table::new(["date", "factor", "estimate", "proxy"]);
    let mut pairs: [(Vec<f64>, Vec<f64>); 3] = Default::default();
    for f in Factor::ALL {
        for (i, date) in factors.dates.iter().enumerate() {
            let est = factors.values[(i, f.index())];
            let proxy = by_date.get(date).map_or(f64::NAN, |p| p[f.index()]);
            t.push(vec![date.to_string(), f.name().into(), fmt_f64(est), fmt_f64(proxy)]);
            if est.is_finite() && proxy.is_finite() {
                pairs[f.index()].0.push(est);
                pairs[f.index()].1.push(proxy);
            }
        }
    }
    w.table("report/factor_vs_proxy.csv", &t)?;

    let mut summary = Table::new(["factor", "source", "n", "correlation", "mean_estimate", "mean_proxy"]);
    for f in Factor::ALL {
        let (est, proxy) = &pairs[f.index()];
        let n = est.len();
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let rho = if n > 1 { correlation(est, proxy) } else { f64::NAN };
        summary.push(vec![
            f.name().into(),
            source.as_str().into(),
            n.to_string(),
            fmt_f64(rho),
            fmt_f64(mean(est)),
            fmt_f64(mean(proxy)),
        ]);
    }
    w.table("report/factor_proxy_summary.csv", &summary)
}

/// Results grouped by table, in first-seen order.
fn group(results: Vec<RegressionResult>) -> Vec<(String, Vec<RegressionResult>)> {
    let mut groups: Vec<(String, Vec<RegressionResult>)> = Vec::new();
    for r in results {
        match groups.iter_mut().find(|(name, _)| *name == r.table) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.table.clone(), vec![r])),
        }
    }
    groups
}

/// Regressor names across a table's columns, retained ones first.
fn row_names(fits: &[RegressionResult]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    let all = fits.iter().flat_map(|f| f.coefficients.iter().map(|c| &c.name).chain(f.dropped.iter().map(|d| &d.name)));
    for name in all {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    names
}

/// Four significant digits, switching to exponent form far from unity.
fn short(x: f64) -> String {
    if x == 0.0 || (1e-3..1e5).contains(&x.abs()) {
        format!("{x:.4}")
    } else {
        format!("{x:.3e}")
    }
}

fn render(groups: &[(String, Vec<RegressionResult>)], skipped: &Value) -> String {
    const NAME: usize = 22;
    const CELL: usize = 18;
    let mut s = String::new();
    for (table, fits) in groups {
        let _ = writeln!(s, "{table}");
        let _ = write!(s, "{:<NAME$}", "");
        for f in fits {
            let _ = write!(s, "{:>CELL$}", f.dependent);
        }
        s.push('\n');
        for name in row_names(fits) {
            let (mut est, mut se) = (format!("{name:<NAME$}"), format!("{:<NAME$}", ""));
            for f in fits {
                match f.coefficients.iter().find(|c| c.name == name) {
                    Some(c) => {
                        let _ = write!(est, "{:>CELL$}", format!("{}{}", short(c.estimate), c.stars));
                        let _ = write!(se, "{:>CELL$}", format!("({})", short(c.std_error)));
                    }
                    None => {
                        let mark = if f.dropped.iter().any(|d| d.name == name) { "dropped" } else { "" };
                        let _ = write!(est, "{mark:>CELL$}");
                        let _ = write!(se, "{:>CELL$}", "");
                    }
                }
            }
            let _ = writeln!(s, "{}", est.trim_end());
            let _ = writeln!(s, "{}", se.trim_end());
        }
        let _ = write!(s, "{:<NAME$}", "N");
        for f in fits {
            let _ = write!(s, "{:>CELL$}", f.n);
        }
        s.push('\n');
        let _ = write!(s, "{:<NAME$}", "adj. R2");
        for f in fits {
            let _ = write!(s, "{:>CELL$}", short(f.adj_r_squared));
        }
        s.push_str("\n\n");
    }
    if let Some(list) = skipped.as_array().filter(|l| !l.is_empty()) {
        s.push_str("not estimable\n");
        for item in list {
            let _ = writeln!(
                s,
                "  {} ({}): {}",
                item["table"].as_str().unwrap_or_default(),
                item["dependent"].as_str().unwrap_or_default(),
                item["reason"].as_str().unwrap_or_default()
            );
        }
    }
    s.push_str("*** p<0.01, ** p<0.05, * p<0.1; standard errors in parentheses\n");
    s
}

fn regressions(out: &Path, w: &mut StageWriter) -> Result<()> {
    let path = out.join("regress/estimates.json");
    let doc = read_json(&path)?;
    let results: Vec<RegressionResult> = serde_json::from_value(doc["results"].clone())
        .map_err(|source| PipelineError::Json { path: path.clone(), source })?;
    let groups = group(results);

    let deps: Vec<&str> = Factor::ALL.iter().map(|f| f.name()).collect();
    let mut header = vec!["table".to_string(), "regressor".to_string()];
    for d in &deps {
        header.extend(["estimate", "std_error", "stars"].map(|c| format!("{d}_{c}")));
    }
    let mut wide = Table::new(header);
    let mut tables_json = Vec::new();
    for (table, fits) in &groups {
        let fit_for = |d: &str| fits.iter().find(|f| f.dependent == d);
        for name in row_names(fits) {
            let mut row = vec![table.clone(), name.clone()];
            for d in &deps {
                let cells = match fit_for(d) {
                    Some(f) => match f.coefficients.iter().find(|c| c.name == name) {
                        Some(c) => [fmt_f64(c.estimate), fmt_f64(c.std_error), c.stars.clone()],
                        None if f.dropped.iter().any(|x| x.name == name) => [String::new(), String::new(), "dropped".into()],
                        None => Default::default(),
                    },
                    None => Default::default(),
                };
                row.extend(cells);
            }
            wide.push(row);
        }
        for (label, stat) in [("n", 0), ("adj_r_squared", 1)] {
            let mut row = vec![table.clone(), label.to_string()];
            for d in &deps {
                let v = fit_for(d).map_or(String::new(), |f| if stat == 0 { f.n.to_string() } else { fmt_f64(f.adj_r_squared) });
                row.extend([v, String::new(), String::new()]);
            }
            wide.push(row);
        }
        let columns: serde_json::Map<String, Value> = fits
            .iter()
            .map(|f| {
                let coefs: Vec<Value> = f
                    .coefficients
                    .iter()
                    .map(|c| {
                        json!({
                            "name": c.name,
                            "estimate": json_f64(c.estimate),
                            "std_error": json_f64(c.std_error),
                            "t_stat": json_f64(c.t_stat),
                            "stars": c.stars,
                        })
                    })
                    .collect();
                let value = json!({
                    "n": f.n,
                    "r_squared": json_f64(f.r_squared),
                    "adj_r_squared": json_f64(f.adj_r_squared),
                    "coefficients": coefs,
                    "dropped": f.dropped,
                });
                (f.dependent.clone(), value)
            })
            .collect();
        tables_json.push(json!({ "table": table, "columns": columns }));
    }
    w.table("report/regression_tables.csv", &wide)?;
    w.json(
        "report/regression_tables.json",
        json!({
            "factor_source": doc["factor_source"],
            "tables": tables_json,
            "skipped": doc["skipped"],
        }),
    )?;
    w.text("report/regression_tables.txt", &render(&groups, &doc["skipped"]))
}

pub(super) fn run(cfg: &PipelineConfig, out: &Path, w: &mut StageWriter) -> Result<()> {
    coherence(out, w)?;
    themes(cfg, out, w)?;
    factors_vs_proxies(cfg, out, w)?;
    regressions(out, w)
}
