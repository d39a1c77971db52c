use chrono::Datelike;
use serde_json::json;

use crate::artifact::{StageWriter, Table};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::ingest::{ingest, Placement};

pub(super) fn run(cfg: &PipelineConfig, w: &mut StageWriter) -> Result<()> {
    let bundle = ingest(cfg)?;
    let panel = &bundle.panel;

    let mut docs = Table::new(["id", "date", "weekday", "trading_day", "placement", "chars"]);
    for (doc, day) in bundle.corpus.iter().zip(&bundle.statement_days) {
        docs.push(vec![
            doc.id.clone(),
            doc.date.to_string(),
            format!("{:?}", doc.date.weekday()),
            day.trading_day.map_or_else(String::new, |d| d.to_string()),
            day.placement.as_str().to_string(),
            doc.text.chars().count().to_string(),
        ]);
    }
    w.table("ingest/documents.csv", &docs)?;

    let mut coverage = Table::new(["date", "missing_yields", "controls", "statement"]);
    let (mut without_controls, mut partial_controls) = (0usize, 0usize);
    for (t, date) in panel.dates.iter().enumerate() {
        let missing = panel.yields.row(t).iter().filter(|v| v.is_nan()).count();
        let controls = match bundle.controls.dates.binary_search(date) {
            Ok(i) if bundle.controls.values[i].iter().all(|v| v.is_finite()) => "complete",
            Ok(_) => {
                partial_controls += 1;
                "partial"
            }
            Err(_) => {
                without_controls += 1;
                "absent"
            }
        };
        let statement = bundle
            .statement_days
            .iter()
            .filter(|s| s.trading_day == Some(*date))
            .map(|s| s.id.as_str())
            .collect::<Vec<_>>()
            .join(";");
        coverage.push(vec![date.to_string(), missing.to_string(), controls.to_string(), statement]);
    }
    w.table("ingest/coverage.csv", &coverage)?;
    if without_controls + partial_controls > 0 {
        log::warn!(
            "{without_controls} panel dates have no controls row and {partial_controls} have gaps; they are flagged in ingest/coverage.csv"
        );
    }

    let count = |p: Placement| bundle.statement_days.iter().filter(|s| s.placement == p).count();
    let shifted = count(Placement::NextTradingDay);
    let before_panel = count(Placement::BeforePanel);
    let after_panel = count(Placement::AfterPanel);
    w.json(
        "ingest/summary.json",
        json!({
            "statements": bundle.corpus.len(),
            "first_statement": bundle.corpus.first().map(|d| d.date.to_string()),
            "last_statement": bundle.corpus.last().map(|d| d.date.to_string()),
            "statements_shifted": shifted,
            "statements_before_panel": before_panel,
            "statements_after_panel": after_panel,
            "panel_dates": panel.len(),
            "first_panel_date": panel.dates[0].to_string(),
            "last_panel_date": panel.dates[panel.len() - 1].to_string(),
            "maturities": panel.maturities,
            "missing_yield_cells": panel.yields.iter().filter(|v| v.is_nan()).count(),
            "control_rows": bundle.controls.dates.len(),
            "panel_dates_without_controls": without_controls,
            "panel_dates_with_partial_controls": partial_controls,
        }),
    )
}
