//! Input formats.
//!
//! * statements: a directory of UTF-8 files named `YYYY-MM-DD.txt`, one per
//!   release; other files are ignored.
//! * yields: CSV with header `date,<m1>,<m2>,...`, maturities in months,
//!   yields in percent, dates ascending.
//! * controls: CSV with header `date,term_spread,credit_spread,vix`; empty
//!   cells mark missing values.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use fedtopics_core::econometrics::{Controls, CONTROL_NAMES};
use fedtopics_core::termstructure::YieldPanel;
use fedtopics_core::textprep::{
    parse_word_list, parse_word_set, sort_corpus, LemmaRules, PreprocessConfig, RawDocument,
};
use nalgebra::DMatrix;

use crate::artifact::{csv_error, parse_f64};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Where a statement lands relative to the panel calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    ReleaseDay,
    /// Released on a non-trading day; attributed to the next panel date.
    NextTradingDay,
    /// Released before the panel starts; only a predecessor for theme changes.
    BeforePanel,
    AfterPanel,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::ReleaseDay => "release-day",
            Placement::NextTradingDay => "next-trading-day",
            Placement::BeforePanel => "before-panel",
            Placement::AfterPanel => "after-panel",
        }
    }
}

/// A statement and the panel date it is attributed to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementDay {
    pub id: String,
    pub date: NaiveDate,
    pub placement: Placement,
    pub trading_day: Option<NaiveDate>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub corpus: Vec<RawDocument>,
    pub panel: YieldPanel,
    pub controls: Controls,
    pub statement_days: Vec<StatementDay>,
}

pub fn ingest(cfg: &PipelineConfig) -> Result<Bundle> {
    cfg.check_paths()?;
    let corpus = read_corpus(&cfg.paths.statements_dir)?;
    let panel = read_yields(&cfg.paths.yields, cfg.curve.allow_missing)?;
    let controls = read_controls(&cfg.paths.controls)?;
    let statement_days = map_statements(&corpus, &panel.dates);
    Ok(Bundle { corpus, panel, controls, statement_days })
}

pub fn read_corpus(dir: &Path) -> Result<Vec<RawDocument>> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "txt") {
            files.push(path);
        } else {
            log::debug!("skipping {}", path.display());
        }
    }
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for path in files {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let date = NaiveDate::parse_from_str(&id, DATE_FORMAT).map_err(|e| PipelineError::Parse {
            path: path.clone(),
            line: 0,
            column: "file name".into(),
            message: format!("expected YYYY-MM-DD.txt: {e}"),
        })?;
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        docs.push(RawDocument { id, date, text });
    }
    sort_corpus(&mut docs)?;
    Ok(docs)
}

fn parse_date(path: &Path, line: u64, cell: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell.trim(), DATE_FORMAT).map_err(|e| PipelineError::Parse {
        path: path.to_path_buf(),
        line,
        column: "date".into(),
        message: format!("cannot parse `{cell}` as YYYY-MM-DD: {e}"),
    })
}

/// Reads a dated numeric CSV: checks the date column, ascending unique
/// dates, and numeric cells (empty cells become NaN).
fn read_dated(path: &Path) -> Result<(Vec<String>, Vec<NaiveDate>, Vec<Vec<f64>>, Vec<u64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    if header.first().map(String::as_str) != Some("date") {
        return Err(PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: header.first().cloned().unwrap_or_default(),
            message: "first column must be `date`".into(),
        });
    }
    let (mut dates, mut rows, mut lines) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let date = parse_date(path, line, &rec[0])?;
        if let Some(&prev) = dates.last() {
            if date == prev {
                let first = lines[dates.len() - 1];
                return Err(PipelineError::DuplicateDate { path: path.to_path_buf(), date, first, line });
            }
            if date < prev {
                let first = lines[dates.iter().position(|d| *d == date).unwrap_or(dates.len() - 1)];
                if dates.contains(&date) {
                    return Err(PipelineError::DuplicateDate { path: path.to_path_buf(), date, first, line });
                }
                return Err(PipelineError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: "date".into(),
                    message: format!("{date} is earlier than the previous row ({prev}); dates must ascend"),
                });
            }
        }
        let mut values = Vec::with_capacity(header.len() - 1);
        for (j, cell) in rec.iter().enumerate().skip(1) {
            values.push(parse_f64(cell).ok_or_else(|| PipelineError::Parse {
                path: path.to_path_buf(),
                line,
                column: header[j].clone(),
                message: format!("cannot parse `{cell}` as a number"),
            })?);
        }
        dates.push(date);
        rows.push(values);
        lines.push(line);
    }
    Ok((header, dates, rows, lines))
}

pub fn read_yields(path: &Path, allow_missing: bool) -> Result<YieldPanel> {
    let (header, dates, rows, lines) = read_dated(path)?;
    let mut maturities = Vec::with_capacity(header.len() - 1);
    for name in &header[1..] {
        maturities.push(name.parse::<u32>().map_err(|_| PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: name.clone(),
            message: "maturity headers must be whole months".into(),
        })?);
    }
    if maturities.is_empty() || dates.is_empty() {
        return Err(PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: String::new(),
            message: "no maturities or no rows".into(),
        });
    }
    for (row, &line) in rows.iter().zip(&lines) {
        for (j, v) in row.iter().enumerate() {
            let problem = if v.is_infinite() {
                Some("yield is not finite")
            } else if v.is_nan() && !allow_missing {
                Some("empty cell; set curve.allow_missing = true to admit gaps")
            } else {
                None
            };
            if let Some(message) = problem {
                return Err(PipelineError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: header[j + 1].clone(),
                    message: message.into(),
                });
            }
        }
    }
    let yields = DMatrix::from_fn(dates.len(), maturities.len(), |t, j| rows[t][j]);
    Ok(YieldPanel::with_missing(dates, maturities, yields)?)
}

pub fn read_controls(path: &Path) -> Result<Controls> {
    let (header, dates, rows, _) = read_dated(path)?;
    let expected: Vec<&str> = std::iter::once("date").chain(CONTROL_NAMES).collect();
    if header != expected {
        return Err(PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: header.join(","),
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    let values = rows.into_iter().map(|r| [r[0], r[1], r[2]]).collect();
    Ok(Controls::new(dates, values)?)
}

/// First calendar date on or after `date`.
pub fn next_trading_day(date: NaiveDate, calendar: &[NaiveDate]) -> Option<NaiveDate> {
    calendar.get(calendar.partition_point(|&d| d < date)).copied()
}

pub fn map_statements(corpus: &[RawDocument], calendar: &[NaiveDate]) -> Vec<StatementDay> {
    corpus
        .iter()
        .map(|doc| {
            let day = next_trading_day(doc.date, calendar);
            let placement = match day {
                _ if calendar.first().is_some_and(|&first| doc.date < first) => Placement::BeforePanel,
                None => Placement::AfterPanel,
                Some(d) if d == doc.date => Placement::ReleaseDay,
                Some(_) => Placement::NextTradingDay,
            };
            match placement {
                Placement::NextTradingDay => log::info!(
                    "statement {} released on {} ({:?}) is attributed to {}",
                    doc.id,
                    doc.date,
                    doc.date.weekday(),
                    day.expect("mapped")
                ),
                Placement::BeforePanel => {
                    log::info!("statement {} predates the yield panel; it only serves as a predecessor", doc.id)
                }
                Placement::AfterPanel => log::warn!("statement {} falls after the yield panel", doc.id),
                Placement::ReleaseDay => {}
            }
            let trading_day = matches!(placement, Placement::ReleaseDay | Placement::NextTradingDay).then_some(day).flatten();
            StatementDay { id: doc.id.clone(), date: doc.date, placement, trading_day }
        })
        .collect()
}

/// Preprocessing tables from the configured files, built-in lists otherwise.
pub fn preprocess_config(cfg: &PipelineConfig) -> Result<PreprocessConfig> {
    let read = |p: &Option<PathBuf>| -> Result<Option<String>> {
        p.as_ref().map(|p| fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))).transpose()
    };
    let mut pre = PreprocessConfig { min_df: cfg.topics.min_df, ..PreprocessConfig::default() };
    if let Some(text) = read(&cfg.paths.stopwords)? {
        pre.stopwords = parse_word_set(&text);
    }
    if let Some(text) = read(&cfg.paths.names)? {
        pre.names = parse_word_set(&text);
    }
    if let Some(text) = read(&cfg.paths.voting_markers)? {
        pre.voting_markers = parse_word_list(&text);
    }
    if let Some(text) = read(&cfg.paths.lemmas)? {
        pre.lemma = LemmaRules::parse(&text)?;
    }
    pre.validate()?;
    Ok(pre)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    #[test]
    fn yields_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "y.csv", "date,3,120\n2001-01-02,5.0,6.0\n2001-01-03,5.1,6.2\n");
        let panel = read_yields(&p, false).unwrap();
        assert_eq!(panel.maturities, vec![3, 120]);
        assert_eq!(panel.len(), 2);
        assert_eq!(panel.yields[(1, 1)], 6.2);
    }

    #[test]
    fn duplicate_date_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "y.csv", "date,3\n2001-01-02,5\n2001-01-03,5\n2001-01-03,5\n");
        let err = read_yields(&p, false).unwrap_err();
        match &err {
            PipelineError::DuplicateDate { date, first, line, .. } => {
                assert_eq!(*date, d("2001-01-03"));
                assert_eq!((*first, *line), (3, 4));
            }
            other => panic!("{other:?}"),
        }
        assert!(err.to_string().contains("2001-01-03"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "y.csv", "date,3,120\n2001-01-02,5,6\n2001-01-03,5,abc\n");
        let msg = read_yields(&p, false).unwrap_err().to_string();
        assert!(msg.contains(":3:") && msg.contains("`120`") && msg.contains("abc"), "{msg}");

        let p = write(dir.path(), "y.csv", "date,3\n2001-13-02,5\n");
        let msg = read_yields(&p, false).unwrap_err().to_string();
        assert!(msg.contains(":2:") && msg.contains("date"), "{msg}");

        let p = write(dir.path(), "y.csv", "date,3,120\n2001-01-02,5\n");
        assert!(matches!(read_yields(&p, false), Err(PipelineError::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_yield_cells_need_opt_in() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "y.csv", "date,3,120\n2001-01-02,5,\n2001-01-03,5,6\n");
        assert!(read_yields(&p, false).is_err());
        assert!(read_yields(&p, true).unwrap().has_missing());
    }

    #[test]
    fn controls_header_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "date,term_spread,credit_spread,vix\n2001-01-02,1,2,20\n2001-01-03,1,,21\n");
        let c = read_controls(&p).unwrap();
        assert!(c.get(d("2001-01-02")).is_some());
        assert!(c.get(d("2001-01-03")).is_none());
        let p = write(dir.path(), "c.csv", "date,vix,term_spread,credit_spread\n");
        assert!(matches!(read_controls(&p), Err(PipelineError::Parse { line: 1, .. })));
    }

    #[test]
    fn corpus_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "2001-03-20.txt", "rates");
        write(dir.path(), "2001-01-31.txt", "inflation");
        write(dir.path(), "README.md", "ignored");
        let docs = read_corpus(dir.path()).unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["2001-01-31", "2001-03-20"]);
        write(dir.path(), "march.txt", "x");
        assert!(matches!(read_corpus(dir.path()), Err(PipelineError::Parse { .. })));
    }

    #[test]
    fn weekend_release_maps_forward() {
        let calendar = [d("2001-01-05"), d("2001-01-08"), d("2001-01-09")];
        // 2001-01-06 is a Saturday.
        assert_eq!(next_trading_day(d("2001-01-06"), &calendar), Some(d("2001-01-08")));
        assert_eq!(next_trading_day(d("2001-01-05"), &calendar), Some(d("2001-01-05")));
        assert_eq!(next_trading_day(d("2001-01-10"), &calendar), None);

        let doc = |date: &str| RawDocument { id: date.into(), date: d(date), text: "x".into() };
        let docs = [doc("2001-01-01"), doc("2001-01-05"), doc("2001-01-06"), doc("2001-01-10")];
        let placements: Vec<Placement> = map_statements(&docs, &calendar).iter().map(|s| s.placement).collect();
        assert_eq!(
            placements,
            [Placement::BeforePanel, Placement::ReleaseDay, Placement::NextTradingDay, Placement::AfterPanel]
        );
        assert_eq!(map_statements(&docs, &calendar)[2].trading_day, Some(d("2001-01-08")));
    }
}
