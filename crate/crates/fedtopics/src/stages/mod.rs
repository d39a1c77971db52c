//! Stage orchestration and caching.

mod curve;
mod ingest;
mod regress;
mod report;
mod topics;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use fedtopics_core::econometrics::StatementWeights;
use fedtopics_core::termstructure::{FactorSeries, FactorSource};
use nalgebra::DMatrix;

use crate::artifact::{parse_f64, StageWriter, Table};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::ingest::DATE_FORMAT;
use crate::manifest::{sha256_bytes, sha256_corpus_dir, sha256_file, RunManifest, StageRecord};

pub use regress::{Coefficient, Dropped, RegressionResult, Skipped};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    SelectK,
    Topics,
    Curve,
    Regress,
    Report,
}

impl Stage {
    /// Execution order of `all`.
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::SelectK, Stage::Topics, Stage::Curve, Stage::Regress, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::SelectK => "select-k",
            Stage::Topics => "topics",
            Stage::Curve => "curve",
            Stage::Regress => "regress",
            Stage::Report => "report",
        }
    }

    /// Subdirectory of the output directory owned by the stage.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::SelectK => "select_k",
            other => other.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Cached,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ran => "ran",
            Outcome::Cached => "cached",
        }
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    hash: String,
    short_hash: String,
    out: PathBuf,
    manifest: RunManifest,
    force: BTreeSet<Stage>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, force: &[Stage]) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.output_dir.clone();
        let manifest = RunManifest::load(&out)?;
        Ok(Pipeline {
            hash: cfg.hash(),
            short_hash: cfg.short_hash(),
            cfg,
            out,
            manifest,
            force: force.iter().copied().collect(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Stages whose outputs `stage` reads.
    pub fn upstream(&self, stage: Stage) -> Vec<Stage> {
        match stage {
            Stage::Ingest => vec![],
            Stage::SelectK | Stage::Curve => vec![Stage::Ingest],
            Stage::Topics if self.cfg.topics.k.is_none() => vec![Stage::Ingest, Stage::SelectK],
            Stage::Topics => vec![Stage::Ingest],
            Stage::Regress => vec![Stage::Topics, Stage::Curve],
            Stage::Report => vec![Stage::SelectK, Stage::Topics, Stage::Curve, Stage::Regress],
        }
    }

    /// Input files `stage` reads directly, labelled for the manifest.
    fn sources(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let p = &self.cfg.paths;
        let mut files: Vec<(&str, &Path)> = Vec::new();
        let text = matches!(stage, Stage::Ingest | Stage::SelectK | Stage::Topics);
        if matches!(stage, Stage::Ingest | Stage::Curve) {
            files.push(("yields", &p.yields));
        }
        if matches!(stage, Stage::Ingest | Stage::Regress) {
            files.push(("controls", &p.controls));
        }
        if text {
            for (label, path) in [
                ("stopwords", &p.stopwords),
                ("names", &p.names),
                ("voting_markers", &p.voting_markers),
                ("lemmas", &p.lemmas),
            ] {
                if let Some(path) = path {
                    files.push((label, path));
                }
            }
        }
        let mut out = BTreeMap::new();
        if text {
            out.insert("statements".to_string(), sha256_corpus_dir(&p.statements_dir)?);
        }
        for (label, path) in files {
            out.insert(label.to_string(), sha256_file(path)?);
        }
        Ok(out)
    }

    pub fn run(&mut self, stage: Stage) -> Result<Outcome> {
        self.cfg.check_paths()?;
        let mut keyed: BTreeMap<String, String> = BTreeMap::new();
        for (label, digest) in self.sources(stage)? {
            keyed.insert(format!("input:{label}"), digest.clone());
            self.manifest.inputs.insert(label, digest);
        }
        for up in self.upstream(stage) {
            for (rel, digest) in self.manifest.upstream(stage.name(), up.name(), &self.out)? {
                keyed.insert(format!("{}:{rel}", up.name()), digest.clone());
            }
        }
        let key_doc = serde_json::json!({
            "stage": stage.name(),
            "config_hash": self.hash,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "inputs": keyed,
        });
        let key = sha256_bytes(key_doc.to_string().as_bytes());
        if !self.force.contains(&stage) && self.manifest.is_fresh(stage.name(), &key, &self.out) {
            log::info!("{}: outputs up to date", stage.name());
            return Ok(Outcome::Cached);
        }

        let dir = self.out.join(stage.dir());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        }
        let started = Instant::now();
        let mut w = StageWriter::new(&self.out, stage.name(), &self.short_hash);
        log::info!("{}: running", stage.name());
        match stage {
            Stage::Ingest => ingest::run(&self.cfg, &mut w)?,
            Stage::SelectK => topics::run_select_k(&self.cfg, &mut w)?,
            Stage::Topics => topics::run_topics(&self.cfg, &self.out, &mut w)?,
            Stage::Curve => curve::run(&self.cfg, &mut w)?,
            Stage::Regress => regress::run(&self.cfg, &self.out, &mut w)?,
            Stage::Report => report::run(&self.cfg, &self.out, &mut w)?,
        }
        let mut outputs = BTreeMap::new();
        for rel in w.into_written() {
            outputs.insert(rel.clone(), sha256_file(&self.out.join(&rel))?);
        }
        let seconds = started.elapsed().as_secs_f64();
        self.manifest.stages.insert(stage.name().to_string(), StageRecord { key, outputs, seconds });
        self.manifest.config_hash = self.hash.clone();
        self.manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        self.manifest.save(&self.out)?;
        Ok(Outcome::Ran)
    }

    pub fn run_all(&mut self) -> Result<Vec<(Stage, Outcome)>> {
        Stage::ALL.into_iter().map(|s| self.run(s).map(|o| (s, o))).collect()
    }
}

fn parse_cell_date(path: &Path, line: usize, cell: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell, DATE_FORMAT).map_err(|e| PipelineError::Parse {
        path: path.to_path_buf(),
        line: line as u64 + 2,
        column: "date".into(),
        message: e.to_string(),
    })
}

fn parse_cell_f64(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    parse_f64(cell).ok_or_else(|| PipelineError::Parse {
        path: path.to_path_buf(),
        line: line as u64 + 2,
        column: column.to_string(),
        message: format!("cannot parse `{cell}` as a number"),
    })
}

/// Columns named `theme_1`, `theme_2`, ... in order.
fn theme_columns(table: &Table) -> Vec<usize> {
    (1..)
        .map_while(|k| table.column(&format!("theme_{k}")))
        .collect()
}

/// Statement theme weights from a `date, id, theme_1, ...` table.
pub(crate) fn read_theme_weights(path: &Path) -> Result<Vec<StatementWeights>> {
    let table = Table::read(path)?;
    let date_col = table.column("date");
    let cols = theme_columns(&table);
    let (Some(date_col), false) = (date_col, cols.is_empty()) else {
        return Err(PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: "theme_1".into(),
            message: "expected `date` and `theme_k` columns".into(),
        });
    };
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let date = parse_cell_date(path, i, &row[date_col])?;
            let weights = cols
                .iter()
                .map(|&j| parse_cell_f64(path, i, &table.header[j], &row[j]))
                .collect::<Result<Vec<_>>>()?;
            Ok(StatementWeights { date, weights })
        })
        .collect()
}

/// The rows of one factor source from `curve/factors.csv`.
pub(crate) fn read_factors(path: &Path, source: FactorSource) -> Result<FactorSeries> {
    let table = Table::read(path)?;
    let col = |name: &str| {
        table.column(name).ok_or_else(|| PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: name.to_string(),
            message: "column missing".into(),
        })
    };
    let (date, src) = (col("date")?, col("source")?);
    let value_cols = [col("level")?, col("slope")?, col("curvature")?];
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        if row[src] != source.as_str() {
            continue;
        }
        dates.push(parse_cell_date(path, i, &row[date])?);
        for &j in &value_cols {
            values.push(parse_cell_f64(path, i, &table.header[j], &row[j])?);
        }
    }
    if dates.is_empty() {
        return Err(PipelineError::MissingArtifact {
            stage: "regress",
            producer: "curve",
            artifact: format!("{} factors in {}", source.as_str(), path.display()),
        });
    }
    Ok(FactorSeries { values: DMatrix::from_row_slice(dates.len(), 3, &values), dates, source })
}
