//! Pipeline configuration: one TOML file, path overrides from the environment.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//!
//! [paths]
//! statements_dir = "statements"   # one YYYY-MM-DD.txt per statement
//! yields = "yields.csv"           # date, then one column per maturity in months
//! controls = "controls.csv"       # date, term_spread, credit_spread, vix
//! # stopwords / names / voting_markers / lemmas: optional table files
//!
//! [topics]
//! model = "nmf"                   # nmf | lda
//! k = 3                           # omit to pick k by coherence
//! k_min = 3
//! k_max = 30
//!
//! [curve]
//! lambda = 0.0609
//! method = "mle"                  # mle | two-step
//!
//! [regress]
//! crisis_start = "2007-02-27"
//! crisis_end = "2011-04-13"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use fedtopics_core::econometrics::DateRange;
use fedtopics_core::nmf::NmfInit;
use fedtopics_core::optim::BfgsOptions;
use fedtopics_core::termstructure::{FactorSource, MleOptions, DEFAULT_LAMBDA};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Environment variables that replace entries of `[paths]` (and the output
/// directory). Nothing else can be overridden from the environment.
pub const PATH_OVERRIDES: [&str; 8] = [
    "FEDTOPICS_STATEMENTS_DIR",
    "FEDTOPICS_YIELDS",
    "FEDTOPICS_CONTROLS",
    "FEDTOPICS_STOPWORDS",
    "FEDTOPICS_NAMES",
    "FEDTOPICS_VOTING_MARKERS",
    "FEDTOPICS_LEMMAS",
    "FEDTOPICS_OUTPUT_DIR",
];

pub const K_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    pub paths: Paths,
    #[serde(default)]
    pub topics: TopicSettings,
    #[serde(default)]
    pub curve: CurveSettings,
    #[serde(default)]
    pub regress: RegressSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub statements_dir: PathBuf,
    pub yields: PathBuf,
    pub controls: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub voting_markers: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicModel {
    Nmf,
    Lda,
}

impl TopicModel {
    pub fn as_str(self) -> &'static str {
        match self {
            TopicModel::Nmf => "nmf",
            TopicModel::Lda => "lda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopicSettings {
    pub model: TopicModel,
    /// Fixed topic count; `None` selects it by mean coherence over `k_min..=k_max`.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub top_n: usize,
    pub epsilon: f64,
    pub min_df: usize,
    /// Also fit LDA next to NMF for the coherence comparison and the
    /// pairwise theme regressions.
    pub compare_lda: bool,
    pub nmf: NmfSettings,
    pub lda: LdaSettings,
}

impl Default for TopicSettings {
    fn default() -> Self {
        TopicSettings {
            model: TopicModel::Nmf,
            k: None,
            k_min: 3,
            k_max: 30,
            top_n: 15,
            epsilon: 1e-12,
            min_df: 1,
            compare_lda: true,
            nmf: NmfSettings::default(),
            lda: LdaSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmfInitKind {
    Nndsvd,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmfSettings {
    pub init: NmfInitKind,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for NmfSettings {
    fn default() -> Self {
        NmfSettings { init: NmfInitKind::Nndsvd, max_iter: 1000, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaSettings {
    /// `α = alpha_numerator / K`.
    pub alpha_numerator: f64,
    pub eta: f64,
    pub burn_in: usize,
    pub sweeps: usize,
}

impl Default for LdaSettings {
    fn default() -> Self {
        LdaSettings { alpha_numerator: 50.0, eta: 0.025, burn_in: 500, sweeps: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMethod {
    Mle,
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorChoice {
    Smoothed,
    Filtered,
    TwoStep,
}

impl FactorChoice {
    pub fn source(self) -> FactorSource {
        match self {
            FactorChoice::Smoothed => FactorSource::Smoothed,
            FactorChoice::Filtered => FactorSource::Filtered,
            FactorChoice::TwoStep => FactorSource::TwoStepOls,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSettings {
    pub lambda: f64,
    pub estimate_lambda: bool,
    pub method: CurveMethod,
    /// Admit empty yield cells; the filter skips them.
    pub allow_missing: bool,
    /// Factor estimates handed to the regressions.
    pub factor_source: FactorChoice,
    pub max_iter: usize,
    pub max_evals: usize,
    pub grad_tol: f64,
}

impl Default for CurveSettings {
    fn default() -> Self {
        let bfgs = BfgsOptions::default();
        CurveSettings {
            lambda: DEFAULT_LAMBDA,
            estimate_lambda: false,
            method: CurveMethod::Mle,
            allow_missing: false,
            factor_source: FactorChoice::Smoothed,
            max_iter: bfgs.max_iter,
            max_evals: bfgs.max_evals,
            grad_tol: bfgs.grad_tol,
        }
    }
}

impl CurveSettings {
    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            lambda: self.lambda,
            estimate_lambda: self.estimate_lambda,
            bfgs: BfgsOptions {
                max_iter: self.max_iter,
                max_evals: self.max_evals,
                grad_tol: self.grad_tol,
                ..BfgsOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subsample {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Add the crisis dummy and theme × crisis interactions.
    #[serde(default)]
    pub crisis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressSettings {
    pub crisis_start: NaiveDate,
    pub crisis_end: NaiveDate,
    pub event_controls: bool,
    pub subsamples: Vec<Subsample>,
}

impl Default for RegressSettings {
    fn default() -> Self {
        let crisis = DateRange::crisis();
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
        RegressSettings {
            crisis_start: crisis.start,
            crisis_end: crisis.end,
            event_controls: true,
            subsamples: vec![
                Subsample { name: "pre-crisis".into(), start: date(1999, 1, 1), end: date(2006, 12, 31), crisis: false },
                Subsample { name: "crisis-and-after".into(), start: date(2007, 1, 1), end: date(2017, 12, 31), crisis: true },
            ],
        }
    }
}

impl RegressSettings {
    pub fn crisis_window(&self) -> Result<DateRange> {
        Ok(DateRange::new(self.crisis_start, self.crisis_end)?)
    }
}

mod defaults {
    use std::path::PathBuf;

    pub fn seed() -> u64 {
        42
    }

    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

/// The settings that determine results. Paths are left out so the same
/// inputs give the same hash from any directory.
#[derive(Serialize)]
struct HashedSettings<'a> {
    seed: u64,
    topics: &'a TopicSettings,
    curve: &'a CurveSettings,
    regress: &'a RegressSettings,
}

impl PipelineConfig {
    /// Parses TOML, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    /// Reads `path`, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        cfg.apply_env(|key| std::env::var(key).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        join(&mut paths.statements_dir);
        join(&mut paths.yields);
        join(&mut paths.controls);
        for p in [&mut paths.stopwords, &mut paths.names, &mut paths.voting_markers, &mut paths.lemmas] {
            if let Some(p) = p {
                join(p);
            }
        }
        join(&mut self.output_dir);
    }

    /// Replaces paths named by [`PATH_OVERRIDES`]; values are used verbatim.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        let get = |key: &str| get(key).filter(|v| !v.is_empty()).map(PathBuf::from);
        let paths = &mut self.paths;
        if let Some(p) = get("FEDTOPICS_STATEMENTS_DIR") {
            paths.statements_dir = p;
        }
        if let Some(p) = get("FEDTOPICS_YIELDS") {
            paths.yields = p;
        }
        if let Some(p) = get("FEDTOPICS_CONTROLS") {
            paths.controls = p;
        }
        for (key, slot) in [
            ("FEDTOPICS_STOPWORDS", &mut paths.stopwords),
            ("FEDTOPICS_NAMES", &mut paths.names),
            ("FEDTOPICS_VOTING_MARKERS", &mut paths.voting_markers),
            ("FEDTOPICS_LEMMAS", &mut paths.lemmas),
        ] {
            if let Some(p) = get(key) {
                *slot = Some(p);
            }
        }
        if let Some(p) = get("FEDTOPICS_OUTPUT_DIR") {
            self.output_dir = p;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        let t = &self.topics;
        if t.k_min < 1 || t.k_max > K_LIMIT || t.k_min > t.k_max {
            return bad(format!("topics: k range {}..={} must lie within 1..={K_LIMIT}", t.k_min, t.k_max));
        }
        if let Some(k) = t.k {
            if !(1..=K_LIMIT).contains(&k) {
                return bad(format!("topics: k = {k} outside 1..={K_LIMIT}"));
            }
        }
        if t.top_n < 2 {
            return bad("topics: top_n must be at least 2".into());
        }
        if !(t.epsilon > 0.0) {
            return bad("topics: epsilon must be positive".into());
        }
        if t.min_df == 0 {
            return bad("topics: min_df must be at least 1".into());
        }
        if t.nmf.max_iter == 0 || !(t.nmf.rel_tol > 0.0) {
            return bad("topics.nmf: max_iter and rel_tol must be positive".into());
        }
        let l = &t.lda;
        if !(l.alpha_numerator > 0.0 && l.eta > 0.0) || l.sweeps <= l.burn_in {
            return bad("topics.lda: priors must be positive and sweeps must exceed burn_in".into());
        }
        let c = &self.curve;
        if !(c.lambda > 0.0) || !c.lambda.is_finite() {
            return bad("curve: lambda must be positive".into());
        }
        if c.method == CurveMethod::TwoStep && c.factor_source != FactorChoice::TwoStep {
            return bad("curve: method `two-step` only provides factor_source = \"two-step\"".into());
        }
        let r = &self.regress;
        if r.crisis_end < r.crisis_start {
            return bad("regress: crisis_end precedes crisis_start".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &r.subsamples {
            if s.end < s.start {
                return bad(format!("regress: subsample `{}` ends before it starts", s.name));
            }
            let ok = !s.name.is_empty() && s.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_');
            if !ok || !names.insert(s.name.as_str()) {
                return bad(format!("regress: subsample name `{}` must be unique and [A-Za-z0-9_-]", s.name));
            }
        }
        Ok(())
    }

    /// Fails with the first configured input that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        let p = &self.paths;
        let optional = [&p.stopwords, &p.names, &p.voting_markers, &p.lemmas];
        let required = [&p.statements_dir, &p.yields, &p.controls];
        for path in required.into_iter().chain(optional.into_iter().flatten()) {
            if !path.exists() {
                return Err(PipelineError::Config(format!("input `{}` does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 over the result-determining settings, hex encoded.
    pub fn hash(&self) -> String {
        let view = HashedSettings { seed: self.seed, topics: &self.topics, curve: &self.curve, regress: &self.regress };
        let json = serde_json::to_string(&view).expect("settings serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// First 16 hex digits of [`hash`](Self::hash), as stamped on every table.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn nmf_init(&self) -> NmfInit {
        match self.topics.nmf.init {
            NmfInitKind::Nndsvd => NmfInit::Nndsvd,
            NmfInitKind::Random => NmfInit::Random { seed: self.seed },
        }
    }
}
