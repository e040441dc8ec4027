use crate::ingest::{is_germany, Sex, StudyWindow};
use crate::smoothers::BayesKind;
use crate::{AGE_MAX, AGE_MIN};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use super::PipelineError;

pub const DEFAULT_AGES: [u32; 5] = [85, 90, 95, 100, 105];
pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;
/// Shortest usable window: two segments of the minimum size.
pub const MIN_WINDOW_YEARS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPaths {
    pub deaths: PathBuf,
    pub exposures: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start: i32,
    pub end: i32,
}

fn default_sexes() -> Vec<Sex> {
    vec![Sex::Female, Sex::Male]
}

fn default_ages() -> Vec<u32> {
    DEFAULT_AGES.to_vec()
}

fn default_reps() -> usize {
    DEFAULT_BOOTSTRAP_REPS
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Run settings read from a TOML file. Relative paths are resolved against
/// the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub countries: Vec<String>,
    #[serde(default = "default_sexes")]
    pub sexes: Vec<Sex>,
    #[serde(default = "default_ages")]
    pub ages: Vec<u32>,
    #[serde(default)]
    pub bayes_estimator: BayesKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: BTreeMap<String, DataPaths>,
    #[serde(default)]
    pub windows: BTreeMap<String, WindowSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Requested window, or the default. Germany is always limited to its
    /// default years.
    pub fn window(&self, country: &str) -> StudyWindow {
        let default = StudyWindow::default_for(country);
        match self.windows.get(country) {
            None => default,
            Some(w) if is_germany(country) => StudyWindow {
                start_year: w.start.max(default.start_year),
                end_year: w.end.min(default.end_year),
            },
            Some(w) => StudyWindow { start_year: w.start, end_year: w.end },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    fn error(message: impl Into<String>) -> Self {
        Finding { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Finding { severity: Severity::Warning, message: message.into() }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

/// Checks a configuration without fitting anything.
pub fn validate_config(cfg: &RunConfig) -> Vec<Finding> {
    let mut out = Vec::new();
    if cfg.countries.is_empty() {
        out.push(Finding::error("empty country list"));
    }
    if cfg.sexes.is_empty() {
        out.push(Finding::error("empty sex list"));
    }
    if cfg.ages.is_empty() {
        out.push(Finding::error("no ages to report"));
    }
    for &age in &cfg.ages {
        if age < AGE_MIN {
            out.push(Finding::error(format!("age {age} below smoothing range {AGE_MIN}–{AGE_MAX}")));
        } else if age > AGE_MAX {
            out.push(Finding::error(format!("age {age} above smoothing range {AGE_MIN}–{AGE_MAX}")));
        }
    }
    let mut ages = cfg.ages.clone();
    ages.sort_unstable();
    ages.dedup();
    if ages.len() != cfg.ages.len() {
        out.push(Finding::warning("duplicate ages are reported once"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &cfg.countries {
        if !seen.insert(c) {
            out.push(Finding::error(format!("country {c} listed twice")));
        }
    }
    if cfg.bootstrap_reps == 0 {
        out.push(Finding::error("bootstrap_reps must be positive"));
    }
    if cfg.jobs == Some(0) {
        out.push(Finding::error("jobs must be positive"));
    }

    for country in &cfg.countries {
        match cfg.data.get(country) {
            None => out.push(Finding::error(format!("no data paths for {country}"))),
            Some(paths) => {
                for p in [&paths.deaths, &paths.exposures] {
                    let full = cfg.resolve(p);
                    if !full.is_file() {
                        out.push(Finding::error(format!("missing file {} for {country}", full.display())));
                    }
                }
            }
        }
        if let Some(w) = cfg.windows.get(country) {
            if w.start > w.end {
                out.push(Finding::error(format!("window {}–{} for {country} ends before it starts", w.start, w.end)));
                continue;
            }
            if is_germany(country) {
                let d = StudyWindow::default_for(country);
                if w.start < d.start_year || w.end > d.end_year {
                    out.push(Finding::warning(format!(
                        "window {}–{} for {country} clamped to {}–{}",
                        w.start, w.end, d.start_year, d.end_year
                    )));
                }
            }
        }
        let w = cfg.window(country);
        if w.start_year > w.end_year || w.len() < MIN_WINDOW_YEARS {
            out.push(Finding::error(format!(
                "window {}–{} for {country} is shorter than {MIN_WINDOW_YEARS} years",
                w.start_year, w.end_year
            )));
        }
    }
    for name in cfg.data.keys() {
        if !cfg.countries.contains(name) {
            out.push(Finding::warning(format!("data for {name} is not used")));
        }
    }
    out
}
