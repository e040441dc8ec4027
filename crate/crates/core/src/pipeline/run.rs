use super::config::{has_errors, validate_config, RunConfig};
use super::PipelineError;
use crate::ingest::{build_dataset, impute_zero_exposure, parse_hmd_table, ImputeOptions, MortalitySeries, RawTable, Sex, StudyWindow};
use crate::rng::derive_seed;
use crate::segreg::{crmi, fit_segmented_qr, qr_fit, CrmiOptions, CrmiResult, LogRateSeries, QrLine, SegmentedOptions, SegmentedSelection};
use crate::selection::{rmse, select_best, MethodScore};
use crate::smoothers::{bayes, ggm, pclm, pspline, Diagnostics, Method, SmoothedSeries};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub score: Option<MethodScore>,
    pub error: Option<String>,
    /// Per-year fit diagnostics; empty when the method failed.
    pub diagnostics: Vec<(i32, Diagnostics)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeResult {
    pub series: LogRateSeries,
    pub simple: QrLine,
    pub segmented: SegmentedSelection,
    pub crmi: CrmiResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeEntry {
    pub age: u32,
    pub result: Option<AgeResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationResult {
    pub country: String,
    pub sex: Sex,
    pub window: StudyWindow,
    pub imputed_cells: usize,
    pub missing_cells: usize,
    pub methods: Vec<MethodOutcome>,
    pub best: Option<Method>,
    pub ages: Vec<AgeEntry>,
    /// Set when the population could not be processed at all.
    pub error: Option<String>,
}

impl PopulationResult {
    pub fn score(&self, method: Method) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).and_then(|m| m.score.as_ref()).map(|s| s.rmse)
    }

    pub fn age(&self, age: u32) -> Option<&AgeResult> {
        self.ages.iter().find(|a| a.age == age).and_then(|a| a.result.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTiming {
    pub country: String,
    pub sex: Sex,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    /// SHA-256 of the serialized effective configuration.
    pub config_hash: String,
    pub populations: Vec<PopulationResult>,
    /// Wall-clock times; kept out of the results file so it stays reproducible.
    #[serde(skip)]
    pub timings: Vec<UnitTiming>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_table(path: &Path) -> Result<RawTable, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_hmd_table(&text).map_err(|source| PipelineError::Ingest { path: path.to_path_buf(), source })
}

fn smooth_year(method: Method, s: &MortalitySeries) -> Result<SmoothedSeries, String> {
    let r = match method {
        Method::Ggm => ggm::fit_ggm(s).map(|f| f.series),
        Method::Pspline => pspline::fit_pspline(s),
        Method::Pclm => pclm::smooth_pclm(s),
        Method::BayesMap => bayes::smooth_bayes(s, bayes::BayesKind::Map),
        Method::BayesMean => bayes::smooth_bayes(s, bayes::BayesKind::Mean),
        Method::BayesMedian => bayes::smooth_bayes(s, bayes::BayesKind::Median),
    };
    r.map_err(|e| format!("year {}: {e}", s.year))
}

fn fit_age(cfg: &RunConfig, country: &str, sex: Sex, age: u32, years: &[i32], surface: &[SmoothedSeries]) -> Result<AgeResult, String> {
    let rates: Vec<f64> = surface.iter().map(|s| s.rate(age)).collect();
    let series = LogRateSeries::from_rates(age, years, &rates).map_err(|e| e.to_string())?;
    let segmented = fit_segmented_qr(&series, &SegmentedOptions::default()).map_err(|e| e.to_string())?;
    let simple = qr_fit(&series.points, 0.5).map_err(|e| e.to_string())?;
    let opts = CrmiOptions {
        reps: cfg.bootstrap_reps,
        level: 0.95,
        seed: derive_seed(cfg.seed, &[country, sex.as_str(), "crmi", &age.to_string()]),
    };
    let crmi = crmi(&segmented.fit, &series, &opts).map_err(|e| e.to_string())?;
    Ok(AgeResult { series, simple, segmented, crmi })
}

fn run_unit(cfg: &RunConfig, country: &str, sex: Sex, tables: &(RawTable, RawTable)) -> PopulationResult {
    let window = cfg.window(country);
    let mut out = PopulationResult {
        country: country.to_string(),
        sex,
        window,
        imputed_cells: 0,
        missing_cells: 0,
        methods: Vec::new(),
        best: None,
        ages: Vec::new(),
        error: None,
    };
    let raw = match build_dataset(&tables.0, &tables.1, country, sex, window) {
        Ok(d) => d,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let data: Vec<MortalitySeries> =
        raw.iter().map(|s| impute_zero_exposure(s, cfg.seed, ImputeOptions::default())).collect();
    out.imputed_cells = data.iter().map(|s| s.imputed.iter().filter(|&&f| f).count()).sum();
    out.missing_cells = data.iter().map(|s| s.missing.iter().filter(|&&f| f).count()).sum();
    let years: Vec<i32> = data.iter().map(|s| s.year).collect();

    let methods = [Method::Ggm, Method::Pspline, Method::Pclm, cfg.bayes_estimator.method()];
    let mut surfaces: BTreeMap<Method, Vec<SmoothedSeries>> = BTreeMap::new();
    for method in methods {
        let fitted: Result<Vec<SmoothedSeries>, String> = data.par_iter().map(|s| smooth_year(method, s)).collect();
        let outcome = match fitted.and_then(|f| rmse(method, &f, &data).map(|sc| (f, sc)).map_err(|e| e.to_string())) {
            Ok((surface, score)) => {
                let diagnostics = surface.iter().zip(&years).map(|(s, &y)| (y, s.diagnostics.clone())).collect();
                surfaces.insert(method, surface);
                MethodOutcome { method, score: Some(score), error: None, diagnostics }
            }
            Err(e) => MethodOutcome { method, score: None, error: Some(e), diagnostics: Vec::new() },
        };
        out.methods.push(outcome);
    }

    let scores: Vec<MethodScore> = out.methods.iter().filter_map(|m| m.score.clone()).collect();
    let Some(best) = select_best(&scores) else {
        out.error = Some("every smoother failed".into());
        return out;
    };
    out.best = Some(best);
    let surface = &surfaces[&best];
    let mut ages = cfg.ages.clone();
    ages.sort_unstable();
    ages.dedup();
    out.ages = ages
        .par_iter()
        .map(|&age| match fit_age(cfg, country, sex, age, &years, surface) {
            Ok(r) => AgeEntry { age, result: Some(r), error: None },
            Err(e) => AgeEntry { age, result: None, error: Some(e) },
        })
        .collect();
    out
}

/// Runs the whole procedure. Validation errors and unreadable inputs abort;
/// a population that cannot be fitted is recorded and the run goes on.
pub fn run(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    let findings = validate_config(cfg);
    if has_errors(&findings) {
        return Err(PipelineError::Validation(findings));
    }
    let mut tables: BTreeMap<&str, (RawTable, RawTable)> = BTreeMap::new();
    for country in &cfg.countries {
        let paths = &cfg.data[country];
        let d = load_table(&cfg.resolve(&paths.deaths))?;
        let e = load_table(&cfg.resolve(&paths.exposures))?;
        tables.insert(country, (d, e));
    }
    let units: Vec<(&str, Sex)> =
        cfg.countries.iter().flat_map(|c| cfg.sexes.iter().map(move |&s| (c.as_str(), s))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let results: Vec<(PopulationResult, f64)> = pool.install(|| {
        units
            .par_iter()
            .map(|&(country, sex)| {
                let start = Instant::now();
                let r = run_unit(cfg, country, sex, &tables[country]);
                (r, start.elapsed().as_secs_f64())
            })
            .collect()
    });

    let timings = results
        .iter()
        .map(|(r, s)| UnitTiming { country: r.country.clone(), sex: r.sex, seconds: *s })
        .collect();
    let populations = results.into_iter().map(|(r, _)| r).collect();
    let config_hash = sha256_hex(cfg.to_toml_string().as_bytes());
    Ok(RunReport { config: cfg.clone(), config_hash, populations, timings })
}
