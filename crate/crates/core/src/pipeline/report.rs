use super::run::{sha256_hex, PopulationResult, RunReport, UnitTiming};
use super::PipelineError;
use crate::smoothers::Method;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};

pub const RESULTS_FILE: &str = "results.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun or re-render a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    /// Effective configuration as TOML; paths are relative to `config_dir`.
    pub config: String,
    pub config_dir: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub results: String,
    pub outputs: Vec<FileDigest>,
    /// How scores and segment lengths are defined in the tables.
    pub conventions: Vec<String>,
    pub timings: Vec<UnitTiming>,
}

const CONVENTIONS: [&str; 4] = [
    "rmse on the death-rate scale against raw D/E; imputed exposures included, missing cells excluded",
    "segment length L = last year - floor(last breakpoint), or last - first year without breakpoints",
    "pseudo-R2 on points at or after the last breakpoint, clamped to [0, 1]",
    "ci: percentile interval of a pairs bootstrap of the last-segment median line",
];

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn fmt_opt(v: Option<f64>, dp: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.dp$}"))
}

fn bayes_method(report: &RunReport) -> Method {
    report.config.bayes_estimator.method()
}

/// Model-specific RMSE per population with the winning method.
pub fn table1_csv(report: &RunReport) -> String {
    let header: Vec<String> =
        ["sex", "country", "ggm", "pspline", "pclm", "bayesian", "best"].iter().map(|s| s.to_string()).collect();
    let bayes = bayes_method(report);
    let rows: Vec<Vec<String>> = report
        .populations
        .iter()
        .map(|p| {
            vec![
                p.sex.as_str().to_string(),
                p.country.clone(),
                fmt_opt(p.score(Method::Ggm), 5),
                fmt_opt(p.score(Method::Pspline), 5),
                fmt_opt(p.score(Method::Pclm), 5),
                fmt_opt(p.score(bayes), 5),
                p.best.map_or_else(|| "NA".to_string(), |m| m.as_str().to_string()),
            ]
        })
        .collect();
    csv_string(&header, &rows)
}

fn report_ages(report: &RunReport) -> Vec<u32> {
    let mut ages = report.config.ages.clone();
    ages.sort_unstable();
    ages.dedup();
    ages
}

/// Last-segment slope with its length, e.g. `-0.0195 (34)`, plus class and shading bin.
pub fn table2_csv(report: &RunReport) -> String {
    let ages = report_ages(report);
    let mut header = vec!["sex".to_string(), "country".to_string()];
    header.extend(ages.iter().map(|a| a.to_string()));
    header.extend(ages.iter().map(|a| format!("class_{a}")));
    header.extend(ages.iter().map(|a| format!("bin_{a}")));
    let rows: Vec<Vec<String>> = report
        .populations
        .iter()
        .map(|p| {
            let mut row = vec![p.sex.as_str().to_string(), p.country.clone()];
            let res: Vec<_> = ages.iter().map(|&a| p.age(a)).collect();
            row.extend(res.iter().map(|r| {
                r.map_or_else(|| "NA".to_string(), |r| format!("{:.4} ({})", r.crmi.slope_last, r.crmi.length))
            }));
            row.extend(res.iter().map(|r| r.map_or_else(|| "NA".to_string(), |r| r.crmi.classification.to_string())));
            row.extend(res.iter().map(|r| r.map_or_else(|| "NA".to_string(), |r| r.crmi.color_bin.to_string())));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// Last-segment pseudo-R² per reported age.
pub fn table3_csv(report: &RunReport) -> String {
    let ages = report_ages(report);
    let mut header = vec!["sex".to_string(), "country".to_string()];
    header.extend(ages.iter().map(|a| a.to_string()));
    let rows: Vec<Vec<String>> = report
        .populations
        .iter()
        .map(|p| {
            let mut row = vec![p.sex.as_str().to_string(), p.country.clone()];
            row.extend(ages.iter().map(|&a| fmt_opt(p.age(a).map(|r| r.crmi.pseudo_r2_last), 5)));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// One JSON object per line: smoother fits, scores, segmented fits and failures.
pub fn diagnostics_jsonl(report: &RunReport) -> String {
    let mut out = String::new();
    let mut push = |v: serde_json::Value| {
        out.push_str(&v.to_string());
        out.push('\n');
    };
    for p in &report.populations {
        if let Some(e) = &p.error {
            push(json!({"type": "population-failure", "country": p.country, "sex": p.sex, "error": e}));
        }
        push(json!({
            "type": "population",
            "country": p.country,
            "sex": p.sex,
            "window": p.window,
            "imputed_cells": p.imputed_cells,
            "missing_cells": p.missing_cells,
            "best": p.best,
        }));
        for m in &p.methods {
            match (&m.score, &m.error) {
                (Some(s), _) => push(json!({
                    "type": "score",
                    "country": p.country,
                    "sex": p.sex,
                    "method": m.method,
                    "rmse": s.rmse,
                    "n_cells": s.n_cells,
                    "excluded_cells": s.excluded_cells,
                })),
                (None, e) => push(json!({
                    "type": "smoother-failure",
                    "country": p.country,
                    "sex": p.sex,
                    "method": m.method,
                    "error": e,
                })),
            }
            for (year, d) in &m.diagnostics {
                push(json!({
                    "type": "smoother",
                    "country": p.country,
                    "sex": p.sex,
                    "method": m.method,
                    "year": year,
                    "diagnostics": d,
                }));
            }
        }
        for a in &p.ages {
            match &a.result {
                Some(r) => push(json!({
                    "type": "segmented",
                    "country": p.country,
                    "sex": p.sex,
                    "age": a.age,
                    "k": r.segmented.fit.k(),
                    "breakpoints": r.segmented.fit.breakpoints,
                    "check_loss_by_k": r.segmented.path.iter().map(|f| f.check_loss).collect::<Vec<_>>(),
                    "tests": r.segmented.tests,
                    "simple": r.simple,
                    "crmi": r.crmi,
                })),
                None => push(json!({
                    "type": "age-failure",
                    "country": p.country,
                    "sex": p.sex,
                    "age": a.age,
                    "error": a.error,
                })),
            }
        }
    }
    out
}

/// Plot data for one age: observed points, fitted polyline and the interval
/// band over the last segment.
pub fn plot_tsv(p: &PopulationResult, age: u32) -> Option<String> {
    let r = p.age(age)?;
    let fit = &r.segmented.fit;
    let start = fit.last_segment().start;
    let anchor = fit.predict(start);
    let mut out = String::from("year\tln_m\tfitted\tlower\tupper\n");
    for &(t, y) in &r.series.points {
        let (lo, hi) = if t >= start {
            let d = t - start;
            let (a, b) = (anchor + r.crmi.ci.0 * d, anchor + r.crmi.ci.1 * d);
            (format!("{:.6}", a.min(b)), format!("{:.6}", a.max(b)))
        } else {
            (String::new(), String::new())
        };
        out.push_str(&format!("{t}\t{y:.6}\t{:.6}\t{lo}\t{hi}\n", fit.predict(t)));
    }
    Some(out)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<FileDigest, PipelineError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| PipelineError::io(&path, e))?;
    Ok(FileDigest { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) })
}

/// Writes tables, diagnostics and plot files; returns their digests.
fn write_tables(report: &RunReport, dir: &Path) -> Result<Vec<FileDigest>, PipelineError> {
    let mut out = vec![
        write_file(dir, "table1.csv", &table1_csv(report))?,
        write_file(dir, "table2.csv", &table2_csv(report))?,
        write_file(dir, "table3.csv", &table3_csv(report))?,
        write_file(dir, "diagnostics.jsonl", &diagnostics_jsonl(report))?,
    ];
    for p in &report.populations {
        for a in &p.ages {
            if let Some(text) = plot_tsv(p, a.age) {
                let name = format!("plots/{}_{}_{}.tsv", p.country, p.sex.as_str(), a.age);
                out.push(write_file(dir, &name, &text)?);
            }
        }
    }
    Ok(out)
}

/// Writes every output of a run into the configured output directory.
pub fn write_outputs(report: &RunReport) -> Result<Manifest, PipelineError> {
    let cfg = &report.config;
    let dir = cfg.output_path();
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let results = serde_json::to_string_pretty(report).map_err(|source| PipelineError::Json { path: dir.join(RESULTS_FILE), source })?;
    let mut outputs = vec![write_file(&dir, RESULTS_FILE, &results)?];
    outputs.extend(write_tables(report, &dir)?);

    let mut inputs = Vec::new();
    for country in &cfg.countries {
        if let Some(paths) = cfg.data.get(country) {
            for p in [&paths.deaths, &paths.exposures] {
                let full = cfg.resolve(p);
                let bytes = std::fs::read(&full).map_err(|e| PipelineError::io(&full, e))?;
                inputs.push(FileDigest { path: p.display().to_string(), sha256: sha256_hex(&bytes) });
            }
        }
    }
    let config_dir = std::fs::canonicalize(&cfg.base_dir).unwrap_or_else(|_| cfg.base_dir.clone());
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.to_toml_string(),
        config_dir,
        config_hash: report.config_hash.clone(),
        seed: cfg.seed,
        jobs: cfg.jobs,
        inputs,
        results: RESULTS_FILE.to_string(),
        outputs,
        conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
        timings: report.timings.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| PipelineError::Json { path: dir.join(MANIFEST_FILE), source })?;
    write_file(&dir, MANIFEST_FILE, &text)?;
    Ok(manifest)
}

/// Re-renders the tables from a stored run without refitting. Files go next
/// to the manifest unless `out_dir` is given.
pub fn report_from_manifest(manifest_path: &Path, out_dir: Option<&Path>) -> Result<Vec<FileDigest>, PipelineError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| PipelineError::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: manifest_path.to_path_buf(), source })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let results_path = dir.join(&manifest.results);
    let results = std::fs::read_to_string(&results_path).map_err(|e| PipelineError::io(&results_path, e))?;
    let report: RunReport =
        serde_json::from_str(&results).map_err(|source| PipelineError::Json { path: results_path.clone(), source })?;
    write_tables(&report, out_dir.unwrap_or(dir))
}
