use clap::{Parser, Subcommand};
use rmi_core::pipeline::{has_errors, report_from_manifest, run, validate_config, write_outputs, PipelineError, RunConfig, Severity};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Old-age mortality smoothing and rate-of-mortality-improvement estimates.
#[derive(Parser)]
#[command(name = "rmi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and its input files without fitting.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full procedure and write tables, diagnostics and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; overrides the configuration.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; overrides the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the tables of a finished run from its manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUN: u8 = 2;

fn load(path: &Path) -> Result<RunConfig, ExitCode> {
    RunConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let findings = validate_config(&cfg);
            for f in &findings {
                eprintln!("{f}");
            }
            if has_errors(&findings) {
                return ExitCode::from(EXIT_VALIDATION);
            }
            println!("ok: {} countries, {} sexes, ages {:?}", cfg.countries.len(), cfg.sexes.len(), cfg.ages);
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, jobs, out } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            if let Some(o) = out {
                cfg.output_dir = std::env::current_dir().map(|d| d.join(&o)).unwrap_or(o);
            }
            for f in validate_config(&cfg).iter().filter(|f| f.severity == Severity::Warning) {
                eprintln!("{f}");
            }
            let report = match run(&cfg) {
                Ok(r) => r,
                Err(PipelineError::Validation(findings)) => {
                    for f in findings {
                        eprintln!("{f}");
                    }
                    return ExitCode::from(EXIT_VALIDATION);
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUN);
                }
            };
            let manifest = match write_outputs(&report) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUN);
                }
            };
            let mut failed = false;
            for p in &report.populations {
                if let Some(e) = &p.error {
                    eprintln!("failed: {} {}: {e}", p.country, p.sex.as_str());
                    failed = true;
                }
                for a in p.ages.iter().filter_map(|a| a.error.as_ref().map(|e| (a.age, e))) {
                    eprintln!("failed: {} {} age {}: {}", p.country, p.sex.as_str(), a.0, a.1);
                    failed = true;
                }
            }
            println!("wrote {} files to {}", manifest.outputs.len() + 1, cfg.output_path().display());
            if failed { ExitCode::from(EXIT_RUN) } else { ExitCode::SUCCESS }
        }
        Command::Report { manifest, out } => match report_from_manifest(&manifest, out.as_deref()) {
            Ok(files) => {
                for f in files {
                    println!("{}  {}", f.sha256, f.path);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_RUN)
            }
        },
    }
}
