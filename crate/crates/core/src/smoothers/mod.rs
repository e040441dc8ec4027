//! Death-rate smoothers for ages 85–109.
//!
//! Four families are available and all of them return a [`SmoothedSeries`]
//! of 25 strictly positive rates:
//!
//! * [`ggm`]: gamma-Gompertz-Makeham hazard fitted by Poisson maximum likelihood.
//! * [`pspline`]: Poisson P-spline with a log-exposure offset.
//! * [`pclm`]: penalized composite link ungrouping of an open top age group.
//! * [`bayes`]: independent per-age gamma posteriors (MAP, mean or median).
//!
//! The two penalized smoothers share the IRLS engine in [`penalized`].

pub mod bayes;
pub mod bspline;
pub mod ggm;
pub mod neldermead;
pub mod pclm;
pub mod penalized;
pub mod pspline;

use crate::ingest::MortalitySeries;
use crate::{AGE_MIN, N_AGES};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use bayes::BayesKind;
pub use ggm::GgmParams;

/// Exposures below this are treated as unimputed zeros.
pub const MIN_EXPOSURE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ggm,
    Pspline,
    Pclm,
    BayesMap,
    BayesMean,
    BayesMedian,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ggm => "ggm",
            Method::Pspline => "pspline",
            Method::Pclm => "pclm",
            Method::BayesMap => "bayes-map",
            Method::BayesMean => "bayes-mean",
            Method::BayesMedian => "bayes-median",
        }
    }

    pub fn is_bayes(self) -> bool {
        matches!(self, Method::BayesMap | Method::BayesMean | Method::BayesMedian)
    }

    /// Position in the fixed tie-break order ggm, pspline, pclm, bayes.
    pub fn rank(self) -> u8 {
        match self {
            Method::Ggm => 0,
            Method::Pspline => 1,
            Method::Pclm => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "smoother", rename_all = "kebab-case")]
pub enum Diagnostics {
    Ggm {
        params: GgmParams,
        loglik: f64,
        /// Age subtracted from x before evaluating the hazard.
        age_origin: f64,
        starts_converged: usize,
        evaluations: usize,
    },
    Penalized {
        lambda: f64,
        deviance: f64,
        effective_dim: f64,
        bic: f64,
        iterations: usize,
        /// Penalized deviance after every IRLS iteration of the selected fit.
        history: Vec<f64>,
    },
    Bayes {
        kind: BayesKind,
        /// Ages where MAP was zero and the posterior median was used instead.
        substituted: Vec<u32>,
    },
}

/// Fitted death rates at ages 85..=109 for one population-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSeries {
    pub method: Method,
    pub rates: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl SmoothedSeries {
    pub(crate) fn new(method: Method, rates: Vec<f64>, diagnostics: Diagnostics) -> Result<Self, FitError> {
        debug_assert_eq!(rates.len(), N_AGES);
        if let Some(i) = rates.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(FitError::InvalidRate { age: AGE_MIN + i as u32, value: rates[i] });
        }
        Ok(SmoothedSeries { method, rates, diagnostics })
    }

    pub fn rate(&self, age: u32) -> f64 {
        self.rates[(age - AGE_MIN) as usize]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("exposure {value} at age {age} is not positive; impute zero exposures first")]
    ExposureTooSmall { age: u32, value: f64 },
    #[error("no start converged; best log-likelihood {best_loglik}")]
    NoConvergence { best_loglik: f64, best: Option<GgmParams> },
    #[error("IRLS did not converge for any penalty weight")]
    IrlsNoConvergence,
    #[error("penalized system is singular")]
    Singular,
    #[error("degenerate grouping: {single_bins} single-age bins before the open group (need at least {required})")]
    DegenerateGrouping { single_bins: usize, required: usize },
    #[error("fitted rate at age {age} is {value}")]
    InvalidRate { age: u32, value: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub(crate) fn check_exposures(series: &MortalitySeries) -> Result<(), FitError> {
    for (i, &e) in series.smoothing_exposures().iter().enumerate() {
        if !(e >= MIN_EXPOSURE) {
            return Err(FitError::ExposureTooSmall { age: AGE_MIN + i as u32, value: e });
        }
    }
    Ok(())
}
