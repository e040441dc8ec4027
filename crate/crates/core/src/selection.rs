//! Goodness-of-fit scoring of the smoothers and choice of the best one.

use crate::ingest::{MortalitySeries, Sex};
use crate::smoothers::{Method, SmoothedSeries};
use crate::{AGE_MIN, N_AGES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("no cells to score")]
    Empty,
    #[error("fitted surface has {fitted} years but {observed} were observed")]
    ShapeMismatch { fitted: usize, observed: usize },
    #[error("non-finite value at age {age}, year {year}")]
    NonFinite { age: u32, year: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub rmse: f64,
    pub n_cells: usize,
    /// Cells left out because the source file had no value for them.
    pub excluded_cells: usize,
}

impl MethodScore {
    pub fn new(method: Method, rmse: f64) -> Self {
        Self { method, rmse, n_cells: 1, excluded_cells: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestModelChoice {
    pub country: String,
    pub sex: Sex,
    pub best: Method,
    pub scores: Vec<MethodScore>,
}

/// Root-mean-square error on the rate scale over cells with an observation.
pub fn rmse_values(fitted: &[f64], observed: &[Option<f64>]) -> Result<(f64, usize), ScoreError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, o) in fitted.iter().zip(observed) {
        if let Some(o) = o {
            let d = f - o;
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(ScoreError::Empty);
    }
    Ok(((sum / n as f64).sqrt(), n))
}

/// Scores one method's smoothed rates against the raw rates `D / E`
/// (imputed exposures included) over all years of a population.
pub fn rmse(method: Method, fitted: &[SmoothedSeries], observed: &[MortalitySeries]) -> Result<MethodScore, ScoreError> {
    if fitted.len() != observed.len() {
        return Err(ScoreError::ShapeMismatch { fitted: fitted.len(), observed: observed.len() });
    }
    let mut f_all = Vec::with_capacity(fitted.len() * N_AGES);
    let mut o_all = Vec::with_capacity(fitted.len() * N_AGES);
    for (f, o) in fitted.iter().zip(observed) {
        let raw = o.raw_rates();
        for (i, (&m, r)) in f.rates.iter().zip(raw).enumerate() {
            if !m.is_finite() || r.is_some_and(|v| !v.is_finite()) {
                return Err(ScoreError::NonFinite { age: AGE_MIN + i as u32, year: o.year });
            }
            f_all.push(m);
            o_all.push(r);
        }
    }
    let excluded_cells = o_all.iter().filter(|o| o.is_none()).count();
    let (value, n_cells) = rmse_values(&f_all, &o_all)?;
    Ok(MethodScore { method, rmse: value, n_cells, excluded_cells })
}

/// Method with the smallest finite RMSE; ties go to the earlier method in
/// the order ΓGM, P-spline, PCLM, Bayesian.
pub fn select_best(scores: &[MethodScore]) -> Option<Method> {
    scores
        .iter()
        .filter(|s| s.rmse.is_finite())
        .min_by(|a, b| a.rmse.total_cmp(&b.rmse).then(a.method.rank().cmp(&b.method.rank())))
        .map(|s| s.method)
}

pub fn choose(country: &str, sex: Sex, scores: Vec<MethodScore>) -> Option<BestModelChoice> {
    let best = select_best(&scores)?;
    Some(BestModelChoice { country: country.to_string(), sex, best, scores })
}
