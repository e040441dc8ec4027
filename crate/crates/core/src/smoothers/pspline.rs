//! Poisson P-spline smoothing of deaths with a log-exposure offset.

use super::bspline::{bspline_basis, difference_penalty};
use super::penalized::{default_lambda_grid, CompositeProblem, PenalizedFit};
use super::{check_exposures, Diagnostics, FitError, Method, SmoothedSeries};
use crate::ingest::MortalitySeries;
use crate::{AGE_MAX, AGE_MIN, N_AGES};
use nalgebra::{DMatrix, DVector};

pub const DEGREE: usize = 3;
pub const PENALTY_ORDER: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    /// Minimize BIC over the given grid.
    Bic(Vec<f64>),
    Fixed(f64),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Bic(default_lambda_grid())
    }
}

/// Cubic basis with a knot at every integer age from `lo` to `hi`.
pub fn age_basis(lo: u32, hi: u32) -> DMatrix<f64> {
    let ages: Vec<f64> = (lo..=hi).map(f64::from).collect();
    bspline_basis(&ages, f64::from(lo), f64::from(hi), (hi - lo) as usize, DEGREE)
}

pub(crate) fn solve(problem: &CompositeProblem<'_>, lambda: &LambdaChoice) -> Result<PenalizedFit, FitError> {
    match lambda {
        LambdaChoice::Bic(grid) => problem.fit_bic(grid),
        LambdaChoice::Fixed(l) => problem.fit_fixed(*l, None),
    }
}

pub(crate) fn diagnostics(fit: &PenalizedFit) -> Diagnostics {
    Diagnostics::Penalized {
        lambda: fit.lambda,
        deviance: fit.deviance,
        effective_dim: fit.effective_dim,
        bic: fit.bic,
        iterations: fit.iterations,
        history: fit.history.clone(),
    }
}

pub fn fit_pspline(series: &MortalitySeries) -> Result<SmoothedSeries, FitError> {
    check_exposures(series)?;
    let fit = fit_pspline_counts(series.smoothing_deaths(), series.smoothing_exposures(), &LambdaChoice::default())?;
    SmoothedSeries::new(Method::Pspline, fit.latent.iter().copied().collect(), diagnostics(&fit))
}

/// Fits deaths at ages 85..=109; `latent` in the result holds the rates.
pub fn fit_pspline_counts(deaths: &[f64], exposures: &[f64], lambda: &LambdaChoice) -> Result<PenalizedFit, FitError> {
    if deaths.len() != N_AGES || exposures.len() != N_AGES {
        return Err(FitError::InvalidInput(format!("expected {N_AGES} ages")));
    }
    let basis = age_basis(AGE_MIN, AGE_MAX);
    let composition = DMatrix::from_diagonal(&DVector::from_column_slice(exposures));
    let penalty = difference_penalty(basis.ncols(), PENALTY_ORDER);
    let problem = CompositeProblem { y: deaths, composition: &composition, basis: &basis, penalty: &penalty };
    solve(&problem, lambda)
}
