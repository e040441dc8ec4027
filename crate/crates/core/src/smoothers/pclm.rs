//! Penalized composite link ungrouping of the old-age death distribution.
//!
//! Single-age deaths are kept from age 40 up to the first age with fewer than
//! 100 deaths; everything from there on (including 110+) is pooled into one
//! open bin. A smooth latent single-age death distribution on 40..=109 is
//! then estimated so that its binned sums match the observed bins, and rates
//! at 85..=109 are latent deaths over exposure.

use super::bspline::difference_penalty;
use super::penalized::{CompositeProblem, PenalizedFit};
use super::pspline::{age_basis, diagnostics, solve, LambdaChoice, PENALTY_ORDER};
use super::{check_exposures, FitError, Method, SmoothedSeries};
use crate::ingest::{MortalitySeries, FIRST_AGE, OPEN_AGE};
use crate::{AGE_MIN, N_AGES};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Grouping starts at the first age with fewer deaths than this.
pub const GROUPING_THRESHOLD: f64 = 100.0;
/// Minimum number of single-age bins in front of the open group.
pub const MIN_SINGLE_BINS: usize = 5;
/// Last latent age.
pub const LATENT_MAX: u32 = 109;

const N_LATENT: usize = (LATENT_MAX - FIRST_AGE + 1) as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedCounts {
    /// Deaths at single ages `FIRST_AGE..open_from`.
    pub singles: Vec<f64>,
    /// Pooled deaths at `open_from` and above, including 110+.
    pub open: f64,
    /// First age of the open group.
    pub open_from: u32,
}

impl GroupedCounts {
    pub fn total(&self) -> f64 {
        self.singles.iter().sum::<f64>() + self.open
    }
}

/// Applies the "first age below 100 deaths" rule to ages 40..=109.
pub fn group_for_pclm(series: &MortalitySeries) -> GroupedCounts {
    let cut = (FIRST_AGE..OPEN_AGE).find(|&a| series.death(a) < GROUPING_THRESHOLD).unwrap_or(OPEN_AGE);
    let singles: Vec<f64> = (FIRST_AGE..cut).map(|a| series.death(a)).collect();
    let open: f64 = (cut..=OPEN_AGE).map(|a| series.death(a)).sum();
    GroupedCounts { singles, open, open_from: cut }
}

/// Observed bins and their 0/1 composition over latent ages 40..=109.
fn bins(grouped: &GroupedCounts) -> (Vec<f64>, DMatrix<f64>) {
    let mut y = grouped.singles.clone();
    let mut open_from = grouped.open_from;
    let mut open = grouped.open;
    if open_from > LATENT_MAX {
        if open > 0.0 {
            // 110+ deaths have no latent cell of their own; pool them with 109.
            open += y.pop().unwrap_or(0.0);
            open_from = LATENT_MAX;
        } else {
            open_from = OPEN_AGE;
        }
    }
    let n_single = y.len();
    let has_open = open_from <= LATENT_MAX;
    if has_open {
        y.push(open);
    }
    let mut c = DMatrix::zeros(y.len(), N_LATENT);
    for i in 0..n_single {
        c[(i, i)] = 1.0;
    }
    if has_open {
        for a in open_from..=LATENT_MAX {
            c[(n_single, (a - FIRST_AGE) as usize)] = 1.0;
        }
    }
    (y, c)
}

#[derive(Debug, Clone)]
pub struct PclmFit {
    pub fit: PenalizedFit,
    /// Observed bin counts in the order used by the composition matrix.
    pub observed: Vec<f64>,
    pub composition: DMatrix<f64>,
}

impl PclmFit {
    /// Latent deaths at a single age in 40..=109.
    pub fn latent_deaths(&self, age: u32) -> f64 {
        self.fit.latent[(age - FIRST_AGE) as usize]
    }
}

/// Ungroups `grouped` onto single ages 40..=109.
pub fn ungroup(grouped: &GroupedCounts, lambda: &LambdaChoice) -> Result<PclmFit, FitError> {
    if grouped.singles.len() < MIN_SINGLE_BINS {
        return Err(FitError::DegenerateGrouping { single_bins: grouped.singles.len(), required: MIN_SINGLE_BINS });
    }
    let (y, composition) = bins(grouped);
    let basis = age_basis(FIRST_AGE, LATENT_MAX);
    let penalty = difference_penalty(basis.ncols(), PENALTY_ORDER);
    let problem = CompositeProblem { y: &y, composition: &composition, basis: &basis, penalty: &penalty };
    let fit = solve(&problem, lambda)?;
    Ok(PclmFit { fit, observed: y, composition })
}

/// Rates at 85..=109 from the ungrouped deaths and the given exposures.
pub fn fit_pclm(grouped: &GroupedCounts, exposures: &[f64]) -> Result<SmoothedSeries, FitError> {
    if exposures.len() != N_AGES {
        return Err(FitError::InvalidInput(format!("expected {N_AGES} exposures")));
    }
    if let Some(i) = exposures.iter().position(|&e| !(e >= super::MIN_EXPOSURE)) {
        return Err(FitError::ExposureTooSmall { age: AGE_MIN + i as u32, value: exposures[i] });
    }
    let pf = ungroup(grouped, &LambdaChoice::default())?;
    let rates: Vec<f64> = (0..N_AGES).map(|i| pf.latent_deaths(AGE_MIN + i as u32) / exposures[i]).collect();
    SmoothedSeries::new(Method::Pclm, rates, diagnostics(&pf.fit))
}

/// Groups and ungroups one population-year.
pub fn smooth_pclm(series: &MortalitySeries) -> Result<SmoothedSeries, FitError> {
    check_exposures(series)?;
    fit_pclm(&group_for_pclm(series), series.smoothing_exposures())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Sex;

    fn series_with(deaths: impl Fn(u32) -> f64) -> MortalitySeries {
        let d: Vec<f64> = (FIRST_AGE..=OPEN_AGE).map(&deaths).collect();
        MortalitySeries::new("X", Sex::Female, 2000, d, vec![1000.0; 71])
    }

    #[test]
    fn cut_at_first_age_below_threshold() {
        let s = series_with(|a| if a < 97 { 150.0 } else if a == 97 { 85.0 } else { 40.0 });
        let g = group_for_pclm(&s);
        assert_eq!(g.open_from, 97);
        assert_eq!(g.singles.len(), 57);
        assert_eq!(g.open, 85.0 + 40.0 * 13.0);
        let raw: f64 = s.deaths.iter().sum();
        assert_eq!(g.total(), raw);
    }

    #[test]
    fn everything_grouped_is_degenerate() {
        let s = series_with(|a| if a == 40 { 50.0 } else { 500.0 });
        let g = group_for_pclm(&s);
        assert_eq!(g.open_from, 40);
        assert!(g.singles.is_empty());
        assert!(matches!(
            fit_pclm(&g, &[1.0; 25]),
            Err(FitError::DegenerateGrouping { single_bins: 0, required: 5 })
        ));
    }

    #[test]
    fn no_small_count_means_cut_at_110() {
        let s = series_with(|_| 200.0);
        let g = group_for_pclm(&s);
        assert_eq!(g.open_from, 110);
        assert_eq!(g.singles.len(), 70);
        assert_eq!(g.open, 200.0);
        let (y, c) = bins(&g);
        // 110+ pooled with 109
        assert_eq!(y.len(), 70);
        assert_eq!(y[69], 400.0);
        assert_eq!(c.row(69).sum(), 1.0);
    }

    #[test]
    fn empty_open_group_gives_identity_composition() {
        let g = GroupedCounts { singles: vec![300.0; 70], open: 0.0, open_from: 110 };
        let (y, c) = bins(&g);
        assert_eq!(y.len(), 70);
        assert_eq!(c, DMatrix::identity(70, 70));
    }

    #[test]
    fn open_bin_spans_cut_to_109() {
        let g = GroupedCounts { singles: vec![300.0; 60], open: 500.0, open_from: 100 };
        let (y, c) = bins(&g);
        assert_eq!(y.len(), 61);
        assert_eq!(c.row(60).sum(), 10.0);
        assert_eq!(c[(60, 60)], 1.0);
        assert_eq!(c[(60, 69)], 1.0);
        assert_eq!(c[(60, 59)], 0.0);
    }
}
