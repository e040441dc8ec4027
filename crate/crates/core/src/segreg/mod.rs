//! Median regression of log death rates over calendar time: simple lines,
//! continuous piecewise-linear fits with unknown breakpoints, likelihood-ratio
//! model selection, and the last-segment improvement summary (CRMI).

mod crmi;
pub mod lad;
mod segmented;

pub use crmi::{bootstrap_slope_ci, crmi, pseudo_r2_last_segment, Classification, ColorBin, CrmiOptions, CrmiResult};
pub use segmented::{
    fit_k_breaks, fit_segmented, fit_segmented_ols, fit_segmented_qr, lr_test, qr_fit, Criterion, LrTest, ModelSelection,
    QrLine, SegmentedOptions, SegmentedSelection, DEFAULT_MAX_BREAKS, DEFAULT_MIN_SEG,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegregError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate design: all time values are equal")]
    DegenerateDesign,
    #[error("only the median (tau = 0.5) is supported, got {0}")]
    UnsupportedQuantile(f64),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("restricted model must have fewer breakpoints than the full model ({restricted} vs {full})")]
    NotNested { restricted: usize, full: usize },
    #[error("pseudo-R2 undefined: constant response with non-zero residuals")]
    ZeroDenominator,
}

/// `ln m_x(t)` at one age over calendar years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRateSeries {
    pub age: u32,
    /// `(year, ln rate)` with strictly increasing years.
    pub points: Vec<(f64, f64)>,
}

impl LogRateSeries {
    pub fn new(age: u32, points: Vec<(f64, f64)>) -> Result<Self, SegregError> {
        if let Some(w) = points.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(SegregError::InvalidSeries(format!("years not strictly increasing at {}", w[1].0)));
        }
        if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
            return Err(SegregError::InvalidSeries("non-finite value".into()));
        }
        Ok(Self { age, points })
    }

    /// Log of positive rates; fails on non-positive or non-finite rates.
    pub fn from_rates(age: u32, years: &[i32], rates: &[f64]) -> Result<Self, SegregError> {
        if years.len() != rates.len() {
            return Err(SegregError::InvalidSeries("years and rates differ in length".into()));
        }
        let points = years.iter().zip(rates).map(|(&t, &m)| (f64::from(t), m.ln())).collect();
        Self::new(age, points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Absolute-residual sum below which a fit counts as exact.
pub(crate) fn rounding_floor(points: &[(f64, f64)]) -> f64 {
    let scale = points.iter().fold(1.0f64, |m, p| m.max(p.1.abs()));
    1e-11 * points.len() as f64 * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub intercept: f64,
    pub slope: f64,
}

/// Continuous piecewise-linear fit `y = c0 + c1 (t - origin) + sum_h c_{h+1} (t - b_h)+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedFit {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
    pub continuous: bool,
    /// `sum |y - fit| / 2` over all points.
    pub check_loss: f64,
    /// Value of the fitting criterion (check loss or residual sum of squares).
    pub objective: f64,
    pub criterion: Criterion,
    pub origin: f64,
    pub coefficients: Vec<f64>,
    pub n_points: usize,
}

impl SegmentedFit {
    pub(crate) fn from_hinge(
        points: &[(f64, f64)],
        breakpoints: Vec<f64>,
        coefficients: Vec<f64>,
        objective: f64,
        criterion: Criterion,
    ) -> Self {
        let origin = points[0].0;
        let end = points[points.len() - 1].0;
        let mut segments = Vec::with_capacity(breakpoints.len() + 1);
        let mut slope = coefficients[1];
        let mut intercept = coefficients[0] - coefficients[1] * origin;
        let mut start = origin;
        for (h, &b) in breakpoints.iter().enumerate() {
            segments.push(Segment { start, end: b, intercept, slope });
            slope += coefficients[2 + h];
            intercept -= coefficients[2 + h] * b;
            start = b;
        }
        segments.push(Segment { start, end, intercept, slope });
        let mut fit = Self {
            breakpoints,
            segments,
            continuous: true,
            check_loss: 0.0,
            objective,
            criterion,
            origin,
            coefficients,
            n_points: points.len(),
        };
        fit.check_loss = 0.5 * points.iter().map(|&(t, y)| (y - fit.predict(t)).abs()).sum::<f64>();
        // An interpolating fit leaves residuals at rounding level; call them zero
        // so exact data gives exact zeros downstream.
        let floor = rounding_floor(points);
        if fit.check_loss <= floor {
            fit.check_loss = 0.0;
            fit.objective = 0.0;
        }
        fit
    }

    pub fn k(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn predict(&self, t: f64) -> f64 {
        let c = &self.coefficients;
        let mut v = c[0] + c[1] * (t - self.origin);
        for (h, &b) in self.breakpoints.iter().enumerate() {
            v += c[2 + h] * (t - b).max(0.0);
        }
        v
    }

    pub fn last_segment(&self) -> &Segment {
        self.segments.last().expect("a fit has at least one segment")
    }

    pub fn slope_last(&self) -> f64 {
        self.last_segment().slope
    }

    /// Points belonging to the last segment (the kink point included).
    pub fn last_segment_points<'a>(&self, points: &'a [(f64, f64)]) -> &'a [(f64, f64)] {
        let from = self.last_segment().start;
        let i = points.partition_point(|p| p.0 < from);
        &points[i..]
    }
}
