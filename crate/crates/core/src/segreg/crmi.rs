use super::segmented::qr_fit;
use super::{rounding_floor, LogRateSeries, SegmentedFit, SegregError};
use crate::rng::{derive_seed, seeded};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Improvement,
    Stagnation,
    Deterioration,
}

impl Classification {
    /// Improvement when the whole interval is below zero, deterioration when
    /// it is above, stagnation otherwise.
    pub fn from_ci(lo: f64, hi: f64) -> Self {
        if hi < 0.0 {
            Classification::Improvement
        } else if lo > 0.0 {
            Classification::Deterioration
        } else {
            Classification::Stagnation
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Improvement => "improvement",
            Classification::Stagnation => "stagnation",
            Classification::Deterioration => "deterioration",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shading bins for the last-segment pseudo-R².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorBin {
    From90,
    From80,
    From70,
    From60,
    Below60,
}

impl ColorBin {
    pub fn from_r2(r2: f64) -> Self {
        if r2 >= 0.9 {
            ColorBin::From90
        } else if r2 >= 0.8 {
            ColorBin::From80
        } else if r2 >= 0.7 {
            ColorBin::From70
        } else if r2 >= 0.6 {
            ColorBin::From60
        } else {
            ColorBin::Below60
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ColorBin::From90 => ">=0.9",
            ColorBin::From80 => "0.8-0.89",
            ColorBin::From70 => "0.7-0.79",
            ColorBin::From60 => "0.6-0.69",
            ColorBin::Below60 => "<0.6",
        }
    }
}

impl fmt::Display for ColorBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrmiOptions {
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for CrmiOptions {
    fn default() -> Self {
        Self { reps: 1000, level: 0.95, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmiResult {
    pub slope_last: f64,
    /// Length of the last segment in whole years.
    #[serde(rename = "L")]
    pub length: i64,
    pub ci: (f64, f64),
    pub classification: Classification,
    pub pseudo_r2_last: f64,
    pub color_bin: ColorBin,
    pub breakpoint_last: Option<f64>,
    pub k: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) }
}

/// `1 - V(fit) / V(median)` on the last segment's points, clamped to `[0, 1]`.
pub fn pseudo_r2_last_segment(fit: &SegmentedFit, series: &LogRateSeries) -> Result<f64, SegregError> {
    let pts = fit.last_segment_points(&series.points);
    if pts.len() < 3 {
        return Err(SegregError::TooFewPoints { needed: 3, got: pts.len() });
    }
    let mut num: f64 = pts.iter().map(|&(t, y)| (y - fit.predict(t)).abs()).sum();
    if num <= rounding_floor(pts) {
        num = 0.0;
    }
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let med = median(&mut ys);
    let den: f64 = ys.iter().map(|y| (y - med).abs()).sum();
    if den == 0.0 {
        return if num == 0.0 { Ok(1.0) } else { Err(SegregError::ZeroDenominator) };
    }
    Ok((1.0 - num / den).clamp(0.0, 1.0))
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval for the median-regression slope from a pairs bootstrap.
pub fn bootstrap_slope_ci(points: &[(f64, f64)], opts: &CrmiOptions) -> Result<(f64, f64), SegregError> {
    let n = points.len();
    if n < 3 {
        return Err(SegregError::TooFewPoints { needed: 3, got: n });
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(SegregError::DegenerateDesign);
    }
    let mut slopes = Vec::with_capacity(opts.reps);
    let mut sample = Vec::with_capacity(n);
    for r in 0..opts.reps {
        let mut rng = seeded(derive_seed(opts.seed, &["bootstrap", &r.to_string()]));
        loop {
            sample.clear();
            sample.extend((0..n).map(|_| points[rng.random_range(0..n)]));
            if sample.iter().any(|p| p.0 != sample[0].0) {
                break;
            }
        }
        slopes.push(qr_fit(&sample, 0.5)?.b);
    }
    slopes.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - opts.level);
    Ok((quantile_sorted(&slopes, tail), quantile_sorted(&slopes, 1.0 - tail)))
}

/// Summary of the last linear segment: slope, length, interval, class and fit quality.
pub fn crmi(fit: &SegmentedFit, series: &LogRateSeries, opts: &CrmiOptions) -> Result<CrmiResult, SegregError> {
    let (first, last) = match (series.points.first(), series.points.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(SegregError::TooFewPoints { needed: 3, got: 0 }),
    };
    let breakpoint_last = fit.breakpoints.last().copied();
    let length = (last - breakpoint_last.map_or(first, f64::floor)).round() as i64;
    let pts = fit.last_segment_points(&series.points);
    let ci = bootstrap_slope_ci(pts, opts)?;
    let pseudo_r2_last = pseudo_r2_last_segment(fit, series)?;
    Ok(CrmiResult {
        slope_last: fit.slope_last(),
        length,
        ci,
        classification: Classification::from_ci(ci.0, ci.1),
        pseudo_r2_last,
        color_bin: ColorBin::from_r2(pseudo_r2_last),
        breakpoint_last,
        k: fit.k(),
    })
}
