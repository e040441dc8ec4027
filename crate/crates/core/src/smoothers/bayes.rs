//! Per-age gamma posteriors under a flat prior on the death rate.
//!
//! With `D ~ Poisson(m·E)` and a uniform prior, the posterior of `m` is
//! Gamma(shape `d + 1`, rate `E`). Ages are treated independently.

use super::{check_exposures, Diagnostics, FitError, Method, SmoothedSeries};
use crate::ingest::MortalitySeries;
use crate::AGE_MIN;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BayesKind {
    Map,
    #[default]
    Mean,
    Median,
}

impl BayesKind {
    pub fn method(self) -> Method {
        match self {
            BayesKind::Map => Method::BayesMap,
            BayesKind::Mean => Method::BayesMean,
            BayesKind::Median => Method::BayesMedian,
        }
    }
}

impl std::str::FromStr for BayesKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(BayesKind::Map),
            "mean" => Ok(BayesKind::Mean),
            "median" => Ok(BayesKind::Median),
            _ => Err(format!("unknown bayes estimator '{s}' (expected map, mean or median)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPosterior {
    /// Shape, `d + 1`.
    pub kappa: f64,
    /// Rate, the exposure.
    pub lambda: f64,
}

impl GammaPosterior {
    pub fn pdf(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return if m == 0.0 && self.kappa == 1.0 { self.lambda } else { 0.0 };
        }
        (self.kappa * self.lambda.ln() + (self.kappa - 1.0) * m.ln() - self.lambda * m - ln_gamma(self.kappa)).exp()
    }

    pub fn cdf(&self, m: f64) -> f64 {
        if m <= 0.0 {
            0.0
        } else {
            gamma_lr(self.kappa, self.lambda * m)
        }
    }
}

pub fn bayes_posterior(deaths: f64, exposure: f64) -> Result<GammaPosterior, FitError> {
    if !(exposure > 0.0) || !exposure.is_finite() {
        return Err(FitError::InvalidInput(format!("exposure must be positive, got {exposure}")));
    }
    if !(deaths >= 0.0) || !deaths.is_finite() {
        return Err(FitError::InvalidInput(format!("death count must be non-negative, got {deaths}")));
    }
    Ok(GammaPosterior { kappa: deaths + 1.0, lambda: exposure })
}

/// Point estimate from the posterior. MAP is `d/E` and is zero when `d = 0`.
pub fn bayes_estimate(post: GammaPosterior, kind: BayesKind) -> f64 {
    match kind {
        BayesKind::Map => (post.kappa - 1.0) / post.lambda,
        BayesKind::Mean => post.kappa / post.lambda,
        BayesKind::Median => gamma_median_standard(post.kappa) / post.lambda,
    }
}

/// Median of Gamma(shape, rate 1), to about 1e-14 relative.
fn gamma_median_standard(shape: f64) -> f64 {
    if shape == 1.0 {
        return std::f64::consts::LN_2;
    }
    let lg = ln_gamma(shape);
    let f = |x: f64| gamma_lr(shape, x) - 0.5;
    let density = |x: f64| ((shape - 1.0) * x.ln() - x - lg).exp();

    let mut lo = 0.0;
    let mut hi = shape + 10.0 * shape.sqrt() + 10.0;
    // Chen & Rubin style starting point.
    let mut x = (shape - 1.0 / 3.0 + 8.0 / (405.0 * shape)).max(0.5 * shape).clamp(1e-300, hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = density(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Applies `bayes_estimate` independently at each age 85..=109.
///
/// A zero MAP is not a usable rate, so those cells fall back to the
/// posterior median and are listed in the diagnostics.
pub fn smooth_bayes(series: &MortalitySeries, kind: BayesKind) -> Result<SmoothedSeries, FitError> {
    check_exposures(series)?;
    let mut substituted = Vec::new();
    let mut rates = Vec::with_capacity(crate::N_AGES);
    for (i, (&d, &e)) in series.smoothing_deaths().iter().zip(series.smoothing_exposures()).enumerate() {
        let post = bayes_posterior(d, e)?;
        let mut r = bayes_estimate(post, kind);
        if r <= 0.0 {
            r = bayes_estimate(post, BayesKind::Median);
            substituted.push(AGE_MIN + i as u32);
        }
        rates.push(r);
    }
    SmoothedSeries::new(kind.method(), rates, Diagnostics::Bayes { kind, substituted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Sex, FIRST_AGE};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn posterior_parameters() {
        assert_eq!(bayes_posterior(0.0, 2.0).unwrap(), GammaPosterior { kappa: 1.0, lambda: 2.0 });
        assert_eq!(bayes_posterior(5.0, 100.0).unwrap(), GammaPosterior { kappa: 6.0, lambda: 100.0 });
        assert!(bayes_posterior(1.0, 0.0).is_err());
    }

    #[test]
    fn point_estimates() {
        let p = bayes_posterior(0.0, 2.0).unwrap();
        assert_eq!(bayes_estimate(p, BayesKind::Mean), 0.5);
        assert!(close(bayes_estimate(p, BayesKind::Median), std::f64::consts::LN_2 / 2.0, 1e-14));
        assert!((bayes_estimate(p, BayesKind::Median) - 0.34657).abs() < 1e-5);
        let q = bayes_posterior(5.0, 100.0).unwrap();
        assert_eq!(bayes_estimate(q, BayesKind::Map), 0.05);
        assert_eq!(bayes_estimate(p, BayesKind::Map), 0.0);
    }

    #[test]
    fn median_hits_half_mass() {
        for &k in &[1.0, 1.5, 2.0, 7.25, 51.0, 400.0, 12345.5] {
            let post = GammaPosterior { kappa: k, lambda: 3.0 };
            let m = bayes_estimate(post, BayesKind::Median);
            // bounded by the accuracy of the incomplete gamma itself
            assert!((post.cdf(m) - 0.5).abs() < 5e-13, "shape {k}: {}", post.cdf(m) - 0.5);
        }
    }

    #[test]
    fn ordering_map_median_mean() {
        for d in 0..40 {
            let post = bayes_posterior(f64::from(d), 7.0).unwrap();
            let map = bayes_estimate(post, BayesKind::Map);
            let med = bayes_estimate(post, BayesKind::Median);
            let mean = bayes_estimate(post, BayesKind::Mean);
            if d >= 1 {
                assert!(map < med && med < mean, "d={d}");
            } else {
                assert!(map <= med && med < mean);
            }
        }
    }

    fn series(deaths: Vec<f64>, exposures: Vec<f64>) -> MortalitySeries {
        let mut d = vec![500.0; 71];
        let mut e = vec![1000.0; 71];
        let s = (85 - FIRST_AGE) as usize;
        d[s..s + 25].copy_from_slice(&deaths);
        e[s..s + 25].copy_from_slice(&exposures);
        MortalitySeries::new("X", Sex::Female, 2000, d, e)
    }

    #[test]
    fn all_zero_deaths_unit_exposure() {
        let s = smooth_bayes(&series(vec![0.0; 25], vec![1.0; 25]), BayesKind::Mean).unwrap();
        assert!(s.rates.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn ages_are_independent() {
        let d: Vec<f64> = (0..25).map(|i| f64::from(i) * 3.0).collect();
        let e = vec![250.0; 25];
        let a = smooth_bayes(&series(d.clone(), e.clone()), BayesKind::Median).unwrap();
        let mut d2 = d;
        d2[5] += 17.0;
        let b = smooth_bayes(&series(d2, e), BayesKind::Median).unwrap();
        for i in 0..25 {
            if i == 5 {
                assert!(b.rates[i] > a.rates[i]);
            } else {
                assert_eq!(a.rates[i].to_bits(), b.rates[i].to_bits());
            }
        }
    }

    #[test]
    fn map_zero_falls_back_to_median() {
        let mut d = vec![4.0; 25];
        d[20] = 0.0;
        let s = smooth_bayes(&series(d, vec![10.0; 25]), BayesKind::Map).unwrap();
        assert_eq!(s.rates[0], 0.4);
        assert!(close(s.rates[20], std::f64::consts::LN_2 / 10.0, 1e-14));
        match s.diagnostics {
            Diagnostics::Bayes { substituted, .. } => assert_eq!(substituted, vec![105]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn tiny_exposure_gives_inverse() {
        let mut e = vec![10.0; 25];
        e[22] = 1e-3;
        let s = smooth_bayes(&series(vec![0.0; 25], e), BayesKind::Mean).unwrap();
        assert!(close(s.rate(107), 1000.0, 1e-12));
    }

    #[test]
    fn unimputed_zero_exposure_rejected() {
        let mut e = vec![10.0; 25];
        e[3] = 0.0;
        assert!(matches!(
            smooth_bayes(&series(vec![1.0; 25], e), BayesKind::Mean),
            Err(FitError::ExposureTooSmall { age: 88, .. })
        ));
    }
}
