use super::MortalitySeries;
use crate::rng::{derive_seed, seeded};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Upper bound for imputed exposures: half a person observed for half a year.
pub const DEFAULT_U_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    pub u_max: f64,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions { u_max: DEFAULT_U_MAX }
    }
}

/// Replaces every exactly-zero exposure with a draw from `(0, u_max]`.
///
/// The stream is keyed on `seed` plus the series identity, so reruns give the
/// same values and different population-years get independent draws. Ages
/// with positive exposure are untouched; replaced ages are flagged.
pub fn impute_zero_exposure(series: &MortalitySeries, seed: u64, opts: ImputeOptions) -> MortalitySeries {
    let mut out = series.clone();
    if !out.exposures.contains(&0.0) {
        return out;
    }
    let year = series.year.to_string();
    let mut rng = seeded(derive_seed(seed, &[&series.country, series.sex.as_str(), &year]));
    for (e, flag) in out.exposures.iter_mut().zip(out.imputed.iter_mut()) {
        // Draw for every age so a given age's value does not depend on which
        // other ages happen to be zero.
        let u = opts.u_max * (1.0 - rng.random::<f64>());
        if *e == 0.0 {
            *e = u;
            *flag = true;
        }
    }
    out
}
