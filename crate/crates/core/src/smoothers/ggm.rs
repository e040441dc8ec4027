//! Gamma-Gompertz-Makeham hazard and its Poisson maximum-likelihood fit.
//!
//! The hazard is
//!
//! ```text
//! mu(x) = alpha e^{beta x} / (1 + (gamma alpha / beta)(e^{beta x} - 1)) + c
//! ```
//!
//! with x measured from age 85, so `alpha` is the frailty-averaged hazard
//! at 85 (less the Makeham term). Shifting the origin leaves `beta`, `gamma`
//! and `c` unchanged.

use super::neldermead::{self, NelderMeadOptions};
use super::{check_exposures, Diagnostics, FitError, Method, SmoothedSeries};
use crate::ingest::MortalitySeries;
use crate::{AGE_MIN, N_AGES};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Age at which x = 0 in the hazard.
pub const AGE_ORIGIN: f64 = AGE_MIN as f64;

/// Starting values for the rate of aging, one multi-start each.
pub const BETA_STARTS: [f64; 5] = [0.08, 0.10, 0.12, 0.14, 0.16];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgmParams {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub gamma: f64,
}

impl GgmParams {
    pub fn new(alpha: f64, beta: f64, c: f64, gamma: f64) -> Result<Self, FitError> {
        let p = GgmParams { alpha, beta, c, gamma };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(FitError::InvalidInput(format!("invalid ΓGM parameters {p:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.alpha, self.beta, self.c, self.gamma].iter().all(|v| v.is_finite());
        finite && self.alpha > 0.0 && self.beta > 0.0 && self.c >= 0.0 && self.gamma >= 0.0
    }

    fn to_vec(self) -> [f64; 4] {
        [self.alpha, self.beta, self.c, self.gamma]
    }

    fn from_slice(v: &[f64]) -> Self {
        GgmParams { alpha: v[0], beta: v[1], c: v[2], gamma: v[3] }
    }
}

/// The frailty-averaged Gompertz part, without the Makeham term.
fn senescent(alpha: f64, beta: f64, gamma: f64, x: f64) -> f64 {
    let bx = beta * x;
    if bx > 0.0 {
        // Divide through by e^{bx}; stays finite as x grows when gamma > 0.
        let q = (-bx).exp();
        alpha / (q + (gamma * alpha / beta) * (1.0 - q))
    } else {
        let e = bx.exp();
        alpha * e / (1.0 + (gamma * alpha / beta) * (e - 1.0))
    }
}

/// Hazard at `x` years past the origin.
pub fn ggm_hazard(p: &GgmParams, x: f64) -> f64 {
    senescent(p.alpha, p.beta, p.gamma, x) + p.c
}

/// Poisson log-likelihood `sum(D ln mu - E mu)` over ages 85..=109 (x = 0..24).
pub fn ggm_loglik(p: &GgmParams, deaths: &[f64], exposures: &[f64]) -> f64 {
    loglik_raw(&p.to_vec(), deaths, exposures)
}

fn loglik_raw(v: &[f64], deaths: &[f64], exposures: &[f64]) -> f64 {
    let (alpha, beta, c, gamma) = (v[0], v[1], v[2], v[3]);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (i, (&d, &e)) in deaths.iter().zip(exposures).enumerate() {
        let mu = senescent(alpha, beta, gamma, i as f64) + c;
        let term = if d > 0.0 { d * mu.ln() - e * mu } else { -e * mu };
        // Kahan summation keeps the total accurate when terms are ~1e6.
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    if sum.is_nan() {
        f64::NEG_INFINITY
    } else {
        sum
    }
}

/// Analytic gradient of the log-likelihood in (alpha, beta, c, gamma).
fn gradient(v: &[f64], deaths: &[f64], exposures: &[f64]) -> [f64; 4] {
    let (alpha, beta, c, gamma) = (v[0], v[1], v[2], v[3]);
    let mut g = [0.0; 4];
    for (i, (&d, &e)) in deaths.iter().zip(exposures).enumerate() {
        let x = i as f64;
        let q = (beta * x).exp();
        let k = gamma * alpha / beta;
        let s = 1.0 + k * (q - 1.0);
        let gm = alpha * q / s;
        let mu = gm + c;
        let w = d / mu - e;
        let s2 = s * s;
        let d_alpha = q / s2;
        let ds_dbeta = gamma * alpha * (x * q / beta - (q - 1.0) / (beta * beta));
        let d_beta = (x * alpha * q * s - alpha * q * ds_dbeta) / s2;
        let d_gamma = -alpha * q * (alpha / beta) * (q - 1.0) / s2;
        g[0] += w * d_alpha;
        g[1] += w * d_beta;
        g[2] += w;
        g[3] += w * d_gamma;
    }
    g
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

fn softplus_inv(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp_m1().max(1e-300).ln()
    }
}

fn unpack(theta: &[f64]) -> [f64; 4] {
    [theta[0].exp(), theta[1].exp(), softplus(theta[2]), softplus(theta[3])]
}

#[derive(Debug, Clone)]
pub struct GgmFitOptions {
    pub beta_starts: Vec<f64>,
    pub nelder_mead: NelderMeadOptions,
    pub newton_iterations: usize,
}

impl Default for GgmFitOptions {
    fn default() -> Self {
        GgmFitOptions {
            beta_starts: BETA_STARTS.to_vec(),
            nelder_mead: NelderMeadOptions::default(),
            newton_iterations: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GgmFit {
    pub params: GgmParams,
    pub loglik: f64,
    pub series: SmoothedSeries,
}

pub fn fit_ggm(series: &MortalitySeries) -> Result<GgmFit, FitError> {
    check_exposures(series)?;
    fit_ggm_counts(series.smoothing_deaths(), series.smoothing_exposures(), &GgmFitOptions::default())
}

/// Fits the hazard to 25 death counts and exposures at ages 85..=109.
pub fn fit_ggm_counts(deaths: &[f64], exposures: &[f64], opts: &GgmFitOptions) -> Result<GgmFit, FitError> {
    if deaths.len() != N_AGES || exposures.len() != N_AGES {
        return Err(FitError::InvalidInput(format!("expected {N_AGES} ages")));
    }
    if exposures.iter().any(|&e| !(e >= super::MIN_EXPOSURE)) {
        return Err(FitError::InvalidInput("exposures must be positive".into()));
    }

    let alpha0 = initial_alpha(deaths, exposures);
    let objective = |theta: &[f64]| -loglik_raw(&unpack(theta), deaths, exposures);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_unconverged: Option<(Vec<f64>, f64)> = None;
    let mut converged_starts = 0;
    let mut evaluations = 0;
    for &beta0 in &opts.beta_starts {
        let mut theta = vec![alpha0.ln(), beta0.ln(), softplus_inv(1e-4), softplus_inv(0.05)];
        let mut f_prev = f64::INFINITY;
        let mut converged = false;
        // Restart from the previous optimum until a restart gains nothing.
        for _ in 0..20 {
            let r = neldermead::minimize(objective, &theta, &[0.2, 0.2, 1.0, 1.0], &opts.nelder_mead);
            evaluations += r.evals;
            theta = r.x;
            let gain = f_prev - r.f;
            f_prev = r.f;
            if r.converged && gain.is_finite() && gain <= opts.nelder_mead.f_rel_tol * r.f.abs() {
                converged = true;
                break;
            }
        }
        if converged {
            converged_starts += 1;
        }
        let value = -f_prev;
        let slot = if converged { &mut best } else { &mut best_unconverged };
        if value.is_finite() && slot.as_ref().is_none_or(|(_, b)| value > *b) {
            *slot = Some((unpack(&theta).to_vec(), value));
        }
    }

    let Some((start, _)) = best else {
        let (best, best_loglik) = match best_unconverged {
            Some((v, f)) => (Some(GgmParams::from_slice(&v)), f),
            None => (None, f64::NEG_INFINITY),
        };
        return Err(FitError::NoConvergence { best_loglik, best });
    };

    let polished = newton_polish(&start, deaths, exposures, opts.newton_iterations);
    let params = GgmParams::from_slice(&polished);
    if !params.is_valid() {
        return Err(FitError::NoConvergence { best_loglik: loglik_raw(&polished, deaths, exposures), best: Some(params) });
    }
    let loglik = loglik_raw(&polished, deaths, exposures);
    let rates: Vec<f64> = (0..N_AGES).map(|i| ggm_hazard(&params, i as f64)).collect();
    let series = SmoothedSeries::new(
        Method::Ggm,
        rates,
        Diagnostics::Ggm {
            params,
            loglik,
            age_origin: AGE_ORIGIN,
            starts_converged: converged_starts,
            evaluations,
        },
    )?;
    Ok(GgmFit { params, loglik, series })
}

fn initial_alpha(deaths: &[f64], exposures: &[f64]) -> f64 {
    // Pooled crude rate over 85..89 avoids a zero start when D_85 = 0.
    let d: f64 = deaths[..5].iter().sum();
    let e: f64 = exposures[..5].iter().sum();
    let r = (d + 0.5) / e;
    r.clamp(1e-6, 10.0)
}

/// Projected Newton ascent on (alpha, beta, c, gamma) with c, gamma >= 0.
fn newton_polish(start: &[f64], deaths: &[f64], exposures: &[f64], iterations: usize) -> Vec<f64> {
    let ll = |v: &[f64]| loglik_raw(v, deaths, exposures);
    let feasible = |v: &[f64]| v[0] > 0.0 && v[1] > 0.0 && v[2] >= 0.0 && v[3] >= 0.0;
    let mut p = start.to_vec();
    let mut f = ll(&p);

    for _ in 0..iterations {
        let g = gradient(&p, deaths, exposures);
        let active: Vec<bool> = (0..4).map(|j| j >= 2 && p[j] <= 0.0 && g[j] <= 0.0).collect();
        let free: Vec<usize> = (0..4).filter(|&j| !active[j]).collect();
        if free.is_empty() {
            break;
        }
        let h = hessian(&p, deaths, exposures);
        let nf = free.len();
        let hf = DMatrix::from_fn(nf, nf, |a, b| h[free[a]][free[b]]);
        let gf = DVector::from_iterator(nf, free.iter().map(|&j| g[j]));

        // Newton direction if -H is positive definite, otherwise scaled gradient.
        let dir = match (-hf.clone()).cholesky() {
            Some(ch) => ch.solve(&gf),
            None => {
                let scale: Vec<f64> = free.iter().map(|&j| p[j].abs().max(1e-4)).collect();
                let gn = gf.iter().zip(&scale).map(|(g, s)| g * s * s).collect::<Vec<_>>();
                let norm = gn.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let cap = 0.1 * scale.iter().cloned().fold(f64::INFINITY, f64::min);
                DVector::from_iterator(nf, gn.into_iter().map(|v| if norm > 0.0 { v * cap / norm } else { 0.0 }))
            }
        };

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = p.clone();
            for (k, &j) in free.iter().enumerate() {
                cand[j] += step * dir[k];
            }
            cand[2] = cand[2].max(0.0);
            cand[3] = cand[3].max(0.0);
            if feasible(&cand) {
                let fc = ll(&cand);
                if fc >= f {
                    let gain = fc - f;
                    p = cand;
                    f = fc;
                    accepted = gain > 1e-15 * f.abs();
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    p
}

fn hessian(p: &[f64], deaths: &[f64], exposures: &[f64]) -> [[f64; 4]; 4] {
    let mut h = [[0.0; 4]; 4];
    for j in 0..4 {
        let step = 1e-6 * p[j].abs().max(if j < 2 { 1e-3 } else { 1e-4 });
        let mut up = p.to_vec();
        let mut dn = p.to_vec();
        up[j] += step;
        dn[j] -= step;
        let gu = gradient(&up, deaths, exposures);
        let gd = gradient(&dn, deaths, exposures);
        for i in 0..4 {
            h[i][j] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    for i in 0..4 {
        for j in 0..i {
            let m = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = m;
            h[j][i] = m;
        }
    }
    h
}
