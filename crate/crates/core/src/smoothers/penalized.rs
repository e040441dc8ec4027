//! Penalized composite link model fitted by IRLS.
//!
//! Observed counts `y` (length n) are Poisson with means `mu = C gamma`,
//! where the latent vector `gamma = exp(B theta)` lives on a finer grid of
//! length m and `C` (n × m) is the composition matrix. A Poisson P-spline is
//! the special case `C = diag(exposure)`; ungrouping uses a 0/1 `C` that sums
//! latent cells into bins.
//!
//! Each iteration solves
//!
//! ```text
//! (X' W X + lambda P) theta_new = X' W (y - mu + X theta),   X = C diag(gamma) B,  W = diag(1/mu)
//! ```
//!
//! with step halving so that the penalized deviance never increases.

use super::FitError;
use nalgebra::{DMatrix, DVector};

const MAX_ITER: usize = 200;
const ETA_MAX: f64 = 700.0;

/// log10 lambda grid: 41 points from -4 to 4.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..41).map(|i| 10f64.powf(-4.0 + 0.2 * f64::from(i))).collect()
}

pub struct CompositeProblem<'a> {
    pub y: &'a [f64],
    pub composition: &'a DMatrix<f64>,
    pub basis: &'a DMatrix<f64>,
    pub penalty: &'a DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub lambda: f64,
    pub theta: DVector<f64>,
    /// Latent values `exp(B theta)`.
    pub latent: DVector<f64>,
    /// Fitted observation means `C latent`.
    pub fitted: DVector<f64>,
    pub deviance: f64,
    pub effective_dim: f64,
    pub bic: f64,
    pub iterations: usize,
    /// Penalized deviance at the start and after each iteration.
    pub history: Vec<f64>,
}

impl CompositeProblem<'_> {
    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn validate(&self) -> Result<(), FitError> {
        let (n, m, p) = (self.y.len(), self.basis.nrows(), self.basis.ncols());
        if self.composition.nrows() != n || self.composition.ncols() != m {
            return Err(FitError::InvalidInput("composition matrix shape mismatch".into()));
        }
        if self.penalty.nrows() != p || self.penalty.ncols() != p {
            return Err(FitError::InvalidInput("penalty shape mismatch".into()));
        }
        if self.y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FitError::InvalidInput("counts must be finite and non-negative".into()));
        }
        for i in 0..n {
            let row = self.composition.row(i);
            if row.iter().any(|v| *v < 0.0) || !row.iter().any(|v| *v > 0.0) {
                return Err(FitError::InvalidInput(format!("composition row {i} must be non-negative and non-empty")));
            }
        }
        Ok(())
    }

    /// Crude start: spread each bin's count evenly over its cells, then
    /// project the log onto the basis.
    pub fn initial_theta(&self) -> Result<DVector<f64>, FitError> {
        let (n, m) = (self.y.len(), self.basis.nrows());
        let mut acc = vec![0.0; m];
        let mut cnt = vec![0usize; m];
        for i in 0..n {
            let row = self.composition.row(i);
            let total: f64 = row.iter().sum();
            for j in 0..m {
                if row[j] > 0.0 {
                    acc[j] += (self.y[i] + 0.5) / total;
                    cnt[j] += 1;
                }
            }
        }
        let target = DVector::from_fn(m, |j, _| if cnt[j] > 0 { (acc[j] / cnt[j] as f64).ln() } else { 0.0 });
        let bt = self.basis.transpose();
        let p = self.basis.ncols();
        let a = &bt * self.basis + self.penalty * 1e-6 + DMatrix::<f64>::identity(p, p) * 1e-10;
        a.cholesky().map(|ch| ch.solve(&(bt * target))).ok_or(FitError::Singular)
    }

    fn latent(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.basis * theta).map(|eta| eta.min(ETA_MAX).exp())
    }

    fn deviance(&self, mu: &DVector<f64>) -> f64 {
        let mut dev = 0.0;
        for (y, m) in self.y.iter().zip(mu.iter()) {
            dev += if *y > 0.0 { y * (y / m).ln() - (y - m) } else { *m };
        }
        2.0 * dev
    }

    fn penalized_deviance(&self, theta: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>, DVector<f64>) {
        let latent = self.latent(theta);
        let mu = self.composition * &latent;
        let pen = theta.dot(&(self.penalty * theta));
        (self.deviance(&mu) + lambda * pen, latent, mu)
    }

    /// Working design `C diag(latent) B` and the weighted cross product `X'WX`.
    fn working(&self, latent: &DVector<f64>, mu: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m, p) = (self.y.len(), self.basis.nrows(), self.basis.ncols());
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..m {
                let cij = self.composition[(i, j)];
                if cij == 0.0 {
                    continue;
                }
                let w = cij * latent[j];
                for k in 0..p {
                    let b = self.basis[(j, k)];
                    if b != 0.0 {
                        x[(i, k)] += w * b;
                    }
                }
            }
        }
        let mut xtwx = DMatrix::zeros(p, p);
        let mut nz = Vec::with_capacity(p);
        for i in 0..n {
            nz.clear();
            nz.extend((0..p).filter(|&k| x[(i, k)] != 0.0));
            let w = 1.0 / mu[i];
            for &a in &nz {
                let xa = x[(i, a)] * w;
                for &b in &nz {
                    xtwx[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        (x, xtwx)
    }

    /// IRLS at a fixed penalty weight.
    pub fn fit_fixed(&self, lambda: f64, start: Option<&DVector<f64>>) -> Result<PenalizedFit, FitError> {
        self.validate()?;
        let mut theta = match start {
            Some(t) => t.clone(),
            None => self.initial_theta()?,
        };
        let (mut pd, mut latent, mut mu) = self.penalized_deviance(&theta, lambda);
        if !pd.is_finite() {
            return Err(FitError::IrlsNoConvergence);
        }
        let mut history = vec![pd];
        let mut converged = false;
        let mut iterations = 0;

        for _ in 0..MAX_ITER {
            iterations += 1;
            let (x, xtwx) = self.working(&latent, &mu);
            let resid = DVector::from_fn(self.n_obs(), |i, _| (self.y[i] - mu[i]) / mu[i]);
            let rhs = x.transpose() * resid + &xtwx * &theta;
            let a = &xtwx + self.penalty * lambda;
            let proposal = a.cholesky().ok_or(FitError::Singular)?.solve(&rhs);

            // Step halving keeps the penalized deviance monotone.
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = &theta + (&proposal - &theta) * step;
                let (pd_c, lat_c, mu_c) = self.penalized_deviance(&cand, lambda);
                if pd_c.is_finite() && pd_c <= pd {
                    accepted = Some((cand, pd_c, lat_c, mu_c));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, pd_c, lat_c, mu_c)) = accepted else {
                // No decrease along the Newton direction: at the optimum up to rounding.
                converged = true;
                break;
            };
            let dtheta = (&cand - &theta).amax();
            let gain = pd - pd_c;
            theta = cand;
            latent = lat_c;
            mu = mu_c;
            pd = pd_c;
            history.push(pd);
            if gain <= 1e-10 * (pd.abs() + 1e-6) || dtheta < 1e-9 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(FitError::IrlsNoConvergence);
        }

        let (_, xtwx) = self.working(&latent, &mu);
        let a = &xtwx + self.penalty * lambda;
        let solved = a.cholesky().ok_or(FitError::Singular)?.solve(&xtwx);
        let effective_dim = solved.trace();
        let deviance = self.deviance(&mu);
        let bic = deviance + (self.n_obs() as f64).ln() * effective_dim;
        Ok(PenalizedFit { lambda, theta, latent, fitted: mu, deviance, effective_dim, bic, iterations, history })
    }

    /// Fits every grid value (largest first, warm-started) and keeps the
    /// smallest BIC. Grid points where IRLS fails are skipped.
    pub fn fit_bic(&self, grid: &[f64]) -> Result<PenalizedFit, FitError> {
        self.validate()?;
        let mut lambdas = grid.to_vec();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let mut best: Option<PenalizedFit> = None;
        let mut warm: Option<DVector<f64>> = None;
        let mut last_err = FitError::IrlsNoConvergence;
        for &lambda in &lambdas {
            match self.fit_fixed(lambda, warm.as_ref()) {
                Ok(fit) => {
                    warm = Some(fit.theta.clone());
                    if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
                        best = Some(fit);
                    }
                }
                Err(e) => last_err = e,
            }
        }
        best.ok_or(last_err)
    }
}
