//! Exact weighted least-absolute-deviation regression.
//!
//! Minimizes `sum_i w_i |y_i - x_i' beta| / 2` by descending along the edges
//! of the problem's polyhedral graph: every iterate is a vertex where `p`
//! observations (the basis) are fitted exactly. From a vertex, moving the
//! fit at one basis observation while holding the others gives an edge; the
//! objective along an edge is convex piecewise linear and its minimizer is a
//! weighted median of the residual-to-slope ratios. The loop stops when no
//! edge descends, which for a non-degenerate vertex is a global optimum.
//! Degenerate stalls are resolved by re-solving a slightly perturbed copy
//! and polishing on the original data.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum LadError {
    /// The design has rank below its column count.
    RankDeficient,
    Shape(String),
}

/// Rows of a dense design matrix with `p` columns stored row-major.
#[derive(Debug, Clone)]
pub struct Design<'a> {
    pub x: &'a [f64],
    pub p: usize,
}

impl Design<'_> {
    fn n(&self) -> usize {
        self.x.len() / self.p
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

#[derive(Debug, Clone)]
pub struct LadSolution {
    pub beta: Vec<f64>,
    /// `sum w |r| / 2`.
    pub loss: f64,
    /// Row indices fitted exactly at the final vertex.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

pub fn weighted_loss(design: &Design<'_>, y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let fit: f64 = design.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        s += w[i] * (y[i] - fit).abs();
    }
    0.5 * s
}

/// Solves the weighted LAD problem. `warm` is an optional starting basis.
pub fn solve(design: &Design<'_>, y: &[f64], w: &[f64], warm: Option<&[usize]>) -> Result<LadSolution, LadError> {
    let p = design.p;
    let n = design.n();
    if p == 0 || design.x.len() != n * p || y.len() != n || w.len() != n {
        return Err(LadError::Shape(format!("design {}x{p}, y {}, w {}", n, y.len(), w.len())));
    }
    if n < p {
        return Err(LadError::RankDeficient);
    }

    let start = match warm.filter(|b| valid_basis(design, b)) {
        Some(b) => b.to_vec(),
        None => initial_basis(design)?,
    };
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut sol = descend(design, y, w, start, scale)?;

    if sol.degenerate {
        // Break ties with a tiny deterministic perturbation, then polish on
        // the real data from the basis that was found.
        let delta = 1e-11 * scale;
        let yp: Vec<f64> = (0..n).map(|i| y[i] + delta * jitter(i)).collect();
        let pert = descend(design, &yp, w, sol.inner.basis.clone(), scale)?;
        let polished = descend(design, y, w, pert.inner.basis, scale)?;
        if polished.inner.loss < sol.inner.loss {
            let iterations = sol.inner.iterations + pert.inner.iterations + polished.inner.iterations;
            sol = polished;
            sol.inner.iterations = iterations;
        }
    }
    Ok(sol.inner)
}

fn jitter(i: usize) -> f64 {
    let h = crate::rng::splitmix64(i as u64 ^ 0x5eed);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

struct Descent {
    inner: LadSolution,
    degenerate: bool,
}

fn basis_inverse(design: &Design<'_>, basis: &[usize]) -> Option<DMatrix<f64>> {
    let p = design.p;
    let m = DMatrix::from_fn(p, p, |r, c| design.row(basis[r])[c]);
    let inv = m.clone().try_inverse()?;
    // reject numerically singular bases
    let cond = m.abs().max() * inv.abs().max() * p as f64;
    if !cond.is_finite() || cond > 1e13 {
        return None;
    }
    Some(inv)
}

fn valid_basis(design: &Design<'_>, basis: &[usize]) -> bool {
    let n = design.n();
    if basis.len() != design.p || basis.iter().any(|&i| i >= n) {
        return false;
    }
    let mut sorted = basis.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len() == basis.len() && basis_inverse(design, basis).is_some()
}

/// Greedy row selection with maximal residual norm (row-pivoted Gram–Schmidt).
fn initial_basis(design: &Design<'_>) -> Result<Vec<usize>, LadError> {
    let (n, p) = (design.n(), design.p);
    let mut resid: Vec<Vec<f64>> = (0..n).map(|i| design.row(i).to_vec()).collect();
    let norms: Vec<f64> = resid.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut chosen = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best = None;
        let mut best_val = 0.0;
        for i in 0..n {
            if chosen.contains(&i) || norms[i] == 0.0 {
                continue;
            }
            let v = resid[i].iter().map(|v| v * v).sum::<f64>().sqrt() / norms[i];
            if v > best_val + 1e-12 {
                best_val = v;
                best = Some(i);
            }
        }
        let Some(k) = best.filter(|_| best_val > 1e-9) else {
            return Err(LadError::RankDeficient);
        };
        chosen.push(k);
        let q: Vec<f64> = {
            let nk = resid[k].iter().map(|v| v * v).sum::<f64>().sqrt();
            resid[k].iter().map(|v| v / nk).collect()
        };
        for r in resid.iter_mut() {
            let dot: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (a, b) in r.iter_mut().zip(&q) {
                *a -= dot * b;
            }
        }
    }
    if basis_inverse(design, &chosen).is_none() {
        return Err(LadError::RankDeficient);
    }
    Ok(chosen)
}

fn descend(design: &Design<'_>, y: &[f64], w: &[f64], mut basis: Vec<usize>, scale: f64) -> Result<Descent, LadError> {
    let (n, p) = (design.n(), design.p);
    let zero_tol = 1e-12 * scale;
    let max_iter = 50 * n + 100;
    let mut in_basis = vec![false; n];
    for &b in &basis {
        in_basis[b] = true;
    }
    let mut iterations = 0;
    let mut coeffs = vec![0.0; n * p];
    let mut resid = vec![0.0; n];
    let mut pts: Vec<(f64, f64, usize)> = Vec::with_capacity(n);

    loop {
        iterations += 1;
        let inv = basis_inverse(design, &basis).ok_or(LadError::RankDeficient)?;
        let beta: Vec<f64> = (0..p).map(|r| (0..p).map(|c| inv[(r, c)] * y[basis[c]]).sum()).collect();
        for i in 0..n {
            let row = design.row(i);
            resid[i] = if in_basis[i] { 0.0 } else { y[i] - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() };
            // coefficient of row i along each edge direction: x_i' inv[:, k]
            for k in 0..p {
                coeffs[i * p + k] = (0..p).map(|c| row[c] * inv[(c, k)]).sum();
            }
        }
        let loss: f64 = 0.5 * (0..n).map(|i| w[i] * resid[i].abs()).sum::<f64>();
        let degenerate = (0..n).any(|i| !in_basis[i] && resid[i].abs() <= zero_tol);

        if loss <= 0.0 || iterations > max_iter {
            return Ok(Descent { inner: LadSolution { beta, loss, basis, iterations }, degenerate: false });
        }

        // Directional derivatives of every edge, both orientations.
        let mut cands: Vec<(f64, usize, f64)> = Vec::with_capacity(2 * p);
        for k in 0..p {
            let mut signed = 0.0;
            let mut flat = 0.0;
            for i in 0..n {
                if in_basis[i] {
                    continue;
                }
                let a = coeffs[i * p + k];
                if resid[i].abs() <= zero_tol {
                    flat += w[i] * a.abs();
                } else {
                    signed += w[i] * resid[i].signum() * a;
                }
            }
            let own = w[basis[k]];
            for s in [1.0, -1.0] {
                let d = 0.5 * (-s * signed + flat + own);
                if d < -1e-13 * (own + flat + signed.abs()) {
                    cands.push((d, k, s));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut moved = false;
        for &(_, k, s) in &cands {
            // Minimize 1/2 sum w_i |r_i - t s a_ik| over t.
            pts.clear();
            let mut total = 0.0;
            for i in 0..n {
                let a = if in_basis[i] {
                    if i == basis[k] { 1.0 } else { 0.0 }
                } else {
                    coeffs[i * p + k]
                };
                let c = s * a;
                if c.abs() <= 1e-14 {
                    continue;
                }
                let wt = w[i] * c.abs();
                total += wt;
                pts.push((resid[i] / c, wt, i));
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
            let half = 0.5 * total;
            let mut cum = 0.0;
            let mut pick = None;
            for &(t, wt, i) in &pts {
                cum += wt;
                if cum >= half {
                    pick = Some((t, i));
                    break;
                }
            }
            let Some((t, enter)) = pick else { continue };
            if enter == basis[k] || in_basis[enter] || t <= 0.0 {
                continue;
            }
            let new_loss: f64 = 0.5
                * (0..n)
                    .map(|i| {
                        let a = if in_basis[i] {
                            if i == basis[k] { 1.0 } else { 0.0 }
                        } else {
                            coeffs[i * p + k]
                        };
                        w[i] * (resid[i] - t * s * a).abs()
                    })
                    .sum::<f64>();
            if new_loss < loss - 1e-14 * loss.max(1e-300) {
                in_basis[basis[k]] = false;
                in_basis[enter] = true;
                basis[k] = enter;
                if basis_inverse(design, &basis).is_none() {
                    // Entering row makes the basis singular; undo and try the next edge.
                    in_basis[enter] = false;
                    continue;
                }
                moved = true;
                break;
            }
        }
        if !moved {
            return Ok(Descent { inner: LadSolution { beta, loss, basis, iterations }, degenerate });
        }
    }
}
