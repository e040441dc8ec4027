use super::lad::{self, Design, LadError};
use super::{LogRateSeries, SegmentedFit, SegregError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const DEFAULT_MIN_SEG: usize = 8;
pub const DEFAULT_MAX_BREAKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Least absolute deviations (median regression).
    Median,
    /// Least squares, used only as a reference.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSelection {
    /// Add breakpoints while the likelihood-ratio test rejects at `alpha`.
    SequentialLr { alpha: f64 },
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedOptions {
    pub max_breaks: usize,
    /// Minimum points per segment; a kink point counts for both neighbours.
    pub min_seg: usize,
    pub selection: ModelSelection,
}

impl Default for SegmentedOptions {
    fn default() -> Self {
        Self {
            max_breaks: DEFAULT_MAX_BREAKS,
            min_seg: DEFAULT_MIN_SEG,
            selection: ModelSelection::SequentialLr { alpha: 0.05 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrLine {
    pub a: f64,
    pub b: f64,
    pub check_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub restricted_k: usize,
    pub full_k: usize,
    /// Infinite when the full model fits exactly; stored as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedSelection {
    pub fit: SegmentedFit,
    /// Best fit for each number of breakpoints that was examined, by k.
    pub path: Vec<SegmentedFit>,
    pub tests: Vec<LrTest>,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Collapses identical points into weights.
fn merge_duplicates(points: &[(f64, f64)]) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut uniq: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    let mut w: Vec<f64> = Vec::with_capacity(sorted.len());
    for p in sorted {
        if uniq.last() == Some(&p) {
            *w.last_mut().unwrap() += 1.0;
        } else {
            uniq.push(p);
            w.push(1.0);
        }
    }
    (uniq, w)
}

/// Median regression line `y = a + b t`.
pub fn qr_fit(points: &[(f64, f64)], tau: f64) -> Result<QrLine, SegregError> {
    if tau != 0.5 {
        return Err(SegregError::UnsupportedQuantile(tau));
    }
    if points.len() < 3 {
        return Err(SegregError::TooFewPoints { needed: 3, got: points.len() });
    }
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(SegregError::InvalidSeries("non-finite value".into()));
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(SegregError::DegenerateDesign);
    }
    let (uniq, w) = merge_duplicates(points);
    let center = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let x: Vec<f64> = uniq.iter().flat_map(|p| [1.0, p.0 - center]).collect();
    let y: Vec<f64> = uniq.iter().map(|p| p.1).collect();
    let sol = lad::solve(&Design { x: &x, p: 2 }, &y, &w, None).map_err(|_| SegregError::DegenerateDesign)?;
    let b = sol.beta[1];
    let a = sol.beta[0] - b * center;
    let check_loss = 0.5 * points.iter().map(|&(t, y)| (y - a - b * t).abs()).sum::<f64>();
    Ok(QrLine { a, b, check_loss })
}

/// All index tuples `j_1 < .. < j_k` such that every segment, kink points
/// included, holds at least `min_seg` points. Lexicographic order.
fn placements(n: usize, k: usize, min_seg: usize) -> Vec<Vec<usize>> {
    let gap = min_seg.max(2) - 1;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, gap: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            if n > cur.last().map_or(0, |&j| j) + gap {
                out.push(cur.clone());
            }
            return;
        }
        let remaining = k - cur.len();
        // room needed after this index: (remaining - 1) more gaps plus the tail
        let need = remaining * gap;
        if n - 1 < need {
            return;
        }
        for j in from..=(n - 1 - need) {
            cur.push(j);
            rec(n, k, gap, j + gap, cur, out);
            cur.pop();
        }
    }
    if k == 0 {
        return if n >= 2 { vec![vec![]] } else { vec![] };
    }
    rec(n, k, gap, gap, &mut cur, &mut out);
    out
}

fn hinge_design(points: &[(f64, f64)], breaks: &[f64]) -> Vec<f64> {
    let origin = points[0].0;
    let p = 2 + breaks.len();
    let mut x = Vec::with_capacity(points.len() * p);
    for &(t, _) in points {
        x.push(1.0);
        x.push(t - origin);
        for &b in breaks {
            x.push((t - b).max(0.0));
        }
    }
    x
}

fn least_squares(x: &[f64], p: usize, y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let xm = DMatrix::from_row_slice(n, p, x);
    let yv = DVector::from_column_slice(y);
    let beta = xm.clone().svd(true, true).solve(&yv, 1e-12).ok()?;
    let rss = (&yv - &xm * &beta).norm_squared();
    Some((beta.iter().copied().collect(), rss))
}

/// Best continuous fit with exactly `k` breakpoints at observed times, or
/// `None` when no placement satisfies the segment-size rule.
pub fn fit_k_breaks(
    points: &[(f64, f64)],
    k: usize,
    min_seg: usize,
    criterion: Criterion,
) -> Result<Option<SegmentedFit>, SegregError> {
    let n = points.len();
    if n < 3 {
        return Err(SegregError::TooFewPoints { needed: 3, got: n });
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(SegregError::DegenerateDesign);
    }
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let w = vec![1.0; n];
    let p = 2 + k;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut warm: Option<Vec<usize>> = None;
    for placement in placements(n, k, min_seg) {
        let breaks: Vec<f64> = placement.iter().map(|&j| points[j].0).collect();
        let x = hinge_design(points, &breaks);
        let (beta, objective) = match criterion {
            Criterion::Median => match lad::solve(&Design { x: &x, p }, &y, &w, warm.as_deref()) {
                Ok(sol) => {
                    warm = Some(sol.basis);
                    (sol.beta, sol.loss)
                }
                Err(LadError::RankDeficient) => continue,
                Err(LadError::Shape(m)) => return Err(SegregError::InvalidSeries(m)),
            },
            Criterion::Mean => match least_squares(&x, p, &y) {
                Some(v) => v,
                None => continue,
            },
        };
        if best.as_ref().is_none_or(|b| objective < b.0) {
            best = Some((objective, breaks, beta));
        }
    }
    Ok(best.map(|(objective, breaks, beta)| SegmentedFit::from_hinge(points, breaks, beta, objective, criterion)))
}

/// Likelihood-ratio test of `restricted` against `full` on the same `n` points.
///
/// Median fits use the asymmetric Laplace working likelihood with its scale
/// estimated from the full model, giving `2 n (V_r - V_f) / V_f`. Least
/// squares fits use the Gaussian `n ln(RSS_r / RSS_f)`.
pub fn lr_test(restricted: &SegmentedFit, full: &SegmentedFit, n: usize, alpha: f64) -> Result<LrTest, SegregError> {
    if restricted.k() >= full.k() || restricted.criterion != full.criterion {
        return Err(SegregError::NotNested { restricted: restricted.k(), full: full.k() });
    }
    let (vr, vf) = (restricted.objective, full.objective);
    let n = n as f64;
    let statistic = if vr <= vf {
        0.0
    } else if vf <= 0.0 {
        f64::INFINITY
    } else {
        match full.criterion {
            Criterion::Median => 2.0 * n * (vr - vf) / vf,
            Criterion::Mean => n * (vr / vf).ln(),
        }
    };
    let df = 2 * (full.k() - restricted.k());
    let p_value = if statistic == 0.0 {
        1.0
    } else if statistic.is_infinite() {
        0.0
    } else {
        ChiSquared::new(df as f64).expect("positive df").sf(statistic)
    };
    Ok(LrTest { restricted_k: restricted.k(), full_k: full.k(), statistic, df, p_value, reject: p_value < alpha })
}

fn bic(fit: &SegmentedFit) -> f64 {
    let n = fit.n_points as f64;
    let params = (2 + 2 * fit.k()) as f64;
    let v = (fit.objective / n).max(f64::MIN_POSITIVE);
    let scale = match fit.criterion {
        Criterion::Median => 2.0 * n,
        Criterion::Mean => n,
    };
    scale * v.ln() + params * n.ln()
}

pub fn fit_segmented(
    series: &LogRateSeries,
    opts: &SegmentedOptions,
    criterion: Criterion,
) -> Result<SegmentedSelection, SegregError> {
    let points = &series.points;
    let needed = 2 * opts.min_seg.max(2);
    if points.len() < needed {
        return Err(SegregError::TooFewPoints { needed, got: points.len() });
    }
    let base = fit_k_breaks(points, 0, opts.min_seg, criterion)?.ok_or(SegregError::DegenerateDesign)?;
    let mut path = vec![base];
    let mut tests = Vec::new();
    match opts.selection {
        ModelSelection::SequentialLr { alpha } => {
            let mut chosen = 0;
            for k in 1..=opts.max_breaks {
                let Some(fit) = fit_k_breaks(points, k, opts.min_seg, criterion)? else { break };
                let test = lr_test(&path[k - 1], &fit, points.len(), alpha)?;
                path.push(fit);
                tests.push(test);
                if !test.reject {
                    break;
                }
                chosen = k;
            }
            Ok(SegmentedSelection { fit: path[chosen].clone(), path, tests })
        }
        ModelSelection::Bic => {
            for k in 1..=opts.max_breaks {
                let Some(fit) = fit_k_breaks(points, k, opts.min_seg, criterion)? else { break };
                path.push(fit);
            }
            let mut chosen = 0;
            for (k, f) in path.iter().enumerate() {
                if bic(f) < bic(&path[chosen]) {
                    chosen = k;
                }
            }
            Ok(SegmentedSelection { fit: path[chosen].clone(), path, tests })
        }
    }
}

/// Segmented median regression with sequential model selection.
pub fn fit_segmented_qr(series: &LogRateSeries, opts: &SegmentedOptions) -> Result<SegmentedSelection, SegregError> {
    fit_segmented(series, opts, Criterion::Median)
}

/// Least-squares counterpart on the same breakpoint grid.
pub fn fit_segmented_ols(series: &LogRateSeries, opts: &SegmentedOptions) -> Result<SegmentedSelection, SegregError> {
    fit_segmented(series, opts, Criterion::Mean)
}
