//! Equally spaced B-spline bases and difference penalties.

use nalgebra::DMatrix;

/// B-spline basis of degree `degree` on `[lo, hi]` split into `segments`
/// equal intervals, evaluated at `x`. Returns `x.len() × (segments + degree)`.
pub fn bspline_basis(x: &[f64], lo: f64, hi: f64, segments: usize, degree: usize) -> DMatrix<f64> {
    assert!(hi > lo && segments > 0);
    let dx = (hi - lo) / segments as f64;
    let n_basis = segments + degree;
    // knots t_0 .. t_{segments + 2 degree}
    let knots: Vec<f64> = (0..=segments + 2 * degree).map(|j| lo + (j as f64 - degree as f64) * dx).collect();

    let mut out = DMatrix::zeros(x.len(), n_basis);
    for (row, &xi) in x.iter().enumerate() {
        // Interval index within the extended knot vector; the right end belongs
        // to the last interval.
        let mut span = degree + ((xi - lo) / dx).floor().max(0.0) as usize;
        span = span.min(degree + segments - 1);
        let vals = de_boor_values(&knots, span, degree, xi);
        for (k, v) in vals.iter().enumerate() {
            let col = span - degree + k;
            if col < n_basis {
                out[(row, col)] = *v;
            }
        }
    }
    out
}

/// Non-zero basis values B_{span-degree..=span} at `x` (Cox–de Boor).
fn de_boor_values(knots: &[f64], span: usize, degree: usize, x: f64) -> Vec<f64> {
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    n
}

/// `D'D` for the `order`-th difference operator on `n` coefficients.
pub fn difference_penalty(n: usize, order: usize) -> DMatrix<f64> {
    let d = difference_matrix(n, order);
    d.transpose() * d
}

pub fn difference_matrix(n: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(n, n);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        d = DMatrix::from_fn(rows, n, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    d
}
