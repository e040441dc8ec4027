//! Synthetic populations and brute-force oracles for testing.

use crate::ingest::{AgeToken, Cell, MortalitySeries, RawRow, RawTable, Sex, FIRST_AGE, OPEN_AGE};
use crate::rng::{derive_seed, seeded};
use crate::segreg::{Criterion, LogRateSeries, QrLine, SegmentedFit, SegregError};
use crate::smoothers::ggm::ggm_hazard;
use crate::smoothers::GgmParams;
use crate::AGE_MIN;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Largest input accepted by [`brute_force_median_line`].
pub const ORACLE_LINE_MAX_POINTS: usize = 12;
/// Largest input accepted by [`brute_force_segmented`].
pub const ORACLE_SEGMENTED_MAX_POINTS: usize = 40;
pub const ORACLE_SEGMENTED_MAX_BREAKS: usize = 2;

/// Continuous piecewise-linear function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    /// Value at `origin`.
    pub level: f64,
    pub origin: f64,
    /// One slope per segment, so `breakpoints.len() + 1` entries.
    pub slopes: Vec<f64>,
    pub breakpoints: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.level + self.slopes[0] * (t - self.origin);
        for (h, &b) in self.breakpoints.iter().enumerate() {
            v += (self.slopes[h + 1] - self.slopes[h]) * (t - b).max(0.0);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trajectory {
    /// The same ΓGM hazard in every year.
    Ggm(GgmParams),
    /// A ΓGM age pattern shifted over time: `ln m_x(t) = ln mu_x + f(t)` with `f(origin) = 0`.
    Shifted { base: GgmParams, trend: PiecewiseLinear },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExposureSchedule {
    Constant(f64),
    /// One exposure per age 40..=110.
    PerAge(Vec<f64>),
}

impl ExposureSchedule {
    fn at(&self, age: u32) -> f64 {
        match self {
            ExposureSchedule::Constant(e) => *e,
            ExposureSchedule::PerAge(v) => v[(age - FIRST_AGE) as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub country: String,
    pub sex: Sex,
    pub start_year: i32,
    pub end_year: i32,
    pub trajectory: Trajectory,
    pub exposures: ExposureSchedule,
    pub seed: u64,
}

impl Scenario {
    /// True rate at `age` (ages above 109 use the 110 hazard) in `year`.
    pub fn rate(&self, age: u32, year: i32) -> f64 {
        let x = f64::from(age) - f64::from(AGE_MIN);
        match &self.trajectory {
            Trajectory::Ggm(p) => ggm_hazard(p, x),
            Trajectory::Shifted { base, trend } => ggm_hazard(base, x) * (trend.eval(f64::from(year)) - trend.level).exp(),
        }
    }
}

/// Draws `Poisson(E mu)` deaths at ages 40..110+ for every year of the scenario.
pub fn simulate_deaths(scenario: &Scenario) -> Vec<MortalitySeries> {
    (scenario.start_year..=scenario.end_year)
        .map(|year| {
            let mut rng = seeded(derive_seed(scenario.seed, &["simulate", &year.to_string()]));
            let exposures: Vec<f64> = (FIRST_AGE..=OPEN_AGE).map(|a| scenario.exposures.at(a)).collect();
            let deaths = (FIRST_AGE..=OPEN_AGE)
                .zip(&exposures)
                .map(|(age, &e)| poisson(e * scenario.rate(age, year), &mut rng))
                .collect();
            MortalitySeries::new(&scenario.country, scenario.sex, year, deaths, exposures)
        })
        .collect()
}

fn poisson<R: rand::Rng>(mean: f64, rng: &mut R) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// `ln(D/E)` with `D ~ Poisson(E exp(f(t)))` at each integer year.
pub fn simulate_log_rate_series(
    trend: &PiecewiseLinear,
    years: std::ops::RangeInclusive<i32>,
    exposure: f64,
    seed: u64,
) -> LogRateSeries {
    let mut rng = seeded(derive_seed(seed, &["log-rate-series"]));
    let points = years
        .map(|year| {
            let t = f64::from(year);
            // a zero count would give -inf; redraw as the observation is conditioned on D > 0
            let d = loop {
                let d = poisson(exposure * trend.eval(t).exp(), &mut rng);
                if d > 0.0 {
                    break d;
                }
            };
            (t, (d / exposure).ln())
        })
        .collect();
    LogRateSeries { age: AGE_MIN, points }
}

/// HMD-style deaths and exposures tables from simulated female and male
/// series of the same years. Ages below 40 are filled with a flat low rate so
/// the files look like complete 1×1 tables. Exposures are rounded to two
/// decimals as in the published files; `missing` lists `(year, age)` cells
/// written as `"."` for both sexes.
pub fn hmd_tables(
    title: &str,
    female: &[MortalitySeries],
    male: &[MortalitySeries],
    missing: &[(i32, u32)],
) -> (RawTable, RawTable) {
    assert_eq!(female.len(), male.len(), "sexes must cover the same years");
    let mut deaths = RawTable { title: format!("{title}, Deaths (period 1x1)"), rows: Vec::new() };
    let mut exposures = RawTable { title: format!("{title}, Exposure to risk (period 1x1)"), rows: Vec::new() };
    for (f, m) in female.iter().zip(male) {
        assert_eq!(f.year, m.year, "years must line up");
        for age in 0..=OPEN_AGE {
            let token = if age == OPEN_AGE { AgeToken::Open(age) } else { AgeToken::Single(age) };
            let (fd, fe, md, me) = if age >= FIRST_AGE {
                (f.death(age), f.exposure(age), m.death(age), m.exposure(age))
            } else {
                let e = f.exposure(FIRST_AGE);
                ((e * 1e-3).round(), e, (e * 1.5e-3).round(), e)
            };
            let gone = missing.contains(&(f.year, age));
            let cell = |v: f64| if gone { Cell::missing() } else { Cell::new(v) };
            let round2 = |v: f64| (v * 100.0).round() / 100.0;
            deaths.rows.push(RawRow { year: f.year, age: token, female: cell(fd), male: cell(md), total: cell(fd + md) });
            exposures.rows.push(RawRow {
                year: f.year,
                age: token,
                female: cell(round2(fe)),
                male: cell(round2(me)),
                total: cell(round2(round2(fe) + round2(me))),
            });
        }
    }
    (deaths, exposures)
}

fn check_loss_line(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    0.5 * points.iter().map(|&(t, y)| (y - a - b * t).abs()).sum::<f64>()
}

/// Best median-regression line among all lines through two data points.
pub fn brute_force_median_line(points: &[(f64, f64)]) -> Result<QrLine, SegregError> {
    if points.len() < 3 {
        return Err(SegregError::TooFewPoints { needed: 3, got: points.len() });
    }
    if points.len() > ORACLE_LINE_MAX_POINTS {
        return Err(SegregError::InvalidSeries(format!("oracle limited to {ORACLE_LINE_MAX_POINTS} points")));
    }
    let mut best: Option<QrLine> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let ((t1, y1), (t2, y2)) = (points[i], points[j]);
            if t1 == t2 {
                continue;
            }
            let b = (y2 - y1) / (t2 - t1);
            let a = y1 - b * t1;
            let check_loss = check_loss_line(points, a, b);
            if best.is_none_or(|q| check_loss < q.check_loss) {
                best = Some(QrLine { a, b, check_loss });
            }
        }
    }
    best.ok_or(SegregError::DegenerateDesign)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn for_each_subset(n: usize, p: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, p: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == p {
            f(cur);
            return;
        }
        for i in start..=n - (p - cur.len()) {
            cur.push(i);
            rec(n, p, i + 1, cur, f);
            cur.pop();
        }
    }
    if p <= n {
        rec(n, p, 0, &mut Vec::with_capacity(p), f);
    }
}

/// Exhaustive continuous `k`-break median regression: every breakpoint
/// placement at data times with at least `min_seg` points per segment, and
/// for each placement every hinge-basis fit interpolating `k + 2` points.
pub fn brute_force_segmented(points: &[(f64, f64)], k: usize, min_seg: usize) -> Result<Option<SegmentedFit>, SegregError> {
    let n = points.len();
    if k > ORACLE_SEGMENTED_MAX_BREAKS || n > ORACLE_SEGMENTED_MAX_POINTS {
        return Err(SegregError::InvalidSeries(format!(
            "oracle limited to {ORACLE_SEGMENTED_MAX_BREAKS} breaks and {ORACLE_SEGMENTED_MAX_POINTS} points"
        )));
    }
    if n < 3 {
        return Err(SegregError::TooFewPoints { needed: 3, got: n });
    }
    let origin = points[0].0;
    let p = k + 2;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    for_each_subset(n, k, &mut |idx: &[usize]| {
        // segment sizes with shared kink points
        let mut bounds = vec![0];
        bounds.extend_from_slice(idx);
        bounds.push(n - 1);
        if bounds.windows(2).any(|w| w[1] < w[0] + min_seg - 1) {
            return;
        }
        let breaks: Vec<f64> = idx.iter().map(|&j| points[j].0).collect();
        let row = |t: f64| -> Vec<f64> {
            let mut r = vec![1.0, t - origin];
            r.extend(breaks.iter().map(|&b| (t - b).max(0.0)));
            r
        };
        for_each_subset(n, p, &mut |rows: &[usize]| {
            let a: Vec<Vec<f64>> = rows.iter().map(|&i| row(points[i].0)).collect();
            let b: Vec<f64> = rows.iter().map(|&i| points[i].1).collect();
            let Some(coef) = solve_dense(a, b) else { return };
            let loss = 0.5
                * points
                    .iter()
                    .map(|&(t, y)| (y - row(t).iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>()).abs())
                    .sum::<f64>();
            if best.as_ref().is_none_or(|bst| loss < bst.0) {
                best = Some((loss, breaks.clone(), coef));
            }
        });
    });
    Ok(best.map(|(loss, breaks, coef)| SegmentedFit::from_hinge(points, breaks, coef, loss, Criterion::Median)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segreg::{fit_k_breaks, qr_fit};
    use proptest::prelude::*;

    fn scenario(e: f64) -> Scenario {
        Scenario {
            country: "SYN".into(),
            sex: Sex::Female,
            start_year: 2000,
            end_year: 2001,
            trajectory: Trajectory::Ggm(GgmParams::new(0.15, 0.11, 0.0, 0.1).unwrap()),
            exposures: ExposureSchedule::Constant(e),
            seed: 3,
        }
    }

    #[test]
    fn zero_exposure_gives_zero_deaths() {
        let s = simulate_deaths(&scenario(0.0));
        assert!(s.iter().all(|y| y.deaths.iter().all(|&d| d == 0.0)));
    }

    #[test]
    fn same_seed_same_counts() {
        assert_eq!(simulate_deaths(&scenario(1e3)), simulate_deaths(&scenario(1e3)));
        let mut other = scenario(1e3);
        other.seed = 4;
        assert_ne!(simulate_deaths(&scenario(1e3)), simulate_deaths(&other));
    }

    #[test]
    fn law_of_large_numbers() {
        let mut sc = scenario(1e3);
        sc.end_year = sc.start_year + 9_999;
        let sims = simulate_deaths(&sc);
        for age in [85u32, 95, 105] {
            let mu = sc.rate(age, 2000);
            let mean = sims.iter().map(|s| s.death(age) / 1e3).sum::<f64>() / sims.len() as f64;
            assert!((mean / mu - 1.0).abs() < 0.01, "age {age}: {mean} vs {mu}");
        }
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let mut sc = scenario(1e4);
        sc.trajectory = Trajectory::Shifted {
            base: GgmParams::new(0.15, 0.11, 0.0, 0.1).unwrap(),
            trend: PiecewiseLinear { level: 0.0, origin: 1950.0, slopes: vec![-0.02, -0.005], breakpoints: vec![1990.0] },
        };
        let text = serde_json::to_string(&sc).unwrap();
        assert_eq!(serde_json::from_str::<Scenario>(&text).unwrap(), sc);
    }

    #[test]
    fn piecewise_eval() {
        let pl = PiecewiseLinear { level: 1.0, origin: 0.0, slopes: vec![-1.0, 2.0], breakpoints: vec![3.0] };
        assert_eq!(pl.eval(0.0), 1.0);
        assert_eq!(pl.eval(3.0), -2.0);
        assert_eq!(pl.eval(5.0), 2.0);
    }

    #[test]
    fn oracle_examples() {
        let q = brute_force_median_line(&[(0.0, 0.0), (1.0, 0.0), (2.0, 10.0)]).unwrap();
        assert_eq!((q.a, q.b, q.check_loss), (0.0, 5.0, 2.5));
        let line: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 1.0 + 0.5 * i as f64)).collect();
        assert!(brute_force_median_line(&line).unwrap().check_loss < 1e-12);
        assert_eq!(brute_force_median_line(&[(1.0, 0.0), (1.0, 1.0), (1.0, 3.0)]).unwrap_err(), SegregError::DegenerateDesign);
    }

    #[test]
    fn segmented_oracle_nesting() {
        let pts: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, ((i * 7 % 5) as f64) * 0.3 - 0.1 * i as f64)).collect();
        let k0 = brute_force_segmented(&pts, 0, 4).unwrap().unwrap();
        let line = brute_force_median_line(&pts).unwrap();
        assert!((k0.check_loss - line.check_loss).abs() < 1e-12);
        let k1 = brute_force_segmented(&pts, 1, 4).unwrap().unwrap();
        assert!(k1.check_loss <= k0.check_loss + 1e-12);
    }

    #[test]
    fn segmented_oracle_recovers_exact_kink() {
        let pts: Vec<(f64, f64)> =
            (0..20).map(|i| (1980.0 + i as f64, -1.0 - 0.02 * i as f64 + 0.03 * (i as f64 - 11.0).max(0.0))).collect();
        let f = brute_force_segmented(&pts, 1, 8).unwrap().unwrap();
        assert_eq!(f.breakpoints, vec![1991.0]);
        assert!(f.check_loss < 1e-12);
    }

    #[test]
    fn segmented_main_path_matches_oracle() {
        for seed in 0..6u64 {
            let mut s = seed;
            let pts: Vec<(f64, f64)> = (0..24)
                .map(|i| {
                    s = crate::rng::splitmix64(s);
                    let e = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                    (i as f64, -0.03 * i as f64 + 0.04 * (i as f64 - 10.0).max(0.0) + 0.1 * e)
                })
                .collect();
            for k in 0..=2 {
                let o = brute_force_segmented(&pts, k, 7).unwrap().unwrap();
                let m = fit_k_breaks(&pts, k, 7, Criterion::Median).unwrap().unwrap();
                assert!((o.check_loss - m.check_loss).abs() < 1e-9, "seed {seed} k {k}: {} vs {}", o.check_loss, m.check_loss);
            }
        }
    }

    proptest! {
        #[test]
        fn oracle_never_beats_main_path(ys in proptest::collection::vec(-3.0f64..3.0, 3..=12)) {
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| ((i % 5) as f64, y)).collect();
            prop_assume!(pts.iter().any(|p| p.0 != pts[0].0));
            let o = brute_force_median_line(&pts).unwrap();
            let q = qr_fit(&pts, 0.5).unwrap();
            prop_assert!((o.check_loss - q.check_loss).abs() < 1e-9);
        }
    }
}
