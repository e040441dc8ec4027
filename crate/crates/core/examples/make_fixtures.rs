//! Regenerates the synthetic HMD-style fixtures under `tests/fixtures`.
//!
//! cargo run -p rmi-core --example make_fixtures

use rmi_core::ingest::Sex;
use rmi_core::smoothers::GgmParams;
use rmi_core::testgen::{hmd_tables, simulate_deaths, ExposureSchedule, PiecewiseLinear, Scenario, Trajectory};
use std::path::Path;

fn exposures(scale: f64) -> ExposureSchedule {
    ExposureSchedule::PerAge(
        (40..=110)
            .map(|x| {
                let x = f64::from(x);
                scale * (-0.09 * (x - 40.0) - 0.004 * (x - 85.0).max(0.0).powi(2)).exp()
            })
            .collect(),
    )
}

#[allow(clippy::too_many_arguments)]
fn scenario(country: &str, sex: Sex, years: (i32, i32), base: (f64, f64, f64), slopes: Vec<f64>, breaks: Vec<f64>, scale: f64, seed: u64) -> Scenario {
    Scenario {
        country: country.into(),
        sex,
        start_year: years.0,
        end_year: years.1,
        trajectory: Trajectory::Shifted {
            base: GgmParams::new(base.0, base.1, 0.0, base.2).unwrap(),
            trend: PiecewiseLinear { level: 0.0, origin: f64::from(years.0), slopes, breakpoints: breaks },
        },
        exposures: exposures(scale),
        seed,
    }
}

fn write(dir: &Path, code: &str, f: &Scenario, m: &Scenario, zero_cells: &[(i32, u32)], missing: &[(i32, u32)]) {
    let mut fs = simulate_deaths(f);
    let mut ms = simulate_deaths(m);
    for s in fs.iter_mut().chain(ms.iter_mut()) {
        for &(year, age) in zero_cells {
            if s.year == year {
                let i = (age - 40) as usize;
                s.exposures[i] = 0.0;
                s.deaths[i] = 0.0;
            }
        }
    }
    let (d, e) = hmd_tables(code, &fs, &ms, missing);
    std::fs::write(dir.join(format!("{code}.Deaths_1x1.txt")), d.to_hmd_string()).unwrap();
    std::fs::write(dir.join(format!("{code}.Exposures_1x1.txt")), e.to_hmd_string()).unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).unwrap();

    let y = (1980, 2019);
    write(
        &dir,
        "SYNA",
        &scenario("SYNA", Sex::Female, y, (0.14, 0.11, 0.12), vec![-0.02, -0.006], vec![2000.0], 2e5, 11),
        &scenario("SYNA", Sex::Male, y, (0.20, 0.10, 0.08), vec![-0.01, -0.02], vec![1995.0], 1.6e5, 12),
        &[],
        &[],
    );

    // small population: zero exposures at the top ages and a few missing cells
    let zero: Vec<(i32, u32)> = [1985, 1990, 2003].iter().flat_map(|&y| (107..=110).map(move |a| (y, a))).collect();
    write(
        &dir,
        "SYNB",
        &scenario("SYNB", Sex::Female, y, (0.15, 0.12, 0.15), vec![-0.012], vec![], 1.5e4, 21),
        &scenario("SYNB", Sex::Male, y, (0.22, 0.10, 0.10), vec![-0.004], vec![], 1.2e4, 22),
        &zero,
        &[(1992, 86), (2011, 104)],
    );

    let g = (1985, 2019);
    write(
        &dir,
        "DEUTNP",
        &scenario("DEUTNP", Sex::Female, g, (0.13, 0.115, 0.1), vec![-0.025, -0.01], vec![2005.0], 6e5, 31),
        &scenario("DEUTNP", Sex::Male, g, (0.19, 0.105, 0.09), vec![-0.02], vec![], 4e5, 32),
        &[],
        &[],
    );
    println!("fixtures written to {}", dir.display());
}
