use super::{AgeToken, IngestError, RawTable, Sex};
use crate::{AGE_MAX, AGE_MIN, N_AGES};
use serde::{Deserialize, Serialize};

/// Youngest age retained in a series (the composite-link grouping starts here).
pub const FIRST_AGE: u32 = 40;
/// Start of the open-ended top age group; index `OPEN_AGE - FIRST_AGE` holds "110+".
pub const OPEN_AGE: u32 = 110;

const N_RETAINED: usize = (OPEN_AGE - FIRST_AGE + 1) as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start_year: i32,
    pub end_year: i32,
}

impl StudyWindow {
    pub fn new(start_year: i32, end_year: i32) -> Result<Self, IngestError> {
        if start_year > end_year {
            return Err(IngestError::InvalidWindow { start: start_year, end: end_year });
        }
        Ok(StudyWindow { start_year, end_year })
    }

    /// 1950–2019, or 1991–2019 for Germany.
    pub fn default_for(country: &str) -> Self {
        if is_germany(country) {
            StudyWindow { start_year: 1991, end_year: 2019 }
        } else {
            StudyWindow { start_year: 1950, end_year: 2019 }
        }
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start_year..=self.end_year
    }

    pub fn len(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Recognizes the HMD codes and common names used for Germany.
pub fn is_germany(country: &str) -> bool {
    let c = country.trim().to_ascii_uppercase();
    c.starts_with("DEU") || c == "GERMANY" || c == "DE"
}

/// Deaths and exposures for one population-year at ages 40..109 and 110+.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalitySeries {
    pub country: String,
    pub sex: Sex,
    pub year: i32,
    /// Indexed by `age - FIRST_AGE`; the last entry is the open group.
    pub deaths: Vec<f64>,
    pub exposures: Vec<f64>,
    /// Either input cell was `"."` in the source file.
    pub missing: Vec<bool>,
    /// Exposure was zero and has been replaced by a random draw.
    pub imputed: Vec<bool>,
}

impl MortalitySeries {
    /// A series with all-zero flags. Panics if the vectors do not span 40..110+.
    pub fn new(country: &str, sex: Sex, year: i32, deaths: Vec<f64>, exposures: Vec<f64>) -> Self {
        assert_eq!(deaths.len(), N_RETAINED, "deaths must cover ages 40..110+");
        assert_eq!(exposures.len(), N_RETAINED, "exposures must cover ages 40..110+");
        MortalitySeries {
            country: country.to_string(),
            sex,
            year,
            deaths,
            exposures,
            missing: vec![false; N_RETAINED],
            imputed: vec![false; N_RETAINED],
        }
    }

    fn index(age: u32) -> usize {
        assert!((FIRST_AGE..=OPEN_AGE).contains(&age), "age {age} outside 40..110");
        (age - FIRST_AGE) as usize
    }

    pub fn death(&self, age: u32) -> f64 {
        self.deaths[Self::index(age)]
    }

    pub fn exposure(&self, age: u32) -> f64 {
        self.exposures[Self::index(age)]
    }

    pub fn is_missing(&self, age: u32) -> bool {
        self.missing[Self::index(age)]
    }

    pub fn is_imputed(&self, age: u32) -> bool {
        self.imputed[Self::index(age)]
    }

    /// Deaths at ages 85..=109.
    pub fn smoothing_deaths(&self) -> &[f64] {
        let s = Self::index(AGE_MIN);
        &self.deaths[s..s + N_AGES]
    }

    /// Exposures at ages 85..=109.
    pub fn smoothing_exposures(&self) -> &[f64] {
        let s = Self::index(AGE_MIN);
        &self.exposures[s..s + N_AGES]
    }

    /// Raw rates D/E at 85..=109; `None` where the cell is missing or E is zero.
    pub fn raw_rates(&self) -> Vec<Option<f64>> {
        (AGE_MIN..=AGE_MAX)
            .map(|age| {
                let e = self.exposure(age);
                if self.is_missing(age) || e <= 0.0 {
                    None
                } else {
                    Some(self.death(age) / e)
                }
            })
            .collect()
    }
}

/// Builds one series per window year from a deaths and an exposures table.
///
/// Every window year must be present in both tables with all ages 40..109
/// and the 110+ group; a gap is an error naming the year, never a silent
/// truncation.
pub fn build_dataset(
    deaths: &RawTable,
    exposures: &RawTable,
    country: &str,
    sex: Sex,
    window: StudyWindow,
) -> Result<Vec<MortalitySeries>, IngestError> {
    window.years().map(|year| series_for_year(deaths, exposures, country, sex, year)).collect()
}

fn series_for_year(
    deaths: &RawTable,
    exposures: &RawTable,
    country: &str,
    sex: Sex,
    year: i32,
) -> Result<MortalitySeries, IngestError> {
    let d = extract(deaths, sex, year)?;
    let e = extract(exposures, sex, year)?;
    let mut series = MortalitySeries::new(
        country,
        sex,
        year,
        d.iter().map(|c| c.0).collect(),
        e.iter().map(|c| c.0).collect(),
    );
    for i in 0..N_RETAINED {
        series.missing[i] = d[i].1 || e[i].1;
    }
    Ok(series)
}

fn extract(table: &RawTable, sex: Sex, year: i32) -> Result<Vec<(f64, bool)>, IngestError> {
    let rows = table.year_rows(year);
    if rows.is_empty() {
        return Err(IngestError::MissingYear(year));
    }
    let mut out: Vec<Option<(f64, bool)>> = vec![None; N_RETAINED];
    for row in rows {
        let slot = match row.age {
            AgeToken::Single(a) if (FIRST_AGE..OPEN_AGE).contains(&a) => (a - FIRST_AGE) as usize,
            AgeToken::Open(a) if a == OPEN_AGE => N_RETAINED - 1,
            _ => continue,
        };
        let cell = row.sex(sex);
        out[slot] = Some((cell.value, cell.missing));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                let age = FIRST_AGE + i as u32;
                let age = if age == OPEN_AGE { AgeToken::Open(age) } else { AgeToken::Single(age) };
                IngestError::MissingAge { year, age }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_hmd_table, Cell, RawRow};

    fn table(years: &[i32], value: impl Fn(i32, u32) -> f64) -> RawTable {
        let mut rows = Vec::new();
        for &y in years {
            for a in 0..=110u32 {
                let age = if a == 110 { AgeToken::Open(110) } else { AgeToken::Single(a) };
                let v = value(y, a);
                rows.push(RawRow {
                    year: y,
                    age,
                    female: Cell::new(v),
                    male: Cell::new(2.0 * v),
                    total: Cell::new(3.0 * v),
                });
            }
        }
        RawTable { title: "t".into(), rows }
    }

    #[test]
    fn germany_default_window() {
        let years: Vec<i32> = (1950..=2019).collect();
        let d = table(&years, |_, a| f64::from(a));
        let e = table(&years, |_, _| 100.0);
        let w = StudyWindow::default_for("DEUTNP");
        let set = build_dataset(&d, &e, "DEUTNP", Sex::Female, w).unwrap();
        assert_eq!(set.len(), 29);
        assert_eq!(set.first().unwrap().year, 1991);
        assert_eq!(set.last().unwrap().year, 2019);
        assert_eq!(StudyWindow::default_for("CZE"), StudyWindow { start_year: 1950, end_year: 2019 });
    }

    #[test]
    fn singleton_window() {
        let d = table(&[1950, 1951], |_, a| f64::from(a));
        let e = table(&[1950, 1951], |_, _| 10.0);
        let set = build_dataset(&d, &e, "X", Sex::Male, StudyWindow::new(1950, 1950).unwrap()).unwrap();
        assert_eq!(set.len(), 1);
        let s = &set[0];
        assert_eq!(s.death(85), 170.0);
        assert_eq!(s.exposure(110), 20.0);
        assert_eq!(s.smoothing_deaths().len(), 25);
        assert_eq!(s.smoothing_deaths()[0], 170.0);
    }

    #[test]
    fn missing_year_is_named() {
        let all: Vec<i32> = (1970..=1975).collect();
        let holed: Vec<i32> = all.iter().copied().filter(|&y| y != 1973).collect();
        let d = table(&holed, |_, _| 1.0);
        let e = table(&all, |_, _| 1.0);
        let err = build_dataset(&d, &e, "X", Sex::Female, StudyWindow::new(1970, 1975).unwrap()).unwrap_err();
        assert_eq!(err, IngestError::MissingYear(1973));
        assert_eq!(err.to_string(), "missing year 1973");
    }

    #[test]
    fn missing_age_is_reported() {
        let mut d = table(&[1950], |_, _| 1.0);
        d.rows.retain(|r| r.age != AgeToken::Single(97));
        let e = table(&[1950], |_, _| 1.0);
        let err = build_dataset(&d, &e, "X", Sex::Female, StudyWindow::new(1950, 1950).unwrap()).unwrap_err();
        assert_eq!(err, IngestError::MissingAge { year: 1950, age: AgeToken::Single(97) });
    }

    #[test]
    fn missing_cells_propagate_flags() {
        let text = "h\n\n".to_string()
            + &(0..=110)
                .map(|a| {
                    let age = if a == 110 { "110+".to_string() } else { a.to_string() };
                    let f = if a == 90 { ".".to_string() } else { "5".to_string() };
                    format!("1950 {age} {f} 1 1\n")
                })
                .collect::<String>();
        let d = parse_hmd_table(&text).unwrap();
        let e = table(&[1950], |_, _| 1.0);
        let s = &build_dataset(&d, &e, "X", Sex::Female, StudyWindow::new(1950, 1950).unwrap()).unwrap()[0];
        assert!(s.is_missing(90));
        assert_eq!(s.death(90), 0.0);
        assert!(!s.is_missing(91));
        assert_eq!(s.raw_rates()[5], None);
        assert_eq!(s.raw_rates()[6], Some(5.0));
    }

    #[test]
    fn inverted_window_rejected() {
        assert!(StudyWindow::new(2000, 1999).is_err());
    }
}
