use super::{IngestError, Sex};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

/// Age column entry: a single age or the open-ended top group ("110+").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeToken {
    Single(u32),
    Open(u32),
}

impl AgeToken {
    /// Lower bound of the age interval.
    pub fn start(self) -> u32 {
        match self {
            AgeToken::Single(a) | AgeToken::Open(a) => a,
        }
    }
}

impl fmt::Display for AgeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgeToken::Single(a) => write!(f, "{a}"),
            AgeToken::Open(a) => write!(f, "{a}+"),
        }
    }
}

impl FromStr for AgeToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (digits, open) = match s.strip_suffix('+') {
            Some(d) => (d, true),
            None => (s, false),
        };
        let age: u32 = digits.parse().map_err(|_| format!("invalid age '{s}'"))?;
        Ok(if open { AgeToken::Open(age) } else { AgeToken::Single(age) })
    }
}

/// A numeric table value; `"."` in the file parses as zero with `missing` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub missing: bool,
}

impl Cell {
    pub fn new(value: f64) -> Self {
        Cell { value, missing: false }
    }

    pub fn missing() -> Self {
        Cell { value: 0.0, missing: true }
    }

    fn parse(tok: &str) -> Result<Self, String> {
        if tok == "." {
            return Ok(Cell::missing());
        }
        let value: f64 = tok.parse().map_err(|_| format!("invalid number '{tok}'"))?;
        if !value.is_finite() || value < 0.0 {
            return Err(format!("value '{tok}' must be finite and non-negative"));
        }
        Ok(Cell::new(value))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.missing {
            f.write_str(".")
        } else {
            write!(f, "{}", self.value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub year: i32,
    pub age: AgeToken,
    pub female: Cell,
    pub male: Cell,
    pub total: Cell,
}

impl RawRow {
    pub fn sex(&self, sex: Sex) -> Cell {
        match sex {
            Sex::Female => self.female,
            Sex::Male => self.male,
        }
    }
}

/// Parsed contents of one HMD 1×1 deaths or exposures file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawTable {
    pub title: String,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    /// Distinct years in file order.
    pub fn years(&self) -> Vec<i32> {
        let mut out: Vec<i32> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.year) {
                out.push(r.year);
            }
        }
        out
    }

    /// Rows belonging to `year`. Years are contiguous, so this is one slice.
    pub fn year_rows(&self, year: i32) -> &[RawRow] {
        match self.rows.iter().position(|r| r.year == year) {
            Some(s) => {
                let len = self.rows[s..].iter().take_while(|r| r.year == year).count();
                &self.rows[s..s + len]
            }
            None => &[],
        }
    }

    /// Writes the table back in the 1×1 text layout.
    pub fn to_hmd_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.title);
        out.push_str("\n\n");
        out.push_str("  Year      Age         Female          Male         Total\n");
        for r in &self.rows {
            out.push_str(&format!(
                "  {:<4}      {:<5}  {:>12}  {:>12}  {:>12}\n",
                r.year,
                r.age.to_string(),
                r.female.to_string(),
                r.male.to_string(),
                r.total.to_string()
            ));
        }
        out
    }
}

/// Parses an HMD 1×1 table.
///
/// The first two lines are a free-text header. A column heading line that
/// starts with `Year` and blank lines are skipped after that; every other
/// line must hold exactly `Year Age Female Male Total`.
pub fn parse_hmd_table(text: &str) -> Result<RawTable, IngestError> {
    let mut lines = text.lines().enumerate();
    let title = lines.next().map(|(_, l)| l.trim().to_string()).unwrap_or_default();
    lines.next();

    let mut rows: Vec<RawRow> = Vec::new();
    let mut seen: HashSet<(i32, AgeToken)> = HashSet::new();
    let mut closed_years: HashSet<i32> = HashSet::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].eq_ignore_ascii_case("year") {
            continue;
        }
        if toks.len() != 5 {
            return Err(IngestError::Parse {
                line: line_no,
                message: format!("expected 5 columns, found {}", toks.len()),
            });
        }
        let err = |message: String| IngestError::Parse { line: line_no, message };
        let year: i32 = toks[0].parse().map_err(|_| err(format!("non-numeric year '{}'", toks[0])))?;
        let age: AgeToken = toks[1].parse().map_err(err)?;
        let female = Cell::parse(toks[2]).map_err(err)?;
        let male = Cell::parse(toks[3]).map_err(err)?;
        let total = Cell::parse(toks[4]).map_err(err)?;

        if let Some(prev) = rows.last() {
            if prev.year != year {
                closed_years.insert(prev.year);
                if closed_years.contains(&year) {
                    return Err(IngestError::NonContiguousYear { line: line_no, year });
                }
            }
        }
        if !seen.insert((year, age)) {
            return Err(IngestError::Duplicate { line: line_no, year, age });
        }
        rows.push(RawRow { year, age, female, male, total });
    }
    Ok(RawTable { title, rows })
}
