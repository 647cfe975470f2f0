//! CSV tables with `#`-prefixed `key = value` metadata lines.
//!
//! Numbers are written in Rust's shortest round-trip exponent form, so a
//! table parses back to bit-identical values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const FORMAT_TAG: &str = "coopfdtd-spectrum-v1";

pub const COLUMNS: [&str; 10] = [
    "omega", "P_A", "P_B", "P_AB", "P_co", "eta", "gamma_ij", "gamma_AA", "gamma_BB", "delta_ij",
];

/// Column that may hold NaN (outside the transform window).
const NAN_ALLOWED: usize = 9;

pub fn column_index(name: &str) -> Option<usize> {
    COLUMNS.iter().position(|c| *c == name)
}

/// Joins metadata, a header and pre-formatted rows into CSV text.
pub fn format_csv(metadata: &[(String, String)], header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn number(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTable {
    /// Ordered metadata; the first entry is always the format tag.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<[f64; 10]>,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    metadata: BTreeMap<&'a str, &'a str>,
    columns: BTreeMap<&'a str, Vec<Option<f64>>>,
}

impl SpectrumTable {
    pub fn new(mut metadata: Vec<(String, String)>, rows: Vec<[f64; 10]>) -> CliResult<Self> {
        metadata.insert(0, ("format".into(), FORMAT_TAG.into()));
        let table = SpectrumTable { metadata, rows };
        table.validate("<new table>")?;
        Ok(table)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = column_index(name).expect("known column");
        self.rows.iter().map(|r| r[i]).collect()
    }

    /// Column count is fixed by the type; checks order and finiteness.
    pub fn validate(&self, path: &str) -> CliResult<()> {
        let err = |row: usize, column: &str, message: String| CliError::Table {
            path: path.to_string(),
            row,
            column: column.to_string(),
            message,
        };
        if self.meta("format") != Some(FORMAT_TAG) {
            return Err(err(0, "-", format!("missing format tag {FORMAT_TAG}")));
        }
        if self.rows.len() < 2 {
            return Err(err(0, "-", "table needs at least two rows".into()));
        }
        for (n, row) in self.rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let ok = v.is_finite() || (c == NAN_ALLOWED && v.is_nan());
                if !ok {
                    return Err(err(n + 1, COLUMNS[c], format!("non-finite value {v}")));
                }
            }
            if row[0] <= 0.0 {
                return Err(err(n + 1, "omega", format!("frequency {} not positive", row[0])));
            }
            if n > 0 && row[0] <= self.rows[n - 1][0] {
                return Err(err(n + 1, "omega", "frequencies not strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(|v| number(*v)).collect()).collect();
        format_csv(&self.metadata, &COLUMNS, &rows)
    }

    /// JSON form; NaN entries become `null`.
    pub fn to_json(&self) -> String {
        let table = JsonTable {
            metadata: self.metadata.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            columns: COLUMNS
                .iter()
                .enumerate()
                .map(|(c, name)| (*name, self.rows.iter().map(|r| Some(r[c]).filter(|v| v.is_finite())).collect()))
                .collect(),
        };
        serde_json::to_string_pretty(&table).expect("table serializes")
    }

    /// Parses and validates CSV text; errors name the data row (1-based)
    /// and column.
    pub fn parse(text: &str, path: &str) -> CliResult<Self> {
        let err = |row: usize, column: &str, message: String| CliError::Table {
            path: path.to_string(),
            row,
            column: column.to_string(),
            message,
        };
        let mut metadata = Vec::new();
        let mut lines = text.lines();
        let header = loop {
            match lines.next() {
                Some(line) if line.starts_with('#') => {
                    let body = line.trim_start_matches('#').trim();
                    let (k, v) = body
                        .split_once(" = ")
                        .ok_or_else(|| err(0, "-", format!("malformed metadata line {line:?}")))?;
                    metadata.push((k.to_string(), v.to_string()));
                }
                Some(line) => break line,
                None => return Err(err(0, "-", "missing header row".into())),
            }
        };
        let names: Vec<&str> = header.split(',').collect();
        if names != COLUMNS {
            return Err(err(0, "-", format!("header {header:?} does not match {}", COLUMNS.join(","))));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != COLUMNS.len() {
                let column = COLUMNS.get(cells.len().min(COLUMNS.len() - 1)).copied().unwrap_or("-");
                return Err(err(
                    n + 1,
                    column,
                    format!("expected {} fields, found {}", COLUMNS.len(), cells.len()),
                ));
            }
            let mut row = [0.0; 10];
            for (c, cell) in cells.iter().enumerate() {
                row[c] = cell
                    .trim()
                    .parse()
                    .map_err(|_| err(n + 1, COLUMNS[c], format!("cannot parse {cell:?} as a number")))?;
            }
            rows.push(row);
        }
        let table = SpectrumTable { metadata, rows };
        table.validate(path)?;
        Ok(table)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpectrumTable {
        let rows = (0..5)
            .map(|i| {
                let w = 0.9 + 0.05 * i as f64;
                let mut r = [w, 1.0 / 3.0, 2.0, 3.1e-17, -0.25, 1e300, -7.0, 0.1, 0.2, f64::NAN];
                if i > 0 {
                    r[9] = w.sin();
                }
                r
            })
            .collect();
        SpectrumTable::new(vec![("version".into(), "0.1.0".into())], rows).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv();
        let back = SpectrumTable::parse(&text, "t.csv").unwrap();
        assert_eq!(back.metadata, t.metadata);
        for (a, b) in back.rows.iter().zip(&t.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn corrupted_cell_is_located() {
        let text = sample().to_csv().replacen("-7e0", "-7e0x", 1);
        match SpectrumTable::parse(&text, "t.csv") {
            Err(CliError::Table { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "gamma_ij");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_frequency_rejected() {
        let mut t = sample();
        t.rows.swap(2, 3);
        match t.validate("x") {
            Err(CliError::Table { row, column, .. }) => assert_eq!((row, column.as_str()), (4, "omega")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_only_allowed_in_delta() {
        let mut t = sample();
        t.rows[1][6] = f64::NAN;
        assert!(t.validate("x").is_err());
        let mut t = sample();
        t.rows[1][9] = f64::INFINITY;
        assert!(t.validate("x").is_err());
    }

    #[test]
    fn short_row_rejected() {
        let text = sample().to_csv();
        let mut lines: Vec<&str> = text.lines().collect();
        let last = lines.len() - 1;
        let cut = lines[last].rsplit_once(',').unwrap().0.to_string();
        lines[last] = &cut;
        let text = lines.join("\n");
        match SpectrumTable::parse(&text, "x") {
            Err(CliError::Table { row, .. }) => assert_eq!(row, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_has_every_column() {
        let v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        for c in COLUMNS {
            assert_eq!(v["columns"][c].as_array().unwrap().len(), 5);
        }
        assert!(v["columns"]["delta_ij"][0].is_null());
    }
}
