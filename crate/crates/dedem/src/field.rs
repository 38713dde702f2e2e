//! Tabulated scalar fields on point sets: the exchange format for solution
//! snapshots and external reference solutions.
//!
//! CSV layout: header `x1,x2,<names...>`, one row per point. Values are
//! written with shortest-round-trip formatting so an export/load cycle is
//! lossless.

use crate::scalar::Scalar;
use std::fmt;
use std::fs;
use std::path::Path;

#[derive(Debug)]
pub enum FieldError {
    Format(String),
    NonFinite(String),
    Io(std::io::Error),
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::Format(m) => write!(f, "{m}"),
            FieldError::NonFinite(m) => write!(f, "non-finite value: {m}"),
            FieldError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FieldError {}

impl From<std::io::Error> for FieldError {
    fn from(e: std::io::Error) -> Self {
        FieldError::Io(e)
    }
}

/// Point rows with named scalar columns; coordinates first.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable<T> {
    pub columns: Vec<String>,
    /// One row per point: `[x1, x2]`.
    pub points: Vec<[T; 2]>,
    /// `values[c][row]` for column `c`.
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> FieldTable<T> {
    pub fn new(columns: Vec<String>) -> Self {
        let n = columns.len();
        FieldTable {
            columns,
            points: Vec::new(),
            values: vec![Vec::new(); n],
        }
    }

    pub fn push_row(&mut self, point: [T; 2], row: &[T]) -> Result<(), FieldError> {
        if row.len() != self.columns.len() {
            return Err(FieldError::Format(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.points.push(point);
        for (col, v) in self.values.iter_mut().zip(row) {
            col.push(*v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[T]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.values[i].as_slice())
    }

    fn check_finite(&self) -> Result<(), FieldError> {
        for (i, p) in self.points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(FieldError::NonFinite(format!("coordinates of row {i}")));
            }
        }
        for (c, col) in self.values.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(FieldError::NonFinite(format!(
                        "column '{}', row {i}",
                        self.columns[c]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String, FieldError> {
        self.check_finite()?;
        let mut out = String::from("x1,x2");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{},{}", p[0], p[1]));
            for col in &self.values {
                out.push_str(&format!(",{}", col[i]));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self, FieldError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| FieldError::Format("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "x1" || cols[1] != "x2" {
            return Err(FieldError::Format(format!(
                "header must start with 'x1,x2', got '{header}'"
            )));
        }
        let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
        let mut table = FieldTable::new(names);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(FieldError::Format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    cols.len()
                )));
            }
            let mut parsed = Vec::with_capacity(fields.len());
            for f in &fields {
                let v: f64 = f.parse().map_err(|_| {
                    FieldError::Format(format!("line {}: bad number '{f}'", lineno + 1))
                })?;
                parsed.push(T::c(v));
            }
            table.push_row([parsed[0], parsed[1]], &parsed[2..])?;
        }
        Ok(table)
    }
}

/// Writes the table as CSV. Tables containing NaN or infinity are refused.
pub fn export_field<T: Scalar>(table: &FieldTable<T>, destination: &Path) -> Result<(), FieldError> {
    let csv = table.to_csv()?;
    fs::write(destination, csv)?;
    Ok(())
}

/// Loads a reference field written by [`export_field`] or by an external
/// tool; requires the `x1,x2` coordinate columns plus at least one value
/// column.
pub fn load_reference_field<T: Scalar>(source: &Path) -> Result<FieldTable<T>, FieldError> {
    let text = fs::read_to_string(source)?;
    let table = FieldTable::from_csv(&text)?;
    if table.columns.is_empty() {
        return Err(FieldError::Format(
            "reference field needs at least one value column".into(),
        ));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_exports_header_only() {
        let t: FieldTable<f64> = FieldTable::new(vec!["u1".into(), "u2".into()]);
        assert_eq!(t.to_csv().unwrap(), "x1,x2,u1,u2\n");
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut t: FieldTable<f64> = FieldTable::new(vec!["u".into()]);
        t.push_row([0.1, 0.2], &[1.0 / 3.0]).unwrap();
        t.push_row([1e-17, -0.75], &[-2.5e8]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        export_field(&t, &path).unwrap();
        let back: FieldTable<f64> = load_reference_field(&path).unwrap();
        assert_eq!(back.columns, t.columns);
        for i in 0..t.len() {
            for k in 0..2 {
                assert!((back.points[i][k] - t.points[i][k]).abs() <= 1e-12);
            }
            assert!((back.values[0][i] - t.values[0][i]).abs() <= 1e-12 * t.values[0][i].abs());
        }
        // Shortest-round-trip formatting actually makes it bit-exact.
        assert_eq!(back, t);
    }

    #[test]
    fn nan_rows_are_refused() {
        let mut t: FieldTable<f64> = FieldTable::new(vec!["u".into()]);
        t.push_row([0.0, 0.0], &[f64::NAN]).unwrap();
        assert!(matches!(t.to_csv(), Err(FieldError::NonFinite(_))));
    }

    #[test]
    fn missing_coordinate_column_is_an_error() {
        let err = FieldTable::<f64>::from_csv("x1,u\n0.0,1.0\n").unwrap_err();
        assert!(matches!(err, FieldError::Format(_)));
    }

    #[test]
    fn ragged_rows_are_an_error() {
        let err = FieldTable::<f64>::from_csv("x1,x2,u\n0.0,1.0\n").unwrap_err();
        assert!(matches!(err, FieldError::Format(_)));
    }

    #[test]
    fn three_value_columns_are_exposed_by_name() {
        let t = FieldTable::<f64>::from_csv("x1,x2,a,b,c\n0,0,1,2,3\n1,0,4,5,6\n").unwrap();
        assert_eq!(t.columns, vec!["a", "b", "c"]);
        assert_eq!(t.column("b").unwrap(), &[2.0, 5.0]);
        assert_eq!(t.column("c").unwrap(), &[3.0, 6.0]);
        assert!(t.column("d").is_none());
    }
}
