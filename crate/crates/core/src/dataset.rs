//! Observational records of covariates, historical decisions and outcomes.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Records `(x, z, y)`: covariates, the historical decision, and the
/// observed outcome under that decision.
///
/// Covariates are stored row-major with `k` columns; `k = 0` means no
/// covariates were recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    x: Vec<f64>,
    k: usize,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl ObservationalDataset {
    /// Builds a dataset from a row-major covariate buffer of `z.len() * k` values.
    pub fn new(x: Vec<f64>, k: usize, z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = z.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset needs at least one record".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if x.len() != n * k {
            return Err(Error::DimensionMismatch { expected: n * k, got: x.len() });
        }
        check_finite("z", &z)?;
        check_finite("y", &y)?;
        check_finite("x", &x)?;
        Ok(Self { x, k, z, y })
    }

    /// Dataset without covariates.
    pub fn without_covariates(z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(Vec::new(), 0, z, y)
    }

    /// Builds a dataset from one covariate vector per record.
    pub fn from_rows(x_rows: &[Vec<f64>], z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let k = x_rows.first().map_or(0, Vec::len);
        if x_rows.len() != z.len() {
            return Err(Error::DimensionMismatch { expected: z.len(), got: x_rows.len() });
        }
        let mut x = Vec::with_capacity(x_rows.len() * k);
        for row in x_rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: row.len() });
            }
            x.extend_from_slice(row);
        }
        Self::new(x, k, z, y)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Number of covariate columns.
    pub fn covariate_dim(&self) -> usize {
        self.k
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row-major covariate buffer.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    /// Column `c` of the covariates as an owned vector.
    pub fn x_column(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.x[i * self.k + c]).collect()
    }

    /// The rows at `indices`, in that order (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(indices.len() * self.k);
        let mut z = Vec::with_capacity(indices.len());
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidInput(format!("row index {i} out of range")));
            }
            x.extend_from_slice(self.x_row(i));
            z.push(self.z[i]);
            y.push(self.y[i]);
        }
        Self::new(x, self.k, z, y)
    }

    /// Drops the covariates, keeping `(z, y)`.
    pub fn decision_outcome_only(&self) -> Self {
        Self { x: Vec::new(), k: 0, z: self.z.clone(), y: self.y.clone() }
    }

    /// Reads the CSV layout `z,y[,x1,...,xk]` with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv { line: 1, message: e.to_string() })?
            .clone();

        let mut z_col = None;
        let mut y_col = None;
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        for (pos, name) in headers.iter().enumerate() {
            let name = name.trim();
            match name {
                "z" => z_col = Some(pos),
                "y" => y_col = Some(pos),
                _ => {
                    let idx = name
                        .strip_prefix('x')
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| Error::Csv {
                            line: 1,
                            message: format!("unexpected column `{name}`"),
                        })?;
                    x_cols.push((idx, pos));
                }
            }
        }
        let z_col = z_col.ok_or_else(|| Error::Csv { line: 1, message: "missing column `z`".into() })?;
        let y_col = y_col.ok_or_else(|| Error::Csv { line: 1, message: "missing column `y`".into() })?;
        x_cols.sort_unstable();
        for (expected, &(idx, _)) in x_cols.iter().enumerate() {
            if idx != expected + 1 {
                return Err(Error::Csv {
                    line: 1,
                    message: format!("missing column `x{}`", expected + 1),
                });
            }
        }

        let k = x_cols.len();
        let (mut x, mut z, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |pos: usize| -> Result<f64> {
                let raw = record.get(pos).unwrap_or("").trim();
                let v: f64 = raw.parse().map_err(|_| Error::Csv {
                    line,
                    message: format!("cannot parse `{raw}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv { line, message: format!("non-finite value `{raw}`") });
                }
                Ok(v)
            };
            z.push(field(z_col)?);
            y.push(field(y_col)?);
            for &(_, pos) in &x_cols {
                x.push(field(pos)?);
            }
        }
        if z.is_empty() {
            return Err(Error::Csv { line: 1, message: "no records".into() });
        }
        Self::new(x, k, z, y)
    }

    /// Writes the CSV layout read by [`ObservationalDataset::read_csv`].
    ///
    /// Values use the shortest representation that round-trips, so output
    /// is byte-identical for identical datasets.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("z,y");
        for c in 1..=self.k {
            header.push_str(&format!(",x{c}"));
        }
        writeln!(out, "{header}")?;
        for i in 0..self.len() {
            let mut line = format!("{},{}", self.z[i], self.y[i]);
            for v in self.x_row(i) {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        let err = ObservationalDataset::without_covariates(vec![1.0, 2.0], vec![1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(ObservationalDataset::without_covariates(vec![], vec![]).is_err());
        let err = ObservationalDataset::without_covariates(vec![1.0, f64::NAN], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { what: "z", index: 1 }));
    }

    #[test]
    fn csv_round_trip_preserves_bits() {
        let data = ObservationalDataset::from_rows(
            &[vec![0.1, -3.0], vec![1e-300, 2.5]],
            vec![1.0 / 3.0, 7.0],
            vec![-0.0, 12.125],
        )
        .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = ObservationalDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_reports_line_of_bad_value() {
        let text = "z,y,x1\n1,2,3\n4,oops,6\n";
        match ObservationalDataset::read_csv(text.as_bytes()).unwrap_err() {
            Error::Csv { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_requires_z_and_y() {
        assert!(matches!(
            ObservationalDataset::read_csv("y,x1\n1,2\n".as_bytes()),
            Err(Error::Csv { line: 1, .. })
        ));
        assert!(matches!(
            ObservationalDataset::read_csv("z,y,x2\n1,2,3\n".as_bytes()),
            Err(Error::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn covariate_free_csv() {
        let data = ObservationalDataset::read_csv("z,y\n20,1\n28,0\n".as_bytes()).unwrap();
        assert_eq!(data.covariate_dim(), 0);
        assert_eq!(data.z(), &[20.0, 28.0]);
    }
}
