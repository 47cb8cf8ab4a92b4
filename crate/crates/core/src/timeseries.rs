//! Time series tables: CSV ingestion and output, boundary look-up tables.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear interpolation with endpoint hold. `series` must be
/// sorted by time and non-empty.
pub fn interpolate(series: &[(f64, f64)], t: f64) -> f64 {
    let first = series[0];
    let last = series[series.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    let k = series.partition_point(|p| p.0 <= t);
    let (t0, y0) = series[k - 1];
    let (t1, y1) = series[k];
    if t == t0 {
        return y0;
    }
    y0 + (y1 - y0) * (t - t0) / (t1 - t0)
}

/// Validated look-up table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series(Vec<(f64, f64)>);

impl Series {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("empty boundary series".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Config("non-finite value in boundary series".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config("boundary series times must be strictly increasing".into()));
        }
        Ok(Series(points))
    }

    pub fn constant(value: f64) -> Self {
        Series(vec![(0.0, value)])
    }

    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.0, t)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.0
    }
}

pub fn lookup_boundary(series: &[(f64, f64)], t: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Config("empty boundary series".into()));
    }
    Ok(interpolate(series, t))
}

/// Boundary input as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundarySpec {
    Constant(f64),
    Table(Vec<(f64, f64)>),
    Csv { csv: PathBuf, column: String },
}

impl BoundarySpec {
    /// Resolves CSV references relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Series> {
        match self {
            BoundarySpec::Constant(v) => Series::new(vec![(0.0, *v)]),
            BoundarySpec::Table(points) => Series::new(points.clone()),
            BoundarySpec::Csv { csv, column } => {
                let table = TimeSeriesTable::read_path(&base.join(csv))?;
                Series::new(table.column_series(column)?)
            }
        }
    }
}

/// CSV table with a leading `time_s` column.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    pub columns: Vec<String>,
    pub time: Vec<f64>,
    /// Row-major values, one entry per column.
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeriesTable {
    pub fn new(columns: Vec<String>) -> Self {
        TimeSeriesTable { columns, time: Vec::new(), rows: Vec::new() }
    }

    pub fn push(&mut self, time: f64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.time.push(time);
        self.rows.push(row);
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read(file).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.first().map(String::as_str) != Some("time_s") {
            return Err(Error::InvalidInput("first CSV column must be \"time_s\"".into()));
        }
        let mut table = TimeSeriesTable::new(headers[1..].to_vec());
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::InvalidInput(format!("row {}: {e}", i + 2)))?;
            let t = values[0];
            if !(t >= 0.0) || table.time.last().is_some_and(|&prev| t < prev) {
                return Err(Error::InvalidInput(format!("row {}: time_s must be non-negative and monotone", i + 2)));
            }
            table.push(t, values[1..].to_vec());
        }
        Ok(table)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .column_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column \"{name}\"")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn column_series(&self, name: &str) -> Result<Vec<(f64, f64)>> {
        Ok(self.time.iter().cloned().zip(self.column(name)?).collect())
    }

    /// Writes the table with integer seconds and six significant digits.
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time_s".to_owned()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.time.iter().zip(&self.rows) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(format!("{}", t.round() as i64));
            rec.extend(row.iter().map(|&v| format_sig6(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write(std::io::BufWriter::new(file))
    }
}

/// Reads a CSV file whose fields are all numeric; returns the header and the rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = record?
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::InvalidInput(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Shortest decimal form of `v` rounded to six significant digits.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        "0".to_owned()
    } else {
        format!("{rounded}")
    }
}
