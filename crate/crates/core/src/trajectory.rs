//! Recorded simulation output: a time grid plus named per-area and per-line
//! columns, stored row-major.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    columns: Vec<String>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, data: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.data.len() / self.columns.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::Dimension { context: "trajectory row", expected: self.width(), actual: row.len() });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width()..(i + 1) * self.width()]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.index_of(name)?;
        Some(self.data.iter().skip(k).step_by(self.width()).copied().collect())
    }

    /// Like [`column`](Self::column) but reports the missing name.
    pub fn require(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name).ok_or_else(|| Error::InvalidInput(format!("trajectory has no column '{name}'")))
    }

    pub fn times(&self) -> Vec<f64> {
        self.column("t").unwrap_or_default()
    }

    /// Per-area series, `area` 0-based: `area_series("omega", 0)` reads `omega_1`.
    pub fn area_series(&self, prefix: &str, area: usize) -> Result<Vec<f64>> {
        self.require(&format!("{prefix}_{}", area + 1))
    }

    pub fn n_areas(&self) -> usize {
        self.columns.iter().filter(|c| c.starts_with("omega_")).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for i in 0..self.len() {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("t") {
            return Err(Error::InvalidInput("trajectory CSV must start with a 't' column".into()));
        }
        let mut traj = Self::new(columns);
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidInput(format!("trajectory row {}: {e}", i + 2)))?;
            traj.push_row(&row)?;
        }
        Ok(traj)
    }
}
