//! File formats: JSON problem instances and CSV sample tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cumulants::{estimate_epoch, EpochCumulants};
use crate::error::{Error, Result};
use crate::synthgen::ProblemInstance;

pub const INSTANCE_VERSION: u32 = 1;

/// On-disk problem instance. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub m: usize,
    /// `null` for undisturbed instances.
    pub sigma: Option<f64>,
    pub seed: u64,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub means: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_basis: Option<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(p: &ProblemInstance) -> Self {
        InstanceFile {
            version: INSTANCE_VERSION,
            dim: p.dim,
            d: p.sub_dim,
            m: p.epochs(),
            sigma: p.sigma,
            seed: p.seed,
            covariances: p.covariances.iter().map(rows_of).collect(),
            means: p.means.iter().map(|v| v.iter().copied().collect()).collect(),
            true_basis: Some(rows_of(&p.true_basis)),
        }
    }
}

impl InstanceFile {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let file: InstanceFile = serde_json::from_reader(reader).map_err(|e| Error::Format(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self).map_err(|e| Error::Format(e.to_string()))?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != INSTANCE_VERSION {
            return Err(Error::Format(format!("unsupported version {}", self.version)));
        }
        if self.dim == 0 || self.d == 0 || self.d >= self.dim {
            return Err(Error::Format(format!("need 0 < d < D, got D={} d={}", self.dim, self.d)));
        }
        if self.covariances.len() != self.m || self.means.len() != self.m {
            return Err(Error::Format(format!(
                "expected {} covariances and means, found {} and {}",
                self.m,
                self.covariances.len(),
                self.means.len()
            )));
        }
        for c in &self.covariances {
            matrix_from_rows(c, self.dim, self.dim, "covariance")?;
        }
        if self.means.iter().any(|m| m.len() != self.dim) {
            return Err(Error::Format(format!("means must have length {}", self.dim)));
        }
        if let Some(b) = &self.true_basis {
            matrix_from_rows(b, self.dim, self.d, "true_basis")?;
        }
        Ok(())
    }

    pub fn cumulants(&self) -> Result<Vec<EpochCumulants>> {
        self.covariances
            .iter()
            .zip(&self.means)
            .map(|(c, m)| {
                let cov = matrix_from_rows(c, self.dim, self.dim, "covariance")?;
                EpochCumulants::new(DVector::from_column_slice(m), cov)
            })
            .collect()
    }

    pub fn true_basis(&self) -> Result<Option<DMatrix<f64>>> {
        self.true_basis
            .as_ref()
            .map(|b| matrix_from_rows(b, self.dim, self.d, "true_basis"))
            .transpose()
    }
}

/// Samples grouped by epoch label, in ascending label order; each matrix is
/// `N x D` with one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplesFile {
    pub epochs: Vec<(u64, DMatrix<f64>)>,
}

impl SamplesFile {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(fmt)?.clone();
        let dim = header.len().saturating_sub(1);
        let expected: Vec<String> = std::iter::once("epoch".to_string())
            .chain((1..=dim).map(|k| format!("x{k}")))
            .collect();
        if dim == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Format("header must be epoch,x1,...,xD".into()));
        }
        let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(fmt)?;
            let row = line + 2;
            let epoch: u64 = record[0]
                .parse()
                .ok()
                .filter(|&e| e >= 1)
                .ok_or_else(|| Error::Format(format!("row {row}: epoch must be a positive integer")))?;
            let group = groups.entry(epoch).or_default();
            for field in record.iter().skip(1) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Format(format!("row {row}: bad number {field:?}")))?;
                group.push(v);
            }
        }
        let mut epochs = Vec::with_capacity(groups.len());
        for (label, values) in groups {
            let n = values.len() / dim;
            if n < 2 {
                return Err(Error::Format(format!("epoch {label} has fewer than 2 samples")));
            }
            epochs.push((label, DMatrix::from_row_slice(n, dim, &values)));
        }
        if epochs.is_empty() {
            return Err(Error::Format("no samples".into()));
        }
        Ok(SamplesFile { epochs })
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        let dim = self.epochs.first().map_or(0, |(_, s)| s.ncols());
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("epoch".to_string())
            .chain((1..=dim).map(|k| format!("x{k}")))
            .collect();
        w.write_record(&header).map_err(fmt)?;
        for (label, samples) in &self.epochs {
            for row in samples.row_iter() {
                let mut rec = vec![label.to_string()];
                rec.extend(row.iter().map(|v| format!("{v:e}")));
                w.write_record(&rec).map_err(fmt)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.epochs[0].1.ncols()
    }

    pub fn cumulants(&self) -> Result<Vec<EpochCumulants>> {
        self.epochs.iter().map(|(_, s)| estimate_epoch(s)).collect()
    }
}
