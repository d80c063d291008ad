//! Observational datasets and their CSV form.
//!
//! Header: `id,x0,...,x{d-1},group,treatment,outcome[,y0,...,ym]`. The
//! potential-outcome columns are all-or-none.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub covariates: Vec<f64>,
    pub group: String,
    pub treatment: usize,
    pub outcome: f64,
    pub potential_outcomes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Row>,
    feature_dim: usize,
    treatment_count: usize,
    group_labels: BTreeSet<String>,
}

impl Dataset {
    /// Validates the row invariants. `treatment_count` defaults to the width
    /// of the potential outcomes, else to the largest observed treatment + 1.
    pub fn new(rows: Vec<Row>, treatment_count: Option<usize>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("dataset has no rows"))?;
        let feature_dim = first.covariates.len();
        if feature_dim == 0 {
            return Err(Error::invalid("dataset needs at least one covariate"));
        }
        let has_potential = first.potential_outcomes.is_some();
        let inferred = match &first.potential_outcomes {
            Some(p) => p.len(),
            None => rows.iter().map(|r| r.treatment).max().unwrap_or(0) + 1,
        };
        let treatment_count = treatment_count.unwrap_or(inferred);
        if treatment_count == 0 {
            return Err(Error::invalid("treatment_count must be positive"));
        }

        let mut group_labels = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            if row.covariates.len() != feature_dim {
                return Err(Error::dims(format!(
                    "row {i} has {} covariates, expected {feature_dim}",
                    row.covariates.len()
                )));
            }
            if row.treatment >= treatment_count {
                return Err(Error::invalid(format!(
                    "row {i} has treatment {} outside 0..{treatment_count}",
                    row.treatment
                )));
            }
            if !row.covariates.iter().all(|v| v.is_finite()) || !row.outcome.is_finite() {
                return Err(Error::invalid(format!("row {i} has non-finite values")));
            }
            match (&row.potential_outcomes, has_potential) {
                (Some(p), true) => {
                    if p.len() != treatment_count {
                        return Err(Error::dims(format!(
                            "row {i} has {} potential outcomes, expected {treatment_count}",
                            p.len()
                        )));
                    }
                    if p[row.treatment] != row.outcome {
                        return Err(Error::invalid(format!(
                            "row {i} violates consistency: outcome != potential_outcomes[treatment]"
                        )));
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::invalid(
                        "potential outcomes must be present on all rows or none",
                    ))
                }
            }
            group_labels.insert(row.group.clone());
        }

        Ok(Self {
            rows,
            feature_dim,
            treatment_count,
            group_labels,
        })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn treatment_count(&self) -> usize {
        self.treatment_count
    }

    pub fn group_labels(&self) -> &BTreeSet<String> {
        &self.group_labels
    }

    pub fn has_potential_outcomes(&self) -> bool {
        self.rows[0].potential_outcomes.is_some()
    }

    /// Row indices observed under treatment `t`, in order.
    pub fn arm(&self, t: usize) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.treatment == t)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn groups(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.group.clone()).collect()
    }

    /// Copy of the dataset with every group label replaced by `label(i, row)`.
    pub fn relabel_groups(&self, mut label: impl FnMut(usize, &Row) -> String) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| Row {
                group: label(i, r),
                ..r.clone()
            })
            .collect();
        Dataset::new(rows, Some(self.treatment_count))
    }

    /// First `n` rows as a new dataset.
    pub fn head(&self, n: usize) -> Result<Self> {
        Dataset::new(self.rows[..n.min(self.len())].to_vec(), Some(self.treatment_count))
    }

    /// SHA-256 of the canonical CSV encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }

    pub fn header(&self) -> Vec<String> {
        let mut header = vec!["id".to_string()];
        header.extend((0..self.feature_dim).map(|j| format!("x{j}")));
        header.extend(["group", "treatment", "outcome"].map(String::from));
        if self.has_potential_outcomes() {
            header.extend((0..self.treatment_count).map(|t| format!("y{t}")));
        }
        header
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        let mut record: Vec<String> = Vec::new();
        for row in &self.rows {
            record.clear();
            record.push(row.id.clone());
            record.extend(row.covariates.iter().map(f64::to_string));
            record.push(row.group.clone());
            record.push(row.treatment.to_string());
            record.push(row.outcome.to_string());
            if let Some(p) = &row.potential_outcomes {
                record.extend(p.iter().map(f64::to_string));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        let layout = CsvLayout::parse(&header)?;
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            rows.push(layout.row(&record, line + 2)?);
        }
        if rows.is_empty() {
            return Err(Error::Parse("dataset CSV has no data rows".into()));
        }
        Dataset::new(rows, layout.potential.as_ref().map(|p| p.len()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::io::write_atomic(path.as_ref(), &buf)
    }
}

/// Column positions resolved from a dataset header.
struct CsvLayout {
    covariates: Vec<usize>,
    group: usize,
    treatment: usize,
    outcome: usize,
    potential: Option<Vec<usize>>,
}

impl CsvLayout {
    fn parse(header: &csv::StringRecord) -> Result<Self> {
        let cols: Vec<&str> = header.iter().collect();
        if cols.first() != Some(&"id") {
            return Err(Error::Parse("first column must be `id`".into()));
        }
        let find = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
        };
        let group = find("group")?;
        let treatment = find("treatment")?;
        let outcome = find("outcome")?;

        let covariates: Vec<usize> = (1..group).collect();
        for (j, &c) in covariates.iter().enumerate() {
            if cols[c] != format!("x{j}") {
                return Err(Error::Parse(format!(
                    "expected column `x{j}`, found `{}`",
                    cols[c]
                )));
            }
        }
        if covariates.is_empty() || treatment != group + 1 || outcome != group + 2 {
            return Err(Error::Parse(
                "header must read id,x0..,group,treatment,outcome[,y0..]".into(),
            ));
        }
        let potential: Vec<usize> = (outcome + 1..cols.len()).collect();
        for (t, &c) in potential.iter().enumerate() {
            if cols[c] != format!("y{t}") {
                return Err(Error::Parse(format!(
                    "expected column `y{t}`, found `{}`",
                    cols[c]
                )));
            }
        }
        Ok(Self {
            covariates,
            group,
            treatment,
            outcome,
            potential: (!potential.is_empty()).then_some(potential),
        })
    }

    fn row(&self, record: &csv::StringRecord, line: usize) -> Result<Row> {
        let field = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing field {i}")))
        };
        let real = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}: `{s}` is not a number")))
        };
        let treatment = field(self.treatment)?;
        let treatment = treatment.trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {line}: treatment `{treatment}` is not an index"))
        })?;
        Ok(Row {
            id: field(0)?.to_string(),
            covariates: self.covariates.iter().map(|&c| real(c)).collect::<Result<_>>()?,
            group: field(self.group)?.to_string(),
            treatment,
            outcome: real(self.outcome)?,
            potential_outcomes: match &self.potential {
                Some(cols) => Some(cols.iter().map(|&c| real(c)).collect::<Result<_>>()?),
                None => None,
            },
        })
    }
}
