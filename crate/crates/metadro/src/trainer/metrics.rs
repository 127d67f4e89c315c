//! Evaluation metrics: average and worst/best/middle group accuracy with
//! 95% confidence half-widths, plus CSV/JSON export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_CSV_HEADER: &str =
    "iteration,avg,avg_hw,worst,worst_hw,best,best_hw,middle,middle_hw,worst_group,best_group,middle_group";

/// Per-group snapshot at evaluation time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupSnapshot {
    pub group: String,
    pub n: u64,
    pub mean_loss: f64,
}

/// One evaluation: accuracies in [0,1] with 95% half-widths.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub avg: f64,
    pub avg_hw: f64,
    /// Raw sample standard deviation across tasks; the half-width is the
    /// headline, this is logged alongside it.
    #[serde(default)]
    pub avg_std: f64,
    pub worst: f64,
    pub worst_hw: f64,
    pub best: f64,
    pub best_hw: f64,
    pub middle: f64,
    pub middle_hw: f64,
    pub worst_group: String,
    pub best_group: String,
    pub middle_group: String,
    #[serde(default)]
    pub groups: Vec<GroupSnapshot>,
}

impl MetricsRecord {
    /// The four ± columns in report order: Avg, Worst, Best, Middle.
    pub fn format_summary_row(&self) -> String {
        format!(
            "{:.3}±{:.3}, {:.3}±{:.3}, {:.3}±{:.3}, {:.3}±{:.3}",
            self.avg,
            self.avg_hw,
            self.worst,
            self.worst_hw,
            self.best,
            self.best_hw,
            self.middle,
            self.middle_hw
        )
    }

    /// Parse a four-column ± row like
    /// `0.714±0.029, 0.594±0.020, 0.963±0.007, 0.631±0.021`.
    pub fn parse_summary_row(row: &str) -> Result<MetricsRecord> {
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::Parse(format!("expected 4 ± columns, got {}", cols.len())));
        }
        let mut vals = Vec::with_capacity(8);
        for c in cols {
            let (m, h) = c
                .split_once('±')
                .ok_or_else(|| Error::Parse(format!("missing ± in column '{}'", c)))?;
            vals.push(m.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            vals.push(h.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        let rec = MetricsRecord {
            iteration: 0,
            avg: vals[0],
            avg_hw: vals[1],
            avg_std: 0.0,
            worst: vals[2],
            worst_hw: vals[3],
            best: vals[4],
            best_hw: vals[5],
            middle: vals[6],
            middle_hw: vals[7],
            worst_group: String::new(),
            best_group: String::new(),
            middle_group: String::new(),
            groups: vec![],
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("avg", self.avg),
            ("worst", self.worst),
            ("best", self.best),
            ("middle", self.middle),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{} accuracy {} outside [0,1]", name, v)));
            }
        }
        for (name, v) in [
            ("avg_hw", self.avg_hw),
            ("worst_hw", self.worst_hw),
            ("best_hw", self.best_hw),
            ("middle_hw", self.middle_hw),
        ] {
            if v < 0.0 {
                return Err(Error::Validation(format!("{} half-width {} negative", name, v)));
            }
        }
        Ok(())
    }

    /// The 12 pinned CSV column values, in header order.
    pub fn to_csv_row(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.avg.to_string(),
            self.avg_hw.to_string(),
            self.worst.to_string(),
            self.worst_hw.to_string(),
            self.best.to_string(),
            self.best_hw.to_string(),
            self.middle.to_string(),
            self.middle_hw.to_string(),
            self.worst_group.clone(),
            self.best_group.clone(),
            self.middle_group.clone(),
        ]
    }

    fn from_csv_row(row: &csv::StringRecord) -> Result<MetricsRecord> {
        if row.len() != 12 {
            return Err(Error::Parse(format!("metrics row has {} fields, expected 12", row.len())));
        }
        let f = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|e| Error::Parse(format!("field {}: {}", i, e)))
        };
        Ok(MetricsRecord {
            iteration: row[0].parse().map_err(|e| Error::Parse(format!("iteration: {}", e)))?,
            avg: f(1)?,
            avg_hw: f(2)?,
            avg_std: 0.0,
            worst: f(3)?,
            worst_hw: f(4)?,
            best: f(5)?,
            best_hw: f(6)?,
            middle: f(7)?,
            middle_hw: f(8)?,
            worst_group: row[9].to_string(),
            best_group: row[10].to_string(),
            middle_group: row[11].to_string(),
            groups: vec![],
        })
    }

    /// Equality over the 12 CSV columns (the JSON export carries more).
    pub fn csv_fields_eq(&self, other: &MetricsRecord) -> bool {
        self.to_csv_row() == other.to_csv_row()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Csv,
    Json,
}

impl std::str::FromStr for MetricsFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MetricsFormat::Csv),
            "json" => Ok(MetricsFormat::Json),
            other => Err(Error::Validation(format!("unknown metrics format '{}'", other))),
        }
    }
}

pub fn export_metrics(history: &[MetricsRecord], path: &Path, format: MetricsFormat) -> Result<()> {
    if history.is_empty() {
        return Err(Error::Validation("metrics history is empty".into()));
    }
    match format {
        MetricsFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
            w.write_record(METRICS_CSV_HEADER.split(','))
                .map_err(|e| Error::Parse(e.to_string()))?;
            for r in history {
                w.write_record(r.to_csv_row()).map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.flush()?;
        }
        MetricsFormat::Json => {
            let mut w = BufWriter::new(File::create(path)?);
            for r in history {
                serde_json::to_writer(&mut w, r).map_err(|e| Error::Parse(e.to_string()))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn import_metrics(path: &Path, format: MetricsFormat) -> Result<Vec<MetricsRecord>> {
    match format {
        MetricsFormat::Csv => {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
            let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
            let expect: Vec<&str> = METRICS_CSV_HEADER.split(',').collect();
            if header.iter().collect::<Vec<_>>() != expect {
                return Err(Error::Parse(format!("unexpected metrics header {:?}", header)));
            }
            rdr.records()
                .map(|r| {
                    let r = r.map_err(|e| Error::Parse(e.to_string()))?;
                    MetricsRecord::from_csv_row(&r)
                })
                .collect()
        }
        MetricsFormat::Json => {
            let file = BufReader::new(File::open(path)?);
            file.lines()
                .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
                .map(|l| {
                    let l = l?;
                    serde_json::from_str(&l).map_err(|e| Error::Parse(e.to_string()))
                })
                .collect()
        }
    }
}

/// Mean, sample std, and 95% half-width 1.96·std/√n over per-task accuracies.
pub fn confidence_interval(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    (mean, std, 1.96 * std / n.sqrt())
}

/// Normal-approximation half-width for a proportion `p` over `n` trials.
pub fn proportion_half_width(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}
