//! Time-series run reports (CSV) and their comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::config::REPORT_COLUMNS;

pub const REPORT_HEADER: &str = "t,subdom_res_max,kinetic_energy,mass_res_max,state_err_l2";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportRow {
    pub t: f64,
    pub subdom_res_max: Option<f64>,
    pub kinetic_energy: Option<f64>,
    pub mass_res_max: Option<f64>,
    pub state_err_l2: Option<f64>,
}

impl ReportRow {
    fn values(&self) -> [Option<f64>; 4] {
        [
            self.subdom_res_max,
            self.kinetic_energy,
            self.mass_res_max,
            self.state_err_l2,
        ]
    }
}

/// Run provenance, written next to the CSV so the CSV itself stays
/// reproducible bit for bit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub crate_version: String,
    pub problem: String,
    pub model: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        write!(out, "{v:e}").expect("writing to a String");
    }
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            write!(out, "{:e}", r.t).expect("writing to a String");
            for v in r.values() {
                fmt_opt(&mut out, v);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: origin.to_string(),
            message,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == REPORT_HEADER => {}
            other => return Err(bad(format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("row {k} has {} fields", fields.len())));
            }
            let parse = |s: &str| -> Result<Option<f64>> {
                if s.trim().is_empty() {
                    Ok(None)
                } else {
                    s.trim()
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| bad(format!("row {k}: {e}")))
                }
            };
            let t = parse(fields[0])?.ok_or_else(|| bad(format!("row {k} has no time")))?;
            rows.push(ReportRow {
                t,
                subdom_res_max: parse(fields[1])?,
                kinetic_energy: parse(fields[2])?,
                mass_res_max: parse(fields[3])?,
                state_err_l2: parse(fields[4])?,
            });
        }
        if rows.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(bad("time column is not increasing".into()));
        }
        Ok(Self {
            rows,
            metadata: ReportMetadata::default(),
        })
    }

    /// Writes `path` and the metadata sidecar `<path>.meta.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        let meta = serde_json::to_string_pretty(&self.metadata)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(metadata_path(path), meta)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut report = Self::from_csv(&text, &path.display().to_string())?;
        if let Ok(meta) = std::fs::read_to_string(metadata_path(path)) {
            report.metadata = serde_json::from_str(&meta).map_err(|e| Error::Format {
                path: metadata_path(path).display().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(report)
    }

    /// Largest entry of a column, ignoring empty fields.
    pub fn column_max(&self, name: &str) -> Option<f64> {
        let idx = REPORT_COLUMNS.iter().position(|c| *c == name)?;
        self.rows
            .iter()
            .filter_map(|r| r.values()[idx])
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    }

    /// Largest `|K(t) − K(0)| / K(0)` over the report.
    pub fn relative_energy_drift(&self) -> Option<f64> {
        let k0 = self.rows.first()?.kinetic_energy?;
        if k0 == 0.0 {
            return None;
        }
        self.rows
            .iter()
            .filter_map(|r| r.kinetic_energy)
            .map(|k| (k - k0).abs() / k0)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    }
}

pub fn metadata_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnDiff {
    pub name: &'static str,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_a: Option<f64>,
    pub max_b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareSummary {
    pub rows: usize,
    pub columns: Vec<ColumnDiff>,
}

impl CompareSummary {
    /// Columns whose max difference exceeds the configured threshold.
    pub fn breaches<'a>(
        &'a self,
        thresholds: &'a std::collections::BTreeMap<String, f64>,
    ) -> Vec<(&'a ColumnDiff, f64)> {
        self.columns
            .iter()
            .filter_map(|c| {
                let thr = *thresholds.get(c.name)?;
                (c.max_abs > thr).then_some((c, thr))
            })
            .collect()
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>14} {:>14} {:>14} {:>14}\n",
            "column", "max|a-b|", "mean|a-b|", "max a", "max b"
        );
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        for c in &self.columns {
            writeln!(
                out,
                "{:<16} {:>14.6e} {:>14.6e} {:>14} {:>14}",
                c.name,
                c.max_abs,
                c.mean_abs,
                f(c.max_a),
                f(c.max_b)
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Per-column max and mean absolute differences. A value present in one
/// report but absent in the other counts as an infinite difference.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<CompareSummary> {
    if a.rows.len() != b.rows.len() {
        return Err(Error::InvalidArgument(format!(
            "reports have different time grids ({} vs {} rows)",
            a.rows.len(),
            b.rows.len()
        )));
    }
    for (k, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        if (ra.t - rb.t).abs() > 1e-12 * ra.t.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "reports have different time grids at row {k} ({} vs {})",
                ra.t, rb.t
            )));
        }
    }
    let columns = REPORT_COLUMNS
        .iter()
        .enumerate()
        .map(|(idx, &name)| {
            let mut max_abs = 0.0_f64;
            let mut sum = 0.0;
            let mut count = 0usize;
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                let d = match (ra.values()[idx], rb.values()[idx]) {
                    (None, None) => continue,
                    (Some(x), Some(y)) => (x - y).abs(),
                    _ => f64::INFINITY,
                };
                max_abs = max_abs.max(d);
                sum += d;
                count += 1;
            }
            ColumnDiff {
                name,
                max_abs,
                mean_abs: if count == 0 { 0.0 } else { sum / count as f64 },
                max_a: a.column_max(name),
                max_b: b.column_max(name),
            }
        })
        .collect();
    Ok(CompareSummary {
        rows: a.rows.len(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            rows: vec![
                ReportRow {
                    t: 0.0,
                    kinetic_energy: Some(0.5),
                    ..Default::default()
                },
                ReportRow {
                    t: 0.1,
                    subdom_res_max: Some(1.25e-13),
                    kinetic_energy: Some(0.1 + 0.2),
                    mass_res_max: None,
                    state_err_l2: Some(3.0),
                },
            ],
            metadata: ReportMetadata::default(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let csv = r.to_csv();
        assert!(csv.starts_with("t,subdom_res_max,kinetic_energy,mass_res_max,state_err_l2\n"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",,"));
        let back = RunReport::from_csv(&csv, "mem").unwrap();
        assert_eq!(back.rows, r.rows);
    }

    #[test]
    fn identical_reports_compare_to_zero() {
        let s = compare(&sample(), &sample()).unwrap();
        assert!(s.columns.iter().all(|c| c.max_abs == 0.0 && c.mean_abs == 0.0));
        let thr = [("subdom_res_max".to_string(), 0.0)].into_iter().collect();
        assert!(s.breaches(&thr).is_empty());
    }

    #[test]
    fn breaches_and_grid_mismatch() {
        let mut b = sample();
        b.rows[1].state_err_l2 = Some(3.5);
        let s = compare(&sample(), &b).unwrap();
        let thr = [("state_err_l2".to_string(), 0.1)].into_iter().collect();
        assert_eq!(s.breaches(&thr).len(), 1);
        b.rows[1].t = 0.2;
        assert!(compare(&sample(), &b).is_err());
        b.rows.pop();
        assert!(compare(&sample(), &b).is_err());
    }

    #[test]
    fn energy_drift() {
        let r = sample();
        assert!((r.relative_energy_drift().unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(r.column_max("subdom_res_max"), Some(1.25e-13));
        assert_eq!(r.column_max("mass_res_max"), None);
    }
}
