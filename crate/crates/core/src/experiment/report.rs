//! Report rows, CSV output and the aligned summary table.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::Cell;
use crate::metrics::{percent, ConfusionMatrix, Metrics};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub cell: Cell,
    /// `None` when the cell failed.
    pub confusion: Option<ConfusionMatrix>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub seconds: f64,
    pub checkpoint: Option<PathBuf>,
    /// SHA-256 of the checkpoint bytes.
    pub checksum: Option<String>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn failed(cell: Cell, error: String) -> Self {
        ReportRow {
            cell,
            confusion: None,
            train_samples: 0,
            test_samples: 0,
            seconds: 0.0,
            checkpoint: None,
            checksum: None,
            error: Some(error),
        }
    }

    pub fn metrics(&self) -> Option<Metrics> {
        self.confusion.map(|c| c.metrics())
    }

    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &ReportRow) -> bool {
        ReportRow { seconds: 0.0, ..self.clone() } == ReportRow { seconds: 0.0, ..other.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str =
    "classifier,period,dimension,volume,sens,spec,acc,mcc,f,tp,fp,tn,fn,train_n,test_n,seconds,checkpoint,checksum,error";

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl RunReport {
    /// Full-precision CSV; metrics are recomputable from the stored counts.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let c = r.cell;
            let _ =
                write!(out, "{},{},{},{},", c.classifier, c.period, c.dimension, if c.volume { "on" } else { "off" });
            match (r.metrics(), r.confusion) {
                (Some(m), Some(cm)) => {
                    let _ = write!(
                        out,
                        "{},{},{},{},{},{},{},{},{},",
                        m.sensitivity, m.specificity, m.accuracy, m.mcc, m.f_measure, cm.tp, cm.fp, cm.tn, cm.fn_
                    );
                }
                _ => out.push_str(",,,,,,,,,"),
            }
            let _ = writeln!(
                out,
                "{},{},{:.3},{},{},{}",
                r.train_samples,
                r.test_samples,
                r.seconds,
                csv_escape(&r.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
                r.checksum.as_deref().unwrap_or(""),
                csv_escape(r.error.as_deref().unwrap_or(""))
            );
        }
        out
    }

    /// Plain-text table grouped by volume panel, percentages to one decimal.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<10} {:>6} {:>9} {:>11} {:>11} {:>8} {:>7}",
            "volume", "classifier", "period", "dimension", "sensitivity", "specificity", "accuracy", "mcc"
        );
        for volume in [true, false] {
            for r in self.rows.iter().filter(|r| r.cell.volume == volume) {
                let vol = if volume { "with" } else { "without" };
                let c = r.cell;
                match r.metrics() {
                    Some(m) => {
                        let _ = writeln!(
                            out,
                            "{:<8} {:<10} {:>6} {:>9} {:>11} {:>11} {:>8} {:>7.3}",
                            vol,
                            c.classifier.to_string(),
                            c.period,
                            c.dimension,
                            percent(m.sensitivity),
                            percent(m.specificity),
                            percent(m.accuracy),
                            m.mcc
                        );
                    }
                    None => {
                        let _ = writeln!(
                            out,
                            "{:<8} {:<10} {:>6} {:>9} error: {}",
                            vol,
                            c.classifier.to_string(),
                            c.period,
                            c.dimension,
                            r.error.as_deref().unwrap_or("unknown")
                        );
                    }
                }
            }
        }
        out
    }

    pub fn same_results(&self, other: &RunReport) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_result(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Classifier;

    fn row() -> ReportRow {
        ReportRow {
            cell: Cell { classifier: Classifier::Knn, period: 5, dimension: 20, volume: false },
            confusion: Some(ConfusionMatrix::new(5, 2, 3, 1)),
            train_samples: 10,
            test_samples: 11,
            seconds: 1.5,
            checkpoint: Some("out/knn_5_20_novol.cfm".into()),
            checksum: Some("ab".into()),
            error: None,
        }
    }

    #[test]
    fn csv_metrics_recomputable() {
        let report = RunReport { rows: vec![row(), ReportRow::failed(row().cell, "missing, file".into())] };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let f: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(&f[..4], &["knn", "5", "20", "off"]);
        let cm = ConfusionMatrix::new(
            f[9].parse().unwrap(),
            f[10].parse().unwrap(),
            f[11].parse().unwrap(),
            f[12].parse().unwrap(),
        );
        assert_eq!(f[8].parse::<f64>().unwrap(), cm.f_measure());
        assert_eq!(f[7].parse::<f64>().unwrap(), cm.mcc());
        assert!(lines[2].ends_with("\"missing, file\""));
    }

    #[test]
    fn table_and_equality() {
        let t = RunReport { rows: vec![row()] }.to_table();
        assert!(t.contains("83.3") && t.contains("72.7"), "{t}");
        let mut other = row();
        other.seconds = 99.0;
        assert!(row().same_result(&other));
    }
}
