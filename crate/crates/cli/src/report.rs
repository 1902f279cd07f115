//! Benchmark report assembly and emission. The CSV and JSON outputs carry
//! the same rows field-for-field; metrics without ground truth stay empty in
//! CSV and `null` in JSON.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use radipose_core::bench::AggregateReport;

pub const CSV_HEADER: [&str; 11] = [
    "method",
    "refinement",
    "sample",
    "avg_pose_deg",
    "med_pose_deg",
    "auc10",
    "avg_eps",
    "med_eps",
    "avg_xi",
    "med_xi",
    "time_ms",
];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub refinement: String,
    pub sample: String,
    pub avg_pose_deg: f64,
    pub med_pose_deg: f64,
    pub auc10: f64,
    pub avg_eps: Option<f64>,
    pub med_eps: Option<f64>,
    pub avg_xi: f64,
    pub med_xi: f64,
    pub time_ms: f64,
}

impl ReportRow {
    pub fn from_aggregate(
        method: String,
        refinement: String,
        sample: String,
        agg: &AggregateReport,
        stable_time: bool,
    ) -> Self {
        let time_ms = if stable_time {
            0.0
        } else {
            agg.avg_runtime * 1e3
        };
        Self {
            method,
            refinement,
            sample,
            avg_pose_deg: agg.avg_pose,
            med_pose_deg: agg.med_pose,
            auc10: agg.auc_at_10,
            avg_eps: agg.avg_eps.is_finite().then_some(agg.avg_eps),
            med_eps: agg.med_eps.is_finite().then_some(agg.med_eps),
            avg_xi: agg.avg_xi,
            med_xi: agg.med_xi,
            time_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportMeta {
    pub seed: u64,
    pub config: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportWarnings {
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
    pub warnings: ReportWarnings,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl Report {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.refinement.clone(),
                r.sample.clone(),
                format!("{}", r.avg_pose_deg),
                format!("{}", r.med_pose_deg),
                format!("{}", r.auc10),
                fmt_opt(r.avg_eps),
                fmt_opt(r.med_eps),
                format!("{}", r.avg_xi),
                format!("{}", r.med_xi),
                format!("{}", r.time_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file =
            File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(serde_json::from_reader(file)?)
    }

    /// Plain-text table for terminal inspection.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<34} {:>14} {:>18} {:>9} {:>9} {:>7} {:>9} {:>9} {:>9} {:>9} {:>10}\n",
            "method",
            "refinement",
            "sample",
            "avg_pose",
            "med_pose",
            "auc10",
            "avg_eps",
            "med_eps",
            "avg_xi",
            "med_xi",
            "time_ms"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<34} {:>14} {:>18} {:>9.3} {:>9.3} {:>7.3} {:>9} {:>9} {:>9.3} {:>9.3} {:>10.2}\n",
                r.method,
                r.refinement,
                r.sample,
                r.avg_pose_deg,
                r.med_pose_deg,
                r.auc10,
                r.avg_eps.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                r.med_eps.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                r.avg_xi,
                r.med_xi,
                r.time_ms,
            ));
        }
        out
    }
}
