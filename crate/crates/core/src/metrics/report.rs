//! Per-image metric tables with mean ± population std summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedMetrics {
    pub ergas: f64,
    pub sam: f64,
    pub q2n: f64,
    pub scc: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullMetrics {
    pub d_lambda: f64,
    pub d_s: f64,
    pub qnr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Reduced,
    Full,
}

impl ReportKind {
    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            ReportKind::Reduced => &["ERGAS", "SAM", "Q2n", "SCC"],
            ReportKind::Full => &["D_lambda", "D_S", "QNR"],
        }
    }

    /// Decimals used in summaries: 3 for reduced metrics, 4 for full.
    pub fn decimals(self) -> usize {
        match self {
            ReportKind::Reduced => 3,
            ReportKind::Full => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub name: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: ReportKind,
    pub metrics: Vec<String>,
    pub images: Vec<ImageRow>,
    pub summary: Vec<Summary>,
}

pub fn format_mean_std(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$}±{std:.decimals$}")
}

impl MetricsReport {
    fn build(kind: ReportKind, images: Vec<ImageRow>) -> Self {
        let metrics: Vec<String> = kind.metric_names().iter().map(|s| s.to_string()).collect();
        let n = images.len() as f64;
        let summary = metrics
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let mean = images.iter().map(|r| r.values[k]).sum::<f64>() / n;
                let var = images.iter().map(|r| (r.values[k] - mean).powi(2)).sum::<f64>() / n;
                Summary {
                    metric: m.clone(),
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect();
        MetricsReport {
            kind,
            metrics,
            images,
            summary,
        }
    }

    pub fn reduced(rows: Vec<(String, ReducedMetrics)>) -> Self {
        let images = rows
            .into_iter()
            .map(|(name, m)| ImageRow {
                name,
                values: vec![m.ergas, m.sam, m.q2n, m.scc],
                warnings: m.warnings,
            })
            .collect();
        Self::build(ReportKind::Reduced, images)
    }

    pub fn full(rows: Vec<(String, FullMetrics)>) -> Self {
        let images = rows
            .into_iter()
            .map(|(name, m)| ImageRow {
                name,
                values: vec![m.d_lambda, m.d_s, m.qnr],
                warnings: Vec::new(),
            })
            .collect();
        Self::build(ReportKind::Full, images)
    }

    /// One `metric: mean±std` line per metric.
    pub fn summary_lines(&self) -> Vec<String> {
        let d = self.kind.decimals();
        self.summary
            .iter()
            .map(|s| format!("{}: {}", s.metric, format_mean_std(s.mean, s.std, d)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// One row per image, then a `summary` row of `mean±std` cells.
    pub fn to_csv(&self) -> String {
        let mut s = format!("image,{}\n", self.metrics.join(","));
        for r in &self.images {
            let vals: Vec<String> = r.values.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{},{}", r.name, vals.join(","));
        }
        let d = self.kind.decimals();
        let cells: Vec<String> = self.summary.iter().map(|x| format_mean_std(x.mean, x.std, d)).collect();
        let _ = writeln!(s, "summary,{}", cells.join(","));
        s
    }
}
