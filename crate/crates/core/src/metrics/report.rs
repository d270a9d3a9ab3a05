//! Metric reports as JSON and as aligned plain-text tables.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use super::inference::sliding_inference;
use super::sensitivity::SensitivityReport;
use crate::data::{NormStats, Sample};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub bands: String,
    pub class_names: Vec<String>,
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_f1: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub mf1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top5: Option<f64>,
    pub samples: usize,
}

impl MetricsReport {
    pub fn from_confusion(
        cm: &ConfusionMatrix,
        strategy: &str,
        bands: &str,
        class_names: &[String],
        samples: usize,
    ) -> Self {
        let iou = cm.iou_scores();
        let f1 = cm.f1_scores();
        Self {
            strategy: strategy.into(),
            bands: bands.into(),
            class_names: class_names.to_vec(),
            per_class_iou: iou.per_class,
            per_class_f1: f1.per_class,
            miou: iou.mean,
            mf1: f1.mean,
            top1: None,
            top5: None,
            samples,
        }
    }
}

/// Sliding-window evaluation of a segmenter over labelled scenes.
pub fn evaluate_segmentation<T: Scalar>(
    net: &Network<T>,
    samples: &[Sample],
    patch: usize,
    stride: usize,
    stats: &NormStats,
    ignore: u8,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(net.spec().num_classes);
    for s in samples {
        let gt = s.mask.as_ref().ok_or_else(|| Error::config("split", "segmentation evaluation needs masks"))?;
        let pred = sliding_inference(net, &s.image, patch, stride, stats)?;
        cm.update(&pred, gt, ignore)?;
    }
    Ok(cm)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn signed_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:+.2}", 100.0 * x))
}

/// Aligned plain-text table: first column left-aligned, the rest right-aligned.
pub fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    writeln!(out, "{}", line(header)).expect("string write");
    writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  ")).expect("string write");
    for r in rows {
        writeln!(out, "{}", line(r)).expect("string write");
    }
    out
}

/// One row per (strategy, input order): Top-1, Top-5 and the change against
/// the first order of the same strategy.
pub fn render_sensitivity_table(reports: &[SensitivityReport]) -> String {
    let header: Vec<String> =
        ["Pre-training", "Input", "Top-1", "Top-5", "dTop-1", "dTop-5"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|rep| {
            rep.rows.iter().map(move |r| {
                vec![
                    rep.strategy.clone(),
                    r.name.clone(),
                    pct(Some(r.top1)),
                    pct(r.top5),
                    signed_pct(Some(r.delta_top1)),
                    signed_pct(r.delta_top5),
                ]
            })
        })
        .collect();
    render_table(&header, &rows)
}

/// Per-class accuracy under each input order, with deltas.
pub fn render_class_breakdown(report: &SensitivityReport) -> String {
    let mut header = vec!["Class".to_string()];
    for r in &report.rows {
        header.push(r.name.clone());
    }
    for r in report.rows.iter().skip(1) {
        header.push(format!("d{}", r.name));
    }
    let rows: Vec<Vec<String>> = report
        .class_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut row = vec![name.clone()];
            row.extend(report.rows.iter().map(|r| pct(r.per_class[c])));
            row.extend(report.rows.iter().skip(1).map(|r| signed_pct(r.per_class_delta[c])));
            row
        })
        .collect();
    render_table(&header, &rows)
}

/// One row per report: strategy, bands, per-class IoU, mIoU and mF1.
pub fn render_segmentation_table(reports: &[MetricsReport]) -> String {
    let Some(first) = reports.first() else { return String::new() };
    let mut header = vec!["Pre-training".to_string(), "Bands".to_string()];
    header.extend(first.class_names.iter().cloned());
    header.extend(["mIoU".to_string(), "mF1".to_string()]);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.strategy.clone(), r.bands.clone()];
            row.extend((0..first.class_names.len()).map(|c| pct(r.per_class_iou.get(c).copied().flatten())));
            row.extend([pct(r.miou), pct(r.mf1)]);
            row
        })
        .collect();
    render_table(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sensitivity::PermutationResult;

    #[test]
    fn sensitivity_table_layout() {
        let row = |name: &str, top1: f64, d: f64| PermutationResult {
            name: name.into(),
            perm: vec![0, 1, 2],
            top1,
            top5: Some(0.99),
            per_class: vec![Some(top1)],
            delta_top1: d,
            delta_top5: Some(0.0),
            per_class_delta: vec![Some(d)],
        };
        let rep = |s: &str, a: f64, b: f64| SensitivityReport {
            strategy: s.into(),
            samples: 10,
            class_names: vec!["c0".into()],
            rows: vec![row("RGB", a, 0.0), row("BGR", b, b - a)],
        };
        let text = render_sensitivity_table(&[rep("IM-RGB", 0.8118, 0.7230), rep("CSP-3", 0.7932, 0.7922)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("Pre-training"));
        assert!(lines[3].contains("72.30") && lines[3].contains("-8.88"));
        assert!(lines[5].contains("79.22") && lines[5].contains("-0.10"));
        assert!(render_class_breakdown(&rep("x", 0.5, 0.25)).contains("-25.00"));
    }

    #[test]
    fn segmentation_table_marks_undefined() {
        let mut cm = ConfusionMatrix::new(3);
        cm.add(0, 0, 255).unwrap();
        cm.add(1, 0, 255).unwrap();
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let rep = MetricsReport::from_confusion(&cm, "CSP-4", "R,G,B,IR", &names, 1);
        let text = render_segmentation_table(&[rep]);
        assert!(text.lines().nth(2).unwrap().contains(" - "));
        assert!(text.contains("50.00"));
    }
}
