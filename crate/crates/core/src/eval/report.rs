//! Evaluation reports and their JSON, CSV and SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{CaptureRecord, GalleryManifest};
use crate::error::{Error, Result};
use crate::eval::metrics::{
    aggregate_splits, build_visit_record, percent, recognized_instances, split_topk_hits, Prediction, VisitRecord,
};
use crate::fsio::{read_json, write_atomic, write_json_atomic};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCurve {
    pub split: String,
    pub records: usize,
    /// `hits[k-1]`: records whose prediction is in the top-k ground truth.
    pub hits: Vec<usize>,
    pub accuracy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coverage {
    pub recognized: usize,
    pub instances: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub max_k: usize,
    pub splits: Vec<SplitCurve>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Over the union of all evaluated splits.
    pub coverage: Coverage,
    pub visits: BTreeMap<String, VisitRecord>,
    /// Free-form description of how the report was produced.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Predictions of one split, paired with its records by position.
pub struct SplitPredictions<'a> {
    pub split: &'a str,
    pub predictions: &'a [Prediction],
    pub records: &'a [CaptureRecord],
}

impl EvalReport {
    pub fn build(
        inputs: &[SplitPredictions<'_>],
        manifest: &GalleryManifest,
        max_k: usize,
        config: serde_json::Value,
    ) -> Result<EvalReport> {
        if max_k == 0 {
            return Err(Error::InvalidArgument("max_k must be >= 1".into()));
        }
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("no splits to evaluate".into()));
        }
        let mut splits = Vec::new();
        let mut visits = BTreeMap::new();
        let mut recognized = std::collections::BTreeSet::new();
        for s in inputs {
            let hits = (1..=max_k)
                .map(|k| split_topk_hits(s.predictions, s.records, k))
                .collect::<Result<Vec<_>>>()?;
            let n = s.records.len();
            let accuracy = hits
                .iter()
                .map(|&h| if n == 0 { 0.0 } else { h as f64 / n as f64 })
                .collect();
            splits.push(SplitCurve {
                split: s.split.to_string(),
                records: n,
                hits,
                accuracy,
            });
            visits.insert(s.split.to_string(), build_visit_record(s.predictions, s.records)?);
            recognized.extend(recognized_instances(s.predictions, s.records, manifest)?);
        }
        let curves: Vec<Vec<f64>> = splits.iter().map(|s| s.accuracy.clone()).collect();
        let (mean, std) = aggregate_splits(&curves)?;
        let instances = manifest.instances.len();
        let report = EvalReport {
            max_k,
            splits,
            mean,
            std,
            coverage: Coverage {
                recognized: recognized.len(),
                instances,
                fraction: if instances == 0 {
                    0.0
                } else {
                    recognized.len() as f64 / instances as f64
                },
            },
            visits,
            config,
        };
        report.check()?;
        Ok(report)
    }

    /// Every curve non-decreasing in k and every fraction within [0, 1].
    pub fn check(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        for s in &self.splits {
            if s.accuracy.len() != self.max_k {
                return Err(Error::InvalidArgument(format!(
                    "split {} has {} points, expected {}",
                    s.split,
                    s.accuracy.len(),
                    self.max_k
                )));
            }
            if let Some(w) = s.accuracy.windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "accuracy of split {} drops from k={} to k={}",
                    s.split,
                    w + 1,
                    w + 2
                )));
            }
            if !s.accuracy.iter().all(|&a| in_unit(a)) {
                return Err(Error::InvalidArgument(format!("accuracy of split {} leaves [0, 1]", s.split)));
            }
        }
        if !self.mean.iter().all(|&a| in_unit(a)) || !in_unit(self.coverage.fraction) {
            return Err(Error::InvalidArgument("report fraction leaves [0, 1]".into()));
        }
        Ok(())
    }

    pub fn top1_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn split(&self, name: &str) -> Option<&SplitCurve> {
        self.splits.iter().find(|s| s.split == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["split", "k", "accuracy"]).map_err(wrap)?;
        for s in &self.splits {
            for (i, a) in s.accuracy.iter().enumerate() {
                w.write_record([s.split.clone(), (i + 1).to_string(), format!("{a:.6}")])
                    .map_err(wrap)?;
            }
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }

    pub fn to_svg(&self) -> String {
        render_svg(self)
    }
}

/// Paths written by [`write_report`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// `<stem>.json`, `<stem>.csv` and `<stem>.svg` in `dir`, each written to a
/// temporary file and renamed into place.
pub fn write_report(report: &EvalReport, dir: &Path, stem: &str) -> Result<ReportFiles> {
    report.check()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        json: dir.join(format!("{stem}.json")),
        csv: dir.join(format!("{stem}.csv")),
        svg: dir.join(format!("{stem}.svg")),
    };
    write_json_atomic(&files.json, report)?;
    write_atomic(&files.csv, &report.to_csv()?)?;
    write_atomic(&files.svg, report.to_svg().as_bytes())?;
    Ok(files)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let r: EvalReport = read_json(path)?;
    r.check()?;
    Ok(r)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn render_svg(r: &EvalReport) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |k: usize| {
        if r.max_k == 1 {
            left + pw / 2.0
        } else {
            left + pw * (k - 1) as f64 / (r.max_k - 1) as f64
        }
    };
    let y = |a: f64| top + ph * (1.0 - a.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">top-k accuracy (mean top-1 {})</text>"#,
        left + pw / 2.0,
        percent(r.top1_mean())
    );
    for tick in 0..=10 {
        let a = tick as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{4}%</text>"##,
            y(a),
            left + pw,
            left - 6.0,
            y(a) + 4.0,
            tick * 10
        );
    }
    for k in 1..=r.max_k {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            x(k),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">k</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let points = |vals: &[f64]| -> String {
        vals.iter()
            .enumerate()
            .map(|(i, &a)| format!("{:.1},{:.1}", x(i + 1), y(a)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    if r.splits.len() > 1 {
        let upper: Vec<f64> = r.mean.iter().zip(&r.std).map(|(m, s)| m + s).collect();
        let lower: Vec<f64> = r.mean.iter().zip(&r.std).map(|(m, s)| m - s).collect();
        let mut band: Vec<String> = upper
            .iter()
            .enumerate()
            .map(|(i, &a)| format!("{:.1},{:.1}", x(i + 1), y(a)))
            .collect();
        band.extend(
            lower
                .iter()
                .enumerate()
                .rev()
                .map(|(i, &a)| format!("{:.1},{:.1}", x(i + 1), y(a))),
        );
        let _ = writeln!(
            s,
            r##"<polygon class="std-band" points="{}" fill="#999" fill-opacity="0.25" stroke="none"/>"##,
            band.join(" ")
        );
        let _ = writeln!(
            s,
            r##"<polyline class="mean" points="{}" fill="none" stroke="#000" stroke-width="2" stroke-dasharray="6 3"/>"##,
            points(&r.mean)
        );
    }
    for (i, c) in r.splits.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline class="split" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points(&c.accuracy)
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="{color}" stroke-width="2"/><text x="{3:.1}" y="{4:.1}">{5}</text>"#,
            left + pw + 12.0,
            ly,
            left + pw + 30.0,
            left + pw + 36.0,
            ly + 4.0,
            escape(&c.split)
        );
    }
    if r.splits.len() > 1 {
        let ly = top + 16.0 * r.splits.len() as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#000" stroke-width="2" stroke-dasharray="6 3"/><text x="{3:.1}" y="{4:.1}">mean ± std</text>"##,
            left + pw + 12.0,
            ly,
            left + pw + 30.0,
            left + pw + 36.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
