//! Ordered top-k accuracy, split aggregation, distinct-artwork coverage and
//! visit records.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AuxCategory, CaptureRecord, GalleryManifest, LabelSpace};
use crate::error::{Error, Result};
use crate::nn::argmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub capture: String,
    pub label: String,
    pub scores: Vec<f32>,
}

impl Prediction {
    /// Labels the capture with the argmax class (first index on ties).
    pub fn from_scores(capture: impl Into<String>, scores: Vec<f32>, space: &LabelSpace) -> Result<Prediction> {
        if scores.len() != space.len() {
            return Err(Error::Shape(format!(
                "{} scores for a {}-label space",
                scores.len(),
                space.len()
            )));
        }
        let label = space.label(argmax(&scores)).expect("index within space").to_string();
        Ok(Prediction {
            capture: capture.into(),
            label,
            scores,
        })
    }
}

/// True iff `pred` is among the first `min(k, len)` ground-truth labels.
pub fn topk_hit(pred: &str, ordered_gt: &[String], k: usize) -> bool {
    ordered_gt.iter().take(k).any(|g| g == pred)
}

fn check_pairing(preds: &[Prediction], records: &[CaptureRecord]) -> Result<()> {
    if preds.len() != records.len() {
        return Err(Error::CountMismatch {
            predictions: preds.len(),
            records: records.len(),
        });
    }
    if let Some((p, r)) = preds.iter().zip(records).find(|(p, r)| p.capture != r.path) {
        return Err(Error::InvalidArgument(format!(
            "prediction for {:?} paired with record {:?}",
            p.capture, r.path
        )));
    }
    Ok(())
}

/// Number of top-k hits over paired predictions and records.
pub fn split_topk_hits(preds: &[Prediction], records: &[CaptureRecord], k: usize) -> Result<usize> {
    check_pairing(preds, records)?;
    Ok(preds
        .par_iter()
        .zip(records)
        .filter(|(p, r)| topk_hit(&p.label, &r.ordered_gt, k))
        .count())
}

pub fn split_topk_accuracy(preds: &[Prediction], records: &[CaptureRecord], k: usize) -> Result<f64> {
    let hits = split_topk_hits(preds, records, k)?;
    Ok(if records.is_empty() {
        0.0
    } else {
        hits as f64 / records.len() as f64
    })
}

/// `acc[k-1]` for k = 1..=max_k.
pub fn accuracy_curve(preds: &[Prediction], records: &[CaptureRecord], max_k: usize) -> Result<Vec<f64>> {
    (1..=max_k).map(|k| split_topk_accuracy(preds, records, k)).collect()
}

/// Unweighted mean and sample standard deviation per k. A single split has
/// standard deviation 0.
pub fn aggregate_splits(curves: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("no split curves to aggregate".into()));
    };
    let k = first.len();
    if let Some(c) = curves.iter().find(|c| c.len() != k) {
        return Err(Error::InvalidArgument(format!(
            "curves of unequal length: {k} and {}",
            c.len()
        )));
    }
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(k);
    let mut std = Vec::with_capacity(k);
    for i in 0..k {
        // sorted so the sum does not depend on split order
        let mut col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        col.sort_by(f64::total_cmp);
        let m = col.iter().sum::<f64>() / n;
        let s = if curves.len() < 2 {
            0.0
        } else {
            (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        mean.push(m);
        std.push(s);
    }
    Ok((mean, std))
}

/// Instances recognised at least once: a frame whose top-1 ground truth is
/// the instance and whose prediction names it.
pub fn recognized_instances(
    preds: &[Prediction],
    records: &[CaptureRecord],
    manifest: &GalleryManifest,
) -> Result<BTreeSet<String>> {
    check_pairing(preds, records)?;
    let instances: BTreeSet<&str> = manifest.instances.iter().map(|i| i.id.as_str()).collect();
    Ok(preds
        .iter()
        .zip(records)
        .filter(|(p, r)| instances.contains(p.label.as_str()) && topk_hit(&p.label, &r.ordered_gt, 1))
        .map(|(p, _)| p.label.clone())
        .collect())
}

/// Recognised instances over all instances; auxiliary categories count in
/// neither.
pub fn distinct_coverage(preds: &[Prediction], records: &[CaptureRecord], manifest: &GalleryManifest) -> Result<f64> {
    let n = manifest.instances.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(recognized_instances(preds, records, manifest)?.len() as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtworkVisit {
    pub count: usize,
    pub first_step: u64,
    pub last_step: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub artworks: BTreeMap<String, ArtworkVisit>,
    /// `(step, artwork)` for every counted capture, in record order.
    pub sequence: Vec<(u64, String)>,
}

impl VisitRecord {
    pub fn total_captures(&self) -> usize {
        self.artworks.values().map(|v| v.count).sum()
    }
}

fn is_aux(label: &str) -> bool {
    AuxCategory::parse(label).is_some()
}

/// Tally of correctly identified (top-1) captures per artwork. Captures of
/// auxiliary classes, background included, are left out.
pub fn build_visit_record(preds: &[Prediction], records: &[CaptureRecord]) -> Result<VisitRecord> {
    check_pairing(preds, records)?;
    let mut rec = VisitRecord::default();
    for (p, r) in preds.iter().zip(records) {
        if is_aux(&p.label) || !topk_hit(&p.label, &r.ordered_gt, 1) {
            continue;
        }
        rec.artworks
            .entry(p.label.clone())
            .and_modify(|v| {
                v.count += 1;
                v.first_step = v.first_step.min(r.step);
                v.last_step = v.last_step.max(r.step);
            })
            .or_insert(ArtworkVisit {
                count: 1,
                first_step: r.step,
                last_step: r.step,
            });
        rec.sequence.push((r.step, p.label.clone()));
    }
    Ok(rec)
}

/// Fraction formatted as a percentage with one decimal, e.g. `42.6%`.
pub fn percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fixtures, ArtworkKind, SplitRole};

    fn gt(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn pred(capture: &str, label: &str) -> Prediction {
        Prediction {
            capture: capture.into(),
            label: label.into(),
            scores: vec![],
        }
    }

    fn rec(path: &str, step: u64, g: &[&str]) -> CaptureRecord {
        CaptureRecord {
            path: path.into(),
            step,
            ordered_gt: gt(g),
        }
    }

    #[test]
    fn topk_definition() {
        let g = gt(&["a", "b", "c"]);
        assert!(topk_hit("a", &g, 1));
        assert!(!topk_hit("c", &g, 1));
        assert!(topk_hit("c", &g, 3));
        assert!(topk_hit("c", &g, 10));
        assert!(!topk_hit("z", &g, 10));
    }

    #[test]
    fn accuracy_bounds_and_mismatch() {
        let records = vec![rec("f0", 0, &["a"]), rec("f1", 1, &["b", "a"])];
        let right = vec![pred("f0", "a"), pred("f1", "b")];
        assert_eq!(split_topk_accuracy(&right, &records, 1).unwrap(), 1.0);
        let wrong = vec![pred("f0", "x"), pred("f1", "y")];
        assert_eq!(accuracy_curve(&wrong, &records, 3).unwrap(), vec![0.0; 3]);
        let err = split_topk_accuracy(&right[..1], &records, 1).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { predictions: 1, records: 2 }));
        let swapped = vec![pred("f1", "a"), pred("f0", "b")];
        assert!(split_topk_accuracy(&swapped, &records, 1).is_err());
    }

    #[test]
    fn aggregation() {
        let (m, s) = aggregate_splits(&[vec![0.5, 0.6], vec![0.5, 0.6]]).unwrap();
        assert_eq!((m, s), (vec![0.5, 0.6], vec![0.0, 0.0]));
        let (m, s) = aggregate_splits(&[vec![0.2], vec![0.4]]).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-12);
        assert!((s[0] - 0.1414).abs() < 1e-4);
        assert_eq!(aggregate_splits(&[vec![0.7]]).unwrap().1, vec![0.0]);
        assert!(aggregate_splits(&[vec![0.1], vec![0.1, 0.2]]).is_err());
        assert!(aggregate_splits(&[]).is_err());
    }

    #[test]
    fn percent_format() {
        assert_eq!(percent(0.426), "42.6%");
        assert_eq!(percent(36.0 / 79.0), "45.6%");
        assert_eq!(percent(1.0), "100.0%");
    }

    #[test]
    fn coverage_needs_frame_level_correctness() {
        let m = fixtures::counted("art", ArtworkKind::Planar, 3, 6, &[], &[("s0", SplitRole::Test, 1)]);
        let ids: Vec<String> = m.instances.iter().map(|i| i.id.clone()).collect();
        let records = vec![rec("f0", 0, &[&ids[0]]), rec("f1", 1, &[&ids[1]]), rec("f2", 2, &["background"])];
        // ids[1] predicted on a frame where it is not visible: no credit
        let preds = vec![pred("f0", &ids[0]), pred("f1", "background"), pred("f2", &ids[1])];
        let got = distinct_coverage(&preds, &records, &m).unwrap();
        assert_eq!(got, 1.0 / m.instances.len() as f64);
    }

    #[test]
    fn visit_tally() {
        let records: Vec<_> = (0..7)
            .map(|s| match s {
                3..=5 => rec(&format!("f{s}"), s, &["A"]),
                _ => rec(&format!("f{s}"), s, &["background"]),
            })
            .collect();
        let preds: Vec<_> = records
            .iter()
            .map(|r| pred(&r.path, if (3..=5).contains(&r.step) { "A" } else { "background" }))
            .collect();
        let v = build_visit_record(&preds, &records).unwrap();
        assert_eq!(
            v.artworks["A"],
            ArtworkVisit {
                count: 3,
                first_step: 3,
                last_step: 5
            }
        );
        assert_eq!(v.total_captures(), 3);
        let bg_only = build_visit_record(&preds[..3], &records[..3]).unwrap();
        assert_eq!(bg_only, VisitRecord::default());
    }
}
