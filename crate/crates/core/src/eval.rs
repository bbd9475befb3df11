//! One-pass evaluation: success and precision curves, their areas, and
//! per-sequence, per-attribute and overall aggregates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::Attribute;
use crate::geometry::{center_distance, iou, BoundingBox};
use crate::{Error, Result};

/// Center-error threshold reported as the headline precision, pixels.
pub const PRECISION_THRESHOLD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Success,
    Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub kind: CurveKind,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl EvalCurve {
    /// Value at the grid point equal to `threshold`, if present.
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.values[i])
    }

    /// Trapezoidal area divided by the grid span, so a constant curve
    /// integrates to its value.
    pub fn normalized_area(&self) -> f64 {
        let t = &self.thresholds;
        if t.len() < 2 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        let area: f64 = t
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum();
        area / (t[t.len() - 1] - t[0])
    }

    pub fn to_csv(&self) -> String {
        let header = match self.kind {
            CurveKind::Success => "overlap_threshold,success",
            CurveKind::Precision => "distance_threshold,precision",
        };
        let mut s = String::from(header);
        s.push('\n');
        for (t, v) in self.thresholds.iter().zip(&self.values) {
            s.push_str(&format!("{t},{v:.6}\n"));
        }
        s
    }
}

/// Overlap thresholds `0.00, 0.05, ..., 1.00`.
pub fn success_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Center-error thresholds `0, 1, ..., 50` pixels.
pub fn precision_grid() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

fn check_lengths(est: &[BoundingBox], gt: &[BoundingBox]) -> Result<()> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(Error::LengthMismatch {
            estimated: est.len(),
            truth: gt.len(),
        });
    }
    Ok(())
}

fn fraction(n: usize, total: usize) -> f64 {
    n as f64 / total as f64
}

/// Fraction of frames whose overlap strictly exceeds each threshold.
pub fn success_curve(est: &[BoundingBox], gt: &[BoundingBox], grid: &[f64]) -> Result<EvalCurve> {
    check_lengths(est, gt)?;
    let overlaps: Vec<f64> = est.iter().zip(gt).map(|(a, b)| iou(a, b)).collect();
    let values = grid
        .iter()
        .map(|&t| fraction(overlaps.iter().filter(|&&o| o > t).count(), overlaps.len()))
        .collect();
    Ok(EvalCurve {
        kind: CurveKind::Success,
        thresholds: grid.to_vec(),
        values,
    })
}

/// Fraction of frames whose center error is at most each threshold.
pub fn precision_curve(est: &[BoundingBox], gt: &[BoundingBox], grid: &[f64]) -> Result<EvalCurve> {
    check_lengths(est, gt)?;
    let errors: Vec<f64> = est
        .iter()
        .zip(gt)
        .map(|(a, b)| center_distance(a, b))
        .collect();
    let values = grid
        .iter()
        .map(|&d| fraction(errors.iter().filter(|&&e| e <= d).count(), errors.len()))
        .collect();
    Ok(EvalCurve {
        kind: CurveKind::Precision,
        thresholds: grid.to_vec(),
        values,
    })
}

/// Area under a success curve by the trapezoid rule over its grid.
pub fn auc(curve: &EvalCurve) -> Result<f64> {
    if curve.kind != CurveKind::Success {
        return Err(Error::WrongCurveKind);
    }
    Ok(curve.normalized_area())
}

/// A trajectory to score against its ground truth.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub estimate: &'a [BoundingBox],
    pub truth: &'a [BoundingBox],
    pub fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub frames: usize,
    pub auc: f64,
    pub precision_at_20: f64,
    /// Normalized area under the precision curve.
    pub precision_auc: f64,
    pub fps: Option<f64>,
    #[serde(skip)]
    pub success: Option<EvalCurve>,
    #[serde(skip)]
    pub precision: Option<EvalCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequences: Vec<SequenceScore>,
    /// Mean AUC over the sequences carrying each tag.
    pub attribute_auc: BTreeMap<String, f64>,
    pub overall_auc: f64,
    pub overall_precision_auc: f64,
    /// Mean precision at 20 px over sequences.
    pub precision_at_20: f64,
    pub mean_fps: Option<f64>,
    pub failures: Vec<Failure>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn score(t: &Trajectory<'_>) -> Result<SequenceScore> {
    let success = success_curve(t.estimate, t.truth, &success_grid())?;
    let precision = precision_curve(t.estimate, t.truth, &precision_grid())?;
    let mut attributes = t.attributes.clone();
    attributes.sort();
    attributes.dedup();
    Ok(SequenceScore {
        name: t.name.clone(),
        attributes,
        frames: t.truth.len(),
        auc: auc(&success)?,
        precision_at_20: precision.at(PRECISION_THRESHOLD).expect("grid holds 20 px"),
        precision_auc: precision.normalized_area(),
        fps: t.fps,
        success: Some(success),
        precision: Some(precision),
    })
}

/// Scores every trajectory; sequences that fail are listed and skipped.
/// Sequences are ordered by name.
pub fn report(trajectories: &[Trajectory<'_>]) -> EvalReport {
    let mut sequences = Vec::new();
    let mut failures = Vec::new();
    for t in trajectories {
        match score(t) {
            Ok(s) => sequences.push(s),
            Err(e) => failures.push(Failure {
                name: t.name.clone(),
                error: e.to_string(),
            }),
        }
    }
    sequences.sort_by(|a, b| a.name.cmp(&b.name));
    failures.sort_by(|a, b| a.name.cmp(&b.name));
    let mut attribute_auc = BTreeMap::new();
    for tag in Attribute::ALL {
        let bucket: Vec<f64> = sequences
            .iter()
            .filter(|s| s.attributes.contains(&tag))
            .map(|s| s.auc)
            .collect();
        if !bucket.is_empty() {
            attribute_auc.insert(tag.to_string(), mean(bucket));
        }
    }
    let fps: Vec<f64> = sequences.iter().filter_map(|s| s.fps).collect();
    EvalReport {
        overall_auc: mean(sequences.iter().map(|s| s.auc)),
        overall_precision_auc: mean(sequences.iter().map(|s| s.precision_auc)),
        precision_at_20: mean(sequences.iter().map(|s| s.precision_at_20)),
        mean_fps: (!fps.is_empty()).then(|| mean(fps)),
        attribute_auc,
        sequences,
        failures,
    }
}

pub const SUMMARY_FILE: &str = "summary.json";

/// Writes `<name>_success.csv` and `<name>_precision.csv` per sequence
/// and a JSON summary into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in &report.sequences {
        if let Some(c) = &s.success {
            fs::write(dir.join(format!("{}_success.csv", s.name)), c.to_csv())?;
        }
        if let Some(c) = &s.precision {
            fs::write(dir.join(format!("{}_precision.csv", s.name)), c.to_csv())?;
        }
    }
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn perfect_tracking() {
        let gt = vec![bb(0.0, 0.0, 10.0, 10.0), bb(3.0, 4.0, 5.0, 6.0)];
        let s = success_curve(&gt, &gt, &success_grid()).unwrap();
        assert!(s.values[..20].iter().all(|&v| v == 1.0));
        assert_eq!(s.values[20], 0.0);
        let p = precision_curve(&gt, &gt, &precision_grid()).unwrap();
        assert!(p.values.iter().all(|&v| v == 1.0));
    }

    /// Boxes of width 10 whose overlap with `(0, 0, 10, 10)` is exactly 0.5.
    fn half_overlap(frames: usize) -> (Vec<BoundingBox>, Vec<BoundingBox>) {
        // A 12 px wide box shifted by 4 shares 80 of 160 pixels.
        let gt = vec![bb(0.0, 0.0, 12.0, 10.0); frames];
        let est = vec![bb(4.0, 0.0, 12.0, 10.0); frames];
        assert_eq!(iou(&est[0], &gt[0]), 0.5);
        (est, gt)
    }

    #[test]
    fn half_overlap_steps_at_one_half() {
        let (est, gt) = half_overlap(7);
        let s = success_curve(&est, &gt, &success_grid()).unwrap();
        for (t, v) in s.thresholds.iter().zip(&s.values) {
            assert_eq!(*v, if *t < 0.5 { 1.0 } else { 0.0 }, "tau {t}");
        }
        assert!((auc(&s).unwrap() - 0.475).abs() < 1e-12);
    }

    #[test]
    fn constant_curves() {
        let c = |v: f64| EvalCurve {
            kind: CurveKind::Success,
            thresholds: success_grid(),
            values: vec![v; 21],
        };
        assert!((auc(&c(1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(auc(&c(0.0)).unwrap(), 0.0);
        let p = EvalCurve {
            kind: CurveKind::Precision,
            ..c(1.0)
        };
        assert!(matches!(auc(&p), Err(Error::WrongCurveKind)));
    }

    #[test]
    fn constant_center_error_steps_at_the_error() {
        let gt = vec![bb(0.0, 0.0, 10.0, 10.0); 4];
        let est = vec![bb(3.0, 4.0, 10.0, 10.0); 4];
        let p = precision_curve(&est, &gt, &precision_grid()).unwrap();
        for (d, v) in p.thresholds.iter().zip(&p.values) {
            assert_eq!(*v, if *d < 5.0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = vec![bb(0.0, 0.0, 1.0, 1.0)];
        assert!(matches!(
            success_curve(&a, &[], &success_grid()),
            Err(Error::LengthMismatch {
                estimated: 1,
                truth: 0
            })
        ));
        assert!(precision_curve(&[], &[], &precision_grid()).is_err());
    }

    fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
        bb(
            rng.random_range(0.0..20.0),
            rng.random_range(0.0..20.0),
            rng.random_range(1.0..15.0),
            rng.random_range(1.0..15.0),
        )
    }

    #[test]
    fn three_frame_toy_matches_hand_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est: Vec<_> = (0..3).map(|_| random_box(&mut rng)).collect();
        let gt: Vec<_> = (0..3).map(|_| random_box(&mut rng)).collect();
        let s = success_curve(&est, &gt, &success_grid()).unwrap();
        let p = precision_curve(&est, &gt, &precision_grid()).unwrap();
        for (i, t) in success_grid().into_iter().enumerate() {
            let mut hits = 0;
            for f in 0..3 {
                if iou(&est[f], &gt[f]) > t {
                    hits += 1;
                }
            }
            assert_eq!(s.values[i] * 3.0, hits as f64);
        }
        for (i, d) in precision_grid().into_iter().enumerate() {
            let mut hits = 0;
            for f in 0..3 {
                if center_distance(&est[f], &gt[f]) <= d {
                    hits += 1;
                }
            }
            assert_eq!(p.values[i] * 3.0, hits as f64);
        }
    }

    fn traj<'a>(
        name: &str,
        tags: &[Attribute],
        est: &'a [BoundingBox],
        gt: &'a [BoundingBox],
    ) -> Trajectory<'a> {
        Trajectory {
            name: name.into(),
            attributes: tags.to_vec(),
            estimate: est,
            truth: gt,
            fps: Some(10.0),
        }
    }

    #[test]
    fn one_perfect_sequence() {
        let gt = vec![bb(0.0, 0.0, 10.0, 10.0); 5];
        let r = report(&[traj("a", &[], &gt, &gt)]);
        // The strict step at tau = 1 costs half a grid step.
        assert!((r.overall_auc - 0.975).abs() < 1e-12);
        assert_eq!(r.precision_at_20, 1.0);
        assert_eq!(r.mean_fps, Some(10.0));
    }

    #[test]
    fn overall_is_the_mean_and_failures_are_listed() {
        let (est, gt) = half_overlap(4);
        let perfect = vec![bb(0.0, 0.0, 12.0, 10.0); 4];
        let short = vec![bb(0.0, 0.0, 12.0, 10.0); 3];
        let r = report(&[
            traj("b", &[Attribute::OCC], &est, &gt),
            traj("a", &[Attribute::OCC, Attribute::IV], &perfect, &gt),
            traj("c", &[], &short, &gt),
        ]);
        assert_eq!(r.sequences[0].name, "a");
        assert!((r.overall_auc - (0.975 + 0.475) / 2.0).abs() < 1e-12);
        assert_eq!(r.attribute_auc["IV"], r.sequences[0].auc);
        assert!((r.attribute_auc["OCC"] - r.overall_auc).abs() < 1e-12);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].name, "c");
    }

    #[test]
    fn report_files_are_written() {
        let gt = vec![bb(0.0, 0.0, 10.0, 10.0); 3];
        let r = report(&[traj("seq", &[Attribute::BC], &gt, &gt)]);
        let tmp = tempfile::tempdir().unwrap();
        write_report(&r, tmp.path()).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(tmp.path().join(SUMMARY_FILE)).unwrap())
                .unwrap();
        assert_eq!(summary["sequences"][0]["name"], "seq");
        let csv = fs::read_to_string(tmp.path().join("seq_success.csv")).unwrap();
        assert_eq!(csv.lines().count(), 22);
        assert!(tmp.path().join("seq_precision.csv").exists());
    }

    fn boxes(n: usize) -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
        prop::collection::vec((0.0..50.0f64, 0.0..50.0f64, 1.0..30.0f64, 1.0..30.0f64), n)
    }

    proptest! {
        #[test]
        fn curves_are_monotone_and_auc_symmetric(a in boxes(8), b in boxes(8)) {
            let est: Vec<_> = a.iter().map(|&(x, y, w, h)| bb(x, y, w, h)).collect();
            let gt: Vec<_> = b.iter().map(|&(x, y, w, h)| bb(x, y, w, h)).collect();
            let s = success_curve(&est, &gt, &success_grid()).unwrap();
            let p = precision_curve(&est, &gt, &precision_grid()).unwrap();
            prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(p.values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(s.values.iter().chain(&p.values).all(|v| (0.0..=1.0).contains(v)));
            let back = success_curve(&gt, &est, &success_grid()).unwrap();
            prop_assert_eq!(auc(&s).unwrap(), auc(&back).unwrap());
        }

        #[test]
        fn horizontal_shift_moves_precision_predictably(b in boxes(6), k in -20.0..20.0f64) {
            let gt: Vec<_> = b.iter().map(|&(x, y, w, h)| bb(x, y, w, h)).collect();
            let est: Vec<_> = gt.iter().map(|g| g.translated(k, 0.0)).collect();
            let p = precision_curve(&est, &gt, &precision_grid()).unwrap();
            for (d, v) in p.thresholds.iter().zip(&p.values) {
                let expected = if k.abs() <= *d { 1.0 } else { 0.0 };
                prop_assert_eq!(*v, expected);
            }
        }
    }
}
