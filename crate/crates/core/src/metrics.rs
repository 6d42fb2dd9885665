//! Per-class and macro-averaged segmentation metrics from a confusion
//! matrix, plus color-coded error-mask rendering.
//!
//! Conventions: background is class 0 and participates in the matrix and
//! macro averages unless callers ask to skip it. A class absent from both
//! ground truth and prediction is excluded from macro averages and listed
//! in the report. A class present but never predicted (or predicted but
//! never present) scores 0 on the affected ratio rather than poisoning the
//! average with 0/0.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{LabelMask, RgbImage};

/// C x C counts, `counts[gt][pred]`, accumulated from mask pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes == 0 || num_classes > 256 {
            return Err(Error::Parameter(format!(
                "num_classes must be in 1..=256, got {num_classes}"
            )));
        }
        Ok(Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        })
    }

    /// Rebuild a matrix from row-major `counts[gt * num_classes + pred]`.
    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        let mut cm = Self::new(num_classes)?;
        if counts.len() != num_classes * num_classes {
            return Err(Error::Data(format!(
                "{} counts for a {num_classes}x{num_classes} matrix",
                counts.len()
            )));
        }
        cm.counts = counts;
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Add one mask pair. `valid` restricts accumulation to the top-left
    /// `(width, height)` rectangle, which is how padded tile regions stay
    /// out of the tally; `None` means the full mask.
    pub fn accumulate(
        &mut self,
        gt: &LabelMask,
        pred: &LabelMask,
        valid: Option<(u32, u32)>,
    ) -> Result<()> {
        if (gt.width(), gt.height()) != (pred.width(), pred.height()) {
            return Err(Error::Data(format!(
                "mask dimensions differ: gt {}x{}, pred {}x{}",
                gt.width(),
                gt.height(),
                pred.width(),
                pred.height()
            )));
        }
        let (vw, vh) = match valid {
            Some((vw, vh)) => (vw.min(gt.width()), vh.min(gt.height())),
            None => (gt.width(), gt.height()),
        };
        let c = self.num_classes;
        for y in 0..vh {
            for x in 0..vw {
                let g = gt.label(x, y) as usize;
                let p = pred.label(x, y) as usize;
                if g >= c {
                    return Err(Error::Data(format!(
                        "pixel ({x}, {y}): ground-truth label {g} out of range for {c} classes"
                    )));
                }
                if p >= c {
                    return Err(Error::Data(format!(
                        "pixel ({x}, {y}): predicted label {p} out of range for {c} classes"
                    )));
                }
                self.counts[g * c + p] += 1;
            }
        }
        Ok(())
    }

    /// Element-wise addition; merging per-tile matrices is associative and
    /// commutative, so parallel accumulation stays deterministic.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Parameter(format!(
                "cannot merge {}-class matrix into {}-class matrix",
                other.num_classes, self.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn tp(&self, class: usize) -> u64 {
        self.count(class, class)
    }

    fn fp(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|g| self.count(g, class)).sum::<u64>() - self.tp(class)
    }

    fn false_negatives(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(class, p)).sum::<u64>() - self.tp(class)
    }

    /// Metrics with every class participating in the macro averages.
    pub fn compute_metrics(&self) -> ClassMetrics {
        self.compute_metrics_skipping(&[])
    }

    /// Metrics with the listed classes left out of the macro averages (they
    /// still get per-class rows). Used for background exclusion.
    pub fn compute_metrics_skipping(&self, skip: &[usize]) -> ClassMetrics {
        let mut per_class = Vec::with_capacity(self.num_classes);
        let mut excluded = Vec::new();
        for class in 0..self.num_classes {
            let tp = self.tp(class);
            let fp = self.fp(class);
            let fn_ = self.false_negatives(class);
            if tp + fp + fn_ == 0 {
                excluded.push(class);
                per_class.push(PerClass {
                    class,
                    iou: None,
                    precision: None,
                    recall: None,
                    f1: None,
                });
                continue;
            }
            let iou = tp as f64 / (tp + fp + fn_) as f64;
            let precision = if tp + fp > 0 {
                tp as f64 / (tp + fp) as f64
            } else {
                0.0
            };
            let recall = if tp + fn_ > 0 {
                tp as f64 / (tp + fn_) as f64
            } else {
                0.0
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_class.push(PerClass {
                class,
                iou: Some(iou),
                precision: Some(precision),
                recall: Some(recall),
                f1: Some(f1),
            });
        }

        let averaged: Vec<PerClass> = per_class
            .iter()
            .filter(|m| m.iou.is_some() && !skip.contains(&m.class))
            .cloned()
            .collect();
        let mean = |pick: fn(&PerClass) -> Option<f64>| -> Option<f64> {
            if averaged.is_empty() {
                None
            } else {
                Some(averaged.iter().map(|m| pick(m).unwrap()).sum::<f64>() / averaged.len() as f64)
            }
        };
        ClassMetrics {
            num_classes: self.num_classes,
            miou: mean(|m| m.iou),
            mf1: mean(|m| m.f1),
            mprecision: mean(|m| m.precision),
            mrecall: mean(|m| m.recall),
            per_class,
            excluded,
            skipped: skip.to_vec(),
        }
    }
}

/// Per-class ratios; `None` when the class is absent from both masks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerClass {
    pub class: usize,
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Full metrics report: per-class rows, macro averages over the defined
/// (and not deliberately skipped) classes, and the exclusion lists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub num_classes: usize,
    pub per_class: Vec<PerClass>,
    /// Classes absent from both gt and pred, excluded from macro averages.
    pub excluded: Vec<usize>,
    /// Classes excluded from macro averages on request.
    pub skipped: Vec<usize>,
    pub miou: Option<f64>,
    pub mf1: Option<f64>,
    pub mprecision: Option<f64>,
    pub mrecall: Option<f64>,
}

const WHITE: [u8; 3] = [255, 255, 255];
const YELLOW: [u8; 3] = [255, 255, 0];
const RED: [u8; 3] = [255, 0, 0];
const BLUE: [u8; 3] = [0, 0, 255];
const BLACK: [u8; 3] = [0, 0, 0];

/// Render the error mask for one foreground class: white = true positive,
/// yellow = false positive (background predicted as the class), red = the
/// class missed as background, blue = confusion with a different foreground
/// class (either direction), black = everything else. Background is class 0.
pub fn render_error_mask(
    gt: &LabelMask,
    pred: &LabelMask,
    foreground_class: u8,
) -> Result<RgbImage> {
    if (gt.width(), gt.height()) != (pred.width(), pred.height()) {
        return Err(Error::Data(format!(
            "mask dimensions differ: gt {}x{}, pred {}x{}",
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height()
        )));
    }
    if foreground_class == 0 {
        return Err(Error::Parameter(
            "foreground class must be nonzero; 0 is background".into(),
        ));
    }
    let fg = foreground_class;
    let mut data = Vec::with_capacity(3 * gt.labels().len());
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        let color = if g == fg && p == fg {
            WHITE
        } else if p == fg && g == 0 {
            YELLOW
        } else if g == fg && p == 0 {
            RED
        } else if (g == fg && p != 0) || (p == fg && g != 0) {
            BLUE
        } else {
            BLACK
        };
        data.extend_from_slice(&color);
    }
    Ok(RgbImage::from_raw(gt.width(), gt.height(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked_example() -> ConfusionMatrix {
        // gt [0,0;1,1], pred [0,1;1,1]
        let gt = LabelMask::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        let pred = LabelMask::new(2, 2, vec![0, 1, 1, 1]).unwrap();
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate(&gt, &pred, None).unwrap();
        cm
    }

    #[test]
    fn accumulate_counts_by_hand() {
        let cm = worked_example();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.count(1, 1), 2);
        assert_eq!(cm.count(1, 0), 0);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn worked_example_metrics() {
        let m = worked_example().compute_metrics();
        let eps = 1e-12;
        assert!((m.per_class[0].iou.unwrap() - 0.5).abs() < eps);
        assert!((m.per_class[1].iou.unwrap() - 2.0 / 3.0).abs() < eps);
        assert!((m.miou.unwrap() - 7.0 / 12.0).abs() < eps);
        assert!((m.per_class[1].precision.unwrap() - 2.0 / 3.0).abs() < eps);
        assert!((m.per_class[1].recall.unwrap() - 1.0).abs() < eps);
        assert!((m.per_class[1].f1.unwrap() - 0.8).abs() < eps);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let mask = LabelMask::from_fn(8, 8, |x, y| ((x * y) % 5) as u8).unwrap();
        let mut cm = ConfusionMatrix::new(5).unwrap();
        cm.accumulate(&mask, &mask, None).unwrap();
        let m = cm.compute_metrics();
        for pc in &m.per_class {
            if let Some(iou) = pc.iou {
                assert_eq!(iou, 1.0);
                assert_eq!(pc.f1.unwrap(), 1.0);
            }
        }
        assert_eq!(m.miou.unwrap(), 1.0);
    }

    #[test]
    fn absent_class_is_excluded_from_macro() {
        let gt = LabelMask::new(2, 1, vec![0, 1]).unwrap();
        let mut cm = ConfusionMatrix::new(4).unwrap();
        cm.accumulate(&gt, &gt, None).unwrap();
        let m = cm.compute_metrics();
        assert_eq!(m.excluded, vec![2, 3]);
        assert!(m.per_class[2].iou.is_none());
        assert_eq!(m.miou.unwrap(), 1.0);
    }

    #[test]
    fn class_in_gt_never_predicted_scores_zero() {
        let gt = LabelMask::new(2, 1, vec![0, 1]).unwrap();
        let pred = LabelMask::new(2, 1, vec![0, 0]).unwrap();
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate(&gt, &pred, None).unwrap();
        let m = cm.compute_metrics();
        assert_eq!(m.per_class[1].iou.unwrap(), 0.0);
        assert_eq!(m.per_class[1].precision.unwrap(), 0.0);
        assert_eq!(m.per_class[1].recall.unwrap(), 0.0);
        assert_eq!(m.per_class[1].f1.unwrap(), 0.0);
    }

    #[test]
    fn empty_valid_region_changes_nothing() {
        let mask = LabelMask::filled(4, 4, 1).unwrap();
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate(&mask, &mask, Some((0, 4))).unwrap();
        cm.accumulate(&mask, &mask, Some((4, 0))).unwrap();
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn accumulate_rejects_bad_inputs() {
        let a = LabelMask::filled(4, 4, 0).unwrap();
        let b = LabelMask::filled(4, 3, 0).unwrap();
        let mut cm = ConfusionMatrix::new(2).unwrap();
        assert!(cm.accumulate(&a, &b, None).is_err());
        let hot = LabelMask::filled(4, 4, 7).unwrap();
        let err = cm.accumulate(&hot, &a, None).unwrap_err().to_string();
        assert!(err.contains("(0, 0)"), "{err}");
        assert!(err.contains("label 7"), "{err}");
    }

    #[test]
    fn skipping_background_drops_it_from_macro_only() {
        let gt = LabelMask::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        let pred = LabelMask::new(4, 1, vec![0, 1, 1, 1]).unwrap();
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate(&gt, &pred, None).unwrap();
        let m = cm.compute_metrics_skipping(&[0]);
        assert_eq!(m.skipped, vec![0]);
        assert!(m.per_class[0].iou.is_some());
        assert!((m.miou.unwrap() - m.per_class[1].iou.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn f1_is_harmonic_mean_when_defined() {
        let gt = LabelMask::from_fn(16, 16, |x, y| ((x + 2 * y) % 6) as u8).unwrap();
        let pred = LabelMask::from_fn(16, 16, |x, y| ((2 * x + y) % 6) as u8).unwrap();
        let mut cm = ConfusionMatrix::new(6).unwrap();
        cm.accumulate(&gt, &pred, None).unwrap();
        let m = cm.compute_metrics();
        for pc in &m.per_class {
            if let (Some(p), Some(r), Some(f1)) = (pc.precision, pc.recall, pc.f1) {
                if p + r > 0.0 {
                    assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn error_mask_exact_colors() {
        // gt:   [3, 0, 3, 3, 0, 7]
        // pred: [3, 3, 0, 7, 0, 3]
        let gt = LabelMask::new(6, 1, vec![3, 0, 3, 3, 0, 7]).unwrap();
        let pred = LabelMask::new(6, 1, vec![3, 3, 0, 7, 0, 3]).unwrap();
        let img = render_error_mask(&gt, &pred, 3).unwrap();
        assert_eq!(img.pixel(0, 0), WHITE);
        assert_eq!(img.pixel(1, 0), YELLOW);
        assert_eq!(img.pixel(2, 0), RED);
        assert_eq!(img.pixel(3, 0), BLUE);
        assert_eq!(img.pixel(4, 0), BLACK);
        assert_eq!(img.pixel(5, 0), BLUE);
    }

    #[test]
    fn error_mask_perfect_prediction_is_white_and_black() {
        let mask = LabelMask::from_fn(5, 5, |x, _| if x < 2 { 4 } else { 0 }).unwrap();
        let img = render_error_mask(&mask, &mask, 4).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let want = if x < 2 { WHITE } else { BLACK };
                assert_eq!(img.pixel(x, y), want);
            }
        }
    }

    #[test]
    fn error_mask_all_false_positive_is_yellow() {
        let gt = LabelMask::filled(3, 3, 0).unwrap();
        let pred = LabelMask::filled(3, 3, 2).unwrap();
        let img = render_error_mask(&gt, &pred, 2).unwrap();
        assert!(img.data().chunks(3).all(|c| c == YELLOW));
    }

    #[test]
    fn error_mask_rejects_background_as_foreground() {
        let mask = LabelMask::filled(2, 2, 0).unwrap();
        assert!(render_error_mask(&mask, &mask, 0).is_err());
    }

    proptest! {
        #[test]
        fn accumulation_is_linear(
            seed in 0u64..500,
            w in 1u32..12,
            h1 in 1u32..12,
            h2 in 1u32..12,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = 16usize;
            let mut masks = Vec::new();
            for h in [h1, h2] {
                let gt = LabelMask::from_fn(w, h, |_, _| rng.random_range(0..c as u8)).unwrap();
                let pred = LabelMask::from_fn(w, h, |_, _| rng.random_range(0..c as u8)).unwrap();
                masks.push((gt, pred));
            }
            // Accumulating both pairs into one matrix equals merging
            // per-pair matrices.
            let mut combined = ConfusionMatrix::new(c).unwrap();
            let mut merged = ConfusionMatrix::new(c).unwrap();
            for (gt, pred) in &masks {
                combined.accumulate(gt, pred, None).unwrap();
                let mut part = ConfusionMatrix::new(c).unwrap();
                part.accumulate(gt, pred, None).unwrap();
                merged.merge(&part).unwrap();
            }
            prop_assert_eq!(combined, merged);
        }

        #[test]
        fn metrics_are_permutation_safe(
            seed in 0u64..500,
            w in 1u32..12,
            h in 1u32..12,
        ) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = 16usize;
            let gt = LabelMask::from_fn(w, h, |_, _| rng.random_range(0..c as u8)).unwrap();
            let pred = LabelMask::from_fn(w, h, |_, _| rng.random_range(0..c as u8)).unwrap();
            let mut perm: Vec<u8> = (0..c as u8).collect();
            perm.shuffle(&mut rng);
            let remap = |m: &LabelMask| {
                LabelMask::from_fn(w, h, |x, y| perm[m.label(x, y) as usize]).unwrap()
            };
            let mut cm = ConfusionMatrix::new(c).unwrap();
            cm.accumulate(&gt, &pred, None).unwrap();
            let mut cm_p = ConfusionMatrix::new(c).unwrap();
            cm_p.accumulate(&remap(&gt), &remap(&pred), None).unwrap();
            let m = cm.compute_metrics();
            let mp = cm_p.compute_metrics();
            for class in 0..c {
                let before = &m.per_class[class];
                let after = &mp.per_class[perm[class] as usize];
                prop_assert_eq!(before.iou, after.iou);
                prop_assert_eq!(before.f1, after.f1);
            }
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                _ => false,
            };
            prop_assert!(close(m.miou, mp.miou));
            prop_assert!(close(m.mf1, mp.mf1));
            prop_assert!(close(m.mprecision, mp.mprecision));
            prop_assert!(close(m.mrecall, mp.mrecall));
        }
    }
}
