// SPDX-License-Identifier: Apache-2.0

//! Detection metrics: AP over 40 recall positions, heading-weighted APH,
//! distance buckets, point-count levels and KITTI difficulty tiers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::boxgeom::{score_order, Box3D, Detection, IouMode};
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, wrap_angle, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig<T> {
    pub iou_threshold: T,
    pub mode: IouMode,
    pub recall_positions: usize,
    /// Half-open planar distance ranges `[lo, hi)`.
    pub buckets: Vec<(T, T)>,
    pub level1_min_points: usize,
    pub level2_min_points: usize,
}

impl<T: Real> Default for EvalConfig<T> {
    fn default() -> Self {
        Self {
            iou_threshold: T::lit(0.7),
            mode: IouMode::ThreeD,
            recall_positions: 40,
            buckets: vec![
                (T::zero(), T::lit(30.0)),
                (T::lit(30.0), T::lit(50.0)),
                (T::lit(50.0), T::lit(75.0)),
            ],
            level1_min_points: 5,
            level2_min_points: 1,
        }
    }
}

impl<T: Real> EvalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > T::zero() && self.iou_threshold <= T::one()) {
            return Err(Error::InvalidConfig("IoU threshold outside (0, 1]".into()));
        }
        if self.recall_positions == 0 {
            return Err(Error::InvalidConfig("recall positions must be positive".into()));
        }
        for (k, &(lo, hi)) in self.buckets.iter().enumerate() {
            if !(lo < hi) || !(lo >= T::zero()) {
                return Err(Error::InvalidConfig(format!("bucket {k} is empty or negative")));
            }
            if k > 0 && lo < self.buckets[k - 1].1 {
                return Err(Error::InvalidConfig(format!("bucket {k} overlaps its predecessor")));
            }
        }
        if self.level2_min_points > self.level1_min_points {
            return Err(Error::InvalidConfig("level 2 point floor exceeds level 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatchOutcome<T> {
    TruePositive { gt: usize, heading_error: T },
    FalsePositive,
    /// Matched a ground truth that does not count in this evaluation.
    Ignored { gt: usize },
}

/// Per-frame matching result, indexed like the input detections.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchLedger<T> {
    pub scores: Vec<T>,
    pub outcomes: Vec<MatchOutcome<T>>,
    pub gt_matched: Vec<bool>,
    /// Ground truths that count towards recall.
    pub num_counted_gt: usize,
}

impl<T: Real> MatchLedger<T> {
    pub fn true_positives(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, MatchOutcome::TruePositive { .. }))
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, MatchOutcome::FalsePositive))
            .count()
    }
}

/// Absolute heading difference wrapped into `[0, pi]`.
pub fn heading_error<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b).abs()
}

pub fn match_frame<T: Real>(dets: &[Detection<T>], gts: &[Box3D<T>], iou_thr: T, mode: IouMode) -> MatchLedger<T> {
    match_frame_ignoring(dets, gts, &vec![false; gts.len()], iou_thr, mode)
}

/// Greedy matching in descending score order. Each detection claims the
/// highest-IoU unmatched ground truth at or above the threshold; a claim on an
/// ignored ground truth makes the detection neither TP nor FP.
pub fn match_frame_ignoring<T: Real>(
    dets: &[Detection<T>],
    gts: &[Box3D<T>],
    ignore: &[bool],
    iou_thr: T,
    mode: IouMode,
) -> MatchLedger<T> {
    assert_eq!(gts.len(), ignore.len(), "ignore mask length");
    let scores: Vec<T> = dets.iter().map(|d| d.score).collect();
    let mut outcomes = vec![MatchOutcome::FalsePositive; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for i in score_order(&scores) {
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] {
                continue;
            }
            let iou = mode.iou(&dets[i].bbox, gt);
            if iou >= iou_thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
            outcomes[i] = if ignore[g] {
                MatchOutcome::Ignored { gt: g }
            } else {
                MatchOutcome::TruePositive {
                    gt: g,
                    heading_error: heading_error(dets[i].bbox.yaw, gts[g].yaw),
                }
            };
        }
    }
    MatchLedger {
        scores,
        outcomes,
        gt_matched,
        num_counted_gt: ignore.iter().filter(|&&x| !x).count(),
    }
}

/// Heading accuracy weight `max(0, 1 - |dtheta| / pi)`.
pub fn heading_weight<T: Real>(err: T) -> T {
    (T::one() - err.abs() / T::PI()).max(T::zero())
}

/// One point of a precision/recall curve: cumulative TP weight and detection count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint<T> {
    pub threshold: T,
    pub tp: T,
    pub detections: usize,
}

/// Curve points at every distinct score, detections ordered globally by
/// (score desc, frame, detection index).
pub fn pr_curve<T: Real>(ledgers: &[MatchLedger<T>], heading_weighted: bool) -> Vec<PrPoint<T>> {
    let mut entries: Vec<(T, usize, usize, T)> = Vec::new();
    for (f, l) in ledgers.iter().enumerate() {
        for (d, o) in l.outcomes.iter().enumerate() {
            let w = match *o {
                MatchOutcome::TruePositive { heading_error, .. } => {
                    if heading_weighted {
                        heading_weight(heading_error)
                    } else {
                        T::one()
                    }
                }
                MatchOutcome::FalsePositive => T::zero(),
                MatchOutcome::Ignored { .. } => continue,
            };
            entries.push((l.scores[d], f, d, w));
        }
    }
    entries.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut points = Vec::new();
    let mut tp = T::zero();
    for (n, e) in entries.iter().enumerate() {
        tp += e.3;
        let last_of_score = entries.get(n + 1).is_none_or(|next| next.0 != e.0);
        if last_of_score {
            points.push(PrPoint {
                threshold: e.0,
                tp,
                detections: n + 1,
            });
        }
    }
    points
}

fn interpolated_ap<T: Real>(points: &[PrPoint<T>], n_gt: usize, positions: usize) -> T {
    let n = T::from_usize_lossy(n_gt);
    let r = T::from_usize_lossy(positions);
    // Suffix maximum of precision; recall is non-decreasing along the curve.
    let mut best = vec![T::zero(); points.len() + 1];
    for (i, p) in points.iter().enumerate().rev() {
        let prec = p.tp / T::from_usize_lossy(p.detections);
        best[i] = best[i + 1].max(prec);
    }
    let mut start = 0;
    let samples = (1..=positions).map(|k| {
        // recall >= k / positions, compared without dividing.
        let need = T::from_usize_lossy(k) * n;
        while start < points.len() && points[start].tp * r < need {
            start += 1;
        }
        best[start]
    });
    compensated_sum(samples) / r
}

/// AP with interpolated precision sampled at `k / positions`, `k = 1..=positions`.
/// `None` when there is no ground truth.
pub fn ap_at<T: Real>(ledgers: &[MatchLedger<T>], n_gt: usize, positions: usize) -> Option<T> {
    (n_gt > 0).then(|| interpolated_ap(&pr_curve(ledgers, false), n_gt, positions))
}

pub fn ap_r40<T: Real>(ledgers: &[MatchLedger<T>], n_gt: usize) -> Option<T> {
    ap_at(ledgers, n_gt, 40)
}

/// As [`ap_r40`] with each TP weighted by heading accuracy.
pub fn aph_r40<T: Real>(ledgers: &[MatchLedger<T>], n_gt: usize) -> Option<T> {
    (n_gt > 0).then(|| interpolated_ap(&pr_curve(ledgers, true), n_gt, 40))
}

/// Ground truth with the metadata used for slicing.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T> {
    pub bbox: Box3D<T>,
    pub class: String,
    /// Interior LIDAR point count.
    pub num_points: Option<usize>,
    pub kitti: Option<KittiMeta<T>>,
    pub dont_care: bool,
}

impl<T: Real> GroundTruth<T> {
    pub fn new(bbox: Box3D<T>, class: impl Into<String>) -> Self {
        Self {
            bbox,
            class: class.into(),
            num_points: None,
            kitti: None,
            dont_care: false,
        }
    }

    pub fn with_points(mut self, n: usize) -> Self {
        self.num_points = Some(n);
        self
    }

    pub fn with_kitti(mut self, meta: KittiMeta<T>) -> Self {
        self.kitti = Some(meta);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalFrame<T> {
    pub detections: Vec<Detection<T>>,
    pub gts: Vec<GroundTruth<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaymoLevel {
    L1,
    L2,
}

impl fmt::Display for WaymoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WaymoLevel::L1 => "L1",
            WaymoLevel::L2 => "L2",
        })
    }
}

/// Index of the bucket holding planar distance `d`.
pub fn bucket_of<T: Real>(d: T, buckets: &[(T, T)]) -> Option<usize> {
    buckets.iter().position(|&(lo, hi)| d >= lo && d < hi)
}

/// Membership masks for one (bucket, level) slice of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSlice {
    /// `None` means all buckets together.
    pub bucket: Option<usize>,
    pub level: WaymoLevel,
    pub gt_in: Vec<bool>,
    pub det_in: Vec<bool>,
}

/// Level of a ground truth by interior point count; `None` below level 2.
pub fn waymo_level<T: Real>(points: usize, cfg: &EvalConfig<T>) -> Option<WaymoLevel> {
    if points >= cfg.level1_min_points {
        Some(WaymoLevel::L1)
    } else if points >= cfg.level2_min_points {
        Some(WaymoLevel::L2)
    } else {
        None
    }
}

/// Splits one frame into slices for every level and every bucket plus the
/// all-bucket slice. Level 2 contains level 1. Detections use their own
/// distance.
pub fn bucketize<T: Real>(gts: &[GroundTruth<T>], dets: &[Detection<T>], cfg: &EvalConfig<T>) -> Vec<EvalSlice> {
    let gt_bucket: Vec<Option<usize>> = gts
        .iter()
        .map(|g| bucket_of(g.bbox.planar_distance(), &cfg.buckets))
        .collect();
    let gt_level: Vec<Option<WaymoLevel>> = gts
        .iter()
        .map(|g| {
            if g.num_points.is_none() {
                log::debug!("ground truth without a point count is treated as level 2");
            }
            match g.num_points {
                Some(n) => waymo_level(n, cfg),
                None => Some(WaymoLevel::L2),
            }
        })
        .collect();
    let det_bucket: Vec<Option<usize>> = dets
        .iter()
        .map(|d| bucket_of(d.bbox.planar_distance(), &cfg.buckets))
        .collect();
    let mut slices = Vec::new();
    for level in [WaymoLevel::L1, WaymoLevel::L2] {
        let buckets = std::iter::once(None).chain((0..cfg.buckets.len()).map(Some));
        for bucket in buckets {
            let in_bucket = |b: Option<usize>| b.is_some() && (bucket.is_none() || b == bucket);
            let gt_in = gts
                .iter()
                .enumerate()
                .map(|(i, g)| !g.dont_care && in_bucket(gt_bucket[i]) && gt_level[i].is_some_and(|l| l <= level))
                .collect();
            let det_in = det_bucket.iter().map(|&b| in_bucket(b)).collect();
            slices.push(EvalSlice {
                bucket,
                level,
                gt_in,
                det_in,
            });
        }
    }
    slices
}

/// 2D image-plane metadata of a KITTI label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KittiMeta<T> {
    pub bbox_height_px: T,
    pub occlusion: i32,
    pub truncation: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "moderate" => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::InvalidConfig(format!("unknown difficulty {other:?}"))),
        }
    }
}

/// Tightest tier a label satisfies; `None` below the hard floor or without metadata.
pub fn kitti_difficulty<T: Real>(meta: Option<&KittiMeta<T>>) -> Option<Difficulty> {
    let Some(m) = meta else {
        log::debug!("label without 2D metadata has no difficulty tier");
        return None;
    };
    let tiers = [
        (Difficulty::Easy, 40.0, 0, 0.15),
        (Difficulty::Moderate, 25.0, 1, 0.30),
        (Difficulty::Hard, 25.0, 2, 0.50),
    ];
    tiers
        .into_iter()
        .find(|&(_, h, occ, trunc)| {
            m.bbox_height_px >= T::lit(h) && (0..=occ).contains(&m.occlusion) && m.truncation <= T::lit(trunc)
        })
        .map(|t| t.0)
}

/// Metric values for one evaluation slice.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow<T> {
    pub name: String,
    pub num_gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub ap: Option<T>,
    pub aph: Option<T>,
}

fn row_from_ledgers<T: Real>(name: String, ledgers: &[MatchLedger<T>]) -> MetricRow<T> {
    let n_gt = ledgers.iter().map(|l| l.num_counted_gt).sum();
    MetricRow {
        name,
        num_gt: n_gt,
        tp: ledgers.iter().map(MatchLedger::true_positives).sum(),
        fp: ledgers.iter().map(MatchLedger::false_positives).sum(),
        ap: ap_r40(ledgers, n_gt),
        aph: aph_r40(ledgers, n_gt),
    }
}

fn class_subset<T: Real>(frame: &EvalFrame<T>, class: &str) -> (Vec<Detection<T>>, Vec<GroundTruth<T>>) {
    let dets = frame.detections.iter().filter(|d| d.class == class).cloned().collect();
    let gts = frame
        .gts
        .iter()
        .filter(|g| g.class == class || g.dont_care)
        .cloned()
        .collect();
    (dets, gts)
}

/// Plain AP/APH over all ground truths of `class` (DontCare regions ignored).
pub fn evaluate_class<T: Real>(frames: &[EvalFrame<T>], class: &str, cfg: &EvalConfig<T>) -> Result<MetricRow<T>> {
    cfg.validate()?;
    let ledgers: Vec<_> = frames
        .par_iter()
        .map(|f| {
            let (dets, gts) = class_subset(f, class);
            let boxes: Vec<_> = gts.iter().map(|g| g.bbox).collect();
            let ignore: Vec<bool> = gts.iter().map(|g| g.dont_care).collect();
            match_frame_ignoring(&dets, &boxes, &ignore, cfg.iou_threshold, cfg.mode)
        })
        .collect();
    Ok(row_from_ledgers(class.to_string(), &ledgers))
}

/// Per-level, per-bucket AP/APH for one class.
pub fn evaluate_waymo<T: Real>(frames: &[EvalFrame<T>], class: &str, cfg: &EvalConfig<T>) -> Result<Vec<MetricRow<T>>> {
    cfg.validate()?;
    let per_frame: Vec<Vec<(EvalSlice, MatchLedger<T>)>> = frames
        .par_iter()
        .map(|f| {
            let (dets, gts) = class_subset(f, class);
            let boxes: Vec<_> = gts.iter().map(|g| g.bbox).collect();
            bucketize(&gts, &dets, cfg)
                .into_iter()
                .map(|s| {
                    let sub: Vec<_> = dets
                        .iter()
                        .zip(&s.det_in)
                        .filter(|(_, &keep)| keep)
                        .map(|(d, _)| d.clone())
                        .collect();
                    let ignore: Vec<bool> = s.gt_in.iter().map(|&x| !x).collect();
                    let ledger = match_frame_ignoring(&sub, &boxes, &ignore, cfg.iou_threshold, cfg.mode);
                    (s, ledger)
                })
                .collect()
        })
        .collect();
    let n_slices = per_frame.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(n_slices);
    for k in 0..n_slices {
        let ledgers: Vec<_> = per_frame.iter().map(|f| f[k].1.clone()).collect();
        let slice = &per_frame[0][k].0;
        let bucket = match slice.bucket {
            None => "all".to_string(),
            Some(b) => {
                let (lo, hi) = cfg.buckets[b];
                format!("{lo}-{hi}m")
            }
        };
        rows.push(row_from_ledgers(format!("{class}/{}/{bucket}", slice.level), &ledgers));
    }
    Ok(rows)
}

/// KITTI easy/moderate/hard AP. Each tier counts the ground truths of that
/// tier and every easier one; others are ignored.
pub fn evaluate_kitti<T: Real>(frames: &[EvalFrame<T>], class: &str, cfg: &EvalConfig<T>) -> Result<Vec<MetricRow<T>>> {
    cfg.validate()?;
    let rows = Difficulty::ALL
        .iter()
        .map(|&tier| {
            let ledgers: Vec<_> = frames
                .par_iter()
                .map(|f| {
                    let (dets, gts) = class_subset(f, class);
                    let boxes: Vec<_> = gts.iter().map(|g| g.bbox).collect();
                    let ignore: Vec<bool> = gts
                        .iter()
                        .map(|g| g.dont_care || kitti_difficulty(g.kitti.as_ref()).is_none_or(|d| d > tier))
                        .collect();
                    match_frame_ignoring(&dets, &boxes, &ignore, cfg.iou_threshold, cfg.mode)
                })
                .collect();
            row_from_ledgers(format!("{class}/{tier}"), &ledgers)
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn car(x: f64, yaw: f64) -> Box3D<f64> {
        Box3D::new([x, 0.0, 0.0], [4.0, 1.8, 1.5], yaw)
    }

    fn det(b: Box3D<f64>, s: f64) -> Detection<f64> {
        Detection::new(b, s, "Car")
    }

    #[test]
    fn matching_examples() {
        let gts = [car(10.0, 0.0), car(20.0, 0.0)];
        let perfect = [det(gts[0], 0.9), det(gts[1], 0.8)];
        let l = match_frame(&perfect, &gts, 0.7, IouMode::ThreeD);
        assert_eq!((l.true_positives(), l.false_positives()), (2, 0));

        let dup = [det(gts[0], 0.9), det(gts[0], 0.8)];
        let l = match_frame(&dup, &gts[..1], 0.7, IouMode::ThreeD);
        assert_eq!((l.true_positives(), l.false_positives()), (1, 1));
        assert!(matches!(l.outcomes[0], MatchOutcome::TruePositive { gt: 0, .. }));

        let l = match_frame(&[], &gts, 0.7, IouMode::ThreeD);
        assert_eq!((l.true_positives(), l.false_positives()), (0, 0));
        assert!(l.gt_matched.iter().all(|&m| !m));
    }

    fn ledger(outcomes: &[(f64, bool)]) -> MatchLedger<f64> {
        MatchLedger {
            scores: outcomes.iter().map(|o| o.0).collect(),
            outcomes: outcomes
                .iter()
                .enumerate()
                .map(|(i, &(_, tp))| {
                    if tp {
                        MatchOutcome::TruePositive { gt: i, heading_error: 0.0 }
                    } else {
                        MatchOutcome::FalsePositive
                    }
                })
                .collect(),
            gt_matched: vec![],
            num_counted_gt: 0,
        }
    }

    #[test]
    fn ap_examples() {
        assert_eq!(ap_r40(&[ledger(&[(1.0, true), (1.0, true)])], 2), Some(1.0));
        assert_eq!(ap_r40(&[ledger(&[])], 3), Some(0.0));
        assert_eq!(ap_r40::<f64>(&[], 0), None);
        let l = ledger(&[(0.9, true), (0.8, false), (0.7, true)]);
        assert_eq!(ap_r40(&[l], 2), Some(5.0 / 6.0));
    }

    #[test]
    fn aph_weights() {
        let mut l = ledger(&[(0.9, true)]);
        assert_eq!(aph_r40(&[l.clone()], 1), ap_r40(&[l.clone()], 1));
        l.outcomes[0] = MatchOutcome::TruePositive { gt: 0, heading_error: PI };
        assert_eq!(aph_r40(&[l.clone()], 1), Some(0.0));
        assert_eq!(ap_r40(&[l.clone()], 1), Some(1.0));
        assert_eq!(heading_weight(FRAC_PI_2), 0.5);
        // A half-weight TP reaches recall 0.5 at precision 0.5.
        l.outcomes[0] = MatchOutcome::TruePositive { gt: 0, heading_error: FRAC_PI_2 };
        assert_eq!(aph_r40(&[l], 1), Some(0.25));
    }

    #[test]
    fn heading_error_wraps() {
        assert!((heading_error(3.0, -3.0) - (2.0 * PI - 6.0)).abs() < 1e-12);
        assert_eq!(heading_error(0.5, 0.5), 0.0);
    }

    #[test]
    fn bucket_and_level_examples() {
        let cfg = EvalConfig::<f64>::default();
        assert_eq!(bucket_of(29.9, &cfg.buckets), Some(0));
        assert_eq!(bucket_of(30.0, &cfg.buckets), Some(1));
        assert_eq!(bucket_of(80.0, &cfg.buckets), None);
        assert_eq!(waymo_level(4, &cfg), Some(WaymoLevel::L2));
        assert_eq!(waymo_level(5, &cfg), Some(WaymoLevel::L1));
        assert_eq!(waymo_level(0, &cfg), None);

        let gts = vec![
            GroundTruth::new(car(29.9, 0.0), "Car").with_points(4),
            GroundTruth::new(car(80.0, 0.0), "Car").with_points(100),
        ];
        let slices = bucketize(&gts, &[], &cfg);
        assert_eq!(slices.len(), 8);
        let find = |level, bucket| slices.iter().find(|s| s.level == level && s.bucket == bucket).unwrap();
        assert_eq!(find(WaymoLevel::L1, Some(0)).gt_in, vec![false, false]);
        assert_eq!(find(WaymoLevel::L2, Some(0)).gt_in, vec![true, false]);
        assert!(slices.iter().all(|s| !s.gt_in[1]));
    }

    #[test]
    fn difficulty_examples() {
        let m = |h, o, t| KittiMeta { bbox_height_px: h, occlusion: o, truncation: t };
        assert_eq!(kitti_difficulty(Some(&m(50.0, 0, 0.0))), Some(Difficulty::Easy));
        assert_eq!(kitti_difficulty(Some(&m(30.0, 1, 0.2))), Some(Difficulty::Moderate));
        assert_eq!(kitti_difficulty(Some(&m(20.0, 2, 0.6))), None);
        assert_eq!(kitti_difficulty(Some(&m(26.0, 2, 0.5))), Some(Difficulty::Hard));
        assert_eq!(kitti_difficulty::<f64>(None), None);
    }

    #[test]
    fn ignored_gt_absorbs_detection() {
        let gts = [car(10.0, 0.0)];
        let l = match_frame_ignoring(&[det(gts[0], 0.9)], &gts, &[true], 0.7, IouMode::ThreeD);
        assert_eq!(l.outcomes[0], MatchOutcome::Ignored { gt: 0 });
        assert_eq!(l.num_counted_gt, 0);
        assert_eq!(ap_r40(&[l], 0), None);
    }

    #[test]
    fn kitti_tiers_are_cumulative() {
        let meta = |h| KittiMeta { bbox_height_px: h, occlusion: 0, truncation: 0.0 };
        let frame = EvalFrame {
            detections: vec![det(car(10.0, 0.0), 0.9)],
            gts: vec![
                GroundTruth::new(car(10.0, 0.0), "Car").with_kitti(meta(50.0)),
                GroundTruth::new(car(30.0, 0.0), "Car").with_kitti(meta(30.0)),
            ],
        };
        let rows = evaluate_kitti(&[frame], "Car", &EvalConfig::default()).unwrap();
        assert_eq!(rows[0].num_gt, 1);
        assert_eq!(rows[0].ap, Some(1.0));
        assert_eq!(rows[1].num_gt, 2);
        assert_eq!(rows[1].ap, Some(0.5));
    }
}
