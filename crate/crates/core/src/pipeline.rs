// SPDX-License-Identifier: Apache-2.0

//! Deterministic two-stage detection skeleton.
//!
//! project -> feature map -> gather -> BEV scatter -> anchors -> RPN heads ->
//! decode -> proposal NMS -> top-k -> RoI pooling -> refinement heads ->
//! final NMS -> evaluation.
//!
//! The learned parts (backbone features, proposal and refinement heads) are
//! supplied through [`Heads`]. [`Injector`] ships oracle, noise and zero
//! implementations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boxgeom::{iou_3d, iou_bev, nms, score_order, Box3D, Detection, IouMode};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_class, EvalFrame, GroundTruth, MetricRow};
use crate::io;
use crate::rangeproj::{build_range_image, PointCloud, PointStatus, RangeImage};
use crate::roipool::{roi_max_pool_batch, PooledFeature};
use crate::scalar::Real;
use crate::targets::{
    decode_box, encode_box_folded, generate_anchors, match_anchors, rcnn_confidence_target, AnchorLabel,
    RegressionResidual,
};
use crate::viewtransfer::{gather_point_features, scatter_to_bev, BevGrid};

/// A frame entering the pipeline; labels are in the sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub id: String,
    pub cloud: PointCloud<T>,
    pub labels: Vec<GroundTruth<T>>,
}

impl<T: Real> From<io::FrameRecord<T>> for Frame<T> {
    fn from(r: io::FrameRecord<T>) -> Self {
        Self {
            id: r.id,
            cloud: r.cloud,
            labels: r.labels,
        }
    }
}

/// What a head implementation may look at.
pub struct FrameContext<'a, T> {
    pub index: usize,
    pub seed: u64,
    pub frame: &'a Frame<T>,
    pub config: &'a PipelineConfig<T>,
}

impl<T: Real> FrameContext<'_, T> {
    /// Labels of the configured class, DontCare excluded.
    pub fn target_boxes(&self) -> Vec<Box3D<T>> {
        self.frame
            .labels
            .iter()
            .filter(|g| !g.dont_care && g.class == self.config.pipeline.class)
            .map(|g| g.bbox)
            .collect()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Per-box head output: score, residual and direction bit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeadOutput<T> {
    pub scores: Vec<T>,
    pub residuals: Vec<RegressionResidual<T>>,
    pub dir_bits: Vec<u8>,
}

impl<T: Real> HeadOutput<T> {
    fn check(&self, n: usize, stage: &str) -> Result<()> {
        if self.scores.len() != n || self.residuals.len() != n || self.dir_bits.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{stage} head returned {}/{}/{} values for {n} boxes",
                self.scores.len(),
                self.residuals.len(),
                self.dir_bits.len()
            )));
        }
        Ok(())
    }
}

/// Learned stages of the detector.
pub trait Heads<T: Real>: Sync {
    /// Per-pixel features, shape `(h, w, channels)`.
    fn feature_map(&self, ctx: &FrameContext<'_, T>, image: &RangeImage<T>, channels: usize) -> Result<Array3<T>>;
    fn rpn(&self, ctx: &FrameContext<'_, T>, anchors: &[Box3D<T>], bev: &BevGrid<T>) -> Result<HeadOutput<T>>;
    fn rcnn(
        &self,
        ctx: &FrameContext<'_, T>,
        proposals: &[Box3D<T>],
        pooled: &[PooledFeature<T>],
    ) -> Result<HeadOutput<T>>;
}

/// Reference head implementations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Injector {
    /// Scores and residuals derived from the ground truth.
    Oracle,
    /// Seeded uniform scores and small residuals.
    Noise,
    /// All scores zero.
    Zero,
}

impl FromStr for Injector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Injector::Oracle),
            "noise" => Ok(Injector::Noise),
            "zero" => Ok(Injector::Zero),
            other => Err(Error::InvalidConfig(format!("unknown injector `{other}`"))),
        }
    }
}

impl fmt::Display for Injector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Injector::Oracle => "oracle",
            Injector::Noise => "noise",
            Injector::Zero => "zero",
        })
    }
}

fn noise_output<T: Real>(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> HeadOutput<T> {
    let mut out = HeadOutput::default();
    for _ in 0..n {
        out.scores.push(T::lit(rng.random::<f64>()));
        let r: [T; 7] = std::array::from_fn(|_| T::lit(rng.random_range(-spread..spread)));
        out.residuals.push(RegressionResidual::from_array(r));
        out.dir_bits.push(rng.random_range(0..2u8));
    }
    out
}

impl<T: Real> Heads<T> for Injector {
    fn feature_map(&self, ctx: &FrameContext<'_, T>, image: &RangeImage<T>, channels: usize) -> Result<Array3<T>> {
        let (h, w) = (image.height(), image.width());
        Ok(match self {
            Injector::Zero => Array3::zeros((h, w, channels)),
            Injector::Oracle => {
                let c_in = image.num_channels();
                let data = image.data();
                Array3::from_shape_fn((h, w, channels), |(v, u, c)| data[[v, u, c % c_in]])
            }
            Injector::Noise => {
                let mut rng = ctx.rng(0);
                Array3::from_shape_simple_fn((h, w, channels), || T::lit(rng.random::<f64>()))
            }
        })
    }

    fn rpn(&self, ctx: &FrameContext<'_, T>, anchors: &[Box3D<T>], _bev: &BevGrid<T>) -> Result<HeadOutput<T>> {
        let n = anchors.len();
        match self {
            Injector::Zero => Ok(HeadOutput {
                scores: vec![T::zero(); n],
                residuals: vec![RegressionResidual::zero(); n],
                dir_bits: vec![1; n],
            }),
            Injector::Noise => Ok(noise_output(&mut ctx.rng(1), n, 0.05)),
            Injector::Oracle => {
                let gts = ctx.target_boxes();
                let p = &ctx.config.pipeline;
                let labels = match_anchors(anchors, &gts, p.anchor_pos_iou, p.anchor_neg_iou)?;
                let mut out = HeadOutput {
                    scores: vec![T::zero(); n],
                    residuals: vec![RegressionResidual::zero(); n],
                    dir_bits: vec![1; n],
                };
                for (a, label) in labels.iter().enumerate() {
                    if let AnchorLabel::Positive(g) = *label {
                        let (r, bit) = encode_box_folded(&gts[g], &anchors[a])?;
                        out.scores[a] = T::one();
                        out.residuals[a] = r;
                        out.dir_bits[a] = bit;
                    }
                }
                Ok(out)
            }
        }
    }

    fn rcnn(
        &self,
        ctx: &FrameContext<'_, T>,
        proposals: &[Box3D<T>],
        _pooled: &[PooledFeature<T>],
    ) -> Result<HeadOutput<T>> {
        let n = proposals.len();
        match self {
            Injector::Zero => Ok(HeadOutput {
                scores: vec![T::zero(); n],
                residuals: vec![RegressionResidual::zero(); n],
                dir_bits: vec![1; n],
            }),
            Injector::Noise => Ok(noise_output(&mut ctx.rng(2), n, 0.02)),
            Injector::Oracle => {
                let gts = ctx.target_boxes();
                let mut out = HeadOutput::default();
                for p in proposals {
                    let best = gts
                        .iter()
                        .map(|g| (iou_3d(p, g), g))
                        .fold(None, |acc: Option<(T, &Box3D<T>)>, x| match acc {
                            Some(a) if a.0 >= x.0 => Some(a),
                            _ => Some(x),
                        });
                    match best {
                        Some((iou, g)) if iou >= ctx.config.sampling.positive_iou => {
                            let (r, bit) = encode_box_folded(g, p)?;
                            let refined = decode_box(&r, p, bit);
                            out.scores.push(rcnn_confidence_target(iou_3d(&refined, g)));
                            out.residuals.push(r);
                            out.dir_bits.push(bit);
                        }
                        other => {
                            out.scores.push(rcnn_confidence_target(other.map_or(T::zero(), |b| b.0)));
                            out.residuals.push(RegressionResidual::zero());
                            out.dir_bits.push(1);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Counts and thresholds observed at each stage of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageStats {
    pub points: usize,
    pub kept_points: usize,
    pub occluded_points: usize,
    pub out_of_view_points: usize,
    pub gathered_points: usize,
    pub bev_occupied_cells: usize,
    pub bev_dropped_points: usize,
    pub anchors: usize,
    pub rpn_candidates: usize,
    pub pre_nms_candidates: usize,
    pub after_proposal_nms: usize,
    pub proposals: usize,
    pub max_proposals: usize,
    pub proposal_nms_threshold: f64,
    /// Largest pairwise BEV IoU among the proposals.
    pub max_proposal_iou: f64,
    pub pooled_rois: usize,
    pub pooled_len: usize,
    pub refined_candidates: usize,
    pub final_nms_threshold: f64,
    /// Largest pairwise 3D IoU among the final detections.
    pub max_detection_iou: f64,
    pub detections: usize,
}

impl StageStats {
    pub fn to_kv(&self, prefix: &str) -> String {
        let items: [(&str, String); 21] = [
            ("points", self.points.to_string()),
            ("kept_points", self.kept_points.to_string()),
            ("occluded_points", self.occluded_points.to_string()),
            ("out_of_view_points", self.out_of_view_points.to_string()),
            ("gathered_points", self.gathered_points.to_string()),
            ("bev_occupied_cells", self.bev_occupied_cells.to_string()),
            ("bev_dropped_points", self.bev_dropped_points.to_string()),
            ("anchors", self.anchors.to_string()),
            ("rpn_candidates", self.rpn_candidates.to_string()),
            ("pre_nms_candidates", self.pre_nms_candidates.to_string()),
            ("after_proposal_nms", self.after_proposal_nms.to_string()),
            ("proposals", self.proposals.to_string()),
            ("max_proposals", self.max_proposals.to_string()),
            ("proposal_nms_threshold", self.proposal_nms_threshold.to_string()),
            ("max_proposal_iou", format!("{:.6}", self.max_proposal_iou)),
            ("pooled_rois", self.pooled_rois.to_string()),
            ("pooled_len", self.pooled_len.to_string()),
            ("refined_candidates", self.refined_candidates.to_string()),
            ("final_nms_threshold", self.final_nms_threshold.to_string()),
            ("max_detection_iou", format!("{:.6}", self.max_detection_iou)),
            ("detections", self.detections.to_string()),
        ];
        items.iter().map(|(k, v)| format!("{prefix}{k}={v}\n")).collect()
    }
}

/// Intermediate products kept for export.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameArtifacts<T> {
    pub image: RangeImage<T>,
    pub bev: BevGrid<T>,
    pub pooled: Vec<PooledFeature<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult<T> {
    pub id: String,
    pub proposals: Vec<Detection<T>>,
    pub detections: Vec<Detection<T>>,
    pub stats: StageStats,
    pub artifacts: Option<FrameArtifacts<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineRun<T> {
    pub frames: Vec<FrameResult<T>>,
    pub metrics: MetricRow<T>,
}

/// Seed of frame `index` derived from the master seed.
pub fn frame_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn max_pairwise<T: Real>(boxes: &[Box3D<T>], iou: impl Fn(&Box3D<T>, &Box3D<T>) -> T) -> f64 {
    let mut m = 0.0f64;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            m = m.max(iou(a, b).as_f64());
        }
    }
    m
}

/// Scores at or above the threshold, best first, at most `cap`.
fn top_candidates<T: Real>(scores: &[T], threshold: T, cap: usize) -> (usize, Vec<usize>) {
    let passing: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= threshold).collect();
    let sub: Vec<T> = passing.iter().map(|&i| scores[i]).collect();
    let order: Vec<usize> = score_order(&sub).into_iter().take(cap).map(|k| passing[k]).collect();
    (passing.len(), order)
}

/// NMS, then survivors in descending score order.
fn nms_ranked<T: Real>(dets: Vec<Detection<T>>, threshold: T, mode: IouMode) -> Vec<Detection<T>> {
    let kept = nms(&dets, threshold, mode);
    let scores: Vec<T> = kept.iter().map(|&k| dets[k].score).collect();
    score_order(&scores).into_iter().map(|i| dets[kept[i]].clone()).collect()
}

fn run_frame<T: Real>(
    ctx: &FrameContext<'_, T>,
    heads: &dyn Heads<T>,
    anchors: &[Box3D<T>],
    keep_artifacts: bool,
) -> Result<FrameResult<T>> {
    let cfg = ctx.config;
    let p = &cfg.pipeline;
    let cloud = &ctx.frame.cloud;
    let mut stats = StageStats {
        points: cloud.len(),
        anchors: anchors.len(),
        max_proposals: p.max_proposals,
        proposal_nms_threshold: p.proposal_nms_threshold.as_f64(),
        final_nms_threshold: p.final_nms_threshold.as_f64(),
        ..StageStats::default()
    };

    let (image, index_map) = build_range_image(cloud, &cfg.projection).map_err(|e| e.in_stage("project"))?;
    stats.kept_points = index_map.count(PointStatus::Kept);
    stats.occluded_points = index_map.count(PointStatus::Occluded);
    stats.out_of_view_points = index_map.count(PointStatus::OutOfView);

    let features = heads
        .feature_map(ctx, &image, cfg.roi.channels)
        .map_err(|e| e.in_stage("features"))?;
    if features.dim() != (image.height(), image.width(), cfg.roi.channels) {
        return Err(Error::ShapeMismatch(format!("feature map {:?}", features.dim())).in_stage("features"));
    }

    let point_features =
        gather_point_features(features.view(), &index_map, cloud).map_err(|e| e.in_stage("gather"))?;
    stats.gathered_points = point_features.len();

    let bev = scatter_to_bev(&point_features, &cfg.bev).map_err(|e| e.in_stage("scatter"))?;
    stats.bev_occupied_cells = bev.occupied_cells();
    stats.bev_dropped_points = bev.dropped;

    let rpn = heads.rpn(ctx, anchors, &bev).map_err(|e| e.in_stage("rpn"))?;
    rpn.check(anchors.len(), "rpn").map_err(|e| e.in_stage("rpn"))?;

    let (passing, order) = top_candidates(&rpn.scores, p.score_threshold, p.pre_nms_top);
    stats.rpn_candidates = passing;
    stats.pre_nms_candidates = order.len();
    let decoded: Vec<Detection<T>> = order
        .iter()
        .map(|&a| {
            let b = decode_box(&rpn.residuals[a], &anchors[a], rpn.dir_bits[a]);
            Detection::new(b, rpn.scores[a], p.class.clone())
        })
        .collect();
    if let Some(bad) = decoded.iter().find(|d| d.bbox.validate().is_err()) {
        return Err(Error::InvalidBox(format!("decoded proposal {:?}", bad.bbox)).in_stage("decode"));
    }

    let mut proposals = nms_ranked(decoded, p.proposal_nms_threshold, IouMode::Bev);
    stats.after_proposal_nms = proposals.len();
    proposals.truncate(p.max_proposals);
    stats.proposals = proposals.len();
    let proposal_boxes: Vec<Box3D<T>> = proposals.iter().map(|d| d.bbox).collect();
    stats.max_proposal_iou = max_pairwise(&proposal_boxes, iou_bev);
    if stats.proposals > p.max_proposals || stats.max_proposal_iou > stats.proposal_nms_threshold {
        return Err(Error::Invariant("proposal cap or NMS threshold violated".into()).in_stage("proposal_nms"));
    }

    let pooled = roi_max_pool_batch(
        &point_features.positions,
        point_features.features.view(),
        &proposal_boxes,
        &cfg.roi,
    )
    .map_err(|e| e.in_stage("roi_pool"))?;
    stats.pooled_rois = pooled.len();
    stats.pooled_len = pooled.first().map_or(cfg.roi.output_len(), |f| f.values.len());

    let rcnn = heads
        .rcnn(ctx, &proposal_boxes, &pooled)
        .map_err(|e| e.in_stage("rcnn"))?;
    rcnn.check(proposal_boxes.len(), "rcnn").map_err(|e| e.in_stage("rcnn"))?;
    let refined: Vec<Detection<T>> = (0..proposal_boxes.len())
        .filter(|&i| rcnn.scores[i] >= p.score_threshold)
        .map(|i| {
            let b = decode_box(&rcnn.residuals[i], &proposal_boxes[i], rcnn.dir_bits[i]);
            Detection::new(b, rcnn.scores[i], p.class.clone())
        })
        .collect();
    stats.refined_candidates = refined.len();

    let detections = nms_ranked(refined, p.final_nms_threshold, IouMode::ThreeD);
    stats.detections = detections.len();
    let det_boxes: Vec<Box3D<T>> = detections.iter().map(|d| d.bbox).collect();
    stats.max_detection_iou = max_pairwise(&det_boxes, iou_3d);
    if stats.max_detection_iou > stats.final_nms_threshold {
        return Err(Error::Invariant("final NMS threshold violated".into()).in_stage("final_nms"));
    }

    Ok(FrameResult {
        id: ctx.frame.id.clone(),
        proposals,
        detections,
        stats,
        artifacts: keep_artifacts.then_some(FrameArtifacts { image, bev, pooled }),
    })
}

/// Runs every frame (in parallel, results in frame order) and evaluates the
/// configured class.
pub fn run_pipeline<T: Real>(
    frames: &[Frame<T>],
    cfg: &PipelineConfig<T>,
    heads: &dyn Heads<T>,
    keep_artifacts: bool,
) -> Result<PipelineRun<T>> {
    cfg.validate()?;
    let anchors = generate_anchors(&cfg.bev, &cfg.anchors).map_err(|e| e.in_stage("anchors"))?;
    let work = || -> Vec<Result<FrameResult<T>>> {
        frames
            .par_iter()
            .enumerate()
            .map(|(index, frame)| {
                let ctx = FrameContext {
                    index,
                    seed: frame_seed(cfg.seed, index),
                    frame,
                    config: cfg,
                };
                run_frame(&ctx, heads, &anchors, keep_artifacts)
            })
            .collect()
    };
    let results = if cfg.pipeline.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.pipeline.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(work)
    } else {
        work()
    };
    let results: Vec<FrameResult<T>> = results.into_iter().collect::<Result<_>>()?;

    let eval_frames: Vec<EvalFrame<T>> = frames
        .iter()
        .zip(&results)
        .map(|(f, r)| EvalFrame {
            detections: r.detections.clone(),
            gts: f.labels.clone(),
        })
        .collect();
    let metrics = evaluate_class(&eval_frames, &cfg.pipeline.class, &cfg.eval).map_err(|e| e.in_stage("eval"))?;
    Ok(PipelineRun {
        frames: results,
        metrics,
    })
}

/// Writes `<id>.dets.txt`, `<id>.proposals.txt`, `<id>.stats.txt` and, when
/// kept, `<id>.rgrd`, `<id>.bevg` and `<id>.roip` under `dir`.
pub fn export_frame<T: Real>(dir: &Path, result: &FrameResult<T>) -> Result<()> {
    let id = &result.id;
    io::write_detections(&dir.join(format!("{id}.dets.txt")), &result.detections)?;
    io::write_detections(&dir.join(format!("{id}.proposals.txt")), &result.proposals)?;
    let stats = dir.join(format!("{id}.stats.txt"));
    std::fs::write(&stats, result.stats.to_kv("")).map_err(|e| Error::io(&stats, e))?;
    if let Some(a) = &result.artifacts {
        io::write_range_image(&dir.join(format!("{id}.rgrd")), &a.image)?;
        let bev = dir.join(format!("{id}.bevg"));
        std::fs::write(&bev, io::encode_bev_grid(&a.bev)).map_err(|e| Error::io(&bev, e))?;
        let roip = dir.join(format!("{id}.roip"));
        std::fs::write(&roip, io::encode_pooled(&a.pooled)).map_err(|e| Error::io(&roip, e))?;
    }
    Ok(())
}
