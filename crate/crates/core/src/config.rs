// SPDX-License-Identifier: Apache-2.0

//! Flat `section.key = value` configuration.
//!
//! `run.dataset = kitti|waymo` selects the preset the other keys override; it
//! may appear anywhere in the file. Angles are given in degrees. Lists are
//! comma separated. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::augment::AugmentConfig;
use crate::boxgeom::IouMode;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::rangeproj::{Channel, ProjectionSpec};
use crate::roipool::RoiGridSpec;
use crate::scalar::Real;
use crate::targets::{AnchorSpec, LossWeights, ProposalSampling};
use crate::viewtransfer::BevSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Kitti,
    Waymo,
}

/// Inference rules of the two-stage skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineParams<T> {
    pub class: String,
    /// Minimum score for an anchor or refined box to be kept.
    pub score_threshold: T,
    /// Candidates entering proposal NMS, best first.
    pub pre_nms_top: usize,
    pub proposal_nms_threshold: T,
    pub max_proposals: usize,
    pub final_nms_threshold: T,
    pub anchor_pos_iou: T,
    pub anchor_neg_iou: T,
    /// Worker threads across frames; 0 uses the global pool.
    pub workers: usize,
}

impl<T: Real> Default for PipelineParams<T> {
    fn default() -> Self {
        Self {
            class: "Car".into(),
            score_threshold: T::lit(0.1),
            pre_nms_top: 4096,
            proposal_nms_threshold: T::lit(0.7),
            max_proposals: 100,
            final_nms_threshold: T::lit(0.1),
            anchor_pos_iou: T::lit(0.6),
            anchor_neg_iou: T::lit(0.45),
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig<T> {
    pub dataset: Dataset,
    pub seed: u64,
    pub projection: ProjectionSpec<T>,
    pub bev: BevSpec<T>,
    pub anchors: AnchorSpec<T>,
    pub roi: RoiGridSpec<T>,
    pub loss: LossWeights<T>,
    pub sampling: ProposalSampling<T>,
    pub augment: AugmentConfig<T>,
    pub eval: EvalConfig<T>,
    pub pipeline: PipelineParams<T>,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self::kitti()
    }
}

impl<T: Real> PipelineConfig<T> {
    pub fn kitti() -> Self {
        Self {
            dataset: Dataset::Kitti,
            seed: 0,
            projection: ProjectionSpec::kitti(),
            bev: BevSpec::kitti(),
            anchors: AnchorSpec::kitti_car(),
            roi: RoiGridSpec::default(),
            loss: LossWeights::default(),
            sampling: ProposalSampling::default(),
            augment: AugmentConfig::default(),
            eval: EvalConfig::default(),
            pipeline: PipelineParams::default(),
        }
    }

    pub fn waymo() -> Self {
        Self {
            dataset: Dataset::Waymo,
            projection: ProjectionSpec::waymo(),
            bev: BevSpec::waymo(),
            anchors: AnchorSpec {
                size: [T::lit(4.7), T::lit(2.1), T::lit(1.7)],
                yaws: vec![T::zero(), T::FRAC_PI_2()],
                z_center: T::lit(0.85),
                stride: 1,
            },
            pipeline: PipelineParams {
                class: "Vehicle".into(),
                ..PipelineParams::default()
            },
            ..Self::kitti()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.bev.validate()?;
        self.anchors.validate()?;
        self.roi.validate()?;
        self.augment.validate()?;
        self.eval.validate()?;
        let p = &self.pipeline;
        let unit = |v: T| v > T::zero() && v <= T::one();
        if !unit(p.score_threshold) || !unit(p.proposal_nms_threshold) || !unit(p.final_nms_threshold) {
            return Err(Error::InvalidConfig("pipeline thresholds must lie in (0, 1]".into()));
        }
        if p.max_proposals == 0 || p.pre_nms_top == 0 {
            return Err(Error::InvalidConfig("proposal caps must be positive".into()));
        }
        if !(T::zero() <= p.anchor_neg_iou && p.anchor_neg_iou <= p.anchor_pos_iou && p.anchor_pos_iou <= T::one()) {
            return Err(Error::InvalidConfig("anchor matching thresholds out of order".into()));
        }
        if self.sampling.max_positive > self.sampling.total {
            return Err(Error::InvalidConfig("sampling.max_positive exceeds sampling.total".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `section.key = value`"))?;
            entries.push((i + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let mut cfg = match entries.iter().find(|e| e.1 == "run.dataset") {
            None => Self::kitti(),
            Some((n, _, v)) => match v.as_str() {
                "kitti" => Self::kitti(),
                "waymo" => Self::waymo(),
                other => return Err(Error::parse(path, *n, format!("unknown dataset `{other}`"))),
            },
        };
        for (n, key, value) in &entries {
            cfg.apply(key, value).map_err(|msg| Error::parse(path, *n, format!("{key}: {msg}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn apply(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let num = || v.parse::<f64>().map_err(|e| e.to_string());
        let real = || num().map(T::lit);
        let deg = || num().map(|d| T::lit(d.to_radians()));
        let count = || v.parse::<usize>().map_err(|e| e.to_string());
        let flag = || v.parse::<bool>().map_err(|e| e.to_string());
        let reals = || -> std::result::Result<Vec<f64>, String> {
            v.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect()
        };
        let pair = || -> std::result::Result<(T, T), String> {
            match reals()?.as_slice() {
                &[a, b] => Ok((T::lit(a), T::lit(b))),
                _ => Err("expected two comma-separated values".into()),
            }
        };
        match key {
            "run.dataset" => {}
            "run.seed" => self.seed = v.parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
            "projection.width" => self.projection.width = count()?,
            "projection.height" => self.projection.height = count()?,
            "projection.fov_up_deg" => self.projection.fov_up = deg()?,
            "projection.fov_down_deg" => self.projection.fov_down = deg()?,
            "projection.horizontal_fov_deg" => self.projection.horizontal_fov = deg()?,
            "projection.channels" => {
                self.projection.channels = Channel::layout_for(count()?).ok_or("channel count must be 5 or 6")?
            }
            "projection.strict_fov" => self.projection.strict_fov = flag()?,
            "bev.x_min" => self.bev.x_min = real()?,
            "bev.x_max" => self.bev.x_max = real()?,
            "bev.y_min" => self.bev.y_min = real()?,
            "bev.y_max" => self.bev.y_max = real()?,
            "bev.resolution" => self.bev.resolution = real()?,
            "anchor.size" => match reals()?.as_slice() {
                &[l, w, h] => self.anchors.size = [T::lit(l), T::lit(w), T::lit(h)],
                _ => return Err("expected l,w,h".into()),
            },
            "anchor.yaws_deg" => self.anchors.yaws = reals()?.into_iter().map(|d| T::lit(d.to_radians())).collect(),
            "anchor.z_center" => self.anchors.z_center = real()?,
            "anchor.stride" => self.anchors.stride = count()?,
            "roi.grid" => self.roi.grid = count()?,
            "roi.channels" => self.roi.channels = count()?,
            "roi.margin" => self.roi.margin = real()?,
            "loss.alpha" => self.loss.alpha = real()?,
            "loss.beta" => self.loss.beta = real()?,
            "loss.focal_gamma" => self.loss.focal_gamma = real()?,
            "loss.focal_alpha" => self.loss.focal_alpha = real()?,
            "sampling.total" => self.sampling.total = count()?,
            "sampling.max_positive" => self.sampling.max_positive = count()?,
            "sampling.positive_iou" => self.sampling.positive_iou = real()?,
            "augment.flip_probability" => self.augment.flip_probability = num()?,
            "augment.rotation_deg" => {
                let (a, b) = pair()?;
                self.augment.rotation_range = (T::lit(a.as_f64().to_radians()), T::lit(b.as_f64().to_radians()));
            }
            "augment.scale" => self.augment.scale_range = pair()?,
            "augment.paste_attempts_per_class" => self.augment.paste_attempts_per_class = count()?,
            "eval.iou_threshold" => self.eval.iou_threshold = real()?,
            "eval.mode" => self.eval.mode = v.parse::<IouMode>().map_err(|e| e.to_string())?,
            "eval.recall_positions" => self.eval.recall_positions = count()?,
            "eval.buckets" => {
                let edges = reals()?;
                if edges.len() < 2 {
                    return Err("expected at least two bucket edges".into());
                }
                self.eval.buckets = edges.windows(2).map(|w| (T::lit(w[0]), T::lit(w[1]))).collect();
            }
            "eval.level1_min_points" => self.eval.level1_min_points = count()?,
            "eval.level2_min_points" => self.eval.level2_min_points = count()?,
            "pipeline.class" => self.pipeline.class = v.to_string(),
            "pipeline.score_threshold" => self.pipeline.score_threshold = real()?,
            "pipeline.pre_nms_top" => self.pipeline.pre_nms_top = count()?,
            "pipeline.proposal_nms_threshold" => self.pipeline.proposal_nms_threshold = real()?,
            "pipeline.max_proposals" => self.pipeline.max_proposals = count()?,
            "pipeline.final_nms_threshold" => self.pipeline.final_nms_threshold = real()?,
            "pipeline.anchor_pos_iou" => self.pipeline.anchor_pos_iou = real()?,
            "pipeline.anchor_neg_iou" => self.pipeline.anchor_neg_iou = real()?,
            "pipeline.workers" => self.pipeline.workers = count()?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Serialises every key; [`PipelineConfig::parse`] reads it back.
    pub fn to_text(&self) -> String {
        let deg = |v: T| v.as_f64().to_degrees();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(
            "run.dataset",
            match self.dataset {
                Dataset::Kitti => "kitti".into(),
                Dataset::Waymo => "waymo".into(),
            },
        );
        kv("run.seed", self.seed.to_string());
        let p = &self.projection;
        kv("projection.width", p.width.to_string());
        kv("projection.height", p.height.to_string());
        kv("projection.fov_up_deg", deg(p.fov_up).to_string());
        kv("projection.fov_down_deg", deg(p.fov_down).to_string());
        kv("projection.horizontal_fov_deg", deg(p.horizontal_fov).to_string());
        kv("projection.channels", p.channels.len().to_string());
        kv("projection.strict_fov", p.strict_fov.to_string());
        let b = &self.bev;
        kv("bev.x_min", b.x_min.to_string());
        kv("bev.x_max", b.x_max.to_string());
        kv("bev.y_min", b.y_min.to_string());
        kv("bev.y_max", b.y_max.to_string());
        kv("bev.resolution", b.resolution.to_string());
        let a = &self.anchors;
        kv("anchor.size", join(&a.size.map(|v| v.as_f64())));
        kv("anchor.yaws_deg", join(&a.yaws.iter().map(|&y| deg(y)).collect::<Vec<_>>()));
        kv("anchor.z_center", a.z_center.to_string());
        kv("anchor.stride", a.stride.to_string());
        kv("roi.grid", self.roi.grid.to_string());
        kv("roi.channels", self.roi.channels.to_string());
        kv("roi.margin", self.roi.margin.to_string());
        let l = &self.loss;
        kv("loss.alpha", l.alpha.to_string());
        kv("loss.beta", l.beta.to_string());
        kv("loss.focal_gamma", l.focal_gamma.to_string());
        kv("loss.focal_alpha", l.focal_alpha.to_string());
        kv("sampling.total", self.sampling.total.to_string());
        kv("sampling.max_positive", self.sampling.max_positive.to_string());
        kv("sampling.positive_iou", self.sampling.positive_iou.to_string());
        let g = &self.augment;
        kv("augment.flip_probability", g.flip_probability.to_string());
        kv("augment.rotation_deg", join(&[deg(g.rotation_range.0), deg(g.rotation_range.1)]));
        kv("augment.scale", join(&[g.scale_range.0.as_f64(), g.scale_range.1.as_f64()]));
        kv("augment.paste_attempts_per_class", g.paste_attempts_per_class.to_string());
        let e = &self.eval;
        kv("eval.iou_threshold", e.iou_threshold.to_string());
        kv(
            "eval.mode",
            match e.mode {
                IouMode::Bev => "bev".into(),
                IouMode::ThreeD => "3d".into(),
            },
        );
        kv("eval.recall_positions", e.recall_positions.to_string());
        let mut edges: Vec<f64> = e.buckets.iter().map(|b| b.0.as_f64()).collect();
        if let Some(last) = e.buckets.last() {
            edges.push(last.1.as_f64());
        }
        kv("eval.buckets", join(&edges));
        kv("eval.level1_min_points", e.level1_min_points.to_string());
        kv("eval.level2_min_points", e.level2_min_points.to_string());
        let q = &self.pipeline;
        kv("pipeline.class", q.class.clone());
        kv("pipeline.score_threshold", q.score_threshold.to_string());
        kv("pipeline.pre_nms_top", q.pre_nms_top.to_string());
        kv("pipeline.proposal_nms_threshold", q.proposal_nms_threshold.to_string());
        kv("pipeline.max_proposals", q.max_proposals.to_string());
        kv("pipeline.final_nms_threshold", q.final_nms_threshold.to_string());
        kv("pipeline.anchor_pos_iou", q.anchor_pos_iou.to_string());
        kv("pipeline.anchor_neg_iou", q.anchor_neg_iou.to_string());
        kv("pipeline.workers", q.workers.to_string());
        s
    }
}
