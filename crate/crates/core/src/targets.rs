// SPDX-License-Identifier: Apache-2.0

//! Anchors, anchor/ground-truth assignment, box residual coding and the
//! arithmetic of the region-proposal and refinement losses.

use rand::seq::index::sample;
use rand::Rng;

use crate::boxgeom::{iou_3d, iou_bev, Box3D};
use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};
use crate::viewtransfer::BevSpec;

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPSILON: f64 = 1e-7;

/// Anchor prior tiled over the (downsampled) BEV grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSpec<T> {
    /// `(l, w, h)` in meters.
    pub size: [T; 3],
    pub yaws: Vec<T>,
    pub z_center: T,
    /// BEV cells per anchor position along each axis.
    pub stride: usize,
}

impl<T: Real> AnchorSpec<T> {
    /// Car prior: 3.9 x 1.6 x 1.56 m, yaws {0, pi/2}, bottom at -1.78 m.
    pub fn kitti_car() -> Self {
        Self {
            size: [T::lit(3.9), T::lit(1.6), T::lit(1.56)],
            yaws: vec![T::zero(), T::FRAC_PI_2()],
            z_center: T::lit(-1.0),
            stride: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::InvalidConfig("anchor dimensions must be positive".into()));
        }
        if self.yaws.is_empty() {
            return Err(Error::InvalidConfig("anchor yaw set is empty".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("anchor stride must be positive".into()));
        }
        Ok(())
    }
}

/// One anchor per (downsampled cell, yaw), yaw varying fastest, then y, then x.
pub fn generate_anchors<T: Real>(bev: &BevSpec<T>, spec: &AnchorSpec<T>) -> Result<Vec<Box3D<T>>> {
    bev.validate()?;
    spec.validate()?;
    let (nx, ny) = bev.grid_size();
    let (ax, ay) = (nx.div_ceil(spec.stride), ny.div_ceil(spec.stride));
    let step = T::from_usize_lossy(spec.stride) * bev.resolution;
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(ax * ay * spec.yaws.len());
    for i in 0..ax {
        let x = bev.x_min + (T::from_usize_lossy(i) + half) * step;
        for j in 0..ay {
            let y = bev.y_min + (T::from_usize_lossy(j) + half) * step;
            for &yaw in &spec.yaws {
                out.push(Box3D::new([x, y, spec.z_center], spec.size, yaw));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorLabel {
    Positive(usize),
    Negative,
    Ignore,
}

/// BEV-IoU assignment. Each ground truth also claims its best anchor.
pub fn match_anchors<T: Real>(
    anchors: &[Box3D<T>],
    gt: &[Box3D<T>],
    pos_thr: T,
    neg_thr: T,
) -> Result<Vec<AnchorLabel>> {
    if !(T::zero() <= neg_thr && neg_thr <= pos_thr && pos_thr <= T::one()) {
        return Err(Error::InvalidConfig(format!(
            "matching thresholds need 0 <= neg ({neg_thr}) <= pos ({pos_thr}) <= 1"
        )));
    }
    let mut best: Vec<(T, Option<usize>)> = vec![(T::zero(), None); anchors.len()];
    let mut gt_best: Vec<(T, Option<usize>)> = vec![(T::zero(), None); gt.len()];
    for (a, anchor) in anchors.iter().enumerate() {
        for (g, gbox) in gt.iter().enumerate() {
            let iou = iou_bev(anchor, gbox);
            if iou > best[a].0 {
                best[a] = (iou, Some(g));
            }
            if iou > gt_best[g].0 {
                gt_best[g] = (iou, Some(a));
            }
        }
    }
    let mut labels: Vec<AnchorLabel> = best
        .iter()
        .map(|&(iou, g)| match g {
            Some(g) if iou >= pos_thr => AnchorLabel::Positive(g),
            _ if iou < neg_thr => AnchorLabel::Negative,
            _ => AnchorLabel::Ignore,
        })
        .collect();
    for (g, &(_, a)) in gt_best.iter().enumerate() {
        if let Some(a) = a {
            if !matches!(labels[a], AnchorLabel::Positive(_)) {
                labels[a] = AnchorLabel::Positive(g);
            }
        }
    }
    Ok(labels)
}

/// Box residual relative to an anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionResidual<T> {
    pub dx: T,
    pub dy: T,
    pub dz: T,
    pub dl: T,
    pub dw: T,
    pub dh: T,
    pub dtheta: T,
}

impl<T: Real> RegressionResidual<T> {
    pub fn zero() -> Self {
        Self::from_array([T::zero(); 7])
    }

    pub fn to_array(&self) -> [T; 7] {
        [self.dx, self.dy, self.dz, self.dl, self.dw, self.dh, self.dtheta]
    }

    pub fn from_array(a: [T; 7]) -> Self {
        Self {
            dx: a[0],
            dy: a[1],
            dz: a[2],
            dl: a[3],
            dw: a[4],
            dh: a[5],
            dtheta: a[6],
        }
    }
}

/// Encodes `gt` against `anchor`: diagonal-normalised offsets, log size ratios,
/// `sin` of the heading difference.
pub fn encode_box<T: Real>(gt: &Box3D<T>, anchor: &Box3D<T>) -> Result<RegressionResidual<T>> {
    gt.validate()?;
    anchor.validate()?;
    let diag = (anchor.length * anchor.length + anchor.width * anchor.width).sqrt();
    Ok(RegressionResidual {
        dx: (gt.cx - anchor.cx) / diag,
        dy: (gt.cy - anchor.cy) / diag,
        dz: (gt.cz - anchor.cz) / anchor.height,
        dl: (gt.length / anchor.length).ln(),
        dw: (gt.width / anchor.width).ln(),
        dh: (gt.height / anchor.height).ln(),
        dtheta: (gt.yaw - anchor.yaw).sin(),
    })
}

/// Direction class: 1 when the wrapped heading difference lies in `[0, pi)`.
pub fn direction_targets<T: Real>(gt_yaw: T, anchor_yaw: T) -> u8 {
    let d = wrap_angle(gt_yaw - anchor_yaw);
    u8::from(d >= T::zero() && d < T::PI())
}

/// Heading residual and direction bit that [`decode_box`] maps back to
/// `gt_yaw` for any heading difference: the difference is shifted by pi into
/// `[-pi/2, pi/2]` before taking `sin`.
pub fn folded_heading_residual<T: Real>(gt_yaw: T, anchor_yaw: T) -> (T, u8) {
    let d = wrap_angle(gt_yaw - anchor_yaw);
    let half = T::FRAC_PI_2();
    let folded = if d > half {
        d - T::PI()
    } else if d < -half {
        d + T::PI()
    } else {
        d
    };
    (folded.sin(), direction_targets(gt_yaw, anchor_yaw))
}

/// [`encode_box`] with the heading replaced by [`folded_heading_residual`].
pub fn encode_box_folded<T: Real>(gt: &Box3D<T>, anchor: &Box3D<T>) -> Result<(RegressionResidual<T>, u8)> {
    let mut r = encode_box(gt, anchor)?;
    let (s, bit) = folded_heading_residual(gt.yaw, anchor.yaw);
    r.dtheta = s;
    Ok((r, bit))
}

/// Inverse of [`encode_box`]; the direction bit picks the half-circle.
pub fn decode_box<T: Real>(r: &RegressionResidual<T>, anchor: &Box3D<T>, dir_bit: u8) -> Box3D<T> {
    let diag = (anchor.length * anchor.length + anchor.width * anchor.width).sqrt();
    let mut s = r.dtheta;
    if s.abs() > T::one() {
        log::warn!("decode_box: |dtheta| = {} > 1, clamping", s.abs());
        s = s.max(-T::one()).min(T::one());
    }
    let mut yaw = anchor.yaw + s.asin();
    if direction_targets(yaw, anchor.yaw) != dir_bit {
        yaw += T::PI();
    }
    Box3D::new(
        [
            anchor.cx + r.dx * diag,
            anchor.cy + r.dy * diag,
            anchor.cz + r.dz * anchor.height,
        ],
        [
            anchor.length * r.dl.exp(),
            anchor.width * r.dw.exp(),
            anchor.height * r.dh.exp(),
        ],
        yaw,
    )
}

/// Scalar loss weights: rpn = cls + alpha * reg + beta * dir.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights<T> {
    pub alpha: T,
    pub beta: T,
    pub focal_gamma: T,
    pub focal_alpha: T,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(2.0),
            beta: T::lit(0.2),
            focal_gamma: T::lit(2.0),
            focal_alpha: T::lit(0.25),
        }
    }
}

fn clamp_prob<T: Real>(p: T) -> T {
    let eps = T::lit(PROB_EPSILON);
    p.max(eps).min(T::one() - eps)
}

/// Binary focal loss `-alpha_t (1 - p_t)^gamma ln(p_t)`.
pub fn focal_loss<T: Real>(p: T, y: u8, gamma: T, alpha: T) -> T {
    let p = clamp_prob(p);
    let (pt, at) = if y == 1 {
        (p, alpha)
    } else {
        (T::one() - p, T::one() - alpha)
    };
    -at * (T::one() - pt).powf(gamma) * pt.ln()
}

/// Binary cross-entropy against a soft target in `[0, 1]`.
pub fn binary_cross_entropy<T: Real>(p: T, target: T) -> T {
    let p = clamp_prob(p);
    -(target * p.ln() + (T::one() - target) * (T::one() - p).ln())
}

pub fn smooth_l1<T: Real>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::lit(0.5) * x * x
    } else {
        a - T::lit(0.5)
    }
}

/// Sum of smooth-L1 over the seven residual components.
pub fn residual_loss<T: Real>(pred: &RegressionResidual<T>, target: &RegressionResidual<T>) -> T {
    pred.to_array()
        .iter()
        .zip(target.to_array().iter())
        .fold(T::zero(), |acc, (&p, &t)| acc + smooth_l1(p - t))
}

fn mean_corner_distance<T: Real>(a: &[[T; 3]; 8], b: &[[T; 3]; 8]) -> T {
    let sum = a.iter().zip(b.iter()).fold(T::zero(), |acc, (p, q)| {
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        acc + smooth_l1(d)
    });
    sum / T::lit(8.0)
}

/// Mean smooth-L1 corner distance, minimised over the heading flip of `gt`.
pub fn corner_loss<T: Real>(pred: &Box3D<T>, gt: &Box3D<T>) -> T {
    let pc = pred.corners_3d();
    let direct = mean_corner_distance(&pc, &gt.corners_3d());
    let flipped = mean_corner_distance(&pc, &gt.flipped().corners_3d());
    direct.min(flipped)
}

/// Soft confidence target `clamp(2 * iou - 0.5, 0, 1)`.
pub fn rcnn_confidence_target<T: Real>(iou3d: T) -> T {
    (T::lit(2.0) * iou3d - T::lit(0.5)).max(T::zero()).min(T::one())
}

pub fn rpn_loss<T: Real>(cls: T, reg: T, dir: T, w: &LossWeights<T>) -> T {
    cls + w.alpha * reg + w.beta * dir
}

/// Refinement loss: unweighted sum of score, regression and corner terms.
pub fn rcnn_loss<T: Real>(score: T, reg: T, corner: T) -> T {
    score + reg + corner
}

pub fn total_loss<T: Real>(rpn: T, rcnn: T) -> T {
    rpn + rcnn
}

/// Sampling rule for refinement training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalSampling<T> {
    pub total: usize,
    pub max_positive: usize,
    pub positive_iou: T,
}

impl<T: Real> Default for ProposalSampling<T> {
    fn default() -> Self {
        Self {
            total: 128,
            max_positive: 64,
            positive_iou: T::lit(0.55),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledProposal<T> {
    pub index: usize,
    pub positive: bool,
    /// Best 3D IoU with any ground truth and which one.
    pub iou: T,
    pub gt: Option<usize>,
}

/// Draws up to `total` proposals, at most `max_positive` of them positive,
/// filling the rest with negatives. Positives come first, each group in
/// ascending proposal index.
pub fn sample_proposals<T: Real, R: Rng + ?Sized>(
    proposals: &[Box3D<T>],
    gts: &[Box3D<T>],
    rng: &mut R,
    cfg: &ProposalSampling<T>,
) -> Result<Vec<SampledProposal<T>>> {
    if proposals.is_empty() {
        return Err(Error::NoProposals);
    }
    let scored: Vec<(T, Option<usize>)> = proposals
        .iter()
        .map(|p| {
            gts.iter()
                .enumerate()
                .map(|(g, b)| (iou_3d(p, b), Some(g)))
                .fold((T::zero(), None), |acc, x| if x.0 > acc.0 { x } else { acc })
        })
        .collect();
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..proposals.len()).partition(|&i| scored[i].0 >= cfg.positive_iou);

    let n_pos = pos.len().min(cfg.max_positive).min(cfg.total);
    let n_neg = (cfg.total - n_pos).min(neg.len());
    let mut pick = |pool: &[usize], n: usize| -> Vec<usize> {
        let mut chosen: Vec<usize> = sample(rng, pool.len(), n).into_iter().map(|k| pool[k]).collect();
        chosen.sort_unstable();
        chosen
    };
    let chosen_pos = pick(&pos, n_pos);
    let chosen_neg = pick(&neg, n_neg);
    Ok(chosen_pos
        .into_iter()
        .map(|i| (i, true))
        .chain(chosen_neg.into_iter().map(|i| (i, false)))
        .map(|(index, positive)| SampledProposal {
            index,
            positive,
            iou: scored[index].0,
            gt: scored[index].1,
        })
        .collect())
}
