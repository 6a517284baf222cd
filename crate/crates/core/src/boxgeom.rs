// SPDX-License-Identifier: Apache-2.0

//! Oriented 3D boxes, rotated-rectangle overlap and greedy suppression.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};

/// Polygon areas below this (m^2) count as empty.
pub const AREA_EPSILON: f64 = 1e-9;

/// Oriented box: geometric center, dimensions (length along heading), yaw about +z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box3D<T> {
    pub cx: T,
    pub cy: T,
    pub cz: T,
    pub length: T,
    pub width: T,
    pub height: T,
    pub yaw: T,
}

impl<T: Real> Box3D<T> {
    /// Builds a box with yaw wrapped into `(-pi, pi]`.
    pub fn new(center: [T; 3], dims: [T; 3], yaw: T) -> Self {
        Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            length: dims[0],
            width: dims[1],
            height: dims[2],
            yaw: wrap_angle(yaw),
        }
    }

    /// Like [`Box3D::new`] but rejects non-positive or non-finite parameters.
    pub fn try_new(center: [T; 3], dims: [T; 3], yaw: T) -> Result<Self> {
        let b = Self::new(center, dims, yaw);
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite parameter in {self:?}")));
        }
        if !(self.length > T::zero() && self.width > T::zero() && self.height > T::zero()) {
            return Err(Error::InvalidBox(format!("non-positive dimension in {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn center(&self) -> [T; 3] {
        [self.cx, self.cy, self.cz]
    }

    #[inline]
    pub fn dims(&self) -> [T; 3] {
        [self.length, self.width, self.height]
    }

    pub fn to_array(&self) -> [T; 7] {
        [
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ]
    }

    pub fn volume(&self) -> T {
        self.length * self.width * self.height
    }

    pub fn bev_area(&self) -> T {
        self.length * self.width
    }

    pub fn z_min(&self) -> T {
        self.cz - self.height * T::lit(0.5)
    }

    pub fn z_max(&self) -> T {
        self.cz + self.height * T::lit(0.5)
    }

    /// Planar distance of the center from the sensor origin.
    pub fn planar_distance(&self) -> T {
        (self.cx * self.cx + self.cy * self.cy).sqrt()
    }

    /// Same box with yaw turned by pi.
    pub fn flipped(&self) -> Self {
        Self::new(self.center(), self.dims(), self.yaw + T::PI())
    }

    /// Expresses a world point in the box frame (x along length, y along width).
    pub fn to_local(&self, p: [T; 3]) -> [T; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.cx;
        let dy = p[1] - self.cy;
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.cz]
    }

    pub fn to_world(&self, p: [T; 3]) -> [T; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            c * p[0] - s * p[1] + self.cx,
            s * p[0] + c * p[1] + self.cy,
            p[2] + self.cz,
        ]
    }

    /// Inside test with an outward tolerance on every face.
    pub fn contains(&self, p: [T; 3], tol: T) -> bool {
        let l = self.to_local(p);
        let half = T::lit(0.5);
        l[0].abs() <= self.length * half + tol
            && l[1].abs() <= self.width * half + tol
            && l[2].abs() <= self.height * half + tol
    }

    /// Radius of the planar circle enclosing the footprint.
    fn bev_radius(&self) -> T {
        (self.length * self.length + self.width * self.width).sqrt() * T::lit(0.5)
    }

    /// Eight corners: the four BEV corners at the bottom face, then the top face.
    pub fn corners_3d(&self) -> [[T; 3]; 8] {
        let bev = corners_bev(self);
        let (lo, hi) = (self.z_min(), self.z_max());
        let mut out = [[T::zero(); 3]; 8];
        for (i, c) in bev.iter().enumerate() {
            out[i] = [c[0], c[1], lo];
            out[i + 4] = [c[0], c[1], hi];
        }
        out
    }

    pub fn cast<D: Real>(&self) -> Box3D<D> {
        let c = |v: T| D::lit(v.as_f64());
        Box3D {
            cx: c(self.cx),
            cy: c(self.cy),
            cz: c(self.cz),
            length: c(self.length),
            width: c(self.width),
            height: c(self.height),
            yaw: c(self.yaw),
        }
    }
}

/// A scored, labelled box.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection<T> {
    pub bbox: Box3D<T>,
    pub score: T,
    pub class: String,
}

impl<T: Real> Detection<T> {
    pub fn new(bbox: Box3D<T>, score: T, class: impl Into<String>) -> Self {
        Self {
            bbox,
            score,
            class: class.into(),
        }
    }
}

/// `class score cx cy cz l w h yaw`
impl<T: Real> fmt::Display for Detection<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.bbox;
        write!(
            f,
            "{} {} {} {} {} {} {} {} {}",
            self.class, self.score, b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw
        )
    }
}

impl<T: Real> FromStr for Detection<T> {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut it = s.split_whitespace();
        let class = it.next().ok_or("missing class")?.to_string();
        let mut vals = [0f64; 8];
        for (k, slot) in vals.iter_mut().enumerate() {
            let tok = it.next().ok_or_else(|| format!("expected 9 fields, got {}", k + 1))?;
            *slot = tok
                .parse::<f64>()
                .map_err(|e| format!("field {}: `{tok}`: {e}", k + 2))?;
        }
        let l = T::lit;
        let bbox = Box3D::try_new(
            [l(vals[1]), l(vals[2]), l(vals[3])],
            [l(vals[4]), l(vals[5]), l(vals[6])],
            l(vals[7]),
        )
        .map_err(|e| e.to_string())?;
        Ok(Detection::new(bbox, l(vals[0]), class))
    }
}

/// Footprint corners in counter-clockwise order.
pub fn corners_bev<T: Real>(b: &Box3D<T>) -> [[T; 2]; 4] {
    let half = T::lit(0.5);
    let (hl, hw) = (b.length * half, b.width * half);
    let (s, c) = b.yaw.sin_cos();
    let local = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
    local.map(|[x, y]| [c * x - s * y + b.cx, s * x + c * y + b.cy])
}

fn cross<T: Real>(o: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area<T: Real>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc += a[0] * b[1] - a[1] * b[0];
    }
    acc * T::lit(0.5)
}

/// Sutherland-Hodgman clip of `subject` against a convex counter-clockwise `clip`.
pub fn clip_convex<T: Real>(subject: &[[T; 2]], clip: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut output: Vec<[T; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let d_cur = cross(a, b, cur);
            let d_prev = cross(a, b, prev);
            let cur_in = d_cur >= T::zero();
            let prev_in = d_prev >= T::zero();
            if cur_in != prev_in {
                let t = d_prev / (d_prev - d_cur);
                output.push([
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ]);
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

/// Area of the overlap between two box footprints.
pub fn bev_intersection_area<T: Real>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    let dx = a.cx - b.cx;
    let dy = a.cy - b.cy;
    let reach = a.bev_radius() + b.bev_radius();
    if dx * dx + dy * dy > reach * reach {
        return T::zero();
    }
    let inter = polygon_area(&clip_convex(&corners_bev(a), &corners_bev(b)));
    if inter < T::lit(AREA_EPSILON) {
        T::zero()
    } else {
        inter
    }
}

fn degenerate<T: Real>(b: &Box3D<T>) -> bool {
    !(b.bev_area() > T::lit(AREA_EPSILON)) || !b.bev_area().is_finite()
}

/// Rotated bird's-eye-view IoU.
pub fn iou_bev<T: Real>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    if degenerate(a) || degenerate(b) {
        log::debug!("iou_bev: degenerate box, returning 0");
        return T::zero();
    }
    let inter = bev_intersection_area(a, b);
    let union = a.bev_area() + b.bev_area() - inter;
    (inter / union).max(T::zero()).min(T::one())
}

/// Rotated 3D IoU: footprint overlap times vertical overlap.
pub fn iou_3d<T: Real>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    if degenerate(a) || degenerate(b) || !(a.height > T::zero() && b.height > T::zero()) {
        log::debug!("iou_3d: degenerate box, returning 0");
        return T::zero();
    }
    let overlap_h = (a.z_max().min(b.z_max()) - a.z_min().max(b.z_min())).max(T::zero());
    if overlap_h <= T::zero() {
        return T::zero();
    }
    let inter = bev_intersection_area(a, b) * overlap_h;
    let union = a.volume() + b.volume() - inter;
    (inter / union).max(T::zero()).min(T::one())
}

/// Overlap measure used by matching and suppression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IouMode {
    Bev,
    #[default]
    ThreeD,
}

impl IouMode {
    pub fn iou<T: Real>(self, a: &Box3D<T>, b: &Box3D<T>) -> T {
        match self {
            IouMode::Bev => iou_bev(a, b),
            IouMode::ThreeD => iou_3d(a, b),
        }
    }
}

impl FromStr for IouMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bev" => Ok(IouMode::Bev),
            "3d" => Ok(IouMode::ThreeD),
            other => Err(format!("unknown IoU mode `{other}` (expected bev or 3d)")),
        }
    }
}

/// Descending score order, lower index first on ties.
pub(crate) fn score_order<T: Real>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    order
}

/// Greedy non-maximum suppression. Returns kept indices in ascending order.
pub fn nms<T: Real>(dets: &[Detection<T>], iou_threshold: T, mode: IouMode) -> Vec<usize> {
    let scores: Vec<T> = dets.iter().map(|d| d.score).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(&scores) {
        let b = &dets[i].bbox;
        if kept
            .iter()
            .all(|&k| mode.iou(&dets[k].bbox, b) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}
