// SPDX-License-Identifier: Apache-2.0

//! Spherical projection between point clouds and range images.
//!
//! A point `(x, y, z)` with range `r` lands at the continuous pixel
//!
//! ```text
//! u = 1/2 * (1 - atan2(y, x) / (hfov / 2)) * w
//! v = (1 - (asin(z / r) + fov_down) / fov) * h
//! ```
//!
//! which for a full-ring sensor (`hfov = 2 pi`) is the usual
//! `1/2 * (1 - atan2(y, x) / pi) * w` column mapping. Continuous coordinates
//! are floored and clamped into the image. When several points share a pixel
//! the nearest one is written and the others are recorded as occluded; every
//! projected point keeps its pixel coordinate in the [`PixelIndexMap`] so that
//! per-pixel features can later be gathered back onto points.

use ndarray::{Array2, Array3, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value written to every channel of a pixel with no return.
pub const INVALID_SENTINEL: f64 = -1.0;

/// A single LIDAR return in the sensor frame (x forward, y left, z up).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub intensity: T,
    pub elongation: Option<T>,
}

impl<T: Real> LidarPoint<T> {
    pub fn new(x: T, y: T, z: T, intensity: T) -> Self {
        Self {
            x,
            y,
            z,
            intensity,
            elongation: None,
        }
    }

    pub fn with_elongation(mut self, elongation: T) -> Self {
        self.elongation = Some(elongation);
        self
    }

    #[inline]
    pub fn position(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn range(&self) -> T {
        range_of(self)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Euclidean distance of a return from the sensor origin.
#[inline]
pub fn range_of<T: Real>(p: &LidarPoint<T>) -> T {
    (p.x * p.x + p.y * p.y + p.z * p.z).sqrt()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud<T> {
    pub points: Vec<LidarPoint<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<LidarPoint<T>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LidarPoint<T>> {
        self.points.iter()
    }

    pub fn positions(&self) -> Vec<[T; 3]> {
        self.points.iter().map(LidarPoint::position).collect()
    }
}

impl<T: Real> FromIterator<LidarPoint<T>> for PointCloud<T> {
    fn from_iter<I: IntoIterator<Item = LidarPoint<T>>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Per-pixel attribute stored in a range image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Range,
    X,
    Y,
    Z,
    Intensity,
    Elongation,
}

impl Channel {
    pub const KITTI: [Channel; 5] = [
        Channel::Range,
        Channel::X,
        Channel::Y,
        Channel::Z,
        Channel::Intensity,
    ];
    pub const WAYMO: [Channel; 6] = [
        Channel::Range,
        Channel::X,
        Channel::Y,
        Channel::Z,
        Channel::Intensity,
        Channel::Elongation,
    ];

    /// Channel list implied by a channel count (5: KITTI layout, 6: Waymo layout).
    pub fn layout_for(count: usize) -> Option<Vec<Channel>> {
        match count {
            5 => Some(Self::KITTI.to_vec()),
            6 => Some(Self::WAYMO.to_vec()),
            _ => None,
        }
    }
}

/// Range-image geometry. Angles in radians; `fov_down` is a positive magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSpec<T> {
    pub width: usize,
    pub height: usize,
    pub fov_up: T,
    pub fov_down: T,
    /// Horizontal sector covered by the image columns, centred on +x.
    pub horizontal_fov: T,
    pub channels: Vec<Channel>,
    /// Drop points above/below the vertical field of view instead of clamping.
    pub strict_fov: bool,
}

impl<T: Real> ProjectionSpec<T> {
    /// KITTI front view: 48 x 512 over the labelled 90 degree sector.
    pub fn kitti() -> Self {
        Self {
            width: 512,
            height: 48,
            fov_up: T::lit(3.0f64.to_radians()),
            fov_down: T::lit(25.0f64.to_radians()),
            horizontal_fov: T::FRAC_PI_2(),
            channels: Channel::KITTI.to_vec(),
            strict_fov: false,
        }
    }

    /// Waymo top LIDAR native image: 64 x 2650 over the full ring.
    pub fn waymo() -> Self {
        Self {
            width: 2650,
            height: 64,
            fov_up: T::lit(2.4f64.to_radians()),
            fov_down: T::lit(17.6f64.to_radians()),
            horizontal_fov: T::PI() + T::PI(),
            channels: Channel::WAYMO.to_vec(),
            strict_fov: false,
        }
    }

    /// Full 360 degree image with the given size and vertical field of view.
    pub fn full_ring(width: usize, height: usize, fov_up: T, fov_down: T) -> Self {
        Self {
            width,
            height,
            fov_up,
            fov_down,
            horizontal_fov: T::PI() + T::PI(),
            channels: Channel::KITTI.to_vec(),
            strict_fov: false,
        }
    }

    /// Total vertical field of view.
    #[inline]
    pub fn fov(&self) -> T {
        self.fov_up + self.fov_down
    }

    pub fn is_full_ring(&self) -> bool {
        self.horizontal_fov >= T::PI() + T::PI()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig(format!(
                "range image size {}x{} must be positive",
                self.height, self.width
            )));
        }
        if !(self.fov() > T::zero()) {
            return Err(Error::InvalidConfig(
                "vertical field of view must be positive".into(),
            ));
        }
        let two_pi = T::PI() + T::PI();
        if !(self.horizontal_fov > T::zero() && self.horizontal_fov <= two_pi) {
            return Err(Error::InvalidConfig(
                "horizontal field of view must lie in (0, 2pi]".into(),
            ));
        }
        if !self.channels.contains(&Channel::Range) {
            return Err(Error::InvalidConfig("channel list lacks range".into()));
        }
        Ok(())
    }
}

/// Continuous pixel coordinate `(u, v)` of a point, before discretization.
pub fn project_point<T: Real>(p: &LidarPoint<T>, spec: &ProjectionSpec<T>) -> Result<(T, T)> {
    let r = range_of(p);
    if !(r > T::zero()) {
        return Err(Error::ZeroRange);
    }
    let half = T::lit(0.5);
    let azimuth = p.y.atan2(p.x);
    let u = half * (T::one() - azimuth / (spec.horizontal_fov * half)) * T::from_usize_lossy(spec.width);
    let elevation = (p.z / r).max(-T::one()).min(T::one()).asin();
    let v = (T::one() - (elevation + spec.fov_down) / spec.fov()) * T::from_usize_lossy(spec.height);
    Ok((u, v))
}

/// Floors a continuous coordinate and clamps it into `[0, n - 1]`.
#[inline]
fn discretize<T: Real>(c: T, n: usize) -> usize {
    let f = c.floor();
    if !(f > T::zero()) {
        0
    } else {
        f.to_usize().unwrap_or(usize::MAX).min(n - 1)
    }
}

/// Dense `height x width x C` image plus a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage<T> {
    channels: Vec<Channel>,
    data: Array3<T>,
    valid: Array2<bool>,
}

impl<T: Real> RangeImage<T> {
    /// An image with every pixel invalid.
    pub fn empty(height: usize, width: usize, channels: Vec<Channel>) -> Self {
        let c = channels.len();
        Self {
            channels,
            data: Array3::from_elem((height, width, c), T::lit(INVALID_SENTINEL)),
            valid: Array2::from_elem((height, width), false),
        }
    }

    /// Assembles an image from raw parts, resetting invalid pixels to the sentinel.
    pub fn from_parts(channels: Vec<Channel>, mut data: Array3<T>, valid: Array2<bool>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if c != channels.len() || valid.dim() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "data {h}x{w}x{c}, mask {:?}, {} channels",
                valid.dim(),
                channels.len()
            )));
        }
        for ((v, u), &ok) in valid.indexed_iter() {
            if !ok {
                data.slice_mut(ndarray::s![v, u, ..]).fill(T::lit(INVALID_SENTINEL));
            }
        }
        Ok(Self {
            channels,
            data,
            valid,
        })
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_index(&self, ch: Channel) -> Option<usize> {
        self.channels.iter().position(|&c| c == ch)
    }

    pub fn data(&self) -> &Array3<T> {
        &self.data
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, v: usize, u: usize) -> bool {
        self.valid[[v, u]]
    }

    pub fn pixel(&self, v: usize, u: usize) -> ArrayView1<'_, T> {
        self.data.slice(ndarray::s![v, u, ..])
    }

    #[inline]
    pub fn get(&self, v: usize, u: usize, ch: Channel) -> Option<T> {
        self.channel_index(ch).map(|c| self.data[[v, u, c]])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Range stored at a valid pixel, `None` when the pixel holds no return.
    pub fn range_at(&self, v: usize, u: usize) -> Option<T> {
        if self.valid[[v, u]] {
            self.get(v, u, Channel::Range)
        } else {
            None
        }
    }

    /// Writes a return into a pixel; the range channel is recomputed from x/y/z.
    pub fn set_point(&mut self, v: usize, u: usize, p: &LidarPoint<T>) {
        for (c, ch) in self.channels.iter().enumerate() {
            self.data[[v, u, c]] = match ch {
                Channel::Range => range_of(p),
                Channel::X => p.x,
                Channel::Y => p.y,
                Channel::Z => p.z,
                Channel::Intensity => p.intensity,
                Channel::Elongation => p.elongation.unwrap_or_else(T::zero),
            };
        }
        self.valid[[v, u]] = true;
    }

    pub fn clear_pixel(&mut self, v: usize, u: usize) {
        self.data
            .slice_mut(ndarray::s![v, u, ..])
            .fill(T::lit(INVALID_SENTINEL));
        self.valid[[v, u]] = false;
    }

    /// Reads the return stored at a pixel straight from the coordinate channels.
    pub fn point_at(&self, v: usize, u: usize) -> Option<LidarPoint<T>> {
        if !self.valid[[v, u]] {
            return None;
        }
        let read = |ch| self.get(v, u, ch);
        Some(LidarPoint {
            x: read(Channel::X)?,
            y: read(Channel::Y)?,
            z: read(Channel::Z)?,
            intensity: read(Channel::Intensity).unwrap_or_else(T::zero),
            elongation: read(Channel::Elongation),
        })
    }

    /// Checks `|range - |(x, y, z)|| <= tol` at every valid pixel and the
    /// sentinel at every invalid one.
    pub fn check_consistency(&self, tol: T) -> Result<()> {
        let sentinel = T::lit(INVALID_SENTINEL);
        for v in 0..self.height() {
            for u in 0..self.width() {
                if let Some(p) = self.point_at(v, u) {
                    let r = self.get(v, u, Channel::Range).unwrap_or(sentinel);
                    if (r - range_of(&p)).abs() > tol {
                        return Err(Error::Invariant(format!(
                            "pixel ({v}, {u}): range channel {r} disagrees with coordinates"
                        )));
                    }
                } else if self.pixel(v, u).iter().any(|&x| x != sentinel) {
                    return Err(Error::Invariant(format!(
                        "invalid pixel ({v}, {u}) does not carry the sentinel"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fate of an input point during projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointStatus {
    /// Written into its pixel.
    Kept,
    /// Lost its pixel to a nearer return; pixel coordinate still recorded.
    Occluded,
    /// Outside the image sector (or zero range); has no pixel.
    OutOfView,
}

/// Correspondence between input points and range-image pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelIndexMap {
    height: usize,
    width: usize,
    /// Per point `(u, v)`, absent for out-of-view points.
    pixels: Vec<Option<(u32, u32)>>,
    status: Vec<PointStatus>,
    /// Per pixel (row-major) index of the point written there.
    winners: Vec<Option<u32>>,
}

impl PixelIndexMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_points(&self) -> usize {
        self.pixels.len()
    }

    /// Pixel `(u, v)` of point `i`, if it was projected.
    pub fn pixel_of(&self, i: usize) -> Option<(usize, usize)> {
        self.pixels[i].map(|(u, v)| (u as usize, v as usize))
    }

    pub fn status(&self, i: usize) -> PointStatus {
        self.status[i]
    }

    /// Whether point `i` is absent from the image.
    pub fn is_dropped(&self, i: usize) -> bool {
        self.status[i] != PointStatus::Kept
    }

    /// Index of the point stored at pixel `(v, u)`.
    pub fn winner(&self, v: usize, u: usize) -> Option<usize> {
        self.winners[v * self.width + u].map(|i| i as usize)
    }

    pub fn count(&self, status: PointStatus) -> usize {
        self.status.iter().filter(|&&s| s == status).count()
    }

    /// Assembles a map from per-point pixels; winners are the nearest per pixel.
    pub fn from_pixels<T: Real>(
        height: usize,
        width: usize,
        pixels: Vec<Option<(u32, u32)>>,
        ranges: &[T],
    ) -> Result<Self> {
        if pixels.len() != ranges.len() {
            return Err(Error::ShapeMismatch("pixels and ranges differ in length".into()));
        }
        let mut winners: Vec<Option<u32>> = vec![None; height * width];
        for (i, px) in pixels.iter().enumerate() {
            let Some((u, v)) = *px else { continue };
            let (u, v) = (u as usize, v as usize);
            if u >= width || v >= height {
                return Err(Error::IndexOutOfBounds(format!(
                    "point {i} at pixel ({u}, {v}) outside {height}x{width}"
                )));
            }
            let slot = &mut winners[v * width + u];
            match *slot {
                Some(w) if ranges[w as usize] <= ranges[i] => {}
                _ => *slot = Some(i as u32),
            }
        }
        let mut status: Vec<PointStatus> = pixels
            .iter()
            .map(|p| {
                if p.is_some() {
                    PointStatus::Occluded
                } else {
                    PointStatus::OutOfView
                }
            })
            .collect();
        for w in winners.iter().flatten() {
            status[*w as usize] = PointStatus::Kept;
        }
        Ok(Self {
            height,
            width,
            pixels,
            status,
            winners,
        })
    }
}

/// Projects a cloud into a range image, keeping the nearest return per pixel.
pub fn build_range_image<T: Real>(
    cloud: &PointCloud<T>,
    spec: &ProjectionSpec<T>,
) -> Result<(RangeImage<T>, PixelIndexMap)> {
    spec.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (w, h) = (spec.width, spec.height);
    let half_hfov = spec.horizontal_fov * T::lit(0.5);
    let sector_limited = !spec.is_full_ring();
    let h_real = T::from_usize_lossy(h);

    let mut ranges = Vec::with_capacity(cloud.len());
    let pixels: Vec<Option<(u32, u32)>> = cloud
        .iter()
        .map(|p| {
            let r = range_of(p);
            ranges.push(r);
            if !p.is_finite() {
                return None;
            }
            if sector_limited && p.y.atan2(p.x).abs() > half_hfov {
                return None;
            }
            let (u, v) = project_point(p, spec).ok()?;
            if spec.strict_fov && (v < T::zero() || v >= h_real) {
                return None;
            }
            Some((discretize(u, w) as u32, discretize(v, h) as u32))
        })
        .collect();

    let map = PixelIndexMap::from_pixels(h, w, pixels, &ranges)?;
    let mut img = RangeImage::empty(h, w, spec.channels.clone());
    for v in 0..h {
        for u in 0..w {
            if let Some(i) = map.winner(v, u) {
                img.set_point(v, u, &cloud.points[i]);
            }
        }
    }
    Ok((img, map))
}

/// One point per valid pixel, in row-major pixel order.
pub fn unproject<T: Real>(img: &RangeImage<T>) -> PointCloud<T> {
    let mut out = Vec::with_capacity(img.valid_count());
    for v in 0..img.height() {
        for u in 0..img.width() {
            if let Some(p) = img.point_at(v, u) {
                out.push(p);
            }
        }
    }
    PointCloud::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pt(x: f64, y: f64, z: f64) -> LidarPoint<f64> {
        LidarPoint::new(x, y, z, 0.5)
    }

    fn ring(w: usize, h: usize) -> ProjectionSpec<f64> {
        ProjectionSpec::full_ring(w, h, 3f64.to_radians(), 25f64.to_radians())
    }

    #[test]
    fn range_examples() {
        assert_eq!(range_of(&pt(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(range_of(&pt(0.0, 0.0, 0.0)), 0.0);
        assert!((range_of(&pt(1.0, 1.0, 1.0)) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forward_point_lands_mid_image() {
        let spec = ring(512, 48);
        let (u, v) = project_point(&pt(10.0, 0.0, 0.0), &spec).unwrap();
        assert!((u - 256.0).abs() < 1e-9);
        let expected_v = (1.0 - spec.fov_down / spec.fov()) * 48.0;
        assert!((v - expected_v).abs() < 1e-9);
    }

    #[test]
    fn left_point_lands_at_quarter_width() {
        let spec = ring(512, 48);
        let (u, _) = project_point(&pt(0.0, 10.0, 0.0), &spec).unwrap();
        assert!((u - 128.0).abs() < 1e-9);
    }

    #[test]
    fn zero_range_is_an_error() {
        let spec = ring(512, 48);
        assert!(matches!(project_point(&pt(0.0, 0.0, 0.0), &spec), Err(Error::ZeroRange)));
    }

    #[test]
    fn kitti_spec_shape() {
        let spec = ProjectionSpec::<f32>::kitti();
        assert_eq!((spec.channels.len(), spec.height, spec.width), (5, 48, 512));
        let waymo = ProjectionSpec::<f32>::waymo();
        assert_eq!((waymo.channels.len(), waymo.height, waymo.width), (6, 64, 2650));
    }

    #[test]
    fn nearest_point_wins_collision() {
        let spec = ring(512, 48);
        let cloud = PointCloud::new(vec![pt(9.0, 0.0, 0.0), pt(5.0, 0.0, 0.0)]);
        let (img, map) = build_range_image(&cloud, &spec).unwrap();
        let (u, v) = map.pixel_of(1).unwrap();
        assert_eq!(map.pixel_of(0), Some((u, v)));
        assert_eq!(map.winner(v, u), Some(1));
        assert_eq!(map.status(0), PointStatus::Occluded);
        assert_eq!(img.range_at(v, u), Some(5.0));
        assert_eq!(img.valid_count(), 1);
    }

    #[test]
    fn collision_tie_keeps_lowest_index() {
        let spec = ring(512, 48);
        let cloud = PointCloud::new(vec![pt(5.0, 0.0, 0.0), pt(5.0, 0.0, 0.0)]);
        let (_, map) = build_range_image(&cloud, &spec).unwrap();
        assert_eq!(map.status(0), PointStatus::Kept);
        assert_eq!(map.status(1), PointStatus::Occluded);
    }

    #[test]
    fn empty_cloud_rejected() {
        let spec = ring(512, 48);
        let cloud = PointCloud::<f64>::default();
        assert!(matches!(build_range_image(&cloud, &spec), Err(Error::EmptyCloud)));
    }

    #[test]
    fn kitti_sector_filter_and_channel_count() {
        let spec = ProjectionSpec::<f64>::kitti();
        let cloud = PointCloud::new(vec![
            pt(10.0, 1.0, -1.0),
            pt(-10.0, 0.0, 0.0),
            pt(1.0, 5.0, 0.0),
        ]);
        let (img, map) = build_range_image(&cloud, &spec).unwrap();
        assert_eq!(img.data().dim(), (48, 512, 5));
        assert_eq!(map.status(0), PointStatus::Kept);
        assert_eq!(map.status(1), PointStatus::OutOfView);
        assert_eq!(map.status(2), PointStatus::OutOfView);
    }

    #[test]
    fn kitti_sector_spans_all_columns() {
        let spec = ProjectionSpec::<f64>::kitti();
        let a = 0.999 * PI / 4.0;
        let (u_left, _) = project_point(&pt(a.cos(), a.sin(), 0.0), &spec).unwrap();
        let (u_right, _) = project_point(&pt(a.cos(), -a.sin(), 0.0), &spec).unwrap();
        assert!(u_left < 1.0);
        assert!(u_right > 511.0);
    }

    #[test]
    fn vertical_clamp_and_strict_mode() {
        let mut spec = ring(64, 16);
        let cloud = PointCloud::new(vec![pt(1.0, 0.0, 5.0), pt(1.0, 0.0, -5.0)]);
        let (_, map) = build_range_image(&cloud, &spec).unwrap();
        assert_eq!(map.pixel_of(0).unwrap().1, 0);
        assert_eq!(map.pixel_of(1).unwrap().1, 15);
        spec.strict_fov = true;
        let (img, map) = build_range_image(&cloud, &spec).unwrap();
        assert_eq!(map.count(PointStatus::OutOfView), 2);
        assert_eq!(img.valid_count(), 0);
    }

    #[test]
    fn unproject_examples() {
        let mut img = RangeImage::<f64>::empty(4, 8, Channel::KITTI.to_vec());
        assert!(unproject(&img).is_empty());
        img.set_point(2, 3, &pt(1.0, 2.0, 3.0));
        let cloud = unproject(&img);
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0].position(), [1.0, 2.0, 3.0]);
        img.check_consistency(1e-4).unwrap();
    }

    #[test]
    fn elongation_channel_carries_through() {
        let mut spec = ring(128, 16);
        spec.channels = Channel::WAYMO.to_vec();
        let cloud = PointCloud::new(vec![pt(4.0, 1.0, 0.0).with_elongation(0.25)]);
        let (img, _) = build_range_image(&cloud, &spec).unwrap();
        assert_eq!(unproject(&img).points[0].elongation, Some(0.25));
    }
}
