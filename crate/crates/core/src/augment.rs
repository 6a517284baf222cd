// SPDX-License-Identifier: Apache-2.0

//! Scene augmentation that keeps range images and labels consistent.
//!
//! Point-cloud transforms (flip about the x axis, rotation about +z, uniform
//! scaling) act on points and boxes together. For full-ring range images the
//! same transforms can be applied in image space: a flip mirrors columns, a
//! rotation is a circular column shift by the nearest whole number of columns
//! while the stored coordinates are rotated by the exact angle.
//!
//! Ground-truth cut-and-paste writes stored object points back into a range
//! image at their recorded pixels, never hiding a nearer return.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::boxgeom::{iou_bev, Box3D};
use crate::error::{Error, Result};
use crate::rangeproj::{Channel, LidarPoint, PointCloud, RangeImage};
use crate::scalar::Real;

/// A labelled ground-truth box.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectLabel<T> {
    pub bbox: Box3D<T>,
    pub class: String,
}

impl<T: Real> ObjectLabel<T> {
    pub fn new(bbox: Box3D<T>, class: impl Into<String>) -> Self {
        Self {
            bbox,
            class: class.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig<T> {
    pub flip_probability: f64,
    pub rotation_range: (T, T),
    pub scale_range: (T, T),
    pub paste_attempts_per_class: usize,
}

impl<T: Real> Default for AugmentConfig<T> {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            rotation_range: (-T::FRAC_PI_4(), T::FRAC_PI_4()),
            scale_range: (T::lit(0.95), T::lit(1.05)),
            paste_attempts_per_class: 10,
        }
    }
}

impl<T: Real> AugmentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::InvalidConfig("flip probability outside [0, 1]".into()));
        }
        if !(self.rotation_range.0 <= self.rotation_range.1) {
            return Err(Error::InvalidConfig("rotation range is not ordered".into()));
        }
        if !(self.scale_range.0 > T::zero() && self.scale_range.0 <= self.scale_range.1) {
            return Err(Error::InvalidConfig("scale range must be positive and ordered".into()));
        }
        Ok(())
    }
}

fn map_points<T: Real>(cloud: &PointCloud<T>, f: impl Fn([T; 3]) -> [T; 3]) -> PointCloud<T> {
    cloud
        .iter()
        .map(|p| {
            let [x, y, z] = f(p.position());
            LidarPoint { x, y, z, ..*p }
        })
        .collect()
}

fn rotate_xy<T: Real>(p: [T; 3], sin: T, cos: T) -> [T; 3] {
    [cos * p[0] - sin * p[1], sin * p[0] + cos * p[1], p[2]]
}

/// Mirrors the scene across the x-z plane (y -> -y).
pub fn flip_x<T: Real>(cloud: &PointCloud<T>, boxes: &[Box3D<T>]) -> (PointCloud<T>, Vec<Box3D<T>>) {
    let pts = map_points(cloud, |[x, y, z]| [x, -y, z]);
    let boxes = boxes
        .iter()
        .map(|b| Box3D::new([b.cx, -b.cy, b.cz], b.dims(), -b.yaw))
        .collect();
    (pts, boxes)
}

/// Rotates the scene about +z by `theta`.
pub fn global_rotate<T: Real>(
    cloud: &PointCloud<T>,
    boxes: &[Box3D<T>],
    theta: T,
) -> (PointCloud<T>, Vec<Box3D<T>>) {
    let (s, c) = theta.sin_cos();
    let pts = map_points(cloud, |p| rotate_xy(p, s, c));
    let boxes = boxes
        .iter()
        .map(|b| Box3D::new(rotate_xy(b.center(), s, c), b.dims(), b.yaw + theta))
        .collect();
    (pts, boxes)
}

/// Scales coordinates, box centers and box dimensions by `s > 0`.
pub fn global_scale<T: Real>(
    cloud: &PointCloud<T>,
    boxes: &[Box3D<T>],
    s: T,
) -> Result<(PointCloud<T>, Vec<Box3D<T>>)> {
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::InvalidConfig(format!("scale factor {s} must be positive")));
    }
    let pts = map_points(cloud, |p| p.map(|v| v * s));
    let boxes = boxes
        .iter()
        .map(|b| Box3D::new(b.center().map(|v| v * s), b.dims().map(|v| v * s), b.yaw))
        .collect();
    Ok((pts, boxes))
}

/// The random draw behind one call of [`random_global_augment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalTransform<T> {
    pub flipped: bool,
    pub rotation: T,
    pub scale: T,
}

/// Flip (with probability), then rotate, then scale with uniformly drawn
/// parameters. Operates on points; re-project afterwards for a range image.
pub fn random_global_augment<T: Real, R: Rng + ?Sized>(
    cloud: &PointCloud<T>,
    boxes: &[Box3D<T>],
    rng: &mut R,
    cfg: &AugmentConfig<T>,
) -> Result<(PointCloud<T>, Vec<Box3D<T>>, GlobalTransform<T>)> {
    cfg.validate()?;
    let flipped = rng.random_bool(cfg.flip_probability);
    let uniform = |rng: &mut R, (lo, hi): (T, T)| -> T {
        let t: f64 = rng.random();
        lo + (hi - lo) * T::lit(t)
    };
    let rotation = uniform(rng, cfg.rotation_range);
    let scale = uniform(rng, cfg.scale_range);
    let (mut pts, mut bxs) = (cloud.clone(), boxes.to_vec());
    if flipped {
        (pts, bxs) = flip_x(&pts, &bxs);
    }
    (pts, bxs) = global_rotate(&pts, &bxs, rotation);
    (pts, bxs) = global_scale(&pts, &bxs, scale)?;
    Ok((
        pts,
        bxs,
        GlobalTransform {
            flipped,
            rotation,
            scale,
        },
    ))
}

fn channel_or_err<T: Real>(img: &RangeImage<T>, ch: Channel) -> Result<usize> {
    img.channel_index(ch)
        .ok_or_else(|| Error::InvalidConfig(format!("range image lacks the {ch:?} channel")))
}

/// Full-ring image flip: column mirror with the y channel negated.
pub fn flip_range_image<T: Real>(img: &RangeImage<T>) -> Result<RangeImage<T>> {
    channel_or_err(img, Channel::Y)?;
    let (h, w) = (img.height(), img.width());
    let mut out = RangeImage::empty(h, w, img.channels().to_vec());
    for v in 0..h {
        for u in 0..w {
            if !img.is_valid(v, u) {
                continue;
            }
            let mut p = img.point_at(v, u).expect("valid pixel");
            p.y = -p.y;
            out.set_point(v, w - 1 - u, &p);
        }
    }
    Ok(out)
}

/// Full-ring image rotation about +z: whole-column circular shift plus exact
/// rotation of the stored coordinates. Returns the column shift applied.
pub fn rotate_range_image<T: Real>(img: &RangeImage<T>, theta: T) -> Result<(RangeImage<T>, isize)> {
    channel_or_err(img, Channel::X)?;
    channel_or_err(img, Channel::Y)?;
    let (h, w) = (img.height(), img.width());
    let two_pi = T::PI() + T::PI();
    // Azimuth grows by theta, so columns move left by theta * w / 2pi.
    let shift = -(theta * T::from_usize_lossy(w) / two_pi)
        .round()
        .to_isize()
        .unwrap_or(0);
    let (s, c) = theta.sin_cos();
    let mut out = RangeImage::empty(h, w, img.channels().to_vec());
    for v in 0..h {
        for u in 0..w {
            let Some(mut p) = img.point_at(v, u) else { continue };
            let [x, y, z] = rotate_xy(p.position(), s, c);
            (p.x, p.y, p.z) = (x, y, z);
            let nu = (u as isize + shift).rem_euclid(w as isize) as usize;
            out.set_point(v, nu, &p);
        }
    }
    Ok((out, shift))
}

/// Scales the coordinate channels; range is recomputed.
pub fn scale_range_image<T: Real>(img: &RangeImage<T>, s: T) -> Result<RangeImage<T>> {
    if !(s > T::zero()) {
        return Err(Error::InvalidConfig(format!("scale factor {s} must be positive")));
    }
    let mut out = img.clone();
    for v in 0..img.height() {
        for u in 0..img.width() {
            if let Some(mut p) = img.point_at(v, u) {
                (p.x, p.y, p.z) = (p.x * s, p.y * s, p.z * s);
                out.set_point(v, u, &p);
            }
        }
    }
    Ok(out)
}

/// Stored annotated object: its points and the pixels they occupied.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectBankEntry<T> {
    pub points: Vec<LidarPoint<T>>,
    /// `(u, v)` per point.
    pub pixels: Vec<(u32, u32)>,
    pub bbox: Box3D<T>,
    pub class: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjectBank<T> {
    pub entries: Vec<ObjectBankEntry<T>>,
}

/// A range image with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame<T> {
    pub image: RangeImage<T>,
    pub labels: Vec<ObjectLabel<T>>,
}

/// Tolerance of the inside-box test used when cropping objects.
pub const BANK_INSIDE_TOLERANCE: f64 = 1e-3;

/// Crops every labelled object out of the frames. Objects with no interior
/// return are skipped.
pub fn build_object_bank<T: Real>(frames: &[LabeledFrame<T>]) -> Result<ObjectBank<T>> {
    let tol = T::lit(BANK_INSIDE_TOLERANCE);
    let mut entries = Vec::new();
    for (f, frame) in frames.iter().enumerate() {
        for label in &frame.labels {
            label.bbox.validate()?;
        }
        let img = &frame.image;
        let mut members: Vec<(Vec<LidarPoint<T>>, Vec<(u32, u32)>)> =
            vec![(Vec::new(), Vec::new()); frame.labels.len()];
        for v in 0..img.height() {
            for u in 0..img.width() {
                let Some(p) = img.point_at(v, u) else { continue };
                for (k, label) in frame.labels.iter().enumerate() {
                    if label.bbox.contains(p.position(), tol) {
                        members[k].0.push(p);
                        members[k].1.push((u as u32, v as u32));
                    }
                }
            }
        }
        for (label, (points, pixels)) in frame.labels.iter().zip(members) {
            if points.is_empty() {
                log::info!("object bank: frame {f}: {} box has no interior points, skipped", label.class);
                continue;
            }
            entries.push(ObjectBankEntry {
                points,
                pixels,
                bbox: label.bbox,
                class: label.class.clone(),
            });
        }
    }
    Ok(ObjectBank { entries })
}

impl<T: Real> ObjectBank<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry indices grouped by class, classes in lexical order.
    pub fn by_class(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            map.entry(e.class.as_str()).or_default().push(i);
        }
        map
    }

    /// Writes `index.txt` plus one binary record file per entry under `dir`.
    ///
    /// Index line: `id class point_count cx cy cz l w h yaw`. Record file
    /// `objects/<id>.bin`: per point x, y, z, intensity, elongation as f32 LE,
    /// then u, v as u32 LE.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let objects = dir.join("objects");
        fs::create_dir_all(&objects).map_err(|e| Error::io(&objects, e))?;
        let index_path = dir.join("index.txt");
        let mut index = String::new();
        for (id, e) in self.entries.iter().enumerate() {
            let b = &e.bbox;
            index.push_str(&format!(
                "{id} {} {} {} {} {} {} {} {} {}\n",
                e.class,
                e.points.len(),
                b.cx,
                b.cy,
                b.cz,
                b.length,
                b.width,
                b.height,
                b.yaw
            ));
            let mut buf = Vec::with_capacity(e.points.len() * 28);
            for (p, &(u, v)) in e.points.iter().zip(&e.pixels) {
                for val in [p.x, p.y, p.z, p.intensity, p.elongation.unwrap_or_else(T::zero)] {
                    buf.extend_from_slice(&val.as_f32().to_le_bytes());
                }
                buf.extend_from_slice(&u.to_le_bytes());
                buf.extend_from_slice(&v.to_le_bytes());
            }
            let path = objects.join(format!("{id:06}.bin"));
            fs::File::create(&path)
                .and_then(|mut f| f.write_all(&buf))
                .map_err(|e| Error::io(&path, e))?;
        }
        fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join("index.txt");
        let file = fs::File::open(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&index_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 10 {
                return Err(Error::parse(&index_path, n + 1, "expected 10 fields"));
            }
            let num = |k: usize| -> Result<f64> {
                f[k].parse::<f64>()
                    .map_err(|e| Error::parse(&index_path, n + 1, format!("field {}: {e}", k + 1)))
            };
            let id: usize = f[0]
                .parse()
                .map_err(|e| Error::parse(&index_path, n + 1, format!("id: {e}")))?;
            let count: usize = f[2]
                .parse()
                .map_err(|e| Error::parse(&index_path, n + 1, format!("point count: {e}")))?;
            let bbox = Box3D::try_new(
                [T::lit(num(3)?), T::lit(num(4)?), T::lit(num(5)?)],
                [T::lit(num(6)?), T::lit(num(7)?), T::lit(num(8)?)],
                T::lit(num(9)?),
            )
            .map_err(|e| Error::parse(&index_path, n + 1, e.to_string()))?;

            let path = dir.join("objects").join(format!("{id:06}.bin"));
            let mut bytes = Vec::new();
            fs::File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| Error::io(&path, e))?;
            if bytes.len() != count * 28 {
                return Err(Error::format(
                    &path,
                    bytes.len() as u64,
                    format!("expected {} bytes for {count} points", count * 28),
                ));
            }
            let mut points = Vec::with_capacity(count);
            let mut pixels = Vec::with_capacity(count);
            for rec in bytes.chunks_exact(28) {
                let f32_at = |k: usize| T::lit(f64::from(f32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().unwrap())));
                let u32_at = |k: usize| u32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().unwrap());
                points.push(LidarPoint::new(f32_at(0), f32_at(1), f32_at(2), f32_at(3)).with_elongation(f32_at(4)));
                pixels.push((u32_at(5), u32_at(6)));
            }
            entries.push(ObjectBankEntry {
                points,
                pixels,
                bbox,
                class: f[1].to_string(),
            });
        }
        Ok(Self { entries })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PasteStats {
    pub attempts: usize,
    pub pasted: usize,
    pub rejected_overlap: usize,
    pub pixels_written: usize,
    pub pixels_occluded: usize,
}

/// Pastes sampled bank objects into `img` at their stored pixels.
///
/// For each class (lexical order) up to `paste_attempts_per_class` entries are
/// drawn. A candidate whose box overlaps any current box in BEV is rejected.
/// A point is written only into an empty pixel or one holding a farther return.
pub fn cut_and_paste<T: Real, R: Rng + ?Sized>(
    img: &RangeImage<T>,
    labels: &[ObjectLabel<T>],
    bank: &ObjectBank<T>,
    rng: &mut R,
    cfg: &AugmentConfig<T>,
) -> Result<(RangeImage<T>, Vec<ObjectLabel<T>>, PasteStats)> {
    if bank.is_empty() {
        return Err(Error::InvalidConfig("object bank is empty".into()));
    }
    let mut out = img.clone();
    let mut labels = labels.to_vec();
    let mut stats = PasteStats::default();
    let (h, w) = (out.height(), out.width());
    for (_, members) in bank.by_class() {
        for _ in 0..cfg.paste_attempts_per_class {
            stats.attempts += 1;
            let entry = &bank.entries[members[rng.random_range(0..members.len())]];
            if labels.iter().any(|l| iou_bev(&l.bbox, &entry.bbox) > T::zero()) {
                stats.rejected_overlap += 1;
                continue;
            }
            for (p, &(u, v)) in entry.points.iter().zip(&entry.pixels) {
                let (u, v) = (u as usize, v as usize);
                if u >= w || v >= h {
                    continue;
                }
                let nearer = match out.range_at(v, u) {
                    None => true,
                    Some(existing) => p.range() < existing,
                };
                if nearer {
                    out.set_point(v, u, p);
                    stats.pixels_written += 1;
                } else {
                    stats.pixels_occluded += 1;
                }
            }
            labels.push(ObjectLabel::new(entry.bbox, entry.class.clone()));
            stats.pasted += 1;
        }
    }
    Ok((out, labels, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rangeproj::{build_range_image, ProjectionSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn scene() -> (PointCloud<f64>, Vec<Box3D<f64>>) {
        let cloud = PointCloud::new(vec![
            LidarPoint::new(1.0, 2.0, 3.0, 0.1),
            LidarPoint::new(10.0, -1.0, -0.5, 0.2),
        ]);
        let boxes = vec![Box3D::new([10.0, -1.0, -0.5], [4.0, 2.0, 1.5], std::f64::consts::FRAC_PI_4)];
        (cloud, boxes)
    }

    #[test]
    fn flip_examples() {
        let (cloud, boxes) = scene();
        let (c1, b1) = flip_x(&cloud, &boxes);
        assert_eq!(c1.points[0].position(), [1.0, -2.0, 3.0]);
        assert_eq!(b1[0].yaw, -std::f64::consts::FRAC_PI_4);
        assert_eq!(b1[0].cy, 1.0);
        let (c2, b2) = flip_x(&c1, &b1);
        assert_eq!(c2, cloud);
        assert_eq!(b2, boxes);
    }

    #[test]
    fn rotate_examples() {
        let cloud = PointCloud::new(vec![LidarPoint::new(1.0, 0.0, 0.0, 0.0)]);
        let (r, _) = global_rotate(&cloud, &[], FRAC_PI_2);
        let p = r.points[0].position();
        assert!(p[0].abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15 && p[2] == 0.0);
        let (cloud, boxes) = scene();
        let (same, same_boxes) = global_rotate(&cloud, &boxes, 0.0);
        assert_eq!(same, cloud);
        assert_eq!(same_boxes, boxes);
    }

    #[test]
    fn scale_examples() {
        let (cloud, boxes) = scene();
        let (c, b) = global_scale(&cloud, &boxes, 1.0).unwrap();
        assert_eq!((c, b), (cloud.clone(), boxes.clone()));
        let (c, _) = global_scale(&cloud, &boxes, 2.0).unwrap();
        assert!((c.points[1].range() - 2.0 * cloud.points[1].range()).abs() < 1e-12);
        assert!(global_scale(&cloud, &boxes, 0.0).is_err());
    }

    fn ring_spec() -> ProjectionSpec<f64> {
        let mut s = ProjectionSpec::full_ring(360, 16, 0.3, 0.3);
        s.channels = Channel::WAYMO.to_vec();
        s
    }

    #[test]
    fn image_flip_is_column_mirror() {
        let cloud = PointCloud::new(vec![LidarPoint::new(5.0, 1.3, 0.2, 0.4)]);
        let (img, map) = build_range_image(&cloud, &ring_spec()).unwrap();
        let (u, v) = map.pixel_of(0).unwrap();
        let flipped = flip_range_image(&img).unwrap();
        let p = flipped.point_at(v, 359 - u).unwrap();
        assert_eq!(p.position(), [5.0, -1.3, 0.2]);
        assert_eq!(flip_range_image(&flipped).unwrap(), img);
    }

    #[test]
    fn image_rotation_shifts_columns() {
        let cloud = PointCloud::new(vec![LidarPoint::new(5.0, 0.01, 0.2, 0.4)]);
        let spec = ring_spec();
        let (img, map) = build_range_image(&cloud, &spec).unwrap();
        let (u, v) = map.pixel_of(0).unwrap();
        let (rot, shift) = rotate_range_image(&img, 10f64.to_radians()).unwrap();
        assert_eq!(shift, -10);
        let moved = rot.point_at(v, u - 10).unwrap();
        let direct = global_rotate(&cloud, &[], 10f64.to_radians()).0;
        assert_eq!(moved.position(), direct.points[0].position());
        rot.check_consistency(1e-4).unwrap();
    }

    fn car_frame(x: f64, y: f64) -> (PointCloud<f64>, ObjectLabel<f64>) {
        let bbox = Box3D::new([x, y, 0.0], [4.0, 2.0, 1.5], 0.0);
        // Points on the sensor-facing face of the car.
        let mut pts = Vec::new();
        for a in 0..8 {
            for b in 0..4 {
                let local = [-1.9, -0.9 + 0.25 * a as f64, -0.6 + 0.3 * b as f64];
                let [px, py, pz] = bbox.to_world(local);
                pts.push(LidarPoint::new(px, py, pz, 0.3).with_elongation(0.1));
            }
        }
        (PointCloud::new(pts), ObjectLabel::new(bbox, "Car"))
    }

    fn bank_from(x: f64, y: f64) -> ObjectBank<f64> {
        let (cloud, label) = car_frame(x, y);
        let (image, _) = build_range_image(&cloud, &ring_spec()).unwrap();
        build_object_bank(&[LabeledFrame { image, labels: vec![label] }]).unwrap()
    }

    #[test]
    fn bank_counts_objects_and_skips_empty() {
        let (c1, l1) = car_frame(10.0, 0.0);
        let (c2, l2) = car_frame(0.0, 10.0);
        let empty = ObjectLabel::new(Box3D::new([-20.0, -20.0, 0.0], [1.0, 1.0, 1.0], 0.0), "Cyclist");
        let mut pts = c1.points.clone();
        pts.extend(c2.points.iter().copied());
        let (image, _) = build_range_image(&PointCloud::new(pts), &ring_spec()).unwrap();
        let bank = build_object_bank(&[LabeledFrame {
            image,
            labels: vec![l1, l2, empty],
        }])
        .unwrap();
        assert_eq!(bank.len(), 2);
        for e in &bank.entries {
            assert!(e.points.iter().all(|p| e.bbox.contains(p.position(), 1e-3)));
        }
    }

    #[test]
    fn paste_into_empty_image() {
        let bank = bank_from(10.0, 0.0);
        let empty = RangeImage::empty(16, 360, Channel::WAYMO.to_vec());
        let cfg = AugmentConfig { paste_attempts_per_class: 1, ..AugmentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (out, labels, stats) = cut_and_paste(&empty, &[], &bank, &mut rng, &cfg).unwrap();
        assert_eq!(stats.pasted, 1);
        assert_eq!(labels.len(), 1);
        assert_eq!(out.valid_count(), bank.entries[0].points.len());
    }

    #[test]
    fn paste_rejects_overlap() {
        let bank = bank_from(10.0, 0.0);
        let img = RangeImage::empty(16, 360, Channel::WAYMO.to_vec());
        let existing = vec![ObjectLabel::new(Box3D::new([11.0, 0.5, 0.0], [4.0, 2.0, 1.5], 0.3), "Car")];
        let cfg = AugmentConfig { paste_attempts_per_class: 3, ..AugmentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (out, labels, stats) = cut_and_paste(&img, &existing, &bank, &mut rng, &cfg).unwrap();
        assert_eq!(out, img);
        assert_eq!(labels, existing);
        assert_eq!(stats.rejected_overlap, 3);
    }

    #[test]
    fn paste_respects_nearer_returns() {
        let bank = bank_from(10.0, 0.0);
        let entry = &bank.entries[0];
        let mut img = RangeImage::empty(16, 360, Channel::WAYMO.to_vec());
        // An occluder at 3 m on the first pixel of the object.
        let (u, v) = entry.pixels[0];
        let dir = entry.points[0].position();
        let r = entry.points[0].range();
        let near = LidarPoint::new(dir[0] * 3.0 / r, dir[1] * 3.0 / r, dir[2] * 3.0 / r, 0.9).with_elongation(0.0);
        img.set_point(v as usize, u as usize, &near);
        let cfg = AugmentConfig { paste_attempts_per_class: 1, ..AugmentConfig::default() };
        let (out, _, stats) = cut_and_paste(&img, &[], &bank, &mut ChaCha8Rng::seed_from_u64(3), &cfg).unwrap();
        assert_eq!(out.point_at(v as usize, u as usize).unwrap(), near);
        assert_eq!(stats.pixels_occluded, 1);
    }

    #[test]
    fn bank_persistence_round_trip() {
        let bank = bank_from(10.0, 0.0);
        let dir = tempfile::tempdir().unwrap();
        bank.save(dir.path()).unwrap();
        let back = ObjectBank::<f64>::load(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back.entries[0].pixels, bank.entries[0].pixels);
        assert_eq!(back.entries[0].bbox, bank.entries[0].bbox);
        for (a, b) in back.entries[0].points.iter().zip(&bank.entries[0].points) {
            assert!((a.x - b.x).abs() < 1e-5 && (a.y - b.y).abs() < 1e-5 && (a.z - b.z).abs() < 1e-5);
        }
    }
}
