// SPDX-License-Identifier: Apache-2.0

//! File formats: KITTI velodyne scans, labels and calibration, the binary
//! containers for range images (`RGRD`), BEV grids (`BEVG`) and pooled RoI
//! features (`ROIP`), and plain-text detection lists.
//!
//! All binary values are little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3x4, Matrix4, Vector3, Vector4};
use ndarray::{Array2, Array3};

use crate::boxgeom::{Box3D, Detection};
use crate::error::{Error, Result};
use crate::eval::{EvalFrame, GroundTruth, KittiMeta};
use crate::rangeproj::{Channel, LidarPoint, PointCloud, RangeImage};
use crate::roipool::PooledFeature;
use crate::scalar::{wrap_angle, Real};
use crate::viewtransfer::BevGrid;

pub const RANGE_IMAGE_MAGIC: &[u8; 4] = b"RGRD";
pub const BEV_GRID_MAGIC: &[u8; 4] = b"BEVG";
pub const POOLED_MAGIC: &[u8; 4] = b"ROIP";
pub const FORMAT_VERSION: u32 = 1;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes `x y z intensity` f32 quadruples.
pub fn parse_velodyne<T: Real>(bytes: &[u8], path: &Path) -> Result<PointCloud<T>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::format(
            path,
            (bytes.len() - bytes.len() % 16) as u64,
            format!("trailing {} bytes after the last full point", bytes.len() % 16),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for (i, rec) in bytes.chunks_exact(16).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().unwrap());
        let p = LidarPoint::new(T::lit(f(0).into()), T::lit(f(1).into()), T::lit(f(2).into()), T::lit(f(3).into()));
        if !p.is_finite() {
            return Err(Error::format(path, (i * 16) as u64, "non-finite point"));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn read_velodyne<T: Real>(path: &Path) -> Result<PointCloud<T>> {
    parse_velodyne(&read_file(path)?, path)
}

pub fn encode_velodyne<T: Real>(cloud: &PointCloud<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    out
}

pub fn write_velodyne<T: Real>(path: &Path, cloud: &PointCloud<T>) -> Result<()> {
    write_file(path, &encode_velodyne(cloud))
}

/// Sequential little-endian reader that reports byte offsets.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(self.path, self.pos as u64, format!("truncated {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != expected {
            return Err(Error::format(
                self.path,
                0,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(expected)),
            ));
        }
        let at = self.pos as u64;
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(self.path, at, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s<T: Real>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let raw = self.take(n.saturating_mul(4), what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()).into()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.pos as u64,
                format!("{} unexpected trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_header(out: &mut Vec<u8>, magic: &[u8; 4], dims: &[usize]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

fn push_f32s<T: Real>(out: &mut Vec<u8>, values: impl IntoIterator<Item = T>) {
    for v in values {
        out.extend_from_slice(&v.as_f32().to_le_bytes());
    }
}

/// `RGRD`, version, h, w, C, h*w*C f32 row-major, h*w validity bytes.
pub fn encode_range_image<T: Real>(img: &RangeImage<T>) -> Vec<u8> {
    let (h, w, c) = (img.height(), img.width(), img.num_channels());
    let mut out = Vec::with_capacity(20 + h * w * (4 * c + 1));
    push_header(&mut out, RANGE_IMAGE_MAGIC, &[h, w, c]);
    push_f32s(&mut out, img.data().iter().copied());
    out.extend(img.mask().iter().map(|&v| u8::from(v)));
    out
}

pub fn decode_range_image<T: Real>(bytes: &[u8], path: &Path) -> Result<RangeImage<T>> {
    let mut cur = Cursor::new(bytes, path);
    cur.magic(RANGE_IMAGE_MAGIC)?;
    let h = cur.u32("height")? as usize;
    let w = cur.u32("width")? as usize;
    let at = cur.pos as u64;
    let c = cur.u32("channel count")? as usize;
    let channels = Channel::layout_for(c)
        .ok_or_else(|| Error::format(path, at, format!("unsupported channel count {c}")))?;
    let data = cur.f32s::<T>(h * w * c, "pixel data")?;
    let start = cur.pos;
    let mask_raw = cur.take(h * w, "validity mask")?;
    let mut valid = Vec::with_capacity(h * w);
    for (k, &b) in mask_raw.iter().enumerate() {
        match b {
            0 | 1 => valid.push(b == 1),
            _ => return Err(Error::format(path, (start + k) as u64, format!("validity byte {b}"))),
        }
    }
    cur.finish()?;
    let data = Array3::from_shape_vec((h, w, c), data).map_err(|e| Error::format(path, 20, e.to_string()))?;
    let valid = Array2::from_shape_vec((h, w), valid).map_err(|e| Error::format(path, start as u64, e.to_string()))?;
    RangeImage::from_parts(channels, data, valid)
}

pub fn write_range_image<T: Real>(path: &Path, img: &RangeImage<T>) -> Result<()> {
    write_file(path, &encode_range_image(img))
}

pub fn read_range_image<T: Real>(path: &Path) -> Result<RangeImage<T>> {
    decode_range_image(&read_file(path)?, path)
}

/// `BEVG`, version, nx, ny, C, nx*ny*C f32 features, nx*ny u32 counts.
pub fn encode_bev_grid<T: Real>(grid: &BevGrid<T>) -> Vec<u8> {
    let (nx, ny, c) = grid.features.dim();
    let mut out = Vec::new();
    push_header(&mut out, BEV_GRID_MAGIC, &[nx, ny, c]);
    push_f32s(&mut out, grid.features.iter().copied());
    for &n in grid.counts.iter() {
        out.extend_from_slice(&n.to_le_bytes());
    }
    out
}

pub fn decode_bev_grid<T: Real>(bytes: &[u8], path: &Path) -> Result<BevGrid<T>> {
    let mut cur = Cursor::new(bytes, path);
    cur.magic(BEV_GRID_MAGIC)?;
    let nx = cur.u32("nx")? as usize;
    let ny = cur.u32("ny")? as usize;
    let c = cur.u32("channels")? as usize;
    let features = cur.f32s::<T>(nx * ny * c, "features")?;
    let mut counts = Vec::with_capacity(nx * ny);
    for _ in 0..nx * ny {
        counts.push(cur.u32("counts")?);
    }
    cur.finish()?;
    Ok(BevGrid {
        features: Array3::from_shape_vec((nx, ny, c), features).map_err(|e| Error::format(path, 20, e.to_string()))?,
        counts: Array2::from_shape_vec((nx, ny), counts).map_err(|e| Error::format(path, 20, e.to_string()))?,
        dropped: 0,
    })
}

/// `ROIP`, version, count, G, C, then count * G^3 * C f32 values.
pub fn encode_pooled<T: Real>(pooled: &[PooledFeature<T>]) -> Vec<u8> {
    let (g, c) = pooled.first().map_or((0, 0), |p| (p.grid, p.channels));
    let mut out = Vec::new();
    push_header(&mut out, POOLED_MAGIC, &[pooled.len(), g, c]);
    for p in pooled {
        push_f32s(&mut out, p.values.iter().copied());
    }
    out
}

pub fn decode_pooled<T: Real>(bytes: &[u8], path: &Path) -> Result<Vec<PooledFeature<T>>> {
    let mut cur = Cursor::new(bytes, path);
    cur.magic(POOLED_MAGIC)?;
    let n = cur.u32("count")? as usize;
    let g = cur.u32("grid")? as usize;
    let c = cur.u32("channels")? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(PooledFeature {
            grid: g,
            channels: c,
            values: cur.f32s(g * g * g * c, "pooled values")?,
        });
    }
    cur.finish()?;
    Ok(out)
}

fn text_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

/// One detection per line: `class score cx cy cz l w h yaw`; `#` starts a comment.
pub fn read_detections<T: Real>(path: &Path) -> Result<Vec<Detection<T>>> {
    text_lines(path)?
        .into_iter()
        .map(|(n, l)| l.parse().map_err(|e: String| Error::parse(path, n, e)))
        .collect()
}

pub fn format_detections<T: Real>(dets: &[Detection<T>]) -> String {
    dets.iter().map(|d| format!("{d}\n")).collect()
}

pub fn write_detections<T: Real>(path: &Path, dets: &[Detection<T>]) -> Result<()> {
    write_file(path, format_detections(dets).as_bytes())
}

/// Ground-truth line: the detection format (score column ignored) followed by
/// optional `points=N`, `height=PX`, `occlusion=K`, `truncation=F`, `dontcare=0|1`.
pub fn parse_ground_truth<T: Real>(line: &str) -> std::result::Result<GroundTruth<T>, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 9 {
        return Err(format!("expected at least 9 fields, got {}", tokens.len()));
    }
    let det: Detection<T> = tokens[..9].join(" ").parse()?;
    let mut gt = GroundTruth::new(det.bbox, det.class);
    let (mut height, mut occ, mut trunc) = (None, None, None);
    for extra in &tokens[9..] {
        let (key, value) = extra.split_once('=').ok_or_else(|| format!("expected key=value, got `{extra}`"))?;
        let bad = |e: &dyn std::fmt::Display| format!("{key}: {e}");
        match key {
            "points" => gt.num_points = Some(value.parse().map_err(|e| bad(&e))?),
            "height" => height = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
            "occlusion" => occ = Some(value.parse::<i32>().map_err(|e| bad(&e))?),
            "truncation" => trunc = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
            "dontcare" => gt.dont_care = value == "1" || value == "true",
            _ => return Err(format!("unknown key `{key}`")),
        }
    }
    if let (Some(h), Some(o), Some(t)) = (height, occ, trunc) {
        gt.kitti = Some(KittiMeta {
            bbox_height_px: T::lit(h),
            occlusion: o,
            truncation: T::lit(t),
        });
    }
    Ok(gt)
}

pub fn format_ground_truth<T: Real>(gt: &GroundTruth<T>) -> String {
    let mut s = Detection::new(gt.bbox, T::one(), gt.class.clone()).to_string();
    if let Some(n) = gt.num_points {
        s.push_str(&format!(" points={n}"));
    }
    if let Some(m) = &gt.kitti {
        s.push_str(&format!(
            " height={} occlusion={} truncation={}",
            m.bbox_height_px, m.occlusion, m.truncation
        ));
    }
    if gt.dont_care {
        s.push_str(" dontcare=1");
    }
    s
}

pub fn read_ground_truths<T: Real>(path: &Path) -> Result<Vec<GroundTruth<T>>> {
    text_lines(path)?
        .into_iter()
        .map(|(n, l)| parse_ground_truth(&l).map_err(|e| Error::parse(path, n, e)))
        .collect()
}

pub fn write_ground_truths<T: Real>(path: &Path, gts: &[GroundTruth<T>]) -> Result<()> {
    let text: String = gts.iter().map(|g| format_ground_truth(g) + "\n").collect();
    write_file(path, text.as_bytes())
}

/// Frame manifest: one `frame_id detections_path ground_truth_path` per line,
/// paths relative to the manifest directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    text_lines(path)?
        .into_iter()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(path, n, format!("expected 3 fields, got {}", f.len())));
            }
            Ok((f[0].to_string(), base.join(f[1]), base.join(f[2])))
        })
        .collect()
}

/// Loads every frame of a manifest into evaluation form.
pub fn load_eval_frames<T: Real>(manifest: &Path) -> Result<Vec<(String, EvalFrame<T>)>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|(id, d, g)| {
            Ok((
                id,
                EvalFrame {
                    detections: read_detections(&d)?,
                    gts: read_ground_truths(&g)?,
                },
            ))
        })
        .collect()
}

/// Sensor-to-camera calibration. `velo_to_rect = R0_rect * Tr_velo_to_cam`.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub velo_to_rect: Matrix4<f64>,
    pub rect_to_velo: Matrix4<f64>,
    /// Rectified camera projection, when present.
    pub p2: Option<Matrix3x4<f64>>,
}

impl Calibration {
    pub fn from_matrices(r0_rect: [f64; 9], tr_velo_to_cam: [f64; 12], p2: Option<[f64; 12]>) -> Result<Self> {
        let mut r0 = Matrix4::identity();
        for r in 0..3 {
            for c in 0..3 {
                r0[(r, c)] = r0_rect[r * 3 + c];
            }
        }
        let mut tr = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                tr[(r, c)] = tr_velo_to_cam[r * 4 + c];
            }
        }
        let velo_to_rect = r0 * tr;
        let rect_to_velo = velo_to_rect
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("calibration transform is singular".into()))?;
        Ok(Self {
            velo_to_rect,
            rect_to_velo,
            p2: p2.map(|m| Matrix3x4::from_row_slice(&m)),
        })
    }

    pub fn identity_axes() -> Self {
        // Sensor x forward, y left, z up; camera x right, y down, z forward.
        Self::from_matrices(
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            [0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            None,
        )
        .expect("axis permutation is invertible")
    }

    fn apply(m: &Matrix4<f64>, p: [f64; 3]) -> [f64; 3] {
        let v = m * Vector4::new(p[0], p[1], p[2], 1.0);
        [v.x, v.y, v.z]
    }

    fn apply_dir(m: &Matrix4<f64>, d: [f64; 3]) -> [f64; 3] {
        let v = m.fixed_view::<3, 3>(0, 0) * Vector3::new(d[0], d[1], d[2]);
        [v.x, v.y, v.z]
    }

    pub fn velo_to_rect_point(&self, p: [f64; 3]) -> [f64; 3] {
        Self::apply(&self.velo_to_rect, p)
    }

    pub fn rect_to_velo_point(&self, p: [f64; 3]) -> [f64; 3] {
        Self::apply(&self.rect_to_velo, p)
    }

    /// Camera-frame label box (bottom-centre location, `h w l`, `ry`) to a sensor-frame box.
    pub fn camera_box_to_lidar<T: Real>(&self, location: [f64; 3], hwl: [f64; 3], ry: f64) -> Box3D<T> {
        let [h, w, l] = hwl;
        // Camera y points down: the geometric centre is half a height above the base.
        let center = self.rect_to_velo_point([location[0], location[1] - h / 2.0, location[2]]);
        let dir = Self::apply_dir(&self.rect_to_velo, [ry.cos(), 0.0, -ry.sin()]);
        let yaw = dir[1].atan2(dir[0]);
        Box3D::new(center.map(T::lit), [T::lit(l), T::lit(w), T::lit(h)], T::lit(yaw))
    }

    /// Inverse of [`Calibration::camera_box_to_lidar`]: `(location, hwl, ry)`.
    pub fn lidar_box_to_camera<T: Real>(&self, b: &Box3D<T>) -> ([f64; 3], [f64; 3], f64) {
        let c = self.velo_to_rect_point(b.center().map(|v| v.as_f64()));
        let h = b.height.as_f64();
        let yaw = b.yaw.as_f64();
        let dir = Self::apply_dir(&self.velo_to_rect, [yaw.cos(), yaw.sin(), 0.0]);
        let ry = wrap_angle((-dir[2]).atan2(dir[0]));
        ([c[0], c[1] + h / 2.0, c[2]], [h, b.width.as_f64(), b.length.as_f64()], ry)
    }

    /// Image-plane bounding box `[x1, y1, x2, y2]` of the box corners, if P2
    /// is known and every corner is in front of the camera.
    pub fn image_bbox<T: Real>(&self, b: &Box3D<T>) -> Option<[f64; 4]> {
        let p2 = self.p2?;
        let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for corner in b.corners_3d() {
            let c = self.velo_to_rect_point(corner.map(|v| v.as_f64()));
            let uvw = p2 * Vector4::new(c[0], c[1], c[2], 1.0);
            if uvw.z <= 0.0 {
                return None;
            }
            let (u, v) = (uvw.x / uvw.z, uvw.y / uvw.z);
            bb = [bb[0].min(u), bb[1].min(v), bb[2].max(u), bb[3].max(v)];
        }
        Some(bb)
    }
}

fn parse_floats<const N: usize>(values: &str, path: &Path, line: usize, key: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = values
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, line, format!("{key}: {e}")))?;
    v.try_into()
        .map_err(|v: Vec<f64>| Error::parse(path, line, format!("{key}: expected {N} values, got {}", v.len())))
}

pub fn parse_calibration(text: &str, path: &Path) -> Result<Calibration> {
    let (mut r0, mut tr, mut p2) = (None, None, None);
    for (i, line) in text.lines().enumerate() {
        let Some((key, values)) = line.split_once(':') else { continue };
        match key.trim() {
            "R0_rect" | "R_rect" => r0 = Some(parse_floats::<9>(values, path, i + 1, key)?),
            "Tr_velo_to_cam" | "Tr_velo_cam" => tr = Some(parse_floats::<12>(values, path, i + 1, key)?),
            "P2" => p2 = Some(parse_floats::<12>(values, path, i + 1, key)?),
            _ => {}
        }
    }
    let missing = |k: &str| Error::parse(path, 0, format!("missing {k}"));
    Calibration::from_matrices(r0.ok_or_else(|| missing("R0_rect"))?, tr.ok_or_else(|| missing("Tr_velo_to_cam"))?, p2)
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text, path)
}

/// One row of a KITTI label file, in camera coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct KittiLabel {
    pub class: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    pub bbox2d: [f64; 4],
    /// `h w l` in metres.
    pub dims_hwl: [f64; 3],
    /// Bottom-centre location in the rectified camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class == "DontCare"
    }

    pub fn to_ground_truth<T: Real>(&self, calib: &Calibration) -> GroundTruth<T> {
        let bbox = if self.is_dont_care() {
            // DontCare rows carry placeholder geometry.
            let c = calib.rect_to_velo_point(self.location);
            let d = self.dims_hwl.map(|v| v.abs().max(1e-3));
            Box3D::new(c.map(T::lit), [T::lit(d[2]), T::lit(d[1]), T::lit(d[0])], T::zero())
        } else {
            calib.camera_box_to_lidar(self.location, self.dims_hwl, self.rotation_y)
        };
        GroundTruth {
            bbox,
            class: self.class.clone(),
            num_points: None,
            kitti: Some(KittiMeta {
                bbox_height_px: T::lit(self.bbox2d[3] - self.bbox2d[1]),
                occlusion: self.occlusion,
                truncation: T::lit(self.truncation),
            }),
            dont_care: self.is_dont_care(),
        }
    }
}

pub fn parse_kitti_label_line(line: &str) -> std::result::Result<KittiLabel, String> {
    let t: Vec<&str> = line.split_whitespace().collect();
    if t.len() != 15 && t.len() != 16 {
        return Err(format!("expected 15 or 16 fields, got {}", t.len()));
    }
    let f = |k: usize| t[k].parse::<f64>().map_err(|e| format!("field {}: `{}`: {e}", k + 1, t[k]));
    Ok(KittiLabel {
        class: t[0].to_string(),
        truncation: f(1)?,
        occlusion: t[2].parse::<i32>().map_err(|e| format!("field 3: {e}"))?,
        alpha: f(3)?,
        bbox2d: [f(4)?, f(5)?, f(6)?, f(7)?],
        dims_hwl: [f(8)?, f(9)?, f(10)?],
        location: [f(11)?, f(12)?, f(13)?],
        rotation_y: f(14)?,
        score: if t.len() == 16 { Some(f(15)?) } else { None },
    })
}

pub fn read_kitti_labels(path: &Path) -> Result<Vec<KittiLabel>> {
    text_lines(path)?
        .into_iter()
        .map(|(n, l)| parse_kitti_label_line(&l).map_err(|e| Error::parse(path, n, e)))
        .collect()
}

/// KITTI result line for a sensor-frame detection.
pub fn kitti_label_line<T: Real>(det: &Detection<T>, calib: &Calibration) -> String {
    let (loc, hwl, ry) = calib.lidar_box_to_camera(&det.bbox);
    let alpha = wrap_angle(ry - loc[0].atan2(loc[2]));
    let bb = calib.image_bbox(&det.bbox).unwrap_or([0.0; 4]);
    format!(
        "{} -1 -1 {:.4} {:.2} {:.2} {:.2} {:.2} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4}",
        det.class,
        alpha,
        bb[0],
        bb[1],
        bb[2],
        bb[3],
        hwl[0],
        hwl[1],
        hwl[2],
        loc[0],
        loc[1],
        loc[2],
        ry,
        det.score.as_f64()
    )
}

/// A KITTI frame with labels in the sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord<T> {
    pub id: String,
    pub cloud_path: PathBuf,
    pub cloud: PointCloud<T>,
    pub labels: Vec<GroundTruth<T>>,
    pub calib: Option<Calibration>,
}

/// Counts cloud points inside a box.
pub fn interior_points<T: Real>(cloud: &PointCloud<T>, b: &Box3D<T>) -> usize {
    cloud.iter().filter(|p| b.contains(p.position(), T::zero())).count()
}

/// Reads a velodyne scan and, optionally, its label and calibration files.
/// Labels need calibration; interior point counts are filled in.
pub fn load_kitti_frame<T: Real>(
    id: &str,
    velodyne: &Path,
    label: Option<&Path>,
    calib: Option<&Path>,
) -> Result<FrameRecord<T>> {
    let cloud = read_velodyne(velodyne)?;
    let calib = calib.map(read_calibration).transpose()?;
    let labels = match label {
        None => Vec::new(),
        Some(path) => {
            let calib = calib
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{}: labels need a calibration file", path.display())))?;
            let mut labels: Vec<GroundTruth<T>> =
                read_kitti_labels(path)?.iter().map(|l| l.to_ground_truth(calib)).collect();
            for gt in labels.iter_mut().filter(|g| !g.dont_care) {
                gt.num_points = Some(interior_points(&cloud, &gt.bbox));
            }
            labels
        }
    };
    Ok(FrameRecord {
        id: id.to_string(),
        cloud_path: velodyne.to_path_buf(),
        cloud,
        labels,
        calib,
    })
}
