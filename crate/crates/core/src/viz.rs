// SPDX-License-Identifier: Apache-2.0

//! Inspection exports: ASCII PLY point clouds and binary PPM top-down rasters.

use std::fmt::Write as _;
use std::path::Path;

use crate::boxgeom::{corners_bev, Box3D};
use crate::error::{Error, Result};
use crate::rangeproj::PointCloud;
use crate::scalar::Real;
use crate::viewtransfer::{bev_pixel_of, BevSpec};

pub type Rgb = [u8; 3];

pub const GROUND_TRUTH_COLOR: Rgb = [220, 40, 40];
pub const DETECTION_COLOR: Rgb = [40, 200, 60];

/// Grey level from intensity in `[0, 1]`; points inside any box are red.
pub fn point_colors<T: Real>(cloud: &PointCloud<T>, boxes: &[Box3D<T>]) -> Vec<Rgb> {
    cloud
        .iter()
        .map(|p| {
            if boxes.iter().any(|b| b.contains(p.position(), T::zero())) {
                GROUND_TRUTH_COLOR
            } else {
                let g = (p.intensity.as_f64().clamp(0.0, 1.0) * 200.0) as u8 + 55;
                [g, g, g]
            }
        })
        .collect()
}

pub fn ply_string<T: Real>(cloud: &PointCloud<T>, colors: &[Rgb]) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    );
    for (p, c) in cloud.iter().zip(colors) {
        let _ = writeln!(s, "{} {} {} {} {} {}", p.x.as_f32(), p.y.as_f32(), p.z.as_f32(), c[0], c[1], c[2]);
    }
    s
}

/// Top-down raster: `nx` rows (row 0 at `x_max`) by `ny` columns (column 0 at `y_max`).
#[derive(Clone, Debug, PartialEq)]
pub struct BevRaster {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Rgb>,
}

impl BevRaster {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pixels: vec![[0, 0, 0]; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Rgb {
        self.pixels[r * self.cols + c]
    }

    /// Sets a pixel; coordinates outside the raster are ignored.
    pub fn put(&mut self, r: i64, c: i64, color: Rgb) {
        if r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols {
            self.pixels[r as usize * self.cols + c as usize] = color;
        }
    }

    /// Bresenham line between two pixel positions.
    pub fn line(&mut self, (r0, c0): (i64, i64), (r1, c1): (i64, i64), color: Rgb) {
        let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
        let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
        let (mut r, mut c, mut err) = (r0, c0, dr + dc);
        loop {
            self.put(r, c, color);
            if r == r1 && c == c1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dc {
                err += dc;
                r += sr;
            }
            if e2 <= dr {
                err += dr;
                c += sc;
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Raster pixel `(row, col)` of a planar position, unclamped.
pub fn raster_position<T: Real>(x: T, y: T, spec: &BevSpec<T>) -> (i64, i64) {
    let (nx, ny) = spec.grid_size();
    let i = ((x - spec.x_min) / spec.resolution).floor().to_i64().unwrap_or(i64::MIN / 4);
    let j = ((y - spec.y_min) / spec.resolution).floor().to_i64().unwrap_or(i64::MIN / 4);
    (nx as i64 - 1 - i, ny as i64 - 1 - j)
}

/// Occupancy in grey plus box outlines.
pub fn bev_raster<T: Real>(cloud: &PointCloud<T>, spec: &BevSpec<T>, boxes: &[(Box3D<T>, Rgb)]) -> Result<BevRaster> {
    spec.validate()?;
    let (nx, ny) = spec.grid_size();
    let mut raster = BevRaster::new(nx, ny);
    for p in cloud.iter() {
        if let Some((i, j)) = bev_pixel_of(p.position(), spec) {
            raster.pixels[(nx - 1 - i) * ny + (ny - 1 - j)] = [160, 160, 160];
        }
    }
    for (b, color) in boxes {
        let c = corners_bev(b).map(|[x, y]| raster_position(x, y, spec));
        for k in 0..4 {
            raster.line(c[k], c[(k + 1) % 4], *color);
        }
    }
    Ok(raster)
}

/// Writes `<stem>.ply` and `<stem>.ppm` into `dir`.
pub fn viz_export<T: Real>(
    dir: &Path,
    stem: &str,
    cloud: &PointCloud<T>,
    gts: &[Box3D<T>],
    dets: &[Box3D<T>],
    spec: &BevSpec<T>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ply = dir.join(format!("{stem}.ply"));
    std::fs::write(&ply, ply_string(cloud, &point_colors(cloud, gts))).map_err(|e| Error::io(&ply, e))?;
    let boxes: Vec<(Box3D<T>, Rgb)> = gts
        .iter()
        .map(|b| (*b, GROUND_TRUTH_COLOR))
        .chain(dets.iter().map(|b| (*b, DETECTION_COLOR)))
        .collect();
    let ppm = dir.join(format!("{stem}.ppm"));
    std::fs::write(&ppm, bev_raster(cloud, spec, &boxes)?.to_ppm()).map_err(|e| Error::io(&ppm, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rangeproj::LidarPoint;

    #[test]
    fn ply_with_one_vertex() {
        let cloud = PointCloud::new(vec![LidarPoint::new(1.0f64, 2.0, 3.0, 0.5)]);
        let s = ply_string(&cloud, &point_colors(&cloud, &[]));
        assert!(s.contains("element vertex 1\n"));
        assert_eq!(s.lines().count(), 11);
    }

    #[test]
    fn raster_matches_grid() {
        let spec = BevSpec::<f64>::kitti();
        let r = bev_raster(&PointCloud::new(vec![]), &spec, &[]).unwrap();
        assert_eq!((r.rows, r.cols), (432, 496));
        let ppm = r.to_ppm();
        assert!(ppm.starts_with(b"P6\n496 432\n255\n"));
        assert_eq!(ppm.len(), 15 + 432 * 496 * 3);
    }

    #[test]
    fn outline_stays_in_bounds() {
        let spec = BevSpec::<f64>::kitti();
        let b = Box3D::new([20.0, 5.0, -1.0], [3.9, 1.6, 1.5], 0.4);
        let r = bev_raster(&PointCloud::new(vec![]), &spec, &[(b, DETECTION_COLOR)]).unwrap();
        let drawn = r.pixels.iter().filter(|&&p| p == DETECTION_COLOR).count();
        assert!(drawn > 20);
        for [x, y] in corners_bev(&b) {
            let (row, col) = raster_position(x, y, &spec);
            assert!(row >= 0 && (row as usize) < r.rows && col >= 0 && (col as usize) < r.cols);
            assert_eq!(r.get(row as usize, col as usize), DETECTION_COLOR);
        }
    }

    #[test]
    fn bresenham_endpoints() {
        let mut r = BevRaster::new(10, 10);
        r.line((0, 0), (9, 4), [1, 1, 1]);
        assert_eq!(r.get(0, 0), [1, 1, 1]);
        assert_eq!(r.get(9, 4), [1, 1, 1]);
        assert_eq!(r.pixels.iter().filter(|&&p| p == [1, 1, 1]).count(), 10);
    }
}
