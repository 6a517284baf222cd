// SPDX-License-Identifier: Apache-2.0

//! Range view -> point view -> bird's-eye view feature transfer.
//!
//! Point features are read from the range-image feature map at each point's
//! recorded pixel, then averaged per BEV cell. Per-cell sums are taken in
//! ascending source-point order with compensated summation, so the grid is
//! bit-identical for any permutation of the input rows.

use ndarray::{Array2, Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::rangeproj::{PixelIndexMap, PointCloud, PointStatus};
use crate::scalar::{compensated_sum, Real};

/// Per-point features with their positions and source-point indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFeatureSet<T> {
    /// `N x C`.
    pub features: Array2<T>,
    pub positions: Vec<[T; 3]>,
    /// Index of each row in the original cloud.
    pub source_index: Vec<usize>,
}

impl<T: Real> PointFeatureSet<T> {
    pub fn new(features: Array2<T>, positions: Vec<[T; 3]>, source_index: Vec<usize>) -> Result<Self> {
        if features.nrows() != positions.len() || positions.len() != source_index.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows, {} positions, {} indices",
                features.nrows(),
                positions.len(),
                source_index.len()
            )));
        }
        Ok(Self {
            features,
            positions,
            source_index,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.ncols()
    }

    /// Rows reordered by `perm` (row `k` of the result is row `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let c = self.channels();
        let mut features = Array2::from_elem((perm.len(), c), T::zero());
        for (k, &src) in perm.iter().enumerate() {
            features.row_mut(k).assign(&self.features.row(src));
        }
        Self {
            features,
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            source_index: perm.iter().map(|&i| self.source_index[i]).collect(),
        }
    }
}

/// Reads each projected point's feature from an `h x w x C` feature map.
///
/// Points that lost their pixel to a nearer return still index that pixel;
/// only out-of-view points are skipped.
pub fn gather_point_features<T: Real>(
    feature_map: ArrayView3<'_, T>,
    index_map: &PixelIndexMap,
    cloud: &PointCloud<T>,
) -> Result<PointFeatureSet<T>> {
    let (h, w, c) = feature_map.dim();
    if index_map.num_points() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "index map covers {} points, cloud has {}",
            index_map.num_points(),
            cloud.len()
        )));
    }
    let mut rows = Vec::new();
    let mut positions = Vec::new();
    let mut source_index = Vec::new();
    for i in 0..cloud.len() {
        if index_map.status(i) == PointStatus::OutOfView {
            continue;
        }
        let (u, v) = index_map.pixel_of(i).expect("projected point has a pixel");
        if v >= h || u >= w {
            return Err(Error::IndexOutOfBounds(format!(
                "point {i} at pixel ({u}, {v}) outside feature map {h}x{w}"
            )));
        }
        rows.extend(feature_map.slice(ndarray::s![v, u, ..]).iter().copied());
        positions.push(cloud.points[i].position());
        source_index.push(i);
    }
    let features = Array2::from_shape_vec((positions.len(), c), rows)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    PointFeatureSet::new(features, positions, source_index)
}

/// Metric extent and cell size of a bird's-eye-view grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BevSpec<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
    pub resolution: T,
}

impl<T: Real> BevSpec<T> {
    /// x in [0, 69.12], y in [-39.68, 39.68], 0.16 m cells.
    pub fn kitti() -> Self {
        Self {
            x_min: T::zero(),
            x_max: T::lit(69.12),
            y_min: T::lit(-39.68),
            y_max: T::lit(39.68),
            resolution: T::lit(0.16),
        }
    }

    /// x, y in [-75.52, 75.52], 0.32 m cells.
    pub fn waymo() -> Self {
        Self {
            x_min: T::lit(-75.52),
            x_max: T::lit(75.52),
            y_min: T::lit(-75.52),
            y_max: T::lit(75.52),
            resolution: T::lit(0.32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.y_max > self.y_min && self.resolution > T::zero()) {
            return Err(Error::InvalidConfig(format!("malformed BEV extent {self:?}")));
        }
        Ok(())
    }

    /// Cells along x and along y: `round((max - min) / resolution)`.
    pub fn grid_size(&self) -> (usize, usize) {
        let n = |lo: T, hi: T| ((hi - lo) / self.resolution).round().to_usize().unwrap_or(0);
        (n(self.x_min, self.x_max), n(self.y_min, self.y_max))
    }

    /// Center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (T, T) {
        let half = T::lit(0.5);
        (
            self.x_min + (T::from_usize_lossy(i) + half) * self.resolution,
            self.y_min + (T::from_usize_lossy(j) + half) * self.resolution,
        )
    }
}

/// Cell `(i, j)` holding a planar position, or `None` outside the grid.
pub fn bev_pixel_of<T: Real>(p: [T; 3], spec: &BevSpec<T>) -> Option<(usize, usize)> {
    let fi = ((p[0] - spec.x_min) / spec.resolution).floor();
    let fj = ((p[1] - spec.y_min) / spec.resolution).floor();
    if !(fi >= T::zero() && fj >= T::zero()) {
        return None;
    }
    let (nx, ny) = spec.grid_size();
    let (i, j) = (fi.to_usize()?, fj.to_usize()?);
    (i < nx && j < ny).then_some((i, j))
}

/// Averaged BEV features, indexed `(x cell, y cell, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BevGrid<T> {
    pub features: Array3<T>,
    pub counts: Array2<u32>,
    /// Points that fell outside the grid.
    pub dropped: usize,
}

impl<T: Real> BevGrid<T> {
    pub fn occupied_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Mean-pools point features into BEV cells.
pub fn scatter_to_bev<T: Real>(pts: &PointFeatureSet<T>, spec: &BevSpec<T>) -> Result<BevGrid<T>> {
    spec.validate()?;
    let (nx, ny) = spec.grid_size();
    let c = pts.channels();

    // (cell, source index, row) sorted so every cell sums in source order.
    let mut members: Vec<(usize, usize, usize)> = Vec::with_capacity(pts.len());
    let mut dropped = 0;
    for (row, pos) in pts.positions.iter().enumerate() {
        match bev_pixel_of(*pos, spec) {
            Some((i, j)) => members.push((i * ny + j, pts.source_index[row], row)),
            None => dropped += 1,
        }
    }
    members.sort_unstable();

    let mut features = Array3::from_elem((nx, ny, c), T::zero());
    let mut counts = Array2::<u32>::zeros((nx, ny));
    for group in members.chunk_by(|a, b| a.0 == b.0) {
        let cell = group[0].0;
        let (i, j) = (cell / ny, cell % ny);
        let n = T::from_usize_lossy(group.len());
        for ch in 0..c {
            let sum = compensated_sum(group.iter().map(|&(_, _, row)| pts.features[[row, ch]]));
            features[[i, j, ch]] = sum / n;
        }
        counts[[i, j]] = group.len() as u32;
    }
    if dropped > 0 {
        log::debug!("scatter_to_bev: {dropped} points outside the grid");
    }
    Ok(BevGrid {
        features,
        counts,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rangeproj::{build_range_image, LidarPoint, ProjectionSpec};
    use ndarray::Array3;

    fn tiny_spec() -> BevSpec<f64> {
        BevSpec {
            x_min: 0.0,
            x_max: 4.0,
            y_min: -2.0,
            y_max: 2.0,
            resolution: 1.0,
        }
    }

    #[test]
    fn dataset_grid_sizes() {
        assert_eq!(BevSpec::<f64>::kitti().grid_size(), (432, 496));
        assert_eq!(BevSpec::<f32>::kitti().grid_size(), (432, 496));
        assert_eq!(BevSpec::<f64>::waymo().grid_size(), (472, 472));
    }

    #[test]
    fn bev_cell_lookup() {
        let spec = tiny_spec();
        assert_eq!(bev_pixel_of([0.0, -2.0, 0.0], &spec), Some((0, 0)));
        assert_eq!(bev_pixel_of([3.99, 1.99, 5.0], &spec), Some((3, 3)));
        assert_eq!(bev_pixel_of([4.0, 0.0, 0.0], &spec), None);
        assert_eq!(bev_pixel_of([-0.01, 0.0, 0.0], &spec), None);
    }

    #[test]
    fn gather_reads_recorded_pixels() {
        let spec = ProjectionSpec::full_ring(16, 4, 0.2, 0.2);
        let cloud = PointCloud::new(vec![
            LidarPoint::new(5.0, 0.0, 0.0, 0.1),
            LidarPoint::new(9.0, 0.0, 0.0, 0.2),
        ]);
        let (_, map) = build_range_image(&cloud, &spec).unwrap();
        let fmap = Array3::from_shape_fn((4, 16, 2), |(v, u, c)| (v * 100 + u * 2 + c) as f64);
        let set = gather_point_features(fmap.view(), &map, &cloud).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.features.row(0), set.features.row(1));
        let (u, v) = map.pixel_of(0).unwrap();
        assert_eq!(set.features[[0, 0]], (v * 100 + u * 2) as f64);
    }

    #[test]
    fn gather_first_pixel_feature() {
        let spec = ProjectionSpec::full_ring(4, 2, 0.5, 0.5);
        // Azimuth just under pi and elevation above the FOV: top-left pixel.
        let cloud = PointCloud::new(vec![LidarPoint::new(-1.0, 1e-3, 1.0, 0.0)]);
        let (_, map) = build_range_image(&cloud, &spec).unwrap();
        assert_eq!(map.pixel_of(0), Some((0, 0)));
        let mut fmap = Array3::<f64>::zeros((2, 4, 3));
        fmap[[0, 0, 0]] = 1.0;
        let set = gather_point_features(fmap.view(), &map, &cloud).unwrap();
        assert_eq!(set.features.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn gather_rejects_mismatched_map() {
        let spec = ProjectionSpec::full_ring(16, 4, 0.2, 0.2);
        let cloud = PointCloud::new(vec![LidarPoint::new(-5.0, -0.01, 0.0, 0.1)]);
        let (_, map) = build_range_image(&cloud, &spec).unwrap();
        let small = Array3::<f64>::zeros((2, 2, 1));
        assert!(matches!(
            gather_point_features(small.view(), &map, &cloud),
            Err(Error::IndexOutOfBounds(_))
        ));
    }

    #[test]
    fn scatter_means_and_counts() {
        let spec = tiny_spec();
        let feats = ndarray::arr2(&[[1.0, 2.0], [3.0, 6.0], [5.0, 5.0], [7.0, 7.0]]);
        let pos = vec![[0.5, 0.5, 0.0], [0.6, 0.4, 1.0], [2.5, -1.5, 0.0], [10.0, 0.0, 0.0]];
        let set = PointFeatureSet::new(feats, pos, vec![0, 1, 2, 3]).unwrap();
        let grid = scatter_to_bev(&set, &spec).unwrap();
        assert_eq!(grid.counts[[0, 2]], 2);
        assert_eq!(grid.features[[0, 2, 0]], 2.0);
        assert_eq!(grid.features[[0, 2, 1]], 4.0);
        assert_eq!(grid.counts[[2, 0]], 1);
        assert_eq!(grid.features[[2, 0, 1]], 5.0);
        assert_eq!(grid.dropped, 1);
        assert_eq!(grid.total_count(), 3);
        assert_eq!(grid.features[[3, 3, 0]], 0.0);
    }

    #[test]
    fn scatter_empty_input() {
        let set = PointFeatureSet::<f64>::new(Array2::zeros((0, 3)), vec![], vec![]).unwrap();
        let grid = scatter_to_bev(&set, &tiny_spec()).unwrap();
        assert!(grid.features.iter().all(|&v| v == 0.0));
        assert_eq!(grid.occupied_cells(), 0);
    }
}
