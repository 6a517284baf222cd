// SPDX-License-Identifier: Apache-2.0

//! Canonical-frame 3D RoI grid max pooling.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::boxgeom::Box3D;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoiGridSpec<T> {
    /// Cells per axis.
    pub grid: usize,
    pub channels: usize,
    /// Outward enlargement of the proposal on every face (m).
    pub margin: T,
}

impl<T: Real> Default for RoiGridSpec<T> {
    fn default() -> Self {
        Self {
            grid: 12,
            channels: 64,
            margin: T::zero(),
        }
    }
}

impl<T: Real> RoiGridSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 || self.channels == 0 {
            return Err(Error::InvalidConfig("RoI grid and channels must be positive".into()));
        }
        if !(self.margin >= T::zero()) {
            return Err(Error::InvalidConfig("RoI margin must be non-negative".into()));
        }
        Ok(())
    }

    pub fn output_len(&self) -> usize {
        self.grid * self.grid * self.grid * self.channels
    }
}

/// Flattened `G^3 * C` vector in `(i, j, k, c)` row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledFeature<T> {
    pub grid: usize,
    pub channels: usize,
    pub values: Vec<T>,
}

impl<T: Real> PooledFeature<T> {
    pub fn cell(&self, i: usize, j: usize, k: usize) -> &[T] {
        let start = ((i * self.grid + j) * self.grid + k) * self.channels;
        &self.values[start..start + self.channels]
    }
}

/// Points in the proposal frame: `R(-yaw) (p - center)`.
pub fn canonical_transform<T: Real>(points: &[[T; 3]], proposal: &Box3D<T>) -> Vec<[T; 3]> {
    points.iter().map(|&p| proposal.to_local(p)).collect()
}

/// Grid cell of a canonical-frame point, `None` outside the box.
pub fn assign_grid<T: Real>(p_local: [T; 3], dims: [T; 3], grid: usize) -> Option<(usize, usize, usize)> {
    let g = T::from_usize_lossy(grid);
    let half = T::lit(0.5);
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let extent = dims[a];
        let x = p_local[a];
        if !(x.abs() <= extent * half) {
            return None;
        }
        let cell = ((x + extent * half) / extent * g).floor();
        idx[a] = cell.to_usize().unwrap_or(0).min(grid - 1);
    }
    Some((idx[0], idx[1], idx[2]))
}

/// Channel-wise max of member point features per grid cell; empty cells are zero.
pub fn roi_max_pool<T: Real>(
    points: &[[T; 3]],
    features: ArrayView2<'_, T>,
    proposal: &Box3D<T>,
    spec: &RoiGridSpec<T>,
) -> Result<PooledFeature<T>> {
    spec.validate()?;
    if features.nrows() != points.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {} points",
            features.nrows(),
            points.len()
        )));
    }
    if features.ncols() != spec.channels {
        return Err(Error::ShapeMismatch(format!(
            "features have {} channels, grid expects {}",
            features.ncols(),
            spec.channels
        )));
    }
    let (g, c) = (spec.grid, spec.channels);
    let two = T::lit(2.0);
    let dims = proposal.dims().map(|d| d + two * spec.margin);
    let mut values = vec![T::zero(); spec.output_len()];
    let mut filled = vec![false; g * g * g];
    for (row, &p) in points.iter().enumerate() {
        let Some((i, j, k)) = assign_grid(proposal.to_local(p), dims, g) else {
            continue;
        };
        let cell = (i * g + j) * g + k;
        let out = &mut values[cell * c..(cell + 1) * c];
        let f = features.row(row);
        if filled[cell] {
            for (o, &v) in out.iter_mut().zip(f.iter()) {
                if v > *o {
                    *o = v;
                }
            }
        } else {
            for (o, &v) in out.iter_mut().zip(f.iter()) {
                *o = v;
            }
            filled[cell] = true;
        }
    }
    Ok(PooledFeature {
        grid: g,
        channels: c,
        values,
    })
}

/// Pools every proposal, in parallel, preserving proposal order.
pub fn roi_max_pool_batch<T: Real>(
    points: &[[T; 3]],
    features: ArrayView2<'_, T>,
    proposals: &[Box3D<T>],
    spec: &RoiGridSpec<T>,
) -> Result<Vec<PooledFeature<T>>> {
    proposals
        .par_iter()
        .map(|p| roi_max_pool(points, features, p, spec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    fn proposal() -> Box3D<f64> {
        Box3D::new([10.0, -2.0, 0.5], [4.0, 2.0, 1.5], 0.6)
    }

    #[test]
    fn canonical_frame_examples() {
        let b = proposal();
        let local = canonical_transform(&[b.center()], &b);
        assert!(local[0].iter().all(|v| v.abs() < 1e-12));
        let front = b.to_world([2.0, 0.0, 0.0]);
        let l = canonical_transform(&[front], &b)[0];
        assert!((l[0] - 2.0).abs() < 1e-12 && l[1].abs() < 1e-12 && l[2].abs() < 1e-12);
        let axis = Box3D::new([1.0, 2.0, 3.0], [1.0, 1.0, 1.0], 0.0);
        assert_eq!(canonical_transform(&[[1.5, 1.0, 3.0]], &axis)[0], [0.5, -1.0, 0.0]);
    }

    #[test]
    fn grid_assignment_examples() {
        let dims = [4.0, 2.0, 1.5];
        assert_eq!(assign_grid([0.0, 0.0, 0.0], dims, 12), Some((6, 6, 6)));
        assert_eq!(assign_grid([-2.0, -1.0, -0.75], dims, 12), Some((0, 0, 0)));
        assert_eq!(assign_grid([2.0, 1.0, 0.75], dims, 12), Some((11, 11, 11)));
        assert_eq!(assign_grid([2.001, 0.0, 0.0], dims, 12), None);
    }

    #[test]
    fn single_point_fills_one_cell() {
        let spec = RoiGridSpec { grid: 4, channels: 2, margin: 0.0 };
        let b = proposal();
        let p = b.to_world([0.1, 0.1, 0.1]);
        let out = roi_max_pool(&[p], arr2(&[[3.0, -1.0]]).view(), &b, &spec).unwrap();
        assert_eq!(out.values.len(), 128);
        assert_eq!(out.cell(2, 2, 2), &[3.0, -1.0]);
        assert_eq!(out.values.iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn shared_cell_takes_channelwise_max() {
        let spec = RoiGridSpec { grid: 2, channels: 3, margin: 0.0 };
        let b = proposal();
        let pts = [b.to_world([0.5, 0.2, 0.1]), b.to_world([0.6, 0.3, 0.2])];
        let feats = arr2(&[[1.0, 5.0, -2.0], [4.0, 2.0, -3.0]]);
        let out = roi_max_pool(&pts, feats.view(), &b, &spec).unwrap();
        assert_eq!(out.cell(1, 1, 1), &[4.0, 5.0, -2.0]);
    }

    #[test]
    fn outside_points_ignored_unless_margin() {
        let b = proposal();
        let p = b.to_world([2.2, 0.1, 0.1]);
        let f = arr2(&[[1.0]]);
        let tight = RoiGridSpec { grid: 2, channels: 1, margin: 0.0 };
        assert!(roi_max_pool(&[p], f.view(), &b, &tight).unwrap().values.iter().all(|&v| v == 0.0));
        let loose = RoiGridSpec { grid: 2, channels: 1, margin: 0.5 };
        assert_eq!(roi_max_pool(&[p], f.view(), &b, &loose).unwrap().cell(1, 1, 1), &[1.0]);
    }

    #[test]
    fn default_output_length() {
        let spec = RoiGridSpec::<f64>::default();
        let out = roi_max_pool(&[], Array2::zeros((0, 64)).view(), &proposal(), &spec).unwrap();
        assert_eq!(out.values.len(), 12 * 12 * 12 * 64);
        assert!(roi_max_pool(&[[0.0; 3]], Array2::zeros((1, 3)).view(), &proposal(), &spec).is_err());
    }
}
