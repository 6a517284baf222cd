// SPDX-License-Identifier: Apache-2.0

//! LIDAR range-image geometry and the deterministic parts of a two-stage
//! range-view 3D detector.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`). The aliases below fix the scalar for common use.

pub mod augment;
pub mod backbone;
pub mod boxgeom;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod rangeproj;
pub mod roipool;
pub mod scalar;
pub mod synthetic;
pub mod targets;
pub mod viewtransfer;
pub mod viz;

pub use boxgeom::{iou_3d, iou_bev, nms, Box3D, Detection, IouMode};
pub use error::{Error, Result};
pub use rangeproj::{build_range_image, unproject, LidarPoint, PixelIndexMap, PointCloud, ProjectionSpec, RangeImage};
pub use scalar::Real;

pub type LidarPoint32 = LidarPoint<f32>;
pub type LidarPoint64 = LidarPoint<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type PointCloud64 = PointCloud<f64>;
pub type ProjectionSpec32 = ProjectionSpec<f32>;
pub type ProjectionSpec64 = ProjectionSpec<f64>;
pub type RangeImage32 = RangeImage<f32>;
pub type RangeImage64 = RangeImage<f64>;
pub type Box3D32 = Box3D<f32>;
pub type Box3D64 = Box3D<f64>;
pub type Detection32 = Detection<f32>;
pub type Detection64 = Detection<f64>;
pub type BevSpec32 = viewtransfer::BevSpec<f32>;
pub type BevSpec64 = viewtransfer::BevSpec<f64>;
pub type BevGrid32 = viewtransfer::BevGrid<f32>;
pub type BevGrid64 = viewtransfer::BevGrid<f64>;
pub type PooledFeature32 = roipool::PooledFeature<f32>;
pub type PooledFeature64 = roipool::PooledFeature<f64>;
pub type PipelineConfig32 = config::PipelineConfig<f32>;
pub type PipelineConfig64 = config::PipelineConfig<f64>;
