// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic scenes: a ground plane plus box-shaped objects sampled on
//! their surfaces.

use rand::Rng;

use crate::boxgeom::{iou_bev, Box3D};
use crate::eval::GroundTruth;
use crate::io::interior_points;
use crate::pipeline::Frame;
use crate::rangeproj::{LidarPoint, PointCloud};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig<T> {
    /// Inclusive object count range.
    pub objects: (usize, usize),
    pub points_per_object: usize,
    pub ground_points: usize,
    /// Planar distance range of object centres.
    pub distance: (T, T),
    /// Sector centred on +x holding objects and points.
    pub horizontal_fov: T,
    pub ground_z: T,
    pub class: String,
    pub dims: [T; 3],
    /// Relative dimension jitter.
    pub dim_jitter: T,
    pub elongation: bool,
}

impl<T: Real> SyntheticConfig<T> {
    pub fn kitti() -> Self {
        Self {
            objects: (1, 8),
            points_per_object: 200,
            ground_points: 4000,
            distance: (T::lit(6.0), T::lit(60.0)),
            horizontal_fov: T::lit(80f64.to_radians()),
            ground_z: T::lit(-1.73),
            class: "Car".into(),
            dims: [T::lit(3.9), T::lit(1.6), T::lit(1.56)],
            dim_jitter: T::lit(0.1),
            elongation: false,
        }
    }

    pub fn waymo() -> Self {
        Self {
            distance: (T::lit(6.0), T::lit(70.0)),
            horizontal_fov: T::TAU(),
            ground_z: T::zero(),
            class: "Vehicle".into(),
            dims: [T::lit(4.7), T::lit(2.1), T::lit(1.7)],
            elongation: true,
            ..Self::kitti()
        }
    }
}

fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: T, hi: T) -> T {
    let t: f64 = rng.random();
    lo + (hi - lo) * T::lit(t)
}

fn make_point<T: Real, R: Rng + ?Sized>(rng: &mut R, p: [T; 3], elongation: bool) -> LidarPoint<T> {
    let q = LidarPoint::new(p[0], p[1], p[2], uniform(rng, T::zero(), T::one()));
    if elongation {
        q.with_elongation(uniform(rng, T::zero(), T::one()))
    } else {
        q
    }
}

/// Points at uniform azimuth in the sector, elevation in `[-20, 2]` degrees
/// and range in `[1, max_range]`.
pub fn random_cloud<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R, max_range: T, horizontal_fov: T) -> PointCloud<T> {
    let half = horizontal_fov * T::lit(0.5);
    let (el_lo, el_hi) = (T::lit((-20f64).to_radians()), T::lit(2f64.to_radians()));
    (0..n)
        .map(|_| {
            let az = uniform(rng, -half, half);
            let el = uniform(rng, el_lo, el_hi);
            let r = uniform(rng, T::one(), max_range);
            let p = [r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin()];
            make_point(rng, p, false)
        })
        .collect()
}

/// Non-overlapping boxes resting on the ground inside the sector.
pub fn random_boxes<T: Real, R: Rng + ?Sized>(cfg: &SyntheticConfig<T>, rng: &mut R) -> Vec<Box3D<T>> {
    let n = rng.random_range(cfg.objects.0..=cfg.objects.1);
    let half_fov = cfg.horizontal_fov * T::lit(0.5);
    let mut boxes: Vec<Box3D<T>> = Vec::with_capacity(n);
    let mut tries = 0;
    while boxes.len() < n && tries < 100 * n.max(1) {
        tries += 1;
        let jitter = |rng: &mut R, d: T| d * (T::one() + uniform(rng, -cfg.dim_jitter, cfg.dim_jitter));
        let dims = [jitter(rng, cfg.dims[0]), jitter(rng, cfg.dims[1]), jitter(rng, cfg.dims[2])];
        let dist = uniform(rng, cfg.distance.0, cfg.distance.1);
        // Keep the whole footprint inside the sector.
        let margin = (dims[0] * dims[0] + dims[1] * dims[1]).sqrt() * T::lit(0.5) / dist;
        let az_half = if cfg.horizontal_fov >= T::TAU() { T::PI() } else { half_fov - margin };
        if az_half <= T::zero() {
            continue;
        }
        let az = uniform(rng, -az_half, az_half);
        let yaw = uniform(rng, -T::PI(), T::PI());
        let center = [dist * az.cos(), dist * az.sin(), cfg.ground_z + dims[2] * T::lit(0.5)];
        let b = Box3D::new(center, dims, yaw);
        // Half a metre of clearance between footprints.
        let grown = Box3D::new(center, [dims[0] + T::one(), dims[1] + T::one(), dims[2]], yaw);
        if boxes.iter().all(|o| iou_bev(o, &grown) == T::zero()) {
            boxes.push(b);
        }
    }
    boxes
}

fn surface_point<T: Real, R: Rng + ?Sized>(b: &Box3D<T>, rng: &mut R) -> [T; 3] {
    let h = T::lit(0.49);
    let [l, w, ht] = b.dims();
    let s = |rng: &mut R| uniform(rng, -h, h);
    // Four sides and the roof.
    let local = match rng.random_range(0..5) {
        0 => [l * h, w * s(rng), ht * s(rng)],
        1 => [-l * h, w * s(rng), ht * s(rng)],
        2 => [l * s(rng), w * h, ht * s(rng)],
        3 => [l * s(rng), -w * h, ht * s(rng)],
        _ => [l * s(rng), w * s(rng), ht * h],
    };
    b.to_world(local)
}

/// One seeded frame with labels carrying interior point counts.
pub fn synthetic_frame<T: Real, R: Rng + ?Sized>(id: &str, cfg: &SyntheticConfig<T>, rng: &mut R) -> Frame<T> {
    let boxes = random_boxes(cfg, rng);
    let mut points = Vec::with_capacity(cfg.ground_points + boxes.len() * cfg.points_per_object);
    for b in &boxes {
        for _ in 0..cfg.points_per_object {
            let p = surface_point(b, rng);
            points.push(make_point(rng, p, cfg.elongation));
        }
    }
    let half = cfg.horizontal_fov * T::lit(0.5);
    let mut placed = 0;
    while placed < cfg.ground_points {
        let az = uniform(rng, -half, half);
        let r = uniform(rng, T::lit(3.0), T::lit(70.0));
        let z = cfg.ground_z + uniform(rng, T::lit(-0.02), T::lit(0.02));
        let p = [r * az.cos(), r * az.sin(), z];
        placed += 1;
        if boxes.iter().any(|b| b.contains(p, T::lit(0.05))) {
            continue;
        }
        points.push(make_point(rng, p, cfg.elongation));
    }
    let cloud = PointCloud::new(points);
    let labels = boxes
        .iter()
        .map(|b| GroundTruth::new(*b, cfg.class.clone()).with_points(interior_points(&cloud, b)))
        .collect();
    Frame {
        id: id.to_string(),
        cloud,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frames_are_seeded() {
        let cfg = SyntheticConfig::<f64>::kitti();
        let a = synthetic_frame("a", &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = synthetic_frame("a", &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(!a.labels.is_empty());
    }

    #[test]
    fn objects_do_not_overlap_and_hold_points() {
        let cfg = SyntheticConfig::<f64>::kitti();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let f = synthetic_frame("f", &cfg, &mut rng);
            for (i, a) in f.labels.iter().enumerate() {
                assert!(a.num_points.unwrap() >= cfg.points_per_object);
                let az = a.bbox.cy.atan2(a.bbox.cx).abs();
                assert!(az < 40f64.to_radians());
                for b in &f.labels[i + 1..] {
                    assert_eq!(iou_bev(&a.bbox, &b.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn random_cloud_stays_in_sector() {
        let c = random_cloud(500, &mut ChaCha8Rng::seed_from_u64(1), 50.0, std::f64::consts::FRAC_PI_2);
        assert_eq!(c.len(), 500);
        assert!(c.iter().all(|p| p.y.atan2(p.x).abs() <= std::f64::consts::FRAC_PI_4 && p.range() >= 0.9));
    }
}
