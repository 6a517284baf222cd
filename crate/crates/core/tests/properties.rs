// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rangekit::augment::{flip_range_image, global_scale, rotate_range_image};
use rangekit::backbone::{build_rangercnn_backbone, propagate_shapes};
use rangekit::boxgeom::{iou_bev, nms, Box3D, Detection, IouMode};
use rangekit::config::PipelineConfig;
use rangekit::eval::{ap_r40, match_frame};
use rangekit::io;
use rangekit::rangeproj::{build_range_image, unproject, LidarPoint, PointCloud, PointStatus, ProjectionSpec};
use rangekit::roipool::{roi_max_pool, RoiGridSpec};
use rangekit::synthetic::random_cloud;
use rangekit::targets::{decode_box, encode_box_folded};
use rangekit::viewtransfer::{gather_point_features, scatter_to_bev, BevSpec};

fn arb_box() -> impl Strategy<Value = Box3D<f64>> {
    (
        -40.0..40.0f64,
        -40.0..40.0f64,
        -2.0..2.0f64,
        0.3..6.0f64,
        0.3..3.0f64,
        0.3..3.0f64,
        -PI..PI,
    )
        .prop_map(|(x, y, z, l, w, h, yaw)| Box3D::new([x, y, z], [l, w, h], yaw))
}

fn arb_cloud(max: usize) -> impl Strategy<Value = PointCloud<f64>> {
    prop::collection::vec(
        (-60.0..60.0f64, -60.0..60.0f64, -4.0..2.0f64, 0.0..1.0f64),
        1..max,
    )
    .prop_map(|v| v.into_iter().map(|(x, y, z, i)| LidarPoint::new(x, y, z, i)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_point_is_accounted_for(cloud in arb_cloud(400)) {
        let spec = ProjectionSpec::full_ring(256, 32, 3f64.to_radians(), 25f64.to_radians());
        let (img, map) = build_range_image(&cloud, &spec).unwrap();
        let kept = map.count(PointStatus::Kept);
        prop_assert_eq!(kept + map.count(PointStatus::Occluded) + map.count(PointStatus::OutOfView), cloud.len());
        prop_assert_eq!(kept, img.valid_count());
        prop_assert!(img.check_consistency(1e-9).is_ok());
        for i in 0..cloud.len() {
            if map.status(i) == PointStatus::Occluded {
                let (u, v) = map.pixel_of(i).unwrap();
                prop_assert!(img.range_at(v, u).unwrap() <= cloud.points[i].range());
            }
        }
    }

    #[test]
    fn reprojecting_an_image_is_idempotent(cloud in arb_cloud(400)) {
        let spec = ProjectionSpec::full_ring(256, 32, 3f64.to_radians(), 25f64.to_radians());
        let (img, _) = build_range_image(&cloud, &spec).unwrap();
        let (again, map) = build_range_image(&unproject(&img), &spec).unwrap();
        prop_assert_eq!(map.count(PointStatus::Kept), img.valid_count());
        prop_assert_eq!(io::encode_range_image(&again), io::encode_range_image(&img));
    }

    #[test]
    fn iou_is_bounded_and_symmetric(a in arb_box(), b in arb_box()) {
        for mode in [IouMode::Bev, IouMode::ThreeD] {
            let ab = mode.iou(&a, &b);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            prop_assert!((ab - mode.iou(&b, &a)).abs() < 1e-9);
        }
        prop_assert!((iou_bev(&a, &a) - 1.0).abs() < 1e-9);
        prop_assert!((iou_bev(&a, &a.flipped()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nms_output_is_sparse_and_maximal(
        boxes in prop::collection::vec((arb_box(), 0.0..1.0f64), 0..60),
        thr in 0.05..0.9f64,
    ) {
        let dets: Vec<Detection<f64>> = boxes.iter().map(|(b, s)| Detection::new(*b, *s, "Car")).collect();
        let kept = nms(&dets, thr, IouMode::Bev);
        for (i, &a) in kept.iter().enumerate() {
            for &b in &kept[i + 1..] {
                prop_assert!(iou_bev(&dets[a].bbox, &dets[b].bbox) <= thr);
            }
        }
        for d in 0..dets.len() {
            if !kept.contains(&d) {
                prop_assert!(kept.iter().any(|&k| dets[k].score >= dets[d].score
                    && iou_bev(&dets[k].bbox, &dets[d].bbox) > thr));
            }
        }
    }

    #[test]
    fn folded_residuals_decode_any_heading(gt in arb_box(), anchor in arb_box()) {
        let (r, bit) = encode_box_folded(&gt, &anchor).unwrap();
        let back = decode_box(&r, &anchor, bit);
        let (g, d) = (gt.to_array(), back.to_array());
        for k in 0..6 {
            prop_assert!((g[k] - d[k]).abs() < 1e-6 * (1.0 + g[k].abs()));
        }
        let dy = (g[6] - d[6] + PI).rem_euclid(2.0 * PI) - PI;
        prop_assert!(dy.abs() < 1e-6);
    }

    #[test]
    fn bev_scatter_conserves_points(seed in any::<u64>(), n in 1usize..2000) {
        let cloud = random_cloud(n, &mut ChaCha8Rng::seed_from_u64(seed), 70.0, PI / 2.0);
        let spec = ProjectionSpec::kitti();
        let (_, map) = build_range_image(&cloud, &spec).unwrap();
        let fmap = Array3::from_shape_fn((48, 512, 3), |(v, u, c)| (v * 512 + u) as f64 + c as f64 * 0.5);
        let pts = gather_point_features(fmap.view(), &map, &cloud).unwrap();
        let bev = scatter_to_bev(&pts, &BevSpec::kitti()).unwrap();
        prop_assert_eq!(bev.total_count() as usize + bev.dropped, pts.len());
        for ((i, j), &c) in bev.counts.indexed_iter() {
            if c == 0 {
                prop_assert!(bev.features.slice(ndarray::s![i, j, ..]).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn pooled_cells_are_bounded_by_member_features(proposal in arb_box(), seed in any::<u64>()) {
        let spec = RoiGridSpec { grid: 4, channels: 3, margin: 0.0 };
        let cloud = random_cloud(300, &mut ChaCha8Rng::seed_from_u64(seed), 5.0, 2.0 * PI);
        let pts: Vec<[f64; 3]> = cloud.iter().map(|p| {
            let q = p.position();
            [q[0] * 0.3 + proposal.cx, q[1] * 0.3 + proposal.cy, q[2] * 0.3 + proposal.cz]
        }).collect();
        let feats = ndarray::Array2::from_shape_fn((pts.len(), 3), |(i, c)| (i * 3 + c) as f64);
        let pooled = roi_max_pool(&pts, feats.view(), &proposal, &spec).unwrap();
        let inside: Vec<usize> = (0..pts.len()).filter(|&i| proposal.contains(pts[i], 0.0)).collect();
        let max_seen = inside.iter().map(|&i| feats[[i, 2]]).fold(0.0f64, f64::max);
        prop_assert!(pooled.values.iter().all(|&v| v <= max_seen));
        let filled = pooled.values.chunks(3).filter(|c| c.iter().any(|&v| v != 0.0)).count();
        prop_assert!(filled <= inside.len());
    }

    #[test]
    fn image_double_flip_and_full_turn(seed in any::<u64>(), k in -4i32..4) {
        let spec = ProjectionSpec::full_ring(360, 16, 3f64.to_radians(), 25f64.to_radians());
        let cloud = random_cloud(500, &mut ChaCha8Rng::seed_from_u64(seed), 40.0, 2.0 * PI);
        let (img, _) = build_range_image(&cloud, &spec).unwrap();
        let twice = flip_range_image(&flip_range_image(&img).unwrap()).unwrap();
        prop_assert_eq!(io::encode_range_image(&twice), io::encode_range_image(&img));
        let theta = f64::from(k) * 2.0 * PI / 360.0 * 45.0;
        let (rot, shift) = rotate_range_image(&img, theta).unwrap();
        prop_assert_eq!(rot.valid_count(), img.valid_count());
        prop_assert_eq!(shift, -(i64::from(k) * 45) as isize);
    }

    #[test]
    fn scaling_round_trips(cloud in arb_cloud(100), boxes in prop::collection::vec(arb_box(), 0..5), s in 0.5..2.0f64) {
        let (c1, b1) = global_scale(&cloud, &boxes, s).unwrap();
        let (c2, b2) = global_scale(&c1, &b1, 1.0 / s).unwrap();
        for (p, q) in cloud.iter().zip(c2.iter()) {
            prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9 && (p.z - q.z).abs() < 1e-9);
        }
        for (a, b) in boxes.iter().zip(&b2) {
            prop_assert!((a.length - b.length).abs() < 1e-9 && a.yaw == b.yaw);
        }
    }

    #[test]
    fn perfect_detections_give_full_ap(boxes in prop::collection::vec(arb_box(), 1..10)) {
        let spaced: Vec<Box3D<f64>> = boxes.iter().enumerate().map(|(i, b)| {
            Box3D::new([b.cx + 100.0 * i as f64, b.cy, b.cz], b.dims(), b.yaw)
        }).collect();
        let dets: Vec<Detection<f64>> = spaced.iter().map(|b| Detection::new(*b, 0.9, "Car")).collect();
        let l = match_frame(&dets, &spaced, 0.7, IouMode::ThreeD);
        prop_assert_eq!(ap_r40(&[l], spaced.len()), Some(1.0));
    }

    #[test]
    fn containers_round_trip(cloud in arb_cloud(200)) {
        let p = Path::new("mem");
        let back = io::parse_velodyne::<f64>(&io::encode_velodyne(&cloud), p).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        for (a, b) in cloud.iter().zip(back.iter()) {
            prop_assert_eq!(a.x as f32, b.x as f32);
            prop_assert_eq!(a.intensity as f32, b.intensity as f32);
        }
        let spec = ProjectionSpec::full_ring(128, 16, 3f64.to_radians(), 25f64.to_radians());
        let (img, _) = build_range_image(&cloud, &spec).unwrap();
        let bytes = io::encode_range_image(&img);
        let decoded = io::decode_range_image::<f64>(&bytes, p).unwrap();
        prop_assert_eq!(io::encode_range_image(&decoded), bytes);
    }

    #[test]
    fn detection_text_round_trips(boxes in prop::collection::vec((arb_box(), 0.0..1.0f64), 0..20)) {
        let dets: Vec<Detection<f64>> = boxes.iter().map(|(b, s)| Detection::new(*b, *s, "Car")).collect();
        let text = io::format_detections(&dets);
        let back: Vec<Detection<f64>> = text.lines().map(|l| l.parse().unwrap()).collect();
        prop_assert_eq!(back, dets);
    }
}

#[test]
fn backbone_handles_waymo_width_after_padding() {
    let plan = build_rangercnn_backbone(6).unwrap();
    assert!(propagate_shapes(&plan, 64, 2650).is_err());
    let (dh, dw) = plan.required_padding(64, 2650);
    assert_eq!((dh, dw), (0, 6));
    assert_eq!(propagate_shapes(&plan, 64, 2656).unwrap().output(), Some((64, 2656, 64)));
}

#[test]
fn config_text_round_trips() {
    for cfg in [PipelineConfig::<f64>::kitti(), PipelineConfig::waymo()] {
        let text = cfg.to_text();
        let back = PipelineConfig::<f64>::parse(&text, Path::new("cfg")).unwrap();
        assert_eq!(back.to_text(), text);
        assert!((back.projection.fov_up - cfg.projection.fov_up).abs() < 1e-12);
        assert_eq!(back.bev, cfg.bev);
        assert_eq!(back.pipeline, cfg.pipeline);
    }
}
