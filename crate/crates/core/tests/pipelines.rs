use pseudo_stereo::ddc::{
    ddc_forward_gridshift, ddc_forward_naive, generate_virtual_right_features,
    DisparityNormalization,
};
use pseudo_stereo::feature_clone::clone_features;
use pseudo_stereo::geometry::depth_map_to_disparity;
use pseudo_stereo::stereo_volume::build_stereo_volume;
use pseudo_stereo::synthetic::{self, desk_calib};
use pseudo_stereo::view_synthesis::{forward_warp, synthesize_right_view, WarpConfig};
use pseudo_stereo::{DisparityMap, FeatureMap};
use sha2::{Digest, Sha256};

fn digest(map: &FeatureMap) -> Vec<u8> {
    let mut h = Sha256::new();
    for v in map.data() {
        h.update(v.to_le_bytes());
    }
    h.finalize().to_vec()
}

#[test]
fn clone_of_large_map_hashes_identically() {
    let mut rng = synthetic::rng(11);
    let left = synthetic::uniform_features(&mut rng, 1024, 256, 32).unwrap();
    let before = digest(&left);
    let right = clone_features(&left);
    assert_ne!(left.data().as_ptr(), right.data().as_ptr());
    assert_eq!(digest(&right), before);
    assert_eq!(digest(&left), before);
}

#[test]
fn two_plane_disocclusion_band() {
    let calib = desk_calib();
    let near = synthetic::depth_for_disparity(4.0, &calib);
    let far = synthetic::depth_for_disparity(2.0, &calib);
    let depth = synthetic::two_plane_depth(32, 6, 10..18, near, far).unwrap();
    let left = synthetic::random_image(&mut synthetic::rng(3), 32, 6, 3).unwrap();
    let config = WarpConfig {
        sharpen: false,
        ..WarpConfig::default()
    };
    let right = synthesize_right_view(&left, &depth, &calib, &config).unwrap();

    // strip moves 4 left, background 2 left: a 2-column gap opens behind
    // the strip's right edge and another at the right border
    for r in 0..6 {
        let holes: Vec<usize> = (0..32).filter(|&c| right.is_hole(r, c)).collect();
        assert_eq!(holes, vec![14, 15, 30, 31], "row {r}");
        for c in 6..14 {
            assert_eq!(right.pixel(r, c), left.pixel(r, c + 4));
        }
        for c in (0..6).chain(16..30) {
            assert_eq!(right.pixel(r, c), left.pixel(r, c + 2));
        }
    }
}

#[test]
fn sharpened_two_plane_scene_keeps_band() {
    let calib = desk_calib();
    let near = synthetic::depth_for_disparity(4.0, &calib);
    let far = synthetic::depth_for_disparity(2.0, &calib);
    let depth = synthetic::two_plane_depth(32, 6, 10..18, near, far).unwrap();
    let left = synthetic::random_image(&mut synthetic::rng(4), 32, 6, 1).unwrap();
    let plain = synthesize_right_view(
        &left,
        &depth,
        &calib,
        &WarpConfig {
            sharpen: false,
            ..Default::default()
        },
    )
    .unwrap();
    let sharp = synthesize_right_view(&left, &depth, &calib, &WarpConfig::default()).unwrap();
    // a clean two-level step has magnitude 8 at its edges but no
    // intermediate values, so replacement leaves it unchanged
    assert_eq!(plain, sharp);
}

#[test]
fn nearer_surface_never_occluded_by_farther() {
    let mut rng = synthetic::rng(21);
    for _ in 0..50 {
        let disp = synthetic::random_disparity(&mut rng, 24, 3, 0.0..8.0).unwrap();
        let image = synthetic::random_image(&mut rng, 24, 3, 1).unwrap();
        let out = forward_warp(&image, &disp, &WarpConfig::default()).unwrap();
        for r in 0..3 {
            for c in 0..24 {
                let hits: Vec<usize> = (0..24)
                    .filter(|&x| x as i64 - disp.at(r, x).round() as i64 == c as i64)
                    .collect();
                assert_eq!(out.is_hole(r, c), hits.is_empty());
                if let Some(&winner) = hits.iter().max_by(|&&a, &&b| {
                    disp.at(r, a)
                        .partial_cmp(&disp.at(r, b))
                        .unwrap()
                        .then(a.cmp(&b))
                }) {
                    assert_eq!(out.pixel(r, c), image.pixel(r, winner));
                }
            }
        }
    }
}

#[test]
fn ddc_is_local_to_three_by_three() {
    let mut rng = synthetic::rng(5);
    let left = synthetic::uniform_features(&mut rng, 9, 7, 2).unwrap();
    let kernel = synthetic::uniform_features(&mut rng, 9, 7, 2).unwrap();
    let base = ddc_forward_gridshift(&left, &kernel).unwrap();
    let mut bumped = left.clone();
    bumped.set(3, 4, 1, left.at(3, 4, 1) + 0.5).unwrap();
    let moved = ddc_forward_gridshift(&bumped, &kernel).unwrap();
    for r in 0..7usize {
        for c in 0..9usize {
            for ch in 0..2 {
                let inside = ch == 1 && r.abs_diff(3) <= 1 && c.abs_diff(4) <= 1;
                if !inside {
                    assert_eq!(base.at(r, c, ch), moved.at(r, c, ch), "({r},{c},{ch})");
                }
            }
        }
    }
}

#[test]
fn ddc_additive_in_left_features() {
    let mut rng = synthetic::rng(6);
    let a = synthetic::uniform_features(&mut rng, 6, 5, 3).unwrap();
    let b = synthetic::uniform_features(&mut rng, 6, 5, 3).unwrap();
    let k = synthetic::uniform_features(&mut rng, 6, 5, 3).unwrap();
    let sum = FeatureMap::from_vec(
        6,
        5,
        3,
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
    .unwrap();
    let lhs = ddc_forward_naive(&sum, &k).unwrap();
    let ra = ddc_forward_naive(&a, &k).unwrap();
    let rb = ddc_forward_naive(&b, &k).unwrap();
    for i in 0..lhs.data().len() {
        let rhs = ra.data()[i] + rb.data()[i];
        assert!((lhs.data()[i] - rhs).abs() <= 1e-14, "{i}");
    }
}

#[test]
fn feature_and_clone_pipelines_feed_the_volume() {
    let calib = desk_calib();
    let mut rng = synthetic::rng(8);
    let left = synthetic::uniform_features(&mut rng, 12, 6, 4).unwrap();
    let disp = DisparityMap::constant(12, 6, 33.20).unwrap();
    let right =
        generate_virtual_right_features(&left, &disp, &DisparityNormalization::default()).unwrap();
    assert!(right.data().iter().all(|&v| v == 0.0));

    let vol = build_stereo_volume(&left, &clone_features(&left), &calib).unwrap();
    assert_eq!((vol.levels(), vol.channels()), (calib.num_levels, 8));

    let depth = synthetic::two_plane_depth(12, 6, 0..12, 16.0, 16.0).unwrap();
    let d = depth_map_to_disparity(&depth, &calib).unwrap();
    assert!(d.values().iter().all(|&v| v == 4.0));
}
