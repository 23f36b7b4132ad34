//! Seeded synthetic inputs so every pipeline can run without external data.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::types::{DepthMap, DisparityMap, FeatureMap, RasterImage, StereoCalib};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Features drawn uniformly from `[-1, 1)`.
pub fn uniform_features(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<FeatureMap> {
    FeatureMap::from_fn(width, height, channels, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Image with 8-bit quantized intensities, so it survives a PGM/PPM round
/// trip unchanged.
pub fn random_image(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<RasterImage> {
    let data = (0..width * height * channels)
        .map(|_| rng.gen_range(0u8..=255) as f64 / 255.0)
        .collect();
    RasterImage::new(width, height, channels, data)
}

/// Fully valid disparity map drawn uniformly from `range`.
pub fn random_disparity(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    range: Range<f64>,
) -> Result<DisparityMap> {
    let values = (0..width * height)
        .map(|_| rng.gen_range(range.clone()))
        .collect();
    DisparityMap::new(width, height, values, vec![true; width * height])
}

/// Background plane at `z_far` with a full-height near strip at `z_near`
/// covering columns `strip`.
pub fn two_plane_depth(
    width: usize,
    height: usize,
    strip: Range<usize>,
    z_near: f64,
    z_far: f64,
) -> Result<DepthMap> {
    let values = (0..width * height)
        .map(|i| {
            if strip.contains(&(i % width)) {
                z_near
            } else {
                z_far
            }
        })
        .collect();
    DepthMap::new(width, height, values, vec![true; width * height])
}

/// Depth whose disparity is exactly `disparity` under `calib`.
pub fn depth_for_disparity(disparity: f64, calib: &StereoCalib) -> f64 {
    calib.focal_baseline() / disparity
}

/// A small rig with `f * b = 64` and integer offsets at the first levels.
pub fn desk_calib() -> StereoCalib {
    StereoCalib::new(64.0, 1.0, 1, 8.0, 8.0, 5).expect("valid constants")
}
