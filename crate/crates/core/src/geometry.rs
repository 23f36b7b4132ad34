//! Depth/disparity conversion and candidate depth levels for a rectified rig.

use crate::error::{Error, Result};
use crate::types::{DepthMap, DisparityMap, StereoCalib};

/// `d = f * b / z`.
pub fn depth_to_disparity(z: f64, calib: &StereoCalib) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Domain(format!("depth must be positive, got {z}")));
    }
    Ok(calib.focal_baseline() / z)
}

/// `z = f * b / d`.
pub fn disparity_to_depth(d: f64, calib: &StereoCalib) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Domain(format!(
            "disparity must be positive, got {d}"
        )));
    }
    Ok(calib.focal_baseline() / d)
}

/// Candidate depth of level `w`: `w * v_d + z_min`.
pub fn depth_level(w: usize, calib: &StereoCalib) -> Result<f64> {
    if w >= calib.num_levels {
        return Err(Error::Index {
            index: w,
            len: calib.num_levels,
        });
    }
    Ok(w as f64 * calib.depth_interval + calib.z_min)
}

/// All candidate depths, nearest first.
pub fn depth_levels(calib: &StereoCalib) -> Vec<f64> {
    (0..calib.num_levels)
        .map(|w| w as f64 * calib.depth_interval + calib.z_min)
        .collect()
}

/// Horizontal shift, in feature pixels, that aligns right features with
/// left features under the depth hypothesis of level `w`:
/// `f * b / (depth_level(w) * S)`.
pub fn reprojection_offset(w: usize, calib: &StereoCalib) -> Result<f64> {
    let z = depth_level(w, calib)?;
    Ok(calib.focal_baseline() / (z * calib.stride as f64))
}

/// Offsets for every level, in level order.
pub fn reprojection_offsets(calib: &StereoCalib) -> Vec<f64> {
    let fb = calib.focal_baseline();
    let s = calib.stride as f64;
    depth_levels(calib)
        .into_iter()
        .map(|z| fb / (z * s))
        .collect()
}

/// Per-pixel conversion. The mask is carried over unchanged.
pub fn depth_map_to_disparity(depth: &DepthMap, calib: &StereoCalib) -> Result<DisparityMap> {
    let values = depth
        .values()
        .iter()
        .zip(depth.valid())
        .map(|(&z, &ok)| {
            if ok {
                depth_to_disparity(z, calib)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DisparityMap::new(
        depth.width(),
        depth.height(),
        values,
        depth.valid().to_vec(),
    )
}

/// Per-pixel conversion. Zero disparity has no finite depth, so those pixels
/// become invalid; every other pixel keeps its mask bit.
pub fn disparity_map_to_depth(disp: &DisparityMap, calib: &StereoCalib) -> Result<DepthMap> {
    let mut valid = disp.valid().to_vec();
    let mut values = Vec::with_capacity(valid.len());
    for (&d, ok) in disp.values().iter().zip(valid.iter_mut()) {
        if *ok && d > 0.0 {
            values.push(disparity_to_depth(d, calib)?);
        } else {
            *ok = false;
            values.push(0.0);
        }
    }
    DepthMap::new(disp.width(), disp.height(), values, valid)
}
