//! Image-level virtual right view: flying-pixel sharpening of the disparity
//! map followed by forward warping of the left image.

use crate::error::{Error, Result};
use crate::geometry::depth_map_to_disparity;
use crate::types::{
    DepthMap, DisparityMap, FeatureMap, PixelMask, RasterImage, Shape, StereoCalib,
};

/// Passes of detect-and-replace attempted before sharpening gives up.
pub const MAX_SHARPEN_PASSES: usize = 8;

/// How two source pixels landing on the same target are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionRule {
    /// Larger disparity (nearer surface) overwrites smaller, like a z-buffer.
    #[default]
    ForegroundWins,
}

/// What happens to target pixels no source wrote to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HoleFill {
    /// Holes hold 0 and stay flagged in the hole mask.
    #[default]
    MaskOnly,
    /// Holes hold 0 and the hole mask is cleared.
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpConfig {
    pub sobel_threshold: f64,
    pub collision_rule: CollisionRule,
    pub hole_fill: HoleFill,
    /// Run flying-pixel sharpening before warping.
    pub sharpen: bool,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            sobel_threshold: 3.0,
            collision_rule: CollisionRule::ForegroundWins,
            hole_fill: HoleFill::MaskOnly,
            sharpen: true,
        }
    }
}

impl WarpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sobel_threshold.is_finite() && self.sobel_threshold > 0.0) {
            return Err(Error::Domain(format!(
                "sobel threshold must be positive, got {}",
                self.sobel_threshold
            )));
        }
        Ok(())
    }
}

/// Sobel gradient magnitude `sqrt(gx^2 + gy^2)` of the stored disparity
/// values (invalid pixels read as 0), with replicate padding at the border.
///
/// `gx` uses `[-1 0 1; -2 0 2; -1 0 1]`, `gy` its transpose.
pub fn sobel_magnitude(disp: &DisparityMap) -> Result<FeatureMap> {
    let (w, h) = (disp.width(), disp.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "sobel needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let px = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        disp.at(r, c)
    };
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (px(r - 1, c + 1) - px(r - 1, c - 1))
                + 2.0 * (px(r, c + 1) - px(r, c - 1))
                + (px(r + 1, c + 1) - px(r + 1, c - 1));
            let gy = (px(r + 1, c - 1) - px(r - 1, c - 1))
                + 2.0 * (px(r + 1, c) - px(r - 1, c))
                + (px(r + 1, c + 1) - px(r - 1, c + 1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(FeatureMap::from_raw(Shape::plane(w, h), out))
}

/// Pixels whose Sobel response exceeds the configured threshold.
pub fn detect_flying_pixels(disp: &DisparityMap, config: &WarpConfig) -> Result<PixelMask> {
    config.validate()?;
    let mag = sobel_magnitude(disp)?;
    let bits = mag
        .data()
        .iter()
        .map(|&m| m > config.sobel_threshold)
        .collect();
    PixelMask::new(disp.width(), disp.height(), bits)
}

/// Result of one or more sharpening passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sharpened {
    pub disparity: DisparityMap,
    /// Detect-and-replace passes applied to the output.
    pub passes: usize,
    /// Flagged pixels left unchanged because their row had no usable
    /// replacement, summed over passes.
    pub unresolved: usize,
    /// Flying pixels remaining in the output under re-detection.
    pub remaining: usize,
    /// `false` only when the pass limit was hit while still improving.
    pub converged: bool,
}

/// Replaces every masked pixel with the disparity of the nearest unmasked,
/// valid pixel in the same row. Equidistant candidates resolve to the larger
/// disparity. Returns the new map and the number of masked pixels whose row
/// offered no candidate (those keep their value).
pub fn sharpen_disparity(disp: &DisparityMap, mask: &PixelMask) -> Result<(DisparityMap, usize)> {
    if mask.shape() != disp.shape() {
        return Err(Error::shape(disp.shape(), mask.shape()));
    }
    let (w, h) = (disp.width(), disp.height());
    let mut values = disp.values().to_vec();
    let mut valid = disp.valid().to_vec();
    let mut unresolved = 0;
    let usable = |r: usize, c: usize| !mask.get(r, c) && disp.is_valid(r, c);

    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut found = None;
            for dist in 1..w {
                let left = c.checked_sub(dist).filter(|&x| usable(r, x));
                let right = Some(c + dist).filter(|&x| x < w && usable(r, x));
                found = match (left, right) {
                    (Some(a), Some(b)) => Some(disp.at(r, a).max(disp.at(r, b))),
                    (Some(a), None) => Some(disp.at(r, a)),
                    (None, Some(b)) => Some(disp.at(r, b)),
                    (None, None) => continue,
                };
                break;
            }
            match found {
                Some(d) => {
                    let i = disp.index(r, c);
                    values[i] = d;
                    valid[i] = true;
                }
                None => unresolved += 1,
            }
        }
    }
    Ok((DisparityMap::new(w, h, values, valid)?, unresolved))
}

/// Detects and replaces flying pixels until none remain, a pass changes
/// nothing, or a pass fails to shrink the flying set (that pass is then
/// discarded). At most [`MAX_SHARPEN_PASSES`] passes are applied.
pub fn sharpen_flying_pixels(disp: &DisparityMap, config: &WarpConfig) -> Result<Sharpened> {
    let mut current = disp.clone();
    let mut mask = detect_flying_pixels(&current, config)?;
    let mut passes = 0;
    let mut unresolved = 0;
    let mut converged = true;

    while !mask.none() {
        if passes == MAX_SHARPEN_PASSES {
            converged = false;
            break;
        }
        let (next, stuck) = sharpen_disparity(&current, &mask)?;
        if next == current {
            break;
        }
        let next_mask = detect_flying_pixels(&next, config)?;
        if next_mask.count() >= mask.count() {
            break;
        }
        current = next;
        mask = next_mask;
        unresolved += stuck;
        passes += 1;
    }

    Ok(Sharpened {
        remaining: mask.count(),
        disparity: current,
        passes,
        unresolved,
        converged,
    })
}

/// Forward warps `left` into the right view: the pixel at column `x` with
/// disparity `d` lands on column `round(x - d)` of the same row. Only pixels
/// with valid disparity are warped. Targets hit by several sources take the
/// source with the largest disparity (ties go to the rightmost source).
pub fn forward_warp(
    left: &RasterImage,
    disp: &DisparityMap,
    config: &WarpConfig,
) -> Result<RasterImage> {
    config.validate()?;
    let (w, h, ch) = (left.width(), left.height(), left.channels());
    if disp.shape() != Shape::plane(w, h) {
        return Err(Error::shape(Shape::plane(w, h), disp.shape()));
    }

    let mut data = vec![0.0; w * h * ch];
    let mut holes = vec![true; w * h];
    // winning disparity per target; rows are independent
    let mut zbuf: Vec<f64> = vec![f64::NEG_INFINITY; w];
    for r in 0..h {
        zbuf.fill(f64::NEG_INFINITY);
        for x in 0..w {
            if !disp.is_valid(r, x) {
                continue;
            }
            let d = disp.at(r, x);
            let target = (x as f64 - d).round();
            if target < 0.0 || target >= w as f64 {
                continue;
            }
            let t = target as usize;
            let wins = match config.collision_rule {
                CollisionRule::ForegroundWins => d >= zbuf[t],
            };
            if wins {
                zbuf[t] = d;
                let dst = (r * w + t) * ch;
                data[dst..dst + ch].copy_from_slice(left.pixel(r, x));
                holes[r * w + t] = false;
            }
        }
    }

    if config.hole_fill == HoleFill::ZeroFill {
        holes.fill(false);
    }
    RasterImage::with_holes(w, h, ch, data, holes)
}

/// Full image-level pipeline: depth to disparity, optional sharpening, then
/// forward warping.
pub fn synthesize_right_view(
    left: &RasterImage,
    depth: &DepthMap,
    calib: &StereoCalib,
    config: &WarpConfig,
) -> Result<RasterImage> {
    let disp = depth_map_to_disparity(depth, calib)?;
    let disp = if config.sharpen {
        sharpen_flying_pixels(&disp, config)?.disparity
    } else {
        disp
    };
    forward_warp(left, &disp, config)
}
