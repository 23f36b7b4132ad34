//! Plane-sweep stereo volume, per-pixel depth distribution, soft depth
//! regression and the training losses built on it.

use crate::error::{Error, Result};
use crate::geometry::{depth_levels, reprojection_offset, reprojection_offsets};
use crate::types::{CostVolume, DepthMap, FeatureMap, StereoCalib};

/// Pre-softmax matching scores, `W x H x N_d`, stored `(row, column, level)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    width: usize,
    height: usize,
    levels: usize,
    scores: Vec<f64>,
}

impl ScoreVolume {
    pub fn from_vec(width: usize, height: usize, levels: usize, scores: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || levels == 0 {
            return Err(Error::Dimension(format!(
                "zero-sized score volume {width}x{height}x{levels}"
            )));
        }
        if scores.len() != width * height * levels {
            return Err(Error::Dimension(format!(
                "{} scores for a {width}x{height}x{levels} volume",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("score volume"));
        }
        Ok(Self {
            width,
            height,
            levels,
            scores,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Per-pixel probability over depth levels, `(row, column, level)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDistribution {
    width: usize,
    height: usize,
    levels: usize,
    p: Vec<f64>,
}

impl DepthDistribution {
    /// Accepts probabilities that are non-negative and sum to 1 (within
    /// 1e-9) at every pixel.
    pub fn from_vec(width: usize, height: usize, levels: usize, p: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || levels == 0 || p.len() != width * height * levels {
            return Err(Error::Dimension(format!(
                "{} probabilities for a {width}x{height}x{levels} distribution",
                p.len()
            )));
        }
        for (i, px) in p.chunks_exact(levels).enumerate() {
            if px.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "pixel {i} has a negative or non-finite probability"
                )));
            }
            let total: f64 = px.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "pixel {i} probabilities sum to {total}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            levels,
            p,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Distribution over levels at one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.levels;
        &self.p[start..start + self.levels]
    }
}

/// Samples `F_R` at column `u - offset` for every output column `u`.
/// Fractional positions interpolate linearly between the two neighbouring
/// columns; a neighbour outside `[0, W-1]` contributes zero.
pub fn reproject_right_by_offset(right: &FeatureMap, offset: f64) -> Result<FeatureMap> {
    if !offset.is_finite() {
        return Err(Error::NonFinite("reprojection offset"));
    }
    let shape = right.shape();
    let (w, h, ch) = (shape.width, shape.height, shape.channels);
    let mut out = vec![0.0; shape.len()];
    for u in 0..w {
        let src = u as f64 - offset;
        let base = src.floor();
        let t = src - base;
        let c0 = base as i64;
        let tap = |c: i64| (c >= 0 && c < w as i64).then_some(c as usize);
        let (a, b) = (tap(c0), tap(c0 + 1));
        for r in 0..h {
            for k in 0..ch {
                let va = a.map_or(0.0, |c| right.at(r, c, k));
                let v = if t == 0.0 {
                    va
                } else {
                    let vb = b.map_or(0.0, |c| right.at(r, c, k));
                    (1.0 - t) * va + t * vb
                };
                out[right.index(r, u, k)] = v;
            }
        }
    }
    Ok(FeatureMap::from_raw(shape, out))
}

/// Right features warped onto the left view under the depth hypothesis of
/// level `w`.
pub fn reproject_right(right: &FeatureMap, calib: &StereoCalib, w: usize) -> Result<FeatureMap> {
    reproject_right_by_offset(right, reprojection_offset(w, calib)?)
}

/// Builds `V(u, v, w) = [F_L(u, v), F_{R->L,w}(u, v)]` with one level per
/// entry of `offsets`.
pub fn build_stereo_volume_with_offsets(
    left: &FeatureMap,
    right: &FeatureMap,
    offsets: &[f64],
) -> Result<CostVolume> {
    left.ensure_same_shape(right)?;
    if offsets.is_empty() {
        return Err(Error::Dimension(
            "volume needs at least one depth level".into(),
        ));
    }
    let shape = left.shape();
    let (w, h, c) = (shape.width, shape.height, shape.channels);
    let levels = offsets.len();
    let reprojected = offsets
        .iter()
        .map(|&o| reproject_right_by_offset(right, o))
        .collect::<Result<Vec<_>>>()?;

    let mut data = Vec::with_capacity(w * h * levels * 2 * c);
    for r in 0..h {
        for col in 0..w {
            let at = left.index(r, col, 0);
            for level in &reprojected {
                data.extend_from_slice(&left.data()[at..at + c]);
                data.extend_from_slice(&level.data()[at..at + c]);
            }
        }
    }
    CostVolume::from_vec(w, h, levels, 2 * c, data)
}

/// Plane-sweep volume over the calibration's candidate depth levels.
pub fn build_stereo_volume(
    left: &FeatureMap,
    right: &FeatureMap,
    calib: &StereoCalib,
) -> Result<CostVolume> {
    build_stereo_volume_with_offsets(left, right, &reprojection_offsets(calib))
}

/// Softmax over the depth axis at every pixel, stabilized by subtracting the
/// per-pixel maximum.
pub fn depth_distribution(scores: &ScoreVolume) -> DepthDistribution {
    let n = scores.levels;
    let mut p = Vec::with_capacity(scores.scores.len());
    for px in scores.scores.chunks_exact(n) {
        let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = p.len();
        p.extend(px.iter().map(|&s| (s - max).exp()));
        let total: f64 = p[start..].iter().sum();
        for v in &mut p[start..] {
            *v /= total;
        }
    }
    DepthDistribution {
        width: scores.width,
        height: scores.height,
        levels: n,
        p,
    }
}

/// Expected depth `sum_w p(w) * depth_level(w)` per pixel, clamped to the
/// candidate range to absorb rounding.
pub fn soft_depth_regression(dist: &DepthDistribution, calib: &StereoCalib) -> Result<DepthMap> {
    if dist.levels != calib.num_levels {
        return Err(Error::Dimension(format!(
            "distribution has {} levels, calibration has {}",
            dist.levels, calib.num_levels
        )));
    }
    let zs = depth_levels(calib);
    let (lo, hi) = (zs[0], zs[zs.len() - 1]);
    let values = dist
        .p
        .chunks_exact(dist.levels)
        .map(|px| {
            px.iter()
                .zip(&zs)
                .map(|(p, z)| p * z)
                .sum::<f64>()
                .clamp(lo, hi)
        })
        .collect();
    DepthMap::from_values(dist.width, dist.height, values)
}

/// Smooth-L1 with `beta = 1`.
pub fn smooth_l1(residual: f64) -> f64 {
    let a = residual.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthLoss {
    pub value: f64,
    /// Pixels valid in both maps. Zero means `value` is a placeholder 0.
    pub pixels: usize,
}

/// Mean smooth-L1 depth error over pixels valid in both maps.
pub fn depth_loss(pred: &DepthMap, gt: &DepthMap) -> Result<DepthLoss> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(gt.shape(), pred.shape()));
    }
    let mut sum = 0.0;
    let mut pixels = 0usize;
    for i in 0..pred.values().len() {
        if pred.valid()[i] && gt.valid()[i] {
            sum += smooth_l1(pred.values()[i] - gt.values()[i]);
            pixels += 1;
        }
    }
    let value = if pixels == 0 {
        0.0
    } else {
        sum / pixels as f64
    };
    Ok(DepthLoss { value, pixels })
}

/// The three training-loss terms. Distillation is supplied externally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub detection: f64,
    pub depth: f64,
    pub distillation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub detection: f64,
    pub depth: f64,
    pub distillation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            detection: 1.0,
            depth: 1.0,
            distillation: 1.0,
        }
    }
}

impl LossWeights {
    /// Weights where the depth term is an on/off switch.
    pub fn strict(detection: f64, depth: f64, distillation: f64) -> Result<Self> {
        if depth != 0.0 && depth != 1.0 {
            return Err(Error::Domain(format!(
                "depth-loss weight must be 0 or 1, got {depth}"
            )));
        }
        Ok(Self {
            detection,
            depth,
            distillation,
        })
    }
}

/// `λ_d L_d + λ_dep L_depth + λ_kd L_kd`. A zero weight drops its term
/// entirely.
pub fn combined_loss(parts: &LossComponents, weights: &LossWeights) -> Result<f64> {
    let all = [
        parts.detection,
        parts.depth,
        parts.distillation,
        weights.detection,
        weights.depth,
        weights.distillation,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "loss terms and weights must be finite".into(),
        ));
    }
    let term = |w: f64, v: f64| if w == 0.0 { 0.0 } else { w * v };
    Ok(term(weights.detection, parts.detection)
        + term(weights.depth, parts.depth)
        + term(weights.distillation, parts.distillation))
}
