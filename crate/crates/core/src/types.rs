//! Dense-grid data model shared by every module.
//!
//! Every grid is row-major `(row, column, channel)`: the element at row `r`,
//! column `c`, channel `k` of a `W x H x C` grid lives at `(r * W + c) * C + k`.

use std::fmt;
use std::marker::PhantomData;

use crate::error::{Error, Result};

/// Width, height and channel count of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn plane(width: usize, height: usize) -> Self {
        Self::new(width, height, 1)
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.channels == 0 {
            return Err(Error::Dimension(format!("zero-sized grid {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

fn ensure_finite(data: &[f64], what: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Dense `W x H x C` grid of real-valued features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    shape: Shape,
    data: Vec<f64>,
}

impl FeatureMap {
    /// A map with every entry set to `fill`.
    pub fn new(width: usize, height: usize, channels: usize, fill: f64) -> Result<Self> {
        let shape = Shape::new(width, height, channels);
        shape.check_nonzero()?;
        if !fill.is_finite() {
            return Err(Error::NonFinite("feature map fill value"));
        }
        Ok(Self {
            shape,
            data: vec![fill; shape.len()],
        })
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(width, height, channels);
        shape.check_nonzero()?;
        if data.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} values supplied for a {shape} feature map",
                data.len()
            )));
        }
        ensure_finite(&data, "feature map")?;
        Ok(Self { shape, data })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    data.push(f(row, col, ch));
                }
            }
        }
        Self::from_vec(width, height, channels, data)
    }

    /// Internal constructor for kernels whose outputs are finite by construction.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.shape.width + col) * self.shape.channels + ch
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, ch)]
    }

    /// Replaces one entry. Non-finite values are rejected.
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("feature map entry"));
        }
        let i = self.index(row, col, ch);
        self.data[i] = value;
        Ok(())
    }

    /// Errors unless `other` has exactly this map's shape.
    pub fn ensure_same_shape(&self, other: &FeatureMap) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape, other.shape));
        }
        Ok(())
    }

    pub fn stats(&self) -> Result<Stats> {
        elementwise_stats(self.data.iter().copied())
    }
}

/// Unit marker for [`MaskedMap`]; decides which stored values may be valid.
pub trait MapUnit: Copy + fmt::Debug + PartialEq {
    const NAME: &'static str;
    fn admits(value: f64) -> bool;
}

/// Depth in meters. Valid pixels are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meters;

impl MapUnit for Meters {
    const NAME: &'static str = "depth";
    fn admits(value: f64) -> bool {
        value.is_finite() && value > 0.0
    }
}

/// Disparity in pixels. Valid pixels are non-negative; zero is the plane at
/// infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixels;

impl MapUnit for Pixels {
    const NAME: &'static str = "disparity";
    fn admits(value: f64) -> bool {
        value.is_finite() && value >= 0.0
    }
}

/// Single-channel `W x H` grid with an explicit validity mask. Invalid
/// pixels always store `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMap<U: MapUnit> {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    _unit: PhantomData<U>,
}

pub type DepthMap = MaskedMap<Meters>;
pub type DisparityMap = MaskedMap<Pixels>;

impl<U: MapUnit> MaskedMap<U> {
    /// Builds a map from values and an explicit mask. Valid pixels must hold
    /// admissible values; invalid pixels are zeroed.
    pub fn new(
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        Shape::plane(width, height).check_nonzero()?;
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::Dimension(format!(
                "{} values / {} mask entries supplied for a {width}x{height} {} map",
                values.len(),
                valid.len(),
                U::NAME
            )));
        }
        for (v, &ok) in values.iter_mut().zip(&valid) {
            if ok {
                if !U::admits(*v) {
                    return Err(Error::Domain(format!("valid {} pixel holds {v}", U::NAME)));
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
            _unit: PhantomData,
        })
    }

    /// Infers validity from the values: admissible values are valid,
    /// everything else becomes an invalid (zero) pixel.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|&v| U::admits(v)).collect();
        Self::new(width, height, values, valid)
    }

    /// Every pixel valid with the same value.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, vec![value; n], vec![true; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> Shape {
        Shape::plane(self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[self.index(row, col)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Mean and population standard deviation over valid pixels.
    pub fn stats(&self) -> Result<Stats> {
        elementwise_stats(
            self.values
                .iter()
                .zip(&self.valid)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| v),
        )
    }
}

/// Boolean per-pixel mask over a `W x H` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} mask entries for a {width}x{height} grid",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> Shape {
        Shape::plane(self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn none(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Rows holding at least one set pixel.
    pub fn rows_with_any(&self) -> Vec<usize> {
        (0..self.height)
            .filter(|&r| {
                self.bits[r * self.width..(r + 1) * self.width]
                    .iter()
                    .any(|&b| b)
            })
            .collect()
    }
}

/// Rectified stereo rig and depth discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoCalib {
    /// Focal length in pixels.
    pub focal_px: f64,
    /// Baseline in meters.
    pub baseline_m: f64,
    /// Feature-map stride relative to the image.
    pub stride: usize,
    /// Smallest candidate depth in meters.
    pub z_min: f64,
    /// Spacing between candidate depths in meters.
    pub depth_interval: f64,
    /// Number of candidate depth levels.
    pub num_levels: usize,
}

impl StereoCalib {
    pub fn new(
        focal_px: f64,
        baseline_m: f64,
        stride: usize,
        z_min: f64,
        depth_interval: f64,
        num_levels: usize,
    ) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("focal length", focal_px)?;
        positive("baseline", baseline_m)?;
        positive("z_min", z_min)?;
        positive("depth interval", depth_interval)?;
        if stride == 0 {
            return Err(Error::Domain("stride must be at least 1".into()));
        }
        if num_levels == 0 {
            return Err(Error::Domain("need at least one depth level".into()));
        }
        Ok(Self {
            focal_px,
            baseline_m,
            stride,
            z_min,
            depth_interval,
            num_levels,
        })
    }

    /// `f * b`, the disparity-depth product.
    pub fn focal_baseline(&self) -> f64 {
        self.focal_px * self.baseline_m
    }
}

/// `W x H` image with 1 or 3 channels, intensities in `[0, 1]`, and a hole
/// mask marking pixels no source wrote to.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    holes: Vec<bool>,
}

impl RasterImage {
    /// Hole-free image.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_holes(width, height, channels, data, vec![false; width * height])
    }

    pub fn with_holes(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        holes: Vec<bool>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        let shape = Shape::new(width, height, channels);
        shape.check_nonzero()?;
        if data.len() != shape.len() || holes.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} intensities / {} hole flags for a {shape} image",
                data.len(),
                holes.len()
            )));
        }
        for (px, &hole) in data.chunks_exact(channels).zip(&holes) {
            if hole {
                continue;
            }
            if px.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain("image intensity outside [0, 1]".into()));
            }
        }
        ensure_finite(&data, "image")?;
        Ok(Self {
            width,
            height,
            channels,
            data,
            holes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn holes(&self) -> &[bool] {
        &self.holes
    }

    pub fn hole_mask(&self) -> PixelMask {
        PixelMask {
            width: self.width,
            height: self.height,
            bits: self.holes.clone(),
        }
    }

    pub fn is_hole(&self, row: usize, col: usize) -> bool {
        self.holes[row * self.width + col]
    }

    /// The channel values of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Plane-sweep volume of shape `W x H x N_d x 2C`, stored row-major as
/// `(row, column, level, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    levels: usize,
    channels: usize,
    data: Vec<f64>,
}

impl CostVolume {
    pub fn from_vec(
        width: usize,
        height: usize,
        levels: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        Shape::new(width, height, channels).check_nonzero()?;
        if levels == 0 {
            return Err(Error::Dimension(
                "volume needs at least one depth level".into(),
            ));
        }
        if data.len() != width * height * levels * channels {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height}x{levels}x{channels} volume",
                data.len()
            )));
        }
        ensure_finite(&data, "cost volume")?;
        Ok(Self {
            width,
            height,
            levels,
            channels,
            data,
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

    /// Channels per level (twice the feature channel count).
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, level: usize, ch: usize) -> usize {
        ((row * self.width + col) * self.levels + level) * self.channels + ch
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, level: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, level, ch)]
    }

    /// Iterates the entries in channel range `channels` across all pixels and levels.
    pub fn channel_range(
        &self,
        channels: std::ops::Range<usize>,
    ) -> impl Iterator<Item = f64> + '_ {
        let c = self.channels;
        self.data
            .chunks_exact(c)
            .flat_map(move |chunk| chunk[channels.clone()].iter().copied())
    }
}

/// Arithmetic mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Mean and population standard deviation of a stream of values, computed
/// in one pass with Welford's update.
pub fn elementwise_stats(values: impl IntoIterator<Item = f64>) -> Result<Stats> {
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        count += 1;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
    }
    if count == 0 {
        return Err(Error::EmptyStatistics);
    }
    Ok(Stats {
        mean,
        std: (m2 / count as f64).max(0.0).sqrt(),
        count,
    })
}
