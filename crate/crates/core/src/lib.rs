//! Virtual right-view generation for monocular "pseudo-stereo" pipelines.
//!
//! A single left view is turned into a stereo pair in one of three ways:
//!
//! * image level: depth is converted to disparity, flying pixels at depth
//!   edges are sharpened, and the left image is forward warped
//!   ([`view_synthesis`]);
//! * feature level: left features are filtered by a disparity-wise dynamic
//!   convolution whose per-pixel kernels come from the disparity features
//!   ([`ddc`]);
//! * feature clone: the left features are copied verbatim
//!   ([`feature_clone`]).
//!
//! The resulting pair feeds a plane-sweep stereo volume, a per-pixel depth
//! distribution and a soft depth regression with its loss
//! ([`stereo_volume`]).
//!
//! All grids are stored row-major as `(row, column, channel)` and all
//! arithmetic is done in `f64`.

pub mod ddc;
pub mod error;
pub mod feature_clone;
pub mod geometry;
pub mod io;
pub mod selfcheck;
pub mod stereo_volume;
pub mod synthetic;
pub mod types;
pub mod view_synthesis;

pub use error::{Error, Result};
pub use types::{
    elementwise_stats, CostVolume, DepthMap, DisparityMap, FeatureMap, PixelMask, RasterImage,
    Shape, Stats, StereoCalib,
};
