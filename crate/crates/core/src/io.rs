//! File formats: PFM float maps, binary PGM/PPM images, `key = value`
//! calibration files and the PSFM container for feature maps and volumes.
//!
//! Every format has a byte-level `encode_*`/`decode_*` pair; the path-level
//! wrappers add file I/O. Writers go through a temporary file in the target
//! directory and an atomic rename, so a failed write never leaves a partial
//! file behind.
//!
//! PSFM layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PSFM"
//! 4       2     version: 1 = feature map, 2 = cost volume
//! 6       4     width
//! 10      4     height
//! 14      4     channels
//! 18      4     depth levels (version 2 only)
//! ..      1     dtype: 0 = f32, 1 = f64
//! ..            payload, row-major (row, column, [level,] channel)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{
    CostVolume, FeatureMap, MapUnit, MaskedMap, PixelMask, RasterImage, StereoCalib,
};

pub const PSFM_MAGIC: &[u8; 4] = b"PSFM";
pub const PSFM_VERSION_FEATURES: u16 = 1;
pub const PSFM_VERSION_VOLUME: u16 = 2;

/// Element type of a PSFM payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8, offset: usize) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::format(offset, format!("unknown dtype code {other}"))),
        }
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Whitespace-separated header tokens of PFM/PNM files.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: bool,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8], comments: bool) -> Self {
        Self {
            bytes,
            pos: 0,
            comments,
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if self.comments && b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(&'a str, usize)> {
        self.skip_space();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("missing {what}")));
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start, format!("{what} is not ASCII")))?;
        Ok((tok, start))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (tok, at) = self.token(what)?;
        tok.parse()
            .map_err(|_| Error::format(at, format!("bad {what} `{tok}`")))
    }

    fn dimension(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v: usize = self.number(what)?;
        if v == 0 {
            return Err(Error::format(at, format!("{what} is zero")));
        }
        Ok(v)
    }

    /// Consumes the single whitespace byte separating header and payload.
    fn end_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::format(
                self.pos,
                "header not terminated by whitespace",
            )),
        }
    }
}

fn payload(bytes: &[u8], start: usize, elems: usize, size: usize) -> Result<&[u8]> {
    let need = elems
        .checked_mul(size)
        .ok_or_else(|| Error::format(start, "payload size overflows"))?;
    let have = bytes.len() - start;
    if have < need {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: expected {need} bytes, found {have}"),
        ));
    }
    if have > need {
        return Err(Error::format(
            start + need,
            format!("{} trailing bytes after payload", have - need),
        ));
    }
    Ok(&bytes[start..])
}

// ---------------------------------------------------------------- PFM

/// Decoded single-channel PFM: width, height and values in top-down row order.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut cur = HeaderCursor::new(bytes, false);
    let (magic, at) = cur.token("magic")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(Error::Unsupported("three-channel PFM (PF)".into())),
        _ => return Err(Error::format(at, format!("bad PFM magic `{magic}`"))),
    }
    let width = cur.dimension("width")?;
    let height = cur.dimension("height")?;
    let scale_at = cur.pos;
    let scale: f32 = cur.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(
            scale_at,
            "PFM scale must be finite and non-zero",
        ));
    }
    let little = scale < 0.0;
    let start = cur.end_header()?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(start, "image size overflows"))?;
    let raw = payload(bytes, start, n, 4)?;

    let mut values = vec![0f32; n];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        // file rows run bottom to top
        let (file_row, col) = (i / width, i % width);
        values[(height - 1 - file_row) * width + col] = v;
    }
    Ok(PfmImage {
        width,
        height,
        values,
    })
}

/// Little-endian PFM (negative scale).
pub fn encode_pfm(image: &PfmImage) -> Vec<u8> {
    let (w, h) = (image.width, image.height);
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for v in &image.values[row * w..(row + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// A masked map stored in a PFM: non-positive or non-finite values mark
/// invalid pixels.
pub fn decode_masked_pfm<U: MapUnit>(bytes: &[u8]) -> Result<MaskedMap<U>> {
    let img = decode_pfm(bytes)?;
    let values: Vec<f64> = img.values.iter().map(|&v| v as f64).collect();
    let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
    MaskedMap::new(img.width, img.height, values, valid)
}

/// Invalid pixels are stored as 0.
pub fn encode_masked_pfm<U: MapUnit>(map: &MaskedMap<U>) -> Vec<u8> {
    encode_pfm(&PfmImage {
        width: map.width(),
        height: map.height(),
        values: map.values().iter().map(|&v| v as f32).collect(),
    })
}

pub fn read_depth_pfm(path: &Path) -> Result<crate::types::DepthMap> {
    decode_masked_pfm(&fs::read(path)?)
}

pub fn write_depth_pfm(map: &crate::types::DepthMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_masked_pfm(map))
}

pub fn read_disparity_pfm(path: &Path) -> Result<crate::types::DisparityMap> {
    decode_masked_pfm(&fs::read(path)?)
}

pub fn write_disparity_pfm(map: &crate::types::DisparityMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_masked_pfm(map))
}

// ---------------------------------------------------------------- PGM / PPM

/// Binary PGM (P5) or PPM (P6) with maxval 255, mapped to `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<RasterImage> {
    let mut cur = HeaderCursor::new(bytes, true);
    let (magic, at) = cur.token("magic")?;
    let channels = match magic {
        "P5" => 1,
        "P6" => 3,
        "P1" | "P2" | "P3" | "P4" | "P7" => {
            return Err(Error::Unsupported(format!("netpbm variant {magic}")))
        }
        _ => return Err(Error::format(at, format!("bad netpbm magic `{magic}`"))),
    };
    let width = cur.dimension("width")?;
    let height = cur.dimension("height")?;
    let maxval: u32 = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "maxval {maxval}, only 255 is supported"
        )));
    }
    let start = cur.end_header()?;
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(start, "image size overflows"))?;
    let raw = payload(bytes, start, n, 1)?;
    let data = raw.iter().map(|&b| b as f64 / 255.0).collect();
    RasterImage::new(width, height, channels, data)
}

/// Quantizes to 8 bits; hole pixels are written as 0.
pub fn encode_pnm(image: &RasterImage) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    let ch = image.channels();
    for (px, &hole) in image.data().chunks_exact(ch).zip(image.holes()) {
        for &v in px {
            out.push(if hole {
                0
            } else {
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            });
        }
    }
    out
}

pub fn read_image(path: &Path) -> Result<RasterImage> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_image(image: &RasterImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pnm(image))
}

/// PGM of a mask: 255 where set, 0 elsewhere.
pub fn encode_mask_pgm(mask: &PixelMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn write_mask_pgm(mask: &PixelMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask_pgm(mask))
}

// ---------------------------------------------------------------- calibration

pub const CALIB_KEYS: [&str; 6] = [
    "focal_px",
    "baseline_m",
    "stride",
    "z_min_m",
    "depth_interval_m",
    "num_depth_levels",
];

/// Parses `key = value` lines. Blank lines and `#` comments are ignored;
/// unknown or repeated keys are errors.
pub fn parse_calib(text: &str) -> Result<StereoCalib> {
    let mut values: [Option<&str>; 6] = [None; 6];
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::format(at, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let slot =
            CALIB_KEYS
                .iter()
                .position(|&k| k == key)
                .ok_or_else(|| Error::InvalidValue {
                    key: key.to_string(),
                    reason: "unknown key".into(),
                })?;
        if values[slot].replace(value.trim()).is_some() {
            return Err(Error::InvalidValue {
                key: key.to_string(),
                reason: "key given twice".into(),
            });
        }
    }

    let get = |i: usize| values[i].ok_or_else(|| Error::MissingKey(CALIB_KEYS[i].to_string()));
    let real = |i: usize| -> Result<f64> {
        let raw = get(i)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(Error::InvalidValue {
                key: CALIB_KEYS[i].to_string(),
                reason: format!("`{raw}` is not a positive number"),
            }),
        }
    };
    let count = |i: usize| -> Result<usize> {
        let raw = get(i)?;
        match raw.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v),
            _ => Err(Error::InvalidValue {
                key: CALIB_KEYS[i].to_string(),
                reason: format!("`{raw}` is not an integer >= 1"),
            }),
        }
    };
    StereoCalib::new(real(0)?, real(1)?, count(2)?, real(3)?, real(4)?, count(5)?)
}

pub fn format_calib(calib: &StereoCalib) -> String {
    format!(
        "focal_px = {}\nbaseline_m = {}\nstride = {}\nz_min_m = {}\ndepth_interval_m = {}\nnum_depth_levels = {}\n",
        calib.focal_px, calib.baseline_m, calib.stride, calib.z_min, calib.depth_interval, calib.num_levels
    )
}

pub fn read_calib(path: &Path) -> Result<StereoCalib> {
    let bytes = fs::read(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::format(e.valid_up_to(), "calibration file is not UTF-8"))?;
    parse_calib(text)
}

pub fn write_calib(calib: &StereoCalib, path: &Path) -> Result<()> {
    write_atomic(path, format_calib(calib).as_bytes())
}

// ---------------------------------------------------------------- PSFM

struct PsfmHeader {
    version: u16,
    width: usize,
    height: usize,
    channels: usize,
    levels: usize,
    dtype: Dtype,
    payload_start: usize,
}

fn le_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(bytes.len(), format!("truncated header: missing {what}")))
}

fn decode_psfm_header(bytes: &[u8]) -> Result<PsfmHeader> {
    if bytes.len() < 4 || &bytes[..4] != PSFM_MAGIC {
        return Err(Error::format(0, "bad PSFM magic"));
    }
    let version = bytes
        .get(4..6)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| Error::format(bytes.len(), "truncated header: missing version"))?;
    if version != PSFM_VERSION_FEATURES && version != PSFM_VERSION_VOLUME {
        return Err(Error::format(
            4,
            format!("unsupported PSFM version {version}"),
        ));
    }
    let mut at = 6;
    let mut dims = [0usize; 4];
    let names = ["width", "height", "channels", "levels"];
    let count = if version == PSFM_VERSION_VOLUME { 4 } else { 3 };
    for (i, name) in names.iter().enumerate().take(count) {
        let v = le_u32(bytes, at, name)? as usize;
        if v == 0 {
            return Err(Error::format(at, format!("{name} is zero")));
        }
        dims[i] = v;
        at += 4;
    }
    let code = *bytes
        .get(at)
        .ok_or_else(|| Error::format(bytes.len(), "truncated header: missing dtype"))?;
    let dtype = Dtype::from_code(code, at)?;
    Ok(PsfmHeader {
        version,
        width: dims[0],
        height: dims[1],
        channels: dims[2],
        levels: if count == 4 { dims[3] } else { 1 },
        dtype,
        payload_start: at + 1,
    })
}

fn decode_psfm_payload(bytes: &[u8], header: &PsfmHeader) -> Result<Vec<f64>> {
    let n = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(header.channels))
        .and_then(|n| n.checked_mul(header.levels))
        .ok_or_else(|| Error::format(6, "grid size overflows"))?;
    let size = header.dtype.size();
    let raw = payload(bytes, header.payload_start, n, size)?;
    let mut out = Vec::with_capacity(n);
    for (i, chunk) in raw.chunks_exact(size).enumerate() {
        let v = match header.dtype {
            Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(Error::format(
                header.payload_start + i * size,
                "non-finite value in payload",
            ));
        }
        out.push(v);
    }
    Ok(out)
}

fn encode_psfm(version: u16, dims: &[usize], dtype: Dtype, data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 * dims.len() + data.len() * dtype.size());
    out.extend_from_slice(PSFM_MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(dtype.code());
    match dtype {
        Dtype::F32 => data
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => data
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

pub fn encode_feature_map(map: &FeatureMap, dtype: Dtype) -> Vec<u8> {
    encode_psfm(
        PSFM_VERSION_FEATURES,
        &[map.width(), map.height(), map.channels()],
        dtype,
        map.data(),
    )
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap> {
    let header = decode_psfm_header(bytes)?;
    if header.version != PSFM_VERSION_FEATURES {
        return Err(Error::format(
            4,
            "file holds a cost volume, not a feature map",
        ));
    }
    let data = decode_psfm_payload(bytes, &header)?;
    FeatureMap::from_vec(header.width, header.height, header.channels, data)
}

pub fn encode_cost_volume(volume: &CostVolume, dtype: Dtype) -> Vec<u8> {
    encode_psfm(
        PSFM_VERSION_VOLUME,
        &[
            volume.width(),
            volume.height(),
            volume.channels(),
            volume.levels(),
        ],
        dtype,
        volume.data(),
    )
}

pub fn decode_cost_volume(bytes: &[u8]) -> Result<CostVolume> {
    let header = decode_psfm_header(bytes)?;
    if header.version != PSFM_VERSION_VOLUME {
        return Err(Error::format(
            4,
            "file holds a feature map, not a cost volume",
        ));
    }
    let data = decode_psfm_payload(bytes, &header)?;
    CostVolume::from_vec(
        header.width,
        header.height,
        header.levels,
        header.channels,
        data,
    )
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    decode_feature_map(&fs::read(path)?)
}

pub fn write_feature_map(map: &FeatureMap, dtype: Dtype, path: &Path) -> Result<()> {
    write_atomic(path, &encode_feature_map(map, dtype))
}

pub fn read_cost_volume(path: &Path) -> Result<CostVolume> {
    decode_cost_volume(&fs::read(path)?)
}

pub fn write_cost_volume(volume: &CostVolume, dtype: Dtype, path: &Path) -> Result<()> {
    write_atomic(path, &encode_cost_volume(volume, dtype))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DepthMap, DisparityMap};
    use proptest::prelude::*;

    #[test]
    fn pfm_round_trip_and_mask() {
        let z = DepthMap::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let back: DepthMap = decode_masked_pfm(&encode_masked_pfm(&z)).unwrap();
        assert_eq!(back, z);

        let zero = DepthMap::new(2, 1, vec![5.0, 0.0], vec![true, false]).unwrap();
        let back: DepthMap = decode_masked_pfm(&encode_masked_pfm(&zero)).unwrap();
        assert_eq!(back.valid(), &[true, false]);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let img = PfmImage {
            width: 2,
            height: 2,
            values: vec![1.0, 2.0, 3.0, 4.0],
        };
        let bytes = encode_pfm(&img);
        let body = &bytes[bytes.len() - 16..];
        assert_eq!(f32::from_le_bytes(body[..4].try_into().unwrap()), 3.0);
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn pfm_big_endian_is_byte_swapped() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        for v in [0.5f32, 7.25] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.values, vec![0.5, 7.25]);
    }

    #[test]
    fn pfm_errors_carry_offsets() {
        assert!(matches!(
            decode_pfm(b"P6\n1 1\n-1\n"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            decode_pfm(b"PF\n1 1\n-1\n0000"),
            Err(Error::Unsupported(_))
        ));
        let truncated = b"Pf\n2 2\n-1\n\0\0\0\0";
        match decode_pfm(truncated) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, truncated.len()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_pfm(b"Pf\n0 2\n-1\n").is_err());
        assert!(decode_pfm(b"Pf\n1 1\n0\n\0\0\0\0").is_err());
    }

    #[test]
    fn pnm_endpoints_and_errors() {
        let black = decode_pnm(b"P5\n2 2\n255\n\0\0\0\0").unwrap();
        assert!(black.data().iter().all(|&v| v == 0.0));
        let white = decode_pnm(b"P5 1 1 255\n\xff").unwrap();
        assert_eq!(white.data(), &[1.0]);
        let commented = decode_pnm(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(commented.channels(), 3);
        assert!(matches!(
            decode_pnm(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            decode_pnm(b"P2\n1 1\n255\n0"),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            decode_pnm(b"P5\n2 2\n255\n\0"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn pnm_writes_holes_black() {
        let img = RasterImage::with_holes(2, 1, 1, vec![1.0, 0.5], vec![false, true]).unwrap();
        let bytes = encode_pnm(&img);
        assert_eq!(&bytes[bytes.len() - 2..], &[255, 0]);
    }

    #[test]
    fn calib_parse() {
        let text = "# rig\nfocal_px = 400\nbaseline_m = 1\nstride = 4\nz_min_m = 10\ndepth_interval_m = 1\nnum_depth_levels = 8\n";
        let c = parse_calib(text).unwrap();
        assert_eq!(c, StereoCalib::new(400.0, 1.0, 4, 10.0, 1.0, 8).unwrap());
        assert_eq!(parse_calib(&format_calib(&c)).unwrap(), c);

        let missing = text.replace("stride = 4\n", "");
        assert!(matches!(parse_calib(&missing), Err(Error::MissingKey(k)) if k == "stride"));
        let bad = text.replace("num_depth_levels = 8", "num_depth_levels = 2.5");
        assert!(
            matches!(parse_calib(&bad), Err(Error::InvalidValue { key, .. }) if key == "num_depth_levels")
        );
        let neg = text.replace("baseline_m = 1", "baseline_m = -1");
        assert!(parse_calib(&neg).is_err());
        let dup = format!("{text}stride = 2\n");
        assert!(parse_calib(&dup).is_err());
        assert!(matches!(
            parse_calib("focal_px 400\n"),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn psfm_header_layout() {
        let m = FeatureMap::new(3, 2, 1, 0.5).unwrap();
        let bytes = encode_feature_map(&m, Dtype::F64);
        assert_eq!(&bytes[..4], b"PSFM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 1);
        assert_eq!(bytes[18], 1);
        assert_eq!(bytes.len(), 19 + 6 * 8);
        assert_eq!(encode_feature_map(&m, Dtype::F32).len(), 19 + 6 * 4);
    }

    #[test]
    fn psfm_length_and_magic_errors() {
        let m = FeatureMap::new(2, 2, 2, 1.0).unwrap();
        let mut bytes = encode_feature_map(&m, Dtype::F64);
        bytes.pop();
        assert!(matches!(
            decode_feature_map(&bytes),
            Err(Error::Format { .. })
        ));
        bytes.extend_from_slice(&[0; 9]);
        assert!(matches!(
            decode_feature_map(&bytes),
            Err(Error::Format { offset: 83, .. })
        ));
        let mut bad = encode_feature_map(&m, Dtype::F64);
        bad[0] = b'X';
        assert!(matches!(
            decode_feature_map(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut nan = encode_feature_map(&m, Dtype::F64);
        nan[19..27].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            decode_feature_map(&nan),
            Err(Error::Format { offset: 19, .. })
        ));
    }

    #[test]
    fn psfm_volume_carries_levels() {
        let v = CostVolume::from_vec(2, 1, 3, 2, (0..12).map(|i| i as f64).collect()).unwrap();
        let bytes = encode_cost_volume(&v, Dtype::F64);
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 2);
        assert_eq!(u32::from_le_bytes(bytes[18..22].try_into().unwrap()), 3);
        assert_eq!(decode_cost_volume(&bytes).unwrap(), v);
        assert!(decode_feature_map(&bytes).is_err());
    }

    #[test]
    fn files_round_trip_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMap::from_fn(3, 3, 2, |r, c, k| (r + c + k) as f64 / 7.0).unwrap();
        let p = dir.path().join("f.psfm");
        write_feature_map(&m, Dtype::F64, &p).unwrap();
        assert_eq!(read_feature_map(&p).unwrap(), m);
        let only: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(only.len(), 1);

        let d = DisparityMap::new(2, 1, vec![1.5, 0.0], vec![true, false]).unwrap();
        let p = dir.path().join("d.pfm");
        write_disparity_pfm(&d, &p).unwrap();
        assert_eq!(read_disparity_pfm(&p).unwrap(), d);
    }

    proptest! {
        #[test]
        fn feature_maps_round_trip_bitwise(
            (w, h, c, data) in (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(w, h, c)|
                (Just(w), Just(h), Just(c), proptest::collection::vec(-1e300f64..1e300, w * h * c)))
        ) {
            let m = FeatureMap::from_vec(w, h, c, data).unwrap();
            let back = decode_feature_map(&encode_feature_map(&m, Dtype::F64)).unwrap();
            prop_assert!(back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn images_round_trip_at_8_bits(bytes in proptest::collection::vec(any::<u8>(), 12)) {
            let mut file = b"P6\n2 2\n255\n".to_vec();
            file.extend_from_slice(&bytes);
            let img = decode_pnm(&file).unwrap();
            prop_assert_eq!(encode_pnm(&img), file);
        }

        #[test]
        fn readers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_pfm(&bytes);
            let _ = decode_pnm(&bytes);
            let _ = decode_feature_map(&bytes);
            let _ = decode_cost_volume(&bytes);
            let _ = parse_calib(&String::from_utf8_lossy(&bytes));
        }
    }
}
