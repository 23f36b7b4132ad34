//! Seeded self-verification of the whole library.
//!
//! Each check compares an operation against an independent scalar oracle or
//! an exact structural property on synthetic data and reports the worst
//! deviation seen. The report depends only on the seed.

use std::fmt;

use rand::Rng;

use crate::ddc::{
    ddc_backward, ddc_forward_gridshift, ddc_forward_naive, normalize_disparity,
    DisparityNormalization,
};
use crate::error::Result;
use crate::geometry::{depth_level, depth_to_disparity, disparity_to_depth, reprojection_offsets};
use crate::io;
use crate::stereo_volume::{
    build_stereo_volume, combined_loss, depth_distribution, depth_loss, soft_depth_regression,
    DepthDistribution, LossComponents, LossWeights, ScoreVolume,
};
use crate::synthetic;
use crate::types::{DepthMap, DisparityMap, FeatureMap, StereoCalib};
use crate::view_synthesis::{
    detect_flying_pixels, forward_warp, sharpen_disparity, sharpen_flying_pixels,
    synthesize_right_view, WarpConfig,
};

/// Finite-difference step for gradient checks.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance for gradient checks.
pub const GRAD_TOLERANCE: f64 = 1e-6;
/// Denominator floor of the relative gradient error, so entries whose true
/// gradient is ~0 are judged on absolute error.
pub const GRAD_REL_FLOOR: f64 = 1e-3;
/// Iterations of reader fuzzing.
pub const FUZZ_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn within(name: &'static str, max_error: f64, tolerance: f64) -> Self {
        Self {
            name,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }

    /// A check whose error is a count of violations and must be zero.
    fn exact(name: &'static str, violations: usize) -> Self {
        Self::within(name, violations as f64, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check\tmax_error\ttolerance\tstatus")?;
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(
                f,
                "{}\t{:e}\t{:e}\t{}",
                c.name, c.max_error, c.tolerance, status
            )?;
        }
        Ok(())
    }
}

/// Signature of a DDC adjoint, so a deliberately broken one can be checked.
pub type BackwardFn =
    dyn Fn(&FeatureMap, &FeatureMap, &FeatureMap) -> Result<(FeatureMap, FeatureMap)>;

pub fn run(seed: u64) -> Result<Report> {
    run_with_backward(seed, &ddc_backward)
}

pub fn run_with_backward(seed: u64, backward: &BackwardFn) -> Result<Report> {
    let mut rng = synthetic::rng(seed);
    let checks = vec![
        check_ddc_equivalence(&mut rng)?,
        check_ddc_gradients(&mut rng, backward)?,
        check_warp_shift(&mut rng)?,
        check_warp_conservation(&mut rng)?,
        check_warp_collision()?,
        check_sharpening()?,
        check_volume_oracle(&mut rng)?,
        check_depth_head(&mut rng)?,
        check_geometry(&mut rng)?,
        check_loss_composition(&mut rng)?,
        check_round_trips(&mut rng)?,
        check_reader_fuzz(&mut rng)?,
    ];
    Ok(Report { seed, checks })
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Grid-shift against sliding-window DDC on 100 random shapes up to 16x16x8.
/// Reports the worst relative deviation; any bit difference also fails.
pub fn check_ddc_equivalence(rng: &mut impl Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut bit_mismatches = 0usize;
    for _ in 0..100 {
        let (w, h, c) = (
            rng.gen_range(1..=16),
            rng.gen_range(1..=16),
            rng.gen_range(1..=8),
        );
        let l = synthetic::uniform_features(rng, w, h, c)?;
        let d = synthetic::uniform_features(rng, w, h, c)?;
        let a = ddc_forward_naive(&l, &d)?;
        let b = ddc_forward_gridshift(&l, &d)?;
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max(relative(*x, *y, f64::MIN_POSITIVE));
            bit_mismatches += usize::from(x.to_bits() != y.to_bits());
        }
    }
    let mut r = CheckResult::within("ddc_gridshift_equivalence", worst, 1e-12);
    r.passed &= bit_mismatches == 0;
    Ok(r)
}

/// Central finite differences of `sum(g ⊙ ddc(L, D))` against `backward`
/// on 20 random 5x5x2 instances, for both inputs.
pub fn check_ddc_gradients(rng: &mut impl Rng, backward: &BackwardFn) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let l = synthetic::uniform_features(rng, 5, 5, 2)?;
        let d = synthetic::uniform_features(rng, 5, 5, 2)?;
        let g = synthetic::uniform_features(rng, 5, 5, 2)?;
        let (gl, gd) = backward(&g, &l, &d)?;
        let loss = |l: &[f64], d: &[f64]| -> Result<f64> {
            let l = FeatureMap::from_vec(5, 5, 2, l.to_vec())?;
            let d = FeatureMap::from_vec(5, 5, 2, d.to_vec())?;
            Ok(ddc_forward_naive(&l, &d)?
                .data()
                .iter()
                .zip(g.data())
                .map(|(a, b)| a * b)
                .sum())
        };
        let mut lv = l.data().to_vec();
        let mut dv = d.data().to_vec();
        for i in 0..lv.len() {
            let x = lv[i];
            lv[i] = x + FD_STEP;
            let up = loss(&lv, &dv)?;
            lv[i] = x - FD_STEP;
            let down = loss(&lv, &dv)?;
            lv[i] = x;
            worst = worst.max(relative(
                gl.data()[i],
                (up - down) / (2.0 * FD_STEP),
                GRAD_REL_FLOOR,
            ));

            let y = dv[i];
            dv[i] = y + FD_STEP;
            let up = loss(&lv, &dv)?;
            dv[i] = y - FD_STEP;
            let down = loss(&lv, &dv)?;
            dv[i] = y;
            worst = worst.max(relative(
                gd.data()[i],
                (up - down) / (2.0 * FD_STEP),
                GRAD_REL_FLOOR,
            ));
        }
    }
    Ok(CheckResult::within(
        "ddc_backward_finite_difference",
        worst,
        GRAD_TOLERANCE,
    ))
}

/// Constant integer disparity `k` must shift columns by exactly `k` and
/// leave exactly the rightmost `k` columns as holes.
pub fn check_warp_shift(rng: &mut impl Rng) -> Result<CheckResult> {
    let mut violations = 0;
    for k in 0..6usize {
        let (w, h) = (12, 5);
        let img = synthetic::random_image(rng, w, h, 3)?;
        let disp = DisparityMap::constant(w, h, k as f64)?;
        let out = forward_warp(&img, &disp, &WarpConfig::default())?;
        for r in 0..h {
            for c in 0..w {
                let expect_hole = c + k >= w;
                let wrong = out.is_hole(r, c) != expect_hole
                    || (!expect_hole && out.pixel(r, c) != img.pixel(r, c + k));
                violations += usize::from(wrong);
            }
        }
    }
    Ok(CheckResult::exact("warp_integer_shift", violations))
}

/// Two-plane scenes through the full image-level pipeline: every output
/// pixel must match a brute-force z-buffer oracle, which implies that holes
/// are exactly the untargeted pixels and that non-hole pixels are copies of
/// input pixels.
pub fn check_warp_conservation(rng: &mut impl Rng) -> Result<CheckResult> {
    let calib = synthetic::desk_calib();
    let cfg = WarpConfig::default();
    let mut violations = 0;
    for _ in 0..8 {
        let (w, h) = (24, 6);
        let start = rng.gen_range(4..12);
        let end = start + rng.gen_range(3..8);
        let near = rng.gen_range(5..9) as f64;
        let far = rng.gen_range(1..4) as f64;
        let depth = synthetic::two_plane_depth(
            w,
            h,
            start..end,
            synthetic::depth_for_disparity(near, &calib),
            synthetic::depth_for_disparity(far, &calib),
        )?;
        let img = synthetic::random_image(rng, w, h, 1)?;
        let out = synthesize_right_view(&img, &depth, &calib, &cfg)?;
        for r in 0..h {
            for t in 0..w {
                let mut best: Option<(f64, usize)> = None;
                for x in 0..w {
                    let d = calib.focal_baseline() / depth.at(r, x);
                    if (x as f64 - d).round() == t as f64 && best.is_none_or(|(bd, _)| d >= bd) {
                        best = Some((d, x));
                    }
                }
                match best {
                    None => violations += usize::from(!out.is_hole(r, t)),
                    Some((_, x)) => {
                        violations +=
                            usize::from(out.is_hole(r, t) || out.pixel(r, t) != img.pixel(r, x));
                    }
                }
            }
        }
    }
    Ok(CheckResult::exact("warp_conservation", violations))
}

pub fn check_warp_collision() -> Result<CheckResult> {
    let img = crate::types::RasterImage::new(3, 1, 1, vec![0.2, 0.4, 0.8])?;
    let disp = DisparityMap::new(3, 1, vec![0.0, 1.0, 2.0], vec![false, true, true])?;
    let out = forward_warp(&img, &disp, &WarpConfig::default())?;
    let ok = !out.is_hole(0, 0) && out.pixel(0, 0) == [0.8];
    Ok(CheckResult::exact(
        "warp_collision_foreground",
        usize::from(!ok),
    ))
}

pub fn check_sharpening() -> Result<CheckResult> {
    let cfg = WarpConfig::default();
    let mut violations = 0;

    let flat = DisparityMap::constant(7, 5, 4.0)?;
    violations += detect_flying_pixels(&flat, &cfg)?.count();

    // unit step between columns 2 and 3: only those two columns respond (4 > 3)
    let step: Vec<f64> = (0..35)
        .map(|i| if i % 7 >= 3 { 1.0 } else { 0.0 })
        .collect();
    let step = DisparityMap::new(7, 5, step, vec![true; 35])?;
    let mask = detect_flying_pixels(&step, &cfg)?;
    for r in 0..5 {
        for c in 0..7 {
            violations += usize::from(mask.get(r, c) != (c == 2 || c == 3));
        }
    }

    let row = [0.0, 0.0, 1.0, 4.0, 8.0, 12.0, 16.0, 16.0, 16.0, 16.0];
    let ramp: Vec<f64> = (0..5).flat_map(|_| row).collect();
    let ramp = DisparityMap::new(10, 5, ramp, vec![true; 50])?;
    for input in [&step, &ramp] {
        let once = sharpen_flying_pixels(input, &cfg)?;
        let twice = sharpen_flying_pixels(&once.disparity, &cfg)?;
        violations += usize::from(twice.disparity != once.disparity);
        let m = detect_flying_pixels(input, &cfg)?;
        let (a, _) = sharpen_disparity(input, &m)?;
        let (b, _) = sharpen_disparity(&a, &m)?;
        violations += usize::from(a != b);
    }
    Ok(CheckResult::exact("sharpen_flying_pixels", violations))
}

/// 6x4x2 features, 5 levels, against a direct evaluation of the volume
/// formula with linear sampling.
pub fn check_volume_oracle(rng: &mut impl Rng) -> Result<CheckResult> {
    let calib = StereoCalib::new(9.0, 1.1, 2, 1.5, 0.4, 5)?;
    let l = synthetic::uniform_features(rng, 6, 4, 2)?;
    let r = synthetic::uniform_features(rng, 6, 4, 2)?;
    let v = build_stereo_volume(&l, &r, &calib)?;
    let mut worst = 0.0f64;
    let mut left_mismatch = 0;
    for w in 0..5 {
        let z = w as f64 * calib.depth_interval + calib.z_min;
        let offset = calib.focal_px * calib.baseline_m / (z * calib.stride as f64);
        for row in 0..4 {
            for u in 0..6 {
                let x = u as f64 - offset;
                let x0 = x.floor();
                let t = x - x0;
                for k in 0..2 {
                    left_mismatch +=
                        usize::from(v.at(row, u, w, k).to_bits() != l.at(row, u, k).to_bits());
                    let tap = |c: f64| {
                        if (0.0..=5.0).contains(&c) {
                            r.at(row, c as usize, k)
                        } else {
                            0.0
                        }
                    };
                    let expected = (1.0 - t) * tap(x0) + t * tap(x0 + 1.0);
                    worst = worst.max((v.at(row, u, w, 2 + k) - expected).abs());
                }
            }
        }
    }
    let mut c = CheckResult::within("stereo_volume_oracle", worst, 1e-12);
    c.passed &= left_mismatch == 0;
    Ok(c)
}

pub fn check_depth_head(rng: &mut impl Rng) -> Result<CheckResult> {
    let calib = StereoCalib::new(721.5, 0.54, 4, 2.0, 0.5, 12)?;
    let (w, h, n) = (7, 5, calib.num_levels);
    let scores: Vec<f64> = (0..w * h * n).map(|_| rng.gen_range(-30.0..30.0)).collect();
    let p = depth_distribution(&ScoreVolume::from_vec(w, h, n, scores)?);
    let mut worst = 0.0f64;
    for px in p.probabilities().chunks(n) {
        worst = worst.max((px.iter().sum::<f64>() - 1.0).abs());
    }
    let mut violations = 0;
    let z = soft_depth_regression(&p, &calib)?;
    let z_max = depth_level(n - 1, &calib)?;
    violations += z
        .values()
        .iter()
        .filter(|&&v| !(calib.z_min..=z_max).contains(&v))
        .count();
    for level in 0..n {
        let mut one_hot = vec![0.0; n];
        one_hot[level] = 1.0;
        let d = DepthDistribution::from_vec(1, 1, n, one_hot)?;
        let got = soft_depth_regression(&d, &calib)?.values()[0];
        violations += usize::from(got != depth_level(level, &calib)?);
    }
    violations += usize::from(depth_loss(&z, &z)?.value != 0.0);
    let mut c = CheckResult::within("depth_distribution_head", worst, 1e-9);
    c.passed &= violations == 0;
    Ok(c)
}

pub fn check_geometry(rng: &mut impl Rng) -> Result<CheckResult> {
    let calib = StereoCalib::new(721.5377, 0.5327, 4, 2.0, 0.5, 144)?;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let z = rng.gen_range(1.0..=100.0);
        let back = disparity_to_depth(depth_to_disparity(z, &calib)?, &calib)?;
        worst = worst.max((back - z).abs() / z);
    }
    let offsets = reprojection_offsets(&calib);
    let mut violations = offsets.windows(2).filter(|p| p[1] >= p[0]).count();
    let norm = DisparityNormalization::default();
    let disp = DisparityMap::new(2, 1, vec![33.20, 49.11], vec![true, true])?;
    let n = normalize_disparity(&disp, &norm)?;
    violations += usize::from(n.data()[0] != 0.0 || (n.data()[1] - 1.0).abs() > f64::EPSILON);
    let mut c = CheckResult::within("geometry_round_trip", worst, 1e-12);
    c.passed &= violations == 0;
    Ok(c)
}

pub fn check_loss_composition(rng: &mut impl Rng) -> Result<CheckResult> {
    let parts = LossComponents {
        detection: 1.0,
        depth: 2.0,
        distillation: 3.0,
    };
    let mut violations = usize::from(combined_loss(&parts, &LossWeights::default())? != 6.0);
    let off = LossWeights::strict(1.0, 0.0, 1.0)?;
    let base = combined_loss(&parts, &off)?;
    for _ in 0..100 {
        let varied = LossComponents {
            depth: rng.gen_range(-1e3..1e3),
            ..parts
        };
        violations += usize::from(combined_loss(&varied, &off)? != base);
    }
    Ok(CheckResult::exact("combined_loss", violations))
}

pub fn check_round_trips(rng: &mut impl Rng) -> Result<CheckResult> {
    let mut violations = 0;
    let f = synthetic::uniform_features(rng, 9, 7, 3)?;
    let back = io::decode_feature_map(&io::encode_feature_map(&f, io::Dtype::F64))?;
    violations += usize::from(
        back.data()
            .iter()
            .zip(f.data())
            .any(|(a, b)| a.to_bits() != b.to_bits()),
    );

    let f32_values: Vec<f64> = f.data().iter().map(|&v| v as f32 as f64).collect();
    let f32_map = FeatureMap::from_vec(9, 7, 3, f32_values)?;
    violations += usize::from(
        io::decode_feature_map(&io::encode_feature_map(&f32_map, io::Dtype::F32))? != f32_map,
    );

    let values: Vec<f64> = (0..63)
        .map(|_| rng.gen_range(0.5f32..80.0) as f64)
        .collect();
    let z = DepthMap::from_values(9, 7, values)?;
    violations += usize::from(
        io::decode_masked_pfm::<crate::types::Meters>(&io::encode_masked_pfm(&z))? != z,
    );

    let img = synthetic::random_image(rng, 9, 7, 3)?;
    violations += usize::from(io::decode_pnm(&io::encode_pnm(&img))? != img);

    let calib = synthetic::desk_calib();
    violations += usize::from(io::parse_calib(&io::format_calib(&calib))? != calib);

    let vol = build_stereo_volume(&f, &f, &calib)?;
    violations +=
        usize::from(io::decode_cost_volume(&io::encode_cost_volume(&vol, io::Dtype::F64))? != vol);
    Ok(CheckResult::exact("format_round_trips", violations))
}

/// Mutated and random inputs to every reader. Any panic aborts the run, so
/// reaching the end means every input produced a value or a structured error.
pub fn check_reader_fuzz(rng: &mut impl Rng) -> Result<CheckResult> {
    let f = synthetic::uniform_features(rng, 3, 2, 2)?;
    let seeds: Vec<Vec<u8>> = vec![
        io::encode_feature_map(&f, io::Dtype::F64),
        io::encode_feature_map(&f, io::Dtype::F32),
        io::encode_masked_pfm(&DepthMap::constant(3, 2, 4.0)?),
        io::format_calib(&synthetic::desk_calib()).into_bytes(),
    ];
    let mut accepted_bad = 0;
    for i in 0..FUZZ_ITERATIONS {
        let mut bytes = seeds[i % seeds.len()].clone();
        match rng.gen_range(0..4) {
            0 => {
                let n = rng.gen_range(1..4);
                for _ in 0..n {
                    let at = rng.gen_range(0..bytes.len());
                    bytes[at] = rng.gen();
                }
            }
            1 => bytes.truncate(rng.gen_range(0..bytes.len())),
            2 => bytes.extend((0..rng.gen_range(1..8)).map(|_| rng.gen::<u8>())),
            _ => bytes = (0..rng.gen_range(0..48)).map(|_| rng.gen()).collect(),
        }
        let _ = io::decode_feature_map(&bytes);
        let _ = io::decode_cost_volume(&bytes);
        let _ = io::decode_pfm(&bytes);
        let _ = io::decode_pnm(&bytes);
        let _ = io::parse_calib(&String::from_utf8_lossy(&bytes));
        // a wrong length must never decode
        if bytes.len() != seeds[0].len() && bytes.starts_with(&seeds[0][..19]) {
            accepted_bad += usize::from(io::decode_feature_map(&bytes).is_ok());
        }
    }
    Ok(CheckResult::exact("reader_fuzz", accepted_bad))
}
