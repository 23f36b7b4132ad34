use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};

use pseudo_stereo::ddc::{
    downsample_disparity, generate_virtual_right_features, DisparityNormalization,
};
use pseudo_stereo::feature_clone::clone_features;
use pseudo_stereo::geometry::reprojection_offsets;
use pseudo_stereo::io;
use pseudo_stereo::stereo_volume::build_stereo_volume_with_offsets;
use pseudo_stereo::synthetic;
use pseudo_stereo::view_synthesis::{synthesize_right_view, HoleFill, WarpConfig};
use pseudo_stereo::{selfcheck, CostVolume, Shape, StereoCalib};

use crate::bench;
use crate::Command;

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Warp {
            left,
            depth,
            calib,
            out,
            holes,
            sharpen,
            threshold,
            zero_fill,
            synthetic,
            seed,
        } => {
            let config = WarpConfig {
                sobel_threshold: threshold,
                sharpen,
                hole_fill: if zero_fill {
                    HoleFill::ZeroFill
                } else {
                    HoleFill::MaskOnly
                },
                ..WarpConfig::default()
            };
            config.validate()?;
            let inputs = if synthetic {
                vec![]
            } else {
                vec![&left, &depth, &calib]
            };
            check_paths(&inputs, &[Some(&out), holes.as_ref()])?;

            let (image, depth, calib) = if synthetic {
                let calib = synthetic::desk_calib();
                let mut rng = synthetic::rng(seed);
                let image = synthetic::random_image(&mut rng, 32, 16, 3)?;
                let near = synthetic::depth_for_disparity(4.0, &calib);
                let far = synthetic::depth_for_disparity(2.0, &calib);
                (
                    image,
                    synthetic::two_plane_depth(32, 16, 10..18, near, far)?,
                    calib,
                )
            } else {
                (
                    read(left.as_deref(), io::read_image)?,
                    read(depth.as_deref(), io::read_depth_pfm)?,
                    read(calib.as_deref(), io::read_calib)?,
                )
            };
            let right = synthesize_right_view(&image, &depth, &calib, &config)?;
            io::write_image(&right, &out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = holes {
                io::write_mask_pgm(&right.hole_mask(), &path)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("holes\t{}", right.hole_mask().count());
        }

        Command::Ddc {
            features,
            disparity,
            calib,
            out,
            mu,
            sigma,
            dtype,
            synthetic,
            seed,
            size,
        } => {
            let defaults = DisparityNormalization::default();
            let norm = DisparityNormalization {
                mu: mu.unwrap_or(defaults.mu),
                sigma: sigma.unwrap_or(defaults.sigma),
            };
            let inputs = if synthetic {
                vec![]
            } else {
                vec![&features, &disparity, &calib]
            };
            check_paths(&inputs, &[Some(&out)])?;

            let (left, disp, calib) = if synthetic {
                let shape = parse_shape(&size)?;
                let calib = synthetic::desk_calib();
                let mut rng = synthetic::rng(seed);
                let left = synthetic::uniform_features(
                    &mut rng,
                    shape.width,
                    shape.height,
                    shape.channels,
                )?;
                let disp = synthetic::random_disparity(
                    &mut rng,
                    shape.width * calib.stride,
                    shape.height * calib.stride,
                    0.0..80.0,
                )?;
                (left, disp, calib)
            } else {
                (
                    read(features.as_deref(), io::read_feature_map)?,
                    read(disparity.as_deref(), io::read_disparity_pfm)?,
                    read(calib.as_deref(), io::read_calib)?,
                )
            };
            let small = downsample_disparity(&disp, calib.stride)?;
            ensure!(
                small.width() == left.width() && small.height() == left.height(),
                "resolution mismatch: disparity {}x{} at stride {} gives {}x{}, features are {}x{}",
                disp.width(),
                disp.height(),
                calib.stride,
                small.width(),
                small.height(),
                left.width(),
                left.height()
            );
            let virtual_right = generate_virtual_right_features(&left, &small, &norm)?;
            io::write_feature_map(&virtual_right, dtype.into(), &out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("shape\t{}", virtual_right.shape());
        }

        Command::Volume {
            left,
            right,
            calib,
            out,
            clone,
            zero_offset,
            dtype,
            synthetic,
            seed,
            size,
        } => {
            let mut inputs = vec![];
            if !synthetic {
                inputs.extend([&left, &calib]);
                if !clone {
                    inputs.push(&right);
                }
            }
            check_paths(&inputs, &[Some(&out)])?;
            if clone && right.is_some() {
                bail!("--clone and --right are mutually exclusive");
            }

            let (left, right, calib) = if synthetic {
                let shape = parse_shape(&size)?;
                let mut rng = synthetic::rng(seed);
                let l = synthetic::uniform_features(
                    &mut rng,
                    shape.width,
                    shape.height,
                    shape.channels,
                )?;
                let r = synthetic::uniform_features(
                    &mut rng,
                    shape.width,
                    shape.height,
                    shape.channels,
                )?;
                (l, Some(r), synthetic::desk_calib())
            } else {
                let l = read(left.as_deref(), io::read_feature_map)?;
                let r = match right.as_deref() {
                    Some(_) if !clone => Some(read(right.as_deref(), io::read_feature_map)?),
                    _ => None,
                };
                (l, r, read(calib.as_deref(), io::read_calib)?)
            };
            let right = match right {
                Some(r) if !clone => r,
                _ => clone_features(&left),
            };
            let offsets = volume_offsets(&calib, zero_offset);
            let volume = build_stereo_volume_with_offsets(&left, &right, &offsets)?;
            io::write_cost_volume(&volume, dtype.into(), &out)
                .with_context(|| format!("writing {}", out.display()))?;
            print!("{}", volume_stats(&volume)?);
        }

        Command::Selfcheck { seed } => {
            let report = selfcheck::run(seed)?;
            print!("{report}");
            if !report.passed() {
                let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
                eprintln!("failed checks: {}", failed.join(", "));
                return Ok(ExitCode::from(1));
            }
        }

        Command::Bench {
            sizes,
            runs,
            warmups,
            seed,
        } => {
            let shapes = parse_sizes(&sizes)?;
            ensure!(runs >= 10, "--runs must be at least 10, got {runs}");
            print!("{}", bench::run(&shapes, runs, warmups, seed)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn volume_offsets(calib: &StereoCalib, zero_offset: bool) -> Vec<f64> {
    if zero_offset {
        vec![0.0; calib.num_levels]
    } else {
        reprojection_offsets(calib)
    }
}

/// Shape line then min/max/mean of the left and right halves, as TSV.
pub fn volume_stats(volume: &CostVolume) -> Result<String> {
    let c = volume.channels() / 2;
    let mut text = format!(
        "shape\t{}\t{}\t{}\t{}\nhalf\tmin\tmax\tmean\n",
        volume.width(),
        volume.height(),
        volume.levels(),
        volume.channels()
    );
    for (name, range) in [("left", 0..c), ("right", c..2 * c)] {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in volume.channel_range(range.clone()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let stats = pseudo_stereo::elementwise_stats(volume.channel_range(range))?;
        text.push_str(&format!("{name}\t{lo}\t{hi}\t{}\n", stats.mean));
    }
    Ok(text)
}

fn read<T>(path: Option<&Path>, reader: impl Fn(&Path) -> pseudo_stereo::Result<T>) -> Result<T> {
    let path = path.context("missing input path")?;
    reader(path).with_context(|| format!("reading {}", path.display()))
}

/// Fails before any compute if an input is missing or an output directory
/// does not exist.
fn check_paths(inputs: &[&Option<PathBuf>], outputs: &[Option<&PathBuf>]) -> Result<()> {
    for path in inputs {
        let path = path.as_ref().context("missing input path")?;
        ensure!(
            path.is_file(),
            "input {} is not a readable file",
            path.display()
        );
    }
    for path in outputs.iter().flatten() {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        ensure!(
            dir.is_dir(),
            "output directory {} does not exist",
            dir.display()
        );
    }
    Ok(())
}

pub fn parse_shape(text: &str) -> Result<Shape> {
    let parts: Vec<&str> = text.trim().split('x').collect();
    let [w, h, c] = parts.as_slice() else {
        bail!("size `{text}` is not of the form WxHxC");
    };
    let dim = |s: &str| -> Result<usize> {
        let n: usize = s
            .parse()
            .with_context(|| format!("bad dimension `{s}` in `{text}`"))?;
        ensure!(n > 0, "dimension in `{text}` must be positive");
        Ok(n)
    };
    Ok(Shape::new(dim(w)?, dim(h)?, dim(c)?))
}

pub fn parse_sizes(text: &str) -> Result<Vec<Shape>> {
    let shapes = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_shape)
        .collect::<Result<Vec<_>>>()?;
    ensure!(!shapes.is_empty(), "--sizes needs at least one WxHxC entry");
    Ok(shapes)
}
