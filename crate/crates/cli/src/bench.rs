use std::hint::black_box;
use std::time::Instant;

use anyhow::Result;

use pseudo_stereo::ddc::{ddc_forward_gridshift, ddc_forward_naive};
use pseudo_stereo::view_synthesis::{forward_warp, WarpConfig};
use pseudo_stereo::{elementwise_stats, synthetic, Shape, Stats};

fn time<T>(runs: usize, warmups: usize, mut f: impl FnMut() -> Result<T>) -> Result<(Stats, T)> {
    for _ in 0..warmups {
        black_box(f()?);
    }
    let mut samples = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let start = Instant::now();
        let out = black_box(f()?);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    Ok((elementwise_stats(samples)?, last.expect("runs > 0")))
}

/// One TSV row per size and operation, then the equal-outputs flag and the
/// naive/grid-shift time ratio for each size.
pub fn run(shapes: &[Shape], runs: usize, warmups: usize, seed: u64) -> Result<String> {
    let mut rng = synthetic::rng(seed);
    let mut table = String::from("size\top\tmean_ms\tstd_ms\n");
    let mut notes = String::new();
    for &shape in shapes {
        let (w, h, c) = (shape.width, shape.height, shape.channels);
        let left = synthetic::uniform_features(&mut rng, w, h, c)?;
        let kernel = synthetic::uniform_features(&mut rng, w, h, c)?;
        let image = synthetic::random_image(&mut rng, w, h, 3)?;
        let disp = synthetic::random_disparity(&mut rng, w, h, 0.0..(w as f64 / 4.0).max(1.0))?;
        let config = WarpConfig::default();

        let (naive, a) = time(runs, warmups, || Ok(ddc_forward_naive(&left, &kernel)?))?;
        let (grid, b) = time(runs, warmups, || Ok(ddc_forward_gridshift(&left, &kernel)?))?;
        let (warp, _) = time(runs, warmups, || Ok(forward_warp(&image, &disp, &config)?))?;

        for (op, s) in [
            ("ddc_naive", naive),
            ("ddc_gridshift", grid),
            ("warp", warp),
        ] {
            table.push_str(&format!("{shape}\t{op}\t{:.4}\t{:.4}\n", s.mean, s.std));
        }
        let ratio = naive.mean / grid.mean;
        let direction = if ratio >= 1.0 {
            "gridshift>=naive"
        } else {
            "gridshift<naive"
        };
        notes.push_str(&format!(
            "{shape}\tequal_outputs={}\tthroughput_ratio={ratio:.3}\t{direction}\n",
            a.data() == b.data()
        ));
    }
    table.push_str(&notes);
    Ok(table)
}
