//! Disparity-wise dynamic convolution (DDC).
//!
//! Each output feature is the mean over the 3x3 neighbourhood of the
//! per-channel product of left features and disparity features:
//!
//! ```text
//! out(r, c, k) = 1/9 * sum_{dc, dr in -1..=1} L(r + dr, c + dc, k) * D(r + dr, c + dc, k)
//! ```
//!
//! Taps outside the map read as zero and the 1/9 factor is fixed, so border
//! outputs are not renormalized. Two forward paths are provided: a direct
//! sliding window ([`ddc_forward_naive`]) and nine whole-map shifts of the
//! zero-padded inputs ([`ddc_forward_gridshift`]). Both accumulate every
//! output element in [`GridShift::ALL`] order and scale after the sum, so
//! they agree bit for bit.

use crate::error::{Error, Result};
use crate::types::{DisparityMap, FeatureMap, Shape};

/// Mean and standard deviation used to standardize raw disparities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityNormalization {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for DisparityNormalization {
    fn default() -> Self {
        Self {
            mu: 33.20,
            sigma: 15.91,
        }
    }
}

/// One of the nine unit offsets of the 3x3 grid. `di` moves along columns,
/// `dj` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShift {
    pub di: i8,
    pub dj: i8,
}

impl GridShift {
    pub const ALL: [GridShift; 9] = {
        let mut all = [GridShift { di: 0, dj: 0 }; 9];
        let mut n = 0;
        while n < 9 {
            all[n] = GridShift {
                di: (n / 3) as i8 - 1,
                dj: (n % 3) as i8 - 1,
            };
            n += 1;
        }
        all
    };

    pub fn new(di: i8, dj: i8) -> Result<Self> {
        if !(-1..=1).contains(&di) || !(-1..=1).contains(&dj) {
            return Err(Error::Domain(format!(
                "grid shift ({di}, {dj}) outside the 3x3 grid"
            )));
        }
        Ok(Self { di, dj })
    }
}

/// `(d - mu) / sigma` on valid pixels, 0 elsewhere.
pub fn normalize_disparity(
    disp: &DisparityMap,
    norm: &DisparityNormalization,
) -> Result<FeatureMap> {
    if !(norm.sigma.is_finite() && norm.sigma > 0.0) || !norm.mu.is_finite() {
        return Err(Error::Domain(format!(
            "normalization needs finite mu and positive sigma, got mu={} sigma={}",
            norm.mu, norm.sigma
        )));
    }
    let data = disp
        .values()
        .iter()
        .zip(disp.valid())
        .map(|(&d, &ok)| if ok { (d - norm.mu) / norm.sigma } else { 0.0 })
        .collect();
    FeatureMap::from_vec(disp.width(), disp.height(), 1, data)
}

/// Repeats a single-channel map across `channels` channels.
pub fn broadcast_channels(map: &FeatureMap, channels: usize) -> Result<FeatureMap> {
    if map.channels() != 1 {
        return Err(Error::Dimension(format!(
            "broadcast expects a single-channel map, got {}",
            map.shape()
        )));
    }
    if channels == 0 {
        return Err(Error::Dimension("cannot broadcast to zero channels".into()));
    }
    let data = map
        .data()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, channels))
        .collect();
    Ok(FeatureMap::from_raw(
        Shape::new(map.width(), map.height(), channels),
        data,
    ))
}

/// Averages the valid pixels of each `stride x stride` cell. Partial cells at
/// the right and bottom edges average what they contain; cells without valid
/// pixels are invalid.
pub fn downsample_disparity(disp: &DisparityMap, stride: usize) -> Result<DisparityMap> {
    if stride == 0 {
        return Err(Error::Domain("stride must be at least 1".into()));
    }
    let (w, h) = (disp.width(), disp.height());
    let (ow, oh) = (w.div_ceil(stride), h.div_ceil(stride));
    let mut values = Vec::with_capacity(ow * oh);
    let mut valid = Vec::with_capacity(ow * oh);
    for orow in 0..oh {
        for ocol in 0..ow {
            let mut sum = 0.0;
            let mut n = 0usize;
            for r in orow * stride..((orow + 1) * stride).min(h) {
                for c in ocol * stride..((ocol + 1) * stride).min(w) {
                    if disp.is_valid(r, c) {
                        sum += disp.at(r, c);
                        n += 1;
                    }
                }
            }
            values.push(if n > 0 { sum / n as f64 } else { 0.0 });
            valid.push(n > 0);
        }
    }
    DisparityMap::new(ow, oh, values, valid)
}

fn check_pair(left: &FeatureMap, kernel: &FeatureMap) -> Result<()> {
    left.ensure_same_shape(kernel)
}

/// Sliding-window DDC: one 3x3 window per output pixel.
pub fn ddc_forward_naive(left: &FeatureMap, kernel: &FeatureMap) -> Result<FeatureMap> {
    check_pair(left, kernel)?;
    let shape = left.shape();
    let (w, h, ch) = (shape.width as isize, shape.height as isize, shape.channels);
    let mut out = vec![0.0; shape.len()];
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = 0.0;
                for dc in -1..=1 {
                    for dr in -1..=1 {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr < 0 || rr >= h || cc < 0 || cc >= w {
                            continue;
                        }
                        let i = left.index(rr as usize, cc as usize, k);
                        acc += left.data()[i] * kernel.data()[i];
                    }
                }
                out[left.index(r as usize, c as usize, k)] = acc / 9.0;
            }
        }
    }
    Ok(FeatureMap::from_raw(shape, out))
}

/// Zero-pads a map by one pixel on every side.
fn pad1(map: &FeatureMap) -> Vec<f64> {
    let (w, h, ch) = (map.width(), map.height(), map.channels());
    let pw = w + 2;
    let mut padded = vec![0.0; pw * (h + 2) * ch];
    for r in 0..h {
        let src = &map.data()[r * w * ch..(r + 1) * w * ch];
        let dst = ((r + 1) * pw + 1) * ch;
        padded[dst..dst + w * ch].copy_from_slice(src);
    }
    padded
}

/// Accumulates `L^(g) * D^(g)` for one shift into `acc`, where `L^(g)` is the
/// `W x H` window of the padded map offset by `g` from the centre.
fn accumulate_shift(
    acc: &mut [f64],
    padded_left: &[f64],
    padded_kernel: &[f64],
    shape: Shape,
    g: GridShift,
) {
    let (w, h, ch) = (shape.width, shape.height, shape.channels);
    let pw = w + 2;
    let row_len = w * ch;
    for r in 0..h {
        let pr = (r as isize + 1 + g.dj as isize) as usize;
        let pc = (1 + g.di as isize) as usize;
        let start = (pr * pw + pc) * ch;
        let lw = &padded_left[start..start + row_len];
        let kw = &padded_kernel[start..start + row_len];
        let out = &mut acc[r * row_len..(r + 1) * row_len];
        for ((o, &a), &b) in out.iter_mut().zip(lw).zip(kw) {
            *o += a * b;
        }
    }
}

/// Grid-shifting DDC: nine whole-map Hadamard products of shifted, padded
/// inputs, summed and scaled by 1/9.
pub fn ddc_forward_gridshift(left: &FeatureMap, kernel: &FeatureMap) -> Result<FeatureMap> {
    check_pair(left, kernel)?;
    let shape = left.shape();
    let pl = pad1(left);
    let pk = pad1(kernel);
    let mut acc = vec![0.0; shape.len()];
    for g in GridShift::ALL {
        accumulate_shift(&mut acc, &pl, &pk, shape, g);
    }
    for v in &mut acc {
        *v /= 9.0;
    }
    Ok(FeatureMap::from_raw(shape, acc))
}

/// The contribution of a single shift, `(1/9) * L^(g) ⊙ D^(g)`.
pub fn ddc_shift_term(left: &FeatureMap, kernel: &FeatureMap, g: GridShift) -> Result<FeatureMap> {
    check_pair(left, kernel)?;
    let shape = left.shape();
    let mut acc = vec![0.0; shape.len()];
    accumulate_shift(&mut acc, &pad1(left), &pad1(kernel), shape, g);
    for v in &mut acc {
        *v /= 9.0;
    }
    Ok(FeatureMap::from_raw(shape, acc))
}

/// 3x3 box sum with zero padding, per channel.
fn box_sum3(map: &FeatureMap) -> Vec<f64> {
    let shape = map.shape();
    let padded = pad1(map);
    let ones = vec![1.0; padded.len()];
    let mut acc = vec![0.0; shape.len()];
    for g in GridShift::ALL {
        accumulate_shift(&mut acc, &padded, &ones, shape, g);
    }
    acc
}

/// Gradients of `sum(grad_out ⊙ ddc(left, kernel))` with respect to both
/// inputs.
///
/// DDC is bilinear and every input pixel feeds exactly the outputs whose
/// window covers it, so
/// `dL/dleft(p) = kernel(p) * box3(grad_out)(p) / 9` and symmetrically for
/// the kernel.
pub fn ddc_backward(
    grad_out: &FeatureMap,
    left: &FeatureMap,
    kernel: &FeatureMap,
) -> Result<(FeatureMap, FeatureMap)> {
    check_pair(left, kernel)?;
    left.ensure_same_shape(grad_out)?;
    let boxed = box_sum3(grad_out);
    let grad_left = boxed
        .iter()
        .zip(kernel.data())
        .map(|(&g, &k)| g * k / 9.0)
        .collect();
    let grad_kernel = boxed
        .iter()
        .zip(left.data())
        .map(|(&g, &l)| g * l / 9.0)
        .collect();
    Ok((
        FeatureMap::from_raw(left.shape(), grad_left),
        FeatureMap::from_raw(left.shape(), grad_kernel),
    ))
}

/// Feature-level virtual right view: left features filtered by the
/// normalized disparity, replicated across the feature channels. The
/// disparity must already be at feature resolution.
pub fn generate_virtual_right_features(
    left: &FeatureMap,
    disp: &DisparityMap,
    norm: &DisparityNormalization,
) -> Result<FeatureMap> {
    if disp.shape() != Shape::plane(left.width(), left.height()) {
        return Err(Error::shape(
            Shape::plane(left.width(), left.height()),
            disp.shape(),
        ));
    }
    let kernel = broadcast_channels(&normalize_disparity(disp, norm)?, left.channels())?;
    ddc_forward_gridshift(left, &kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> FeatureMap {
        FeatureMap::from_fn(w, h, c, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    // independent per-pixel oracle written against the formula, not the kernels above
    fn oracle(l: &FeatureMap, d: &FeatureMap) -> Vec<f64> {
        let (w, h, ch) = (l.width(), l.height(), l.channels());
        let mut out = Vec::new();
        for r in 0..h {
            for c in 0..w {
                for k in 0..ch {
                    let mut s = 0.0;
                    for u in c as isize - 1..=c as isize + 1 {
                        for v in r as isize - 1..=r as isize + 1 {
                            if u >= 0 && v >= 0 && (u as usize) < w && (v as usize) < h {
                                s += d.at(v as usize, u as usize, k)
                                    * l.at(v as usize, u as usize, k);
                            }
                        }
                    }
                    out.push(s / 9.0);
                }
            }
        }
        out
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let pairs: Vec<(i8, i8)> = GridShift::ALL.iter().map(|g| (g.di, g.dj)).collect();
        assert_eq!(pairs[0], (-1, -1));
        assert_eq!(pairs[1], (-1, 0));
        assert_eq!(pairs[4], (0, 0));
        assert_eq!(pairs[8], (1, 1));
        let unique: std::collections::HashSet<_> = GridShift::ALL.iter().collect();
        assert_eq!(unique.len(), 9);
        assert!(GridShift::new(2, 0).is_err());
    }

    #[test]
    fn normalization_constants() {
        let norm = DisparityNormalization::default();
        let d = DisparityMap::new(3, 1, vec![33.20, 49.11, 5.0], vec![true, true, false]).unwrap();
        let f = normalize_disparity(&d, &norm).unwrap();
        assert_eq!(f.data()[0], 0.0);
        // 49.11 - 33.20 is exact in binary, but the decimal constants are not,
        // so the quotient lands one ulp below 1
        assert!((f.data()[1] - 1.0).abs() <= f64::EPSILON);
        assert_eq!(f.data()[2], 0.0);
        // f32-sourced inputs (as read from PFM) with f32 constants are exact
        let narrow = DisparityNormalization {
            mu: 33.20f32 as f64,
            sigma: 15.91f32 as f64,
        };
        let d32 = DisparityMap::constant(1, 1, 49.11f32 as f64).unwrap();
        assert_eq!(normalize_disparity(&d32, &narrow).unwrap().data(), &[1.0]);
        let bad = DisparityNormalization {
            mu: 0.0,
            sigma: 0.0,
        };
        assert!(matches!(
            normalize_disparity(&d, &bad),
            Err(Error::Domain(_))
        ));
        let c = normalize_disparity(&DisparityMap::constant(4, 4, 20.0).unwrap(), &norm).unwrap();
        assert!(c.data().iter().all(|&v| v == c.data()[0]));
    }

    #[test]
    fn mean_filter_reduction() {
        let l = FeatureMap::new(4, 4, 1, 9.0).unwrap();
        let d = FeatureMap::new(4, 4, 1, 1.0).unwrap();
        for out in [
            ddc_forward_naive(&l, &d).unwrap(),
            ddc_forward_gridshift(&l, &d).unwrap(),
        ] {
            assert_eq!(out.at(1, 1, 0), 9.0);
            assert_eq!(out.at(0, 0, 0), 4.0);
            assert_eq!(out.at(0, 3, 0), 4.0);
            assert_eq!(out.at(0, 1, 0), 6.0);
        }
    }

    #[test]
    fn zero_kernel_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = random_map(&mut rng, 5, 4, 3);
        let d = FeatureMap::new(5, 4, 3, 0.0).unwrap();
        assert!(ddc_forward_naive(&l, &d)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(ddc_forward_gridshift(&l, &d)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn naive_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = random_map(&mut rng, 4, 3, 2);
        let d = random_map(&mut rng, 4, 3, 2);
        let out = ddc_forward_naive(&l, &d).unwrap();
        assert_eq!(out.data(), oracle(&l, &d).as_slice());
    }

    #[test]
    fn gridshift_matches_naive_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = random_map(&mut rng, 8, 8, 4);
        let d = random_map(&mut rng, 8, 8, 4);
        let a = ddc_forward_naive(&l, &d).unwrap();
        let b = ddc_forward_gridshift(&l, &d).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn centre_term_is_scaled_hadamard() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = random_map(&mut rng, 5, 3, 2);
        let d = random_map(&mut rng, 5, 3, 2);
        let t = ddc_shift_term(&l, &d, GridShift { di: 0, dj: 0 }).unwrap();
        for i in 0..l.data().len() {
            assert_eq!(t.data()[i], l.data()[i] * d.data()[i] / 9.0);
        }
        // a corner shift reads the padded row/column: first row and column are zero
        let t = ddc_shift_term(&l, &d, GridShift { di: -1, dj: -1 }).unwrap();
        assert_eq!(t.at(0, 2, 1), 0.0);
        assert_eq!(t.at(1, 0, 0), 0.0);
        assert_eq!(t.at(1, 1, 0), l.at(0, 0, 0) * d.at(0, 0, 0) / 9.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = FeatureMap::new(4, 4, 2, 1.0).unwrap();
        let b = FeatureMap::new(4, 4, 1, 1.0).unwrap();
        assert!(ddc_forward_naive(&a, &b).is_err());
        assert!(ddc_forward_gridshift(&a, &b).is_err());
        assert!(ddc_backward(&b, &a, &a).is_err());
    }

    #[test]
    fn backward_zero_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = random_map(&mut rng, 5, 5, 2);
        let d = random_map(&mut rng, 5, 5, 2);
        let g = FeatureMap::new(5, 5, 2, 0.0).unwrap();
        let (gl, gd) = ddc_backward(&g, &l, &d).unwrap();
        assert!(gl.data().iter().chain(gd.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn backward_of_mean_filter_is_box_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = random_map(&mut rng, 4, 3, 1);
        let ones = FeatureMap::new(4, 3, 1, 1.0).unwrap();
        let g = random_map(&mut rng, 4, 3, 1);
        let (gl, _) = ddc_backward(&g, &l, &ones).unwrap();
        for r in 0..3isize {
            for c in 0..4isize {
                let mut s = 0.0;
                for rr in r - 1..=r + 1 {
                    for cc in c - 1..=c + 1 {
                        if (0..3).contains(&rr) && (0..4).contains(&cc) {
                            s += g.at(rr as usize, cc as usize, 0);
                        }
                    }
                }
                let got = gl.at(r as usize, c as usize, 0);
                assert!((got - s / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l = random_map(&mut rng, 5, 5, 2);
        let d = random_map(&mut rng, 5, 5, 2);
        let g = random_map(&mut rng, 5, 5, 2);
        let loss = |l: &FeatureMap, d: &FeatureMap| -> f64 {
            let out = ddc_forward_naive(l, d).unwrap();
            out.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        let (gl, gd) = ddc_backward(&g, &l, &d).unwrap();
        let h = 1e-5;
        for i in 0..l.data().len() {
            let bump = |m: &FeatureMap, delta: f64| {
                let mut v = m.data().to_vec();
                v[i] += delta;
                FeatureMap::from_vec(5, 5, 2, v).unwrap()
            };
            let fd_l = (loss(&bump(&l, h), &d) - loss(&bump(&l, -h), &d)) / (2.0 * h);
            let fd_d = (loss(&l, &bump(&d, h)) - loss(&l, &bump(&d, -h))) / (2.0 * h);
            assert!((fd_l - gl.data()[i]).abs() <= 1e-6 * fd_l.abs().max(1e-3));
            assert!((fd_d - gd.data()[i]).abs() <= 1e-6 * fd_d.abs().max(1e-3));
        }
    }

    #[test]
    fn downsample_averages_valid_cells() {
        let values = vec![
            1.0, 3.0, 5.0, 5.0, 9.0, //
            5.0, 7.0, 0.0, 7.0, 1.0, //
            2.0, 2.0, 4.0, 4.0, 6.0,
        ];
        let mut valid = vec![true; 15];
        valid[7] = false;
        let d = DisparityMap::new(5, 3, values, valid).unwrap();
        let s = downsample_disparity(&d, 2).unwrap();
        assert_eq!((s.width(), s.height()), (3, 2));
        assert_eq!(s.values(), &[4.0, 17.0 / 3.0, 5.0, 2.0, 4.0, 6.0]);
        let none = DisparityMap::new(2, 2, vec![0.0; 4], vec![false; 4]).unwrap();
        let s = downsample_disparity(&none, 2).unwrap();
        assert_eq!(s.valid(), &[false]);
        assert!(downsample_disparity(&d, 0).is_err());
    }

    #[test]
    fn virtual_right_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = random_map(&mut rng, 6, 4, 3);
        let norm = DisparityNormalization::default();
        let at_mu = DisparityMap::constant(6, 4, 33.20).unwrap();
        let out = generate_virtual_right_features(&l, &at_mu, &norm).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let values: Vec<f64> = (0..24).map(|_| rng.gen_range(1.0..80.0)).collect();
        let disp = DisparityMap::from_values(6, 4, values).unwrap();
        let out = generate_virtual_right_features(&l, &disp, &norm).unwrap();
        let kernel = broadcast_channels(&normalize_disparity(&disp, &norm).unwrap(), 3).unwrap();
        let naive = ddc_forward_naive(&l, &kernel).unwrap();
        for (a, b) in out.data().iter().zip(naive.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        let wrong = DisparityMap::constant(5, 4, 1.0).unwrap();
        assert!(generate_virtual_right_features(&l, &wrong, &norm).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (FeatureMap, FeatureMap)> {
        (1usize..8, 1usize..8, 1usize..4).prop_flat_map(|(w, h, c)| {
            let n = w * h * c;
            (
                proptest::collection::vec(-2.0f64..2.0, n),
                proptest::collection::vec(-2.0f64..2.0, n),
            )
                .prop_map(move |(a, b)| {
                    (
                        FeatureMap::from_vec(w, h, c, a).unwrap(),
                        FeatureMap::from_vec(w, h, c, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn ddc_is_symmetric((x, y) in arb_pair()) {
            let a = ddc_forward_gridshift(&x, &y).unwrap();
            let b = ddc_forward_gridshift(&y, &x).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ddc_is_homogeneous((x, y) in arb_pair(), s in -3.0f64..3.0) {
            let scaled = FeatureMap::from_vec(x.width(), x.height(), x.channels(),
                x.data().iter().map(|v| v * s).collect()).unwrap();
            let lhs = ddc_forward_gridshift(&scaled, &y).unwrap();
            let rhs = ddc_forward_gridshift(&x, &y).unwrap();
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - s * b).abs() <= 1e-12 * (s * b).abs().max(1.0));
            }
        }
    }
}
