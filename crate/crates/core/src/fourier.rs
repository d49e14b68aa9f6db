//! Centered, orthonormal 2D DFT pair.
//!
//! `fft2c(x) = fftshift(fft2(ifftshift(x))) / sqrt(H * W)`, so the DC
//! coefficient sits at `(H / 2, W / 2)` and the map is unitary. Plans are
//! cached per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::{CoilStack, ComplexGrid};

/// Plans keyed by `(length, inverse)`.
type PlanCache = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, PlanCache)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, direction == FftDirection::Inverse))
            .or_insert_with(|| planner.plan_fft(len, direction))
            .clone()
    })
}

/// Circularly shifts `src` into `dst` so that `dst[(i + shift) % n] = src[i]`.
fn roll_into(src: &[Complex64], dst: &mut [Complex64], shift: usize) {
    let n = src.len();
    let (head, tail) = src.split_at(n - shift);
    dst[shift..].copy_from_slice(head);
    dst[..shift].copy_from_slice(tail);
}

/// 1D centered transform along every row and then every column.
fn transform(grid: &ComplexGrid, direction: FftDirection) -> ComplexGrid {
    let (h, w) = grid.shape();
    let mut out = ComplexGrid::zeros(h, w);
    if h == 0 || w == 0 {
        return out;
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();

    // ifftshift moves the center to index 0, fftshift moves it back.
    let (pre_w, post_w) = (w - w / 2, w / 2);
    let (pre_h, post_h) = (h - h / 2, h / 2);

    let row_fft = plan(w, direction);
    let col_fft = plan(h, direction);
    let mut scratch =
        vec![Complex64::default(); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];

    let mut line = vec![Complex64::default(); w.max(h)];
    {
        let out_data = out.as_mut_slice();
        for r in 0..h {
            let buf = &mut line[..w];
            roll_into(grid.row(r), buf, pre_w % w);
            row_fft.process_with_scratch(buf, &mut scratch);
            roll_into(buf, &mut out_data[r * w..(r + 1) * w], post_w % w);
        }
    }

    let mut column = vec![Complex64::default(); h];
    let out_data = out.as_mut_slice();
    for c in 0..w {
        for r in 0..h {
            column[r] = out_data[r * w + c];
        }
        let buf = &mut line[..h];
        roll_into(&column, buf, pre_h % h);
        col_fft.process_with_scratch(buf, &mut scratch);
        roll_into(buf, &mut column, post_h % h);
        for r in 0..h {
            out_data[r * w + c] = column[r] * scale;
        }
    }
    out
}

/// Forward centered unitary 2D DFT.
pub fn fft2c(image: &ComplexGrid) -> ComplexGrid {
    transform(image, FftDirection::Forward)
}

/// Inverse of [`fft2c`].
pub fn ifft2c(kspace: &ComplexGrid) -> ComplexGrid {
    transform(kspace, FftDirection::Inverse)
}

pub fn fft2c_coils(images: &CoilStack) -> CoilStack {
    images
        .map_coils(fft2c)
        .expect("per-coil transform preserves shapes")
}

pub fn ifft2c_coils(kspace: &CoilStack) -> CoilStack {
    kspace
        .map_coils(ifft2c)
        .expect("per-coil transform preserves shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_grid(h: usize, w: usize, seed: u64) -> ComplexGrid {
        let mut rng = seeded(seed);
        ComplexGrid::from_fn(h, w, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    /// Direct O(N^2) centered DFT, the independent oracle.
    fn naive_fft2c(x: &ComplexGrid) -> ComplexGrid {
        let (h, w) = x.shape();
        let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
        let norm = 1.0 / ((h * w) as f64).sqrt();
        ComplexGrid::from_fn(h, w, |ku, kv| {
            let mut acc = Complex64::default();
            for r in 0..h {
                for c in 0..w {
                    let phase = -2.0 * PI
                        * ((ku as f64 - ch) * (r as f64 - ch) / h as f64
                            + (kv as f64 - cw) * (c as f64 - cw) / w as f64);
                    acc += x[(r, c)] * Complex64::from_polar(1.0, phase);
                }
            }
            acc * norm
        })
    }

    #[test]
    fn matches_direct_dft_for_odd_and_even_sizes() {
        for &(h, w) in &[(8, 8), (5, 7), (6, 9), (1, 4)] {
            let x = random_grid(h, w, 11 + h as u64);
            let fast = fft2c(&x);
            let slow = naive_fft2c(&x);
            let err = fast.sub(&slow).unwrap().l2_norm() / slow.l2_norm();
            assert!(err < 1e-12, "{h}x{w}: {err}");
        }
    }

    #[test]
    fn centered_impulse_maps_to_constant() {
        let mut x = ComplexGrid::zeros(8, 8);
        x[(4, 4)] = Complex64::new(1.0, 0.0);
        let k = fft2c(&x);
        for v in k.as_slice() {
            assert!((v - Complex64::new(0.125, 0.0)).norm() < 1e-15);
        }
        let back = ifft2c(&k);
        assert!(back.sub(&x).unwrap().l2_norm() < 1e-15);
    }

    #[test]
    fn zero_maps_to_zero() {
        let z = ComplexGrid::zeros(6, 10);
        assert_eq!(ifft2c(&z), z);
        assert_eq!(fft2c(&z), z);
    }

    #[test]
    fn round_trip_and_unitarity_64() {
        let x = random_grid(64, 64, 3);
        let k = fft2c(&x);
        assert!((k.l2_norm() - x.l2_norm()).abs() / x.l2_norm() < 1e-12);
        let back = ifft2c(&k);
        assert!(back.sub(&x).unwrap().l2_norm() / x.l2_norm() < 1e-12);
    }

    #[test]
    fn inner_products_and_linearity() {
        let x = random_grid(12, 18, 5);
        let y = random_grid(12, 18, 6);
        let lhs = fft2c(&x).inner(&fft2c(&y)).unwrap();
        let rhs = x.inner(&y).unwrap();
        assert!((lhs - rhs).norm() / rhs.norm() < 1e-12);

        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
        let combo = x.scale_complex(a).add(&y.scale_complex(b)).unwrap();
        let expect = fft2c(&x)
            .scale_complex(a)
            .add(&fft2c(&y).scale_complex(b))
            .unwrap();
        assert!(fft2c(&combo).sub(&expect).unwrap().l2_norm() / expect.l2_norm() < 1e-12);
    }
}
