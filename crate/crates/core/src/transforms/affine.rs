//! Affine warps with bicubic resampling on an upsampled grid.
//!
//! The upsampled grid places sample `u` at original coordinate `u / f`, so
//! every original sample is kept verbatim at index `f * i`. Warped values are
//! read back at those indices, which makes the identity warp exact and limits
//! the whole transform to a single bicubic pass over the upsampled image.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{CoilStack, ComplexGrid};

/// Keys cubic convolution parameter (Catmull-Rom).
const KEYS_A: f64 = -0.5;

/// Smallest accepted `|det|` of the linear part.
pub const MIN_DETERMINANT: f64 = 1e-8;

/// `p -> linear * p + offset` in pixel units, centered on the image center,
/// with `x` to the right and `y` down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl Default for Affine {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        linear: [[1.0, 0.0], [0.0, 1.0]],
        offset: [0.0, 0.0],
    };

    pub fn linear(linear: [[f64; 2]; 2]) -> Self {
        Self {
            linear,
            offset: [0.0, 0.0],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            linear: Self::IDENTITY.linear,
            offset: [tx, ty],
        }
    }

    /// Counter-clockwise as displayed (y axis pointing down).
    pub fn rotation(degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Self::linear([[c, s], [-s, c]])
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::linear([[sx, 0.0], [0.0, sy]])
    }

    pub fn shear(angle_x_deg: f64, angle_y_deg: f64) -> Self {
        Self::linear([
            [1.0, angle_x_deg.to_radians().tan()],
            [angle_y_deg.to_radians().tan(), 1.0],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.linear;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &Affine) -> Affine {
        let a = &next.linear;
        let b = &self.linear;
        let mut linear = [[0.0; 2]; 2];
        for (i, row) in linear.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        let offset = [
            a[0][0] * self.offset[0] + a[0][1] * self.offset[1] + next.offset[0],
            a[1][0] * self.offset[0] + a[1][1] * self.offset[1] + next.offset[1],
        ];
        Affine { linear, offset }
    }

    pub fn inverse(&self) -> Result<Affine> {
        let det = self.determinant();
        if det.is_nan() || det.abs() < MIN_DETERMINANT {
            return Err(Error::DegenerateTransform { det });
        }
        let m = &self.linear;
        let linear = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let offset = [
            -(linear[0][0] * self.offset[0] + linear[0][1] * self.offset[1]),
            -(linear[1][0] * self.offset[0] + linear[1][1] * self.offset[1]),
        ];
        Ok(Affine { linear, offset })
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.linear;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + self.offset[0],
            m[1][0] * p[0] + m[1][1] * p[1] + self.offset[1],
        ]
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Resampling settings for interpolating transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interpolation {
    /// Integer upsampling factor applied before warping; 1 disables it.
    pub upsample: usize,
}

impl Default for Interpolation {
    fn default() -> Self {
        Self { upsample: 2 }
    }
}

#[inline]
fn keys_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((KEYS_A + 2.0) * x - (KEYS_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((KEYS_A * x - 5.0 * KEYS_A) * x + 8.0 * KEYS_A) * x - 4.0 * KEYS_A
    } else {
        0.0
    }
}

/// Taps `floor(x) - 1 ..= floor(x) + 2` and their weights.
#[inline]
fn cubic_taps(x: f64) -> (isize, [f64; 4]) {
    let base = x.floor();
    let t = x - base;
    (
        base as isize - 1,
        [
            keys_kernel(t + 1.0),
            keys_kernel(t),
            keys_kernel(1.0 - t),
            keys_kernel(2.0 - t),
        ],
    )
}

/// Mirror index into `[0, n)` without repeating the edge sample.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Upsampled size covering the original extent: `f * (n - 1) + 1`.
fn upsampled_len(n: usize, factor: usize) -> usize {
    factor * (n - 1) + 1
}

/// Bicubic upsampling along both axes; `out[f*i] == in[i]` exactly.
pub fn upsample(grid: &ComplexGrid, factor: usize) -> ComplexGrid {
    if factor <= 1 {
        return grid.clone();
    }
    let (h, w) = grid.shape();
    let (uh, uw) = (upsampled_len(h, factor), upsampled_len(w, factor));
    let inv = 1.0 / factor as f64;

    let col_taps: Vec<(isize, [f64; 4])> =
        (0..uw).map(|u| cubic_taps(u as f64 * inv)).collect();
    let mut wide = ComplexGrid::zeros(h, uw);
    for r in 0..h {
        let src = grid.row(r);
        for (u, (base, wts)) in col_taps.iter().enumerate() {
            let mut acc = Complex64::default();
            for (k, wt) in wts.iter().enumerate() {
                acc += src[reflect(base + k as isize, w)] * *wt;
            }
            wide[(r, u)] = acc;
        }
    }

    let mut out = ComplexGrid::zeros(uh, uw);
    for v in 0..uh {
        let (base, wts) = cubic_taps(v as f64 * inv);
        let rows: [usize; 4] = std::array::from_fn(|k| reflect(base + k as isize, h));
        for u in 0..uw {
            let mut acc = Complex64::default();
            for k in 0..4 {
                acc += wide[(rows[k], u)] * wts[k];
            }
            out[(v, u)] = acc;
        }
    }
    out
}

/// Resamples every coil under `transform` (a forward map from source to
/// destination), keeping the input shape. Out-of-domain samples are filled
/// by reflection.
pub fn warp(stack: &CoilStack, transform: &Affine, interp: Interpolation) -> Result<CoilStack> {
    let inverse = transform.inverse()?;
    let factor = interp.upsample.max(1);
    let (h, w) = stack.shape();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (uh, uw) = (upsampled_len(h, factor), upsampled_len(w, factor));
    let f = factor as f64;

    let up: Vec<ComplexGrid> = stack.iter().map(|g| upsample(g, factor)).collect();
    let mut out: Vec<ComplexGrid> = (0..stack.coils()).map(|_| ComplexGrid::zeros(h, w)).collect();

    for r in 0..h {
        for c in 0..w {
            let src = inverse.apply([c as f64 - cx, r as f64 - cy]);
            let (ux, uy) = ((src[0] + cx) * f, (src[1] + cy) * f);
            let (bx, wx) = cubic_taps(ux);
            let (by, wy) = cubic_taps(uy);
            let xs: [usize; 4] = std::array::from_fn(|k| reflect(bx + k as isize, uw));
            let ys: [usize; 4] = std::array::from_fn(|k| reflect(by + k as isize, uh));
            for (o, u) in out.iter_mut().zip(&up) {
                let data = u.as_slice();
                let mut acc = Complex64::default();
                for (j, &yy) in ys.iter().enumerate() {
                    let row = &data[yy * uw..(yy + 1) * uw];
                    let mut racc = Complex64::default();
                    for (i, &xx) in xs.iter().enumerate() {
                        racc += row[xx] * wx[i];
                    }
                    acc += racc * wy[j];
                }
                o[(r, c)] = acc;
            }
        }
    }
    let result = CoilStack::new(out)?;
    if !result.is_finite() && stack.is_finite() {
        return Err(Error::NonFinite("affine warp"));
    }
    Ok(result)
}
