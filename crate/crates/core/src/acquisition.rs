//! Measurement physics: coil sensitivities, measurement noise, Cartesian
//! column masks, the forward operator `A = M F` and its adjoint, and the
//! root-sum-of-squares image.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fft2c, ifft2c};
use crate::grid::{CoilStack, ComplexGrid, RealGrid};
use crate::rng::{seeded, volume_mask_seed};

/// Complex coil sensitivity maps normalized so that `sum_j |S_j|^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMaps {
    maps: CoilStack,
}

impl SensitivityMaps {
    /// Tolerance of the pixelwise normalization check.
    pub const NORMALIZATION_TOL: f64 = 1e-6;

    /// Wraps maps that already satisfy the normalization.
    pub fn new(maps: CoilStack) -> Result<Self> {
        let s = Self { maps };
        let err = s.normalization_error();
        if err > Self::NORMALIZATION_TOL {
            return Err(Error::invalid(
                "sensitivities",
                format!("sum of squared moduli deviates from 1 by {err:e}"),
            ));
        }
        Ok(s)
    }

    /// Divides every pixel by `sqrt(sum_j |S_j|^2)`.
    pub fn normalized(raw: CoilStack) -> Result<Self> {
        let (h, w) = raw.shape();
        let mut grids = raw.into_grids();
        for idx in 0..h * w {
            let energy: f64 = grids.iter().map(|g| g.as_slice()[idx].norm_sqr()).sum();
            if !energy.is_finite() || energy <= 0.0 {
                return Err(Error::invalid(
                    "sensitivities",
                    format!("pixel {idx} has no coil coverage"),
                ));
            }
            let inv = energy.sqrt().recip();
            for g in grids.iter_mut() {
                g.as_mut_slice()[idx] *= inv;
            }
        }
        Self::new(CoilStack::new(grids)?)
    }

    /// Unit map for a single coil.
    pub fn unit(height: usize, width: usize) -> Self {
        Self {
            maps: CoilStack::single(ComplexGrid::from_fn(height, width, |_, _| {
                Complex64::new(1.0, 0.0)
            })),
        }
    }

    pub fn coils(&self) -> usize {
        self.maps.coils()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.maps.shape()
    }

    pub fn maps(&self) -> &CoilStack {
        &self.maps
    }

    /// Largest pixelwise deviation of `sum_j |S_j|^2` from one.
    pub fn normalization_error(&self) -> f64 {
        let (h, w) = self.shape();
        (0..h * w)
            .map(|idx| {
                let e: f64 = self.maps.iter().map(|g| g.as_slice()[idx].norm_sqr()).sum();
                (e - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Coil combination `sum_j conj(S_j) x_j`.
    pub fn combine(&self, coils: &CoilStack) -> Result<ComplexGrid> {
        self.maps.ensure_compatible(coils)?;
        let (h, w) = self.shape();
        let mut out = ComplexGrid::zeros(h, w);
        for (s, x) in self.maps.iter().zip(coils.iter()) {
            for ((o, &sv), &xv) in out
                .as_mut_slice()
                .iter_mut()
                .zip(s.as_slice())
                .zip(x.as_slice())
            {
                *o += sv.conj() * xv;
            }
        }
        Ok(out)
    }
}

/// Per-component Gaussian noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid("sigma", format!("{sigma} is not a finite non-negative value")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Binary selector over k-space columns (phase-encoding lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndersamplingMask {
    selected: Vec<bool>,
    acceleration: u32,
    /// Stored in parts-per-million so the struct stays `Eq`.
    center_fraction_ppm: u32,
    center_lines: usize,
}

impl UndersamplingMask {
    /// Mask selecting every column.
    pub fn full(width: usize) -> Self {
        Self {
            selected: vec![true; width],
            acceleration: 1,
            center_fraction_ppm: 1_000_000,
            center_lines: width,
        }
    }

    /// Mask from an explicit column selection.
    pub fn from_columns(selected: Vec<bool>, acceleration: u32, center_fraction: f64) -> Result<Self> {
        let width = selected.len();
        let center_lines = center_line_count(width, center_fraction);
        let (start, end) = center_block(width, center_lines);
        if !selected[start..end].iter().all(|&s| s) {
            return Err(Error::invalid("mask", "center block is not fully selected"));
        }
        Ok(Self {
            selected,
            acceleration,
            center_fraction_ppm: (center_fraction * 1e6).round() as u32,
            center_lines,
        })
    }

    pub fn width(&self) -> usize {
        self.selected.len()
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn is_selected(&self, column: usize) -> bool {
        self.selected[column]
    }

    pub fn acceleration(&self) -> u32 {
        self.acceleration
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction_ppm as f64 * 1e-6
    }

    pub fn center_lines(&self) -> usize {
        self.center_lines
    }

    /// Half-open column range of the always-sampled center block.
    pub fn center_range(&self) -> (usize, usize) {
        center_block(self.width(), self.center_lines)
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn is_full(&self) -> bool {
        self.selected.iter().all(|&s| s)
    }

    /// `'1'`/`'0'` per column, used by the run manifest.
    pub fn to_bit_string(&self) -> String {
        self.selected.iter().map(|&s| if s { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(bits: &str, acceleration: u32, center_fraction: f64) -> Result<Self> {
        let selected = bits
            .chars()
            .map(|ch| match ch {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::invalid("mask", format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if selected.is_empty() {
            return Err(Error::invalid("mask", "empty column selection"));
        }
        Self::from_columns(selected, acceleration, center_fraction)
    }
}

/// `round(width * center_fraction)` with halves rounded up.
pub fn center_line_count(width: usize, center_fraction: f64) -> usize {
    ((width as f64 * center_fraction + 0.5).floor() as usize).min(width)
}

/// Columns `[start, start + n)` centered on the DC column `width / 2`.
fn center_block(width: usize, n: usize) -> (usize, usize) {
    let start = (width - n).div_ceil(2);
    (start, start + n)
}

/// Random Cartesian mask: a fully sampled center block of
/// `round(width * center_fraction)` columns, every other column kept
/// independently with probability `(width / R - n_center) / (width - n_center)`.
pub fn make_random_mask<R: Rng + ?Sized>(
    width: usize,
    acceleration: u32,
    center_fraction: f64,
    rng: &mut R,
) -> Result<UndersamplingMask> {
    if width == 0 {
        return Err(Error::invalid("width", "must be positive"));
    }
    if acceleration == 0 {
        return Err(Error::invalid("acceleration", "must be at least 1"));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(Error::invalid(
            "center_fraction",
            format!("{center_fraction} is outside (0, 1)"),
        ));
    }
    let n_center = center_line_count(width, center_fraction);
    let budget = width as f64 / acceleration as f64;
    if n_center as f64 > budget + 1e-12 {
        return Err(Error::InfeasibleMask {
            center: n_center,
            budget,
        });
    }
    let p_line = if n_center == width {
        0.0
    } else {
        ((budget - n_center as f64) / (width - n_center) as f64).clamp(0.0, 1.0)
    };
    let (start, end) = center_block(width, n_center);
    let selected = (0..width)
        .map(|c| {
            // One draw per column keeps the stream position independent of the outcome.
            let u: f64 = rng.random();
            (start..end).contains(&c) || u < p_line
        })
        .collect();
    Ok(UndersamplingMask {
        selected,
        acceleration,
        center_fraction_ppm: (center_fraction * 1e6).round() as u32,
        center_lines: n_center,
    })
}

/// Fixed evaluation mask shared by every slice of `volume`.
pub fn validation_mask(
    seed: u64,
    volume: u64,
    width: usize,
    acceleration: u32,
    center_fraction: f64,
) -> Result<UndersamplingMask> {
    let mut rng = seeded(volume_mask_seed(seed, volume));
    make_random_mask(width, acceleration, center_fraction, &mut rng)
}

/// Probability that a non-center column is selected.
pub fn line_probability(width: usize, acceleration: u32, center_fraction: f64) -> f64 {
    let n_center = center_line_count(width, center_fraction);
    if n_center == width {
        return 0.0;
    }
    ((width as f64 / acceleration as f64 - n_center as f64) / (width - n_center) as f64).clamp(0.0, 1.0)
}

/// Coil images `S_i * object`.
pub fn apply_sensitivities(object: &ComplexGrid, maps: &SensitivityMaps) -> Result<CoilStack> {
    object.ensure_shape(maps.shape())?;
    maps.maps().try_map_coils(|s| s.hadamard(object))
}

/// Adds i.i.d. `N(0, sigma^2)` to the real and imaginary part of every sample.
pub fn add_noise<R: Rng + ?Sized>(coils: &CoilStack, noise: NoiseModel, rng: &mut R) -> CoilStack {
    if noise.sigma() == 0.0 {
        return coils.clone();
    }
    let normal = Normal::new(0.0, noise.sigma()).expect("sigma validated at construction");
    let grids = coils
        .iter()
        .map(|g| {
            g.map(|v| {
                let re = normal.sample(rng);
                let im = normal.sample(rng);
                v + Complex64::new(re, im)
            })
        })
        .collect();
    CoilStack::new(grids).expect("noise preserves shapes")
}

fn mask_grid(k: &ComplexGrid, mask: &UndersamplingMask) -> Result<ComplexGrid> {
    if k.width() != mask.width() {
        return Err(Error::ShapeMismatch {
            expected: (k.height(), mask.width()),
            found: k.shape(),
        });
    }
    let mut out = k.clone();
    let w = k.width();
    for (idx, v) in out.as_mut_slice().iter_mut().enumerate() {
        if !mask.selected[idx % w] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

/// Zeroes unselected columns in every coil.
pub fn apply_mask(kspace: &CoilStack, mask: &UndersamplingMask) -> Result<CoilStack> {
    kspace.try_map_coils(|g| mask_grid(g, mask))
}

/// `A(x)`: per coil, centered FFT followed by the column mask.
pub fn forward(images: &CoilStack, mask: &UndersamplingMask) -> Result<CoilStack> {
    images.try_map_coils(|g| mask_grid(&fft2c(g), mask))
}

/// `A^H(k)`: per coil, column mask followed by the inverse centered FFT.
pub fn adjoint(kspace: &CoilStack, mask: &UndersamplingMask) -> Result<CoilStack> {
    kspace.try_map_coils(|g| Ok(ifft2c(&mask_grid(g, mask)?)))
}

/// Pixelwise `sqrt(sum_i |x_i|^2)`.
pub fn rss(coils: &CoilStack) -> RealGrid {
    let (h, w) = coils.shape();
    let mut acc = RealGrid::zeros(h, w);
    for g in coils.iter() {
        for (a, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += v.norm_sqr();
        }
    }
    for a in acc.as_mut_slice() {
        *a = a.sqrt();
    }
    acc
}
