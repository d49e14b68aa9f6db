//! Synthetic test objects: Shepp-Logan phantoms, smooth coil sensitivity
//! maps and fully simulated multi-coil slices.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{add_noise, apply_sensitivities, NoiseModel, SensitivityMaps};
use crate::error::{Error, Result};
use crate::fourier::fft2c_coils;
use crate::grid::{CoilStack, ComplexGrid, RealGrid};
use crate::rng::{seeded, volume_stream_seed, SliceKey, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Toft's higher-contrast version.
    #[default]
    Modified,
    /// Original intensities, rescaled by 1/2 to fit [0, 1].
    Original,
    /// Modified intensities with every ellipse mirrored about the vertical
    /// axis, so the image is exactly left-right symmetric.
    Symmetric,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modified" => Ok(Variant::Modified),
            "original" => Ok(Variant::Original),
            "symmetric" => Ok(Variant::Symmetric),
            other => Err(Error::invalid("variant", format!("unknown phantom variant {other:?}"))),
        }
    }
}

/// `(intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)`.
type Ellipse = (f64, f64, f64, f64, f64, f64);

const MODIFIED: [Ellipse; 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

const ORIGINAL_INTENSITY: [f64; 10] = [2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01];

fn ellipses(variant: Variant) -> Vec<Ellipse> {
    match variant {
        Variant::Modified => MODIFIED.to_vec(),
        Variant::Original => MODIFIED
            .iter()
            .zip(ORIGINAL_INTENSITY)
            .map(|(&(_, a, b, x, y, t), i)| (i / 2.0, a, b, x, y, t))
            .collect(),
        Variant::Symmetric => {
            let mut out = Vec::new();
            for &(i, a, b, x, y, t) in &MODIFIED {
                if x == 0.0 && t == 0.0 {
                    out.push((i, a, b, x, y, t));
                }
            }
            // mirrored pairs replace the asymmetric ellipses
            out.push((-0.2, 0.16, 0.41, 0.22, 0.0, -18.0));
            out.push((-0.2, 0.16, 0.41, -0.22, 0.0, 18.0));
            out.push((0.1, 0.046, 0.023, 0.08, -0.605, 0.0));
            out.push((0.1, 0.046, 0.023, -0.08, -0.605, 0.0));
            out
        }
    }
}

/// Rigid-plus-scale perturbation of the phantom, in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub rotate_deg: f64,
    pub scale: f64,
    pub shift: (f64, f64),
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            rotate_deg: 0.0,
            scale: 1.0,
            shift: (0.0, 0.0),
        }
    }
}

impl Jitter {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            rotate_deg: rng.random_range(-10.0..=10.0),
            scale: rng.random_range(0.9..=1.1),
            shift: (rng.random_range(-0.05..=0.05), rng.random_range(-0.05..=0.05)),
        }
    }
}

pub const MIN_PHANTOM_SIZE: usize = 32;

/// Shepp-Logan phantom on the square `[-1, 1]^2` sampled at pixel centers,
/// clamped to `[0, 1]`.
pub fn shepp_logan(height: usize, width: usize, variant: Variant) -> Result<RealGrid> {
    shepp_logan_jittered(height, width, variant, &Jitter::default())
}

pub fn shepp_logan_jittered(
    height: usize,
    width: usize,
    variant: Variant,
    jitter: &Jitter,
) -> Result<RealGrid> {
    if height < MIN_PHANTOM_SIZE || width < MIN_PHANTOM_SIZE {
        return Err(Error::invalid(
            "shape",
            format!("phantom must be at least {MIN_PHANTOM_SIZE}x{MIN_PHANTOM_SIZE}, got {height}x{width}"),
        ));
    }
    if jitter.scale.is_nan() || jitter.scale <= 0.0 {
        return Err(Error::invalid("jitter", "scale must be positive"));
    }
    let shapes: Vec<(f64, f64, f64, f64, f64, f64, f64)> = ellipses(variant)
        .into_iter()
        .map(|(i, a, b, x0, y0, t)| {
            let (s, c) = t.to_radians().sin_cos();
            (i, a * a, b * b, x0, y0, c, s)
        })
        .collect();
    let (js, jc) = jitter.rotate_deg.to_radians().sin_cos();
    let identity = *jitter == Jitter::default();

    Ok(RealGrid::from_fn(height, width, |r, c| {
        let mut x = (2.0 * c as f64 + 1.0 - width as f64) / width as f64;
        let mut y = (height as f64 - 2.0 * r as f64 - 1.0) / height as f64;
        if !identity {
            let (dx, dy) = (x - jitter.shift.0, y - jitter.shift.1);
            x = (jc * dx + js * dy) / jitter.scale;
            y = (-js * dx + jc * dy) / jitter.scale;
        }
        let mut v = 0.0;
        for &(i, a2, b2, x0, y0, ct, st) in &shapes {
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * ct + dy * st;
            let w = -dx * st + dy * ct;
            if u * u / a2 + w * w / b2 <= 1.0 {
                v += i;
            }
        }
        v.clamp(0.0, 1.0)
    }))
}

/// Smooth, normalized complex sensitivities: Gaussian magnitude bumps at
/// equiangular positions on the image border with linear phase ramps. A
/// single coil gets the constant map 1.
pub fn synth_sensitivities<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    coils: usize,
    rng: &mut R,
) -> Result<SensitivityMaps> {
    if coils == 0 {
        return Err(Error::invalid("coils", "at least one coil is required"));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("shape", "map dimensions must be positive"));
    }
    if coils == 1 {
        return Ok(SensitivityMaps::unit(height, width));
    }
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let offset = rng.random_range(0.0..2.0 * PI / coils as f64);
    let mut grids = Vec::with_capacity(coils);
    for i in 0..coils {
        let theta = offset + 2.0 * PI * i as f64 / coils as f64;
        let (px, py) = (cx + 0.5 * width as f64 * theta.cos(), cy + 0.5 * height as f64 * theta.sin());
        let spread = 0.35 * height.max(width) as f64 * rng.random_range(0.9..1.1);
        let phase0 = rng.random_range(0.0..2.0 * PI);
        let (ax, ay) = (rng.random_range(-PI / 2.0..PI / 2.0), rng.random_range(-PI / 2.0..PI / 2.0));
        grids.push(ComplexGrid::from_fn(height, width, |r, c| {
            let (x, y) = (c as f64, r as f64);
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            let mag = (-d2 / (2.0 * spread * spread)).exp();
            let phase = phase0 + ax * (x - cx) / width as f64 + ay * (y - cy) / height as f64;
            Complex64::from_polar(mag, phase)
        }));
    }
    SensitivityMaps::normalized(CoilStack::new(grids)?)
}

/// Geometry and noise level of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub volumes: usize,
    pub slices_per_volume: usize,
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    pub sigma: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Perturb the phantom per slice.
    pub jitter: bool,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            volumes: 2,
            slices_per_volume: 4,
            height: 128,
            width: 128,
            coils: 4,
            sigma: 0.01,
            seed: 0,
            variant: Variant::Modified,
            jitter: true,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        if self.volumes == 0 || self.slices_per_volume == 0 {
            return Err(Error::invalid("volumes", "dataset must contain at least one slice"));
        }
        for (name, n) in [("height", self.height), ("width", self.width)] {
            if n < MIN_PHANTOM_SIZE {
                return Err(Error::invalid(name, format!("{n} is below the minimum of {MIN_PHANTOM_SIZE}")));
            }
        }
        if self.coils == 0 {
            return Err(Error::invalid("coils", "at least one coil is required"));
        }
        NoiseModel::new(self.sigma)?;
        Ok(())
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::new(self.sigma).expect("validated")
    }
}

/// Sensitivities shared by every slice of `volume`.
pub fn volume_sensitivities(params: &SimulationParams, volume: u64) -> Result<SensitivityMaps> {
    let mut rng = seeded(volume_stream_seed(params.seed, volume, Stream::Sensitivities));
    synth_sensitivities(params.height, params.width, params.coils, &mut rng)
}

/// One simulated slice: ground-truth object, clean and noisy k-space.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSlice {
    pub object: RealGrid,
    pub clean_kspace: CoilStack,
    pub kspace: CoilStack,
}

/// Simulates slice `(volume, slice)`; `maps` must come from
/// [`volume_sensitivities`] for the same volume.
pub fn synth_slice(
    params: &SimulationParams,
    maps: &SensitivityMaps,
    volume: u64,
    slice: u64,
) -> Result<SyntheticSlice> {
    let key = SliceKey::new(params.seed, volume, slice, 0);
    let jitter = if params.jitter {
        Jitter::sample(&mut key.rng(Stream::Phantom))
    } else {
        Jitter::default()
    };
    let object = shepp_logan_jittered(params.height, params.width, params.variant, &jitter)?;
    let images = apply_sensitivities(&object.to_complex(), maps)?;
    let noisy = add_noise(&images, params.noise(), &mut key.rng(Stream::Noise));
    Ok(SyntheticSlice {
        object,
        clean_kspace: fft2c_coils(&images),
        kspace: fft2c_coils(&noisy),
    })
}
