//! Geometric augmentations applied to complex coil images.
//!
//! Every transform acts identically on the real and imaginary plane of every
//! coil. Flips, quarter turns and whole-pixel circular shifts are exact pixel
//! permutations. Everything else is folded into one affine matrix and
//! resampled once (see [`affine`]).

pub mod affine;

use serde::{Deserialize, Serialize};

pub use affine::{Affine, Interpolation};

use crate::error::{Error, Result};
use crate::grid::{CoilStack, ComplexGrid, RealGrid};

/// Tolerance used to decide that a translation is a whole number of pixels.
const INTEGER_SHIFT_TOL: f64 = 1e-9;

/// One resolved augmentation with its sampled parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    /// Left-right mirror.
    HFlip,
    /// Top-bottom mirror.
    VFlip,
    /// `k` counter-clockwise quarter turns.
    Rot90 { k: u8 },
    /// Rotation in degrees, counter-clockwise as displayed.
    Rotate { angle: f64 },
    /// Shift by fractions of the image width (`dx`) and height (`dy`).
    Translate { dx: f64, dy: f64 },
    ScaleIso { s: f64 },
    ScaleAniso { sx: f64, sy: f64 },
    /// Shear angles in degrees along x and y.
    Shear { angle_x: f64, angle_y: f64 },
}

impl TransformKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::HFlip => "hflip",
            TransformKind::VFlip => "vflip",
            TransformKind::Rot90 { .. } => "rot90",
            TransformKind::Rotate { .. } => "rotate",
            TransformKind::Translate { .. } => "translate",
            TransformKind::ScaleIso { .. } => "scale_iso",
            TransformKind::ScaleAniso { .. } => "scale_aniso",
            TransformKind::Shear { .. } => "shear",
        }
    }

    /// Whole-pixel shift `(columns, rows)` if the translation is integral.
    pub fn integer_shift(&self, height: usize, width: usize) -> Option<(isize, isize)> {
        match *self {
            TransformKind::Translate { dx, dy } => {
                let (px, py) = (dx * width as f64, dy * height as f64);
                let (rx, ry) = (px.round(), py.round());
                ((px - rx).abs() < INTEGER_SHIFT_TOL && (py - ry).abs() < INTEGER_SHIFT_TOL)
                    .then_some((rx as isize, ry as isize))
            }
            _ => None,
        }
    }

    /// True if the transform permutes pixels on a `height x width` grid.
    pub fn is_pixel_preserving(&self, height: usize, width: usize) -> bool {
        match self {
            TransformKind::HFlip | TransformKind::VFlip | TransformKind::Rot90 { .. } => true,
            TransformKind::Translate { .. } => self.integer_shift(height, width).is_some(),
            _ => false,
        }
    }

    /// Affine matrix on a `height x width` grid, `None` for flips and quarter turns.
    pub fn matrix(&self, height: usize, width: usize) -> Option<Affine> {
        Some(match *self {
            TransformKind::HFlip | TransformKind::VFlip | TransformKind::Rot90 { .. } => return None,
            TransformKind::Rotate { angle } => Affine::rotation(angle),
            TransformKind::Translate { dx, dy } => {
                Affine::translation(dx * width as f64, dy * height as f64)
            }
            TransformKind::ScaleIso { s } => Affine::scaling(s, s),
            TransformKind::ScaleAniso { sx, sy } => Affine::scaling(sx, sy),
            TransformKind::Shear { angle_x, angle_y } => Affine::shear(angle_x, angle_y),
        })
    }
}

/// The augmentation drawn for one slice: the reproducibility record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub volume: u64,
    pub slice: u64,
    pub epoch: u64,
    /// Augmentation probability `p` in effect when the spec was drawn.
    pub probability: f64,
    /// Transforms in application order.
    pub transforms: Vec<TransformKind>,
}

impl TransformSpec {
    pub fn identity(volume: u64, slice: u64, epoch: u64) -> Self {
        Self {
            volume,
            slice,
            epoch,
            probability: 0.0,
            transforms: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

fn permute(grid: &ComplexGrid, t: &TransformKind) -> ComplexGrid {
    let (h, w) = grid.shape();
    match *t {
        TransformKind::HFlip => ComplexGrid::from_fn(h, w, |r, c| grid[(r, w - 1 - c)]),
        TransformKind::VFlip => ComplexGrid::from_fn(h, w, |r, c| grid[(h - 1 - r, c)]),
        TransformKind::Rot90 { k } => match k % 4 {
            0 => grid.clone(),
            1 => ComplexGrid::from_fn(w, h, |r, c| grid[(c, w - 1 - r)]),
            2 => ComplexGrid::from_fn(h, w, |r, c| grid[(h - 1 - r, w - 1 - c)]),
            _ => ComplexGrid::from_fn(w, h, |r, c| grid[(h - 1 - c, r)]),
        },
        TransformKind::Translate { .. } => {
            let (sx, sy) = t.integer_shift(h, w).expect("checked by caller");
            let (sx, sy) = (sx.rem_euclid(w as isize) as usize, sy.rem_euclid(h as isize) as usize);
            ComplexGrid::from_fn(h, w, |r, c| grid[((r + h - sy) % h, (c + w - sx) % w)])
        }
        _ => unreachable!("not a pixel permutation"),
    }
}

/// Applies a flip, quarter turn or whole-pixel circular shift.
pub fn apply_pixel_preserving(stack: &CoilStack, t: &TransformKind) -> Result<CoilStack> {
    let (h, w) = stack.shape();
    if !t.is_pixel_preserving(h, w) {
        return Err(Error::invalid(
            "transform",
            format!("{} with these parameters requires interpolation", t.name()),
        ));
    }
    stack.map_coils(|g| permute(g, t))
}

/// Applies one interpolating transform.
pub fn apply_affine(stack: &CoilStack, t: &TransformKind, interp: Interpolation) -> Result<CoilStack> {
    let (h, w) = stack.shape();
    let m = t.matrix(h, w).ok_or_else(|| {
        Error::invalid("transform", format!("{} is not an affine warp", t.name()))
    })?;
    affine::warp(stack, &m, interp)
}

/// Applies `transforms` in order. Runs of interpolating transforms are
/// merged into a single warp.
pub fn compose(
    stack: &CoilStack,
    transforms: &[TransformKind],
    interp: Interpolation,
) -> Result<CoilStack> {
    let mut current = stack.clone();
    let mut pending: Option<Affine> = None;
    for t in transforms {
        let (h, w) = current.shape();
        if t.is_pixel_preserving(h, w) {
            if let Some(m) = pending.take() {
                current = affine::warp(&current, &m, interp)?;
            }
            current = apply_pixel_preserving(&current, t)?;
        } else {
            let m = t.matrix(h, w).expect("non-permutations carry a matrix");
            pending = Some(match pending {
                Some(acc) => acc.then(&m),
                None => m,
            });
        }
    }
    if let Some(m) = pending {
        current = affine::warp(&current, &m, interp)?;
    }
    Ok(current)
}

/// Runs [`compose`] on a real image (treated as a zero-phase single coil).
pub fn compose_real(image: &RealGrid, transforms: &[TransformKind], interp: Interpolation) -> Result<RealGrid> {
    let out = compose(&CoilStack::single(image.to_complex()), transforms, interp)?;
    Ok(out.coil(0).re())
}
