//! Two-dimensional sample containers shared by every other module.
//!
//! Samples are stored row-major. Complex samples use [`Complex64`], which is
//! laid out as an interleaved `(re, im)` pair, so a `ComplexGrid` maps onto
//! the on-disk slice format without transposition.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar types that can live in a [`Grid`].
pub trait Sample: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    fn modulus_sqr(self) -> f64;
    fn is_finite_sample(self) -> bool;
}

impl Sample for f64 {
    #[inline]
    fn modulus_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn is_finite_sample(self) -> bool {
        self.is_finite()
    }
}

impl Sample for Complex64 {
    #[inline]
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn is_finite_sample(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Dense row-major 2D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Complex image- or k-space slice.
pub type ComplexGrid = Grid<Complex64>;
/// Real-valued image, e.g. an RSS target.
pub type RealGrid = Grid<f64>;

impl<T: Sample> Grid<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![T::default(); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(
                "data",
                format!(
                    "length {} does not match {height}x{width}",
                    data.len()
                ),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn map<U: Sample>(&self, mut f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite_sample())
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape,
                found: self.shape(),
            });
        }
        Ok(())
    }

    /// Euclidean norm over all samples.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.modulus_sqr()).sum::<f64>().sqrt()
    }

    /// Centered `out_h x out_w` window. Odd margins drop the extra
    /// row/column from the bottom/right: the start offset is
    /// `floor((in - out) / 2)` on each axis.
    pub fn center_crop(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == 0 || out_w == 0 || out_h > self.height || out_w > self.width {
            return Err(Error::CropExceedsInput {
                requested: (out_h, out_w),
                input: self.shape(),
            });
        }
        let r0 = (self.height - out_h) / 2;
        let c0 = (self.width - out_w) / 2;
        let mut data = Vec::with_capacity(out_h * out_w);
        for r in r0..r0 + out_h {
            let start = r * self.width + c0;
            data.extend_from_slice(&self.data[start..start + out_w]);
        }
        Ok(Self {
            height: out_h,
            width: out_w,
            data,
        })
    }
}

impl<T: Sample + std::ops::Add<Output = T>> Grid<T> {
    pub fn add(&self, other: &Self) -> Result<Self> {
        other.ensure_shape(self.shape())?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }
}

impl<T: Sample + std::ops::Sub<Output = T>> Grid<T> {
    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.ensure_shape(self.shape())?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }
}

impl<T: Sample + std::ops::Mul<f64, Output = T>> Grid<T> {
    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| v * alpha)
    }
}

impl ComplexGrid {
    pub fn abs(&self) -> RealGrid {
        self.map(|v| v.norm())
    }

    pub fn re(&self) -> RealGrid {
        self.map(|v| v.re)
    }

    pub fn scale_complex(&self, alpha: Complex64) -> Self {
        self.map(|v| v * alpha)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        other.ensure_shape(self.shape())?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    /// `<self, other>` with the conjugate on `other`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        other.ensure_shape(self.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b.conj())
            .sum())
    }
}

impl RealGrid {
    pub fn to_complex(&self) -> ComplexGrid {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.height && c < self.width);
        &self.data[r * self.width + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.height && c < self.width);
        &mut self.data[r * self.width + c]
    }
}

/// Ordered set of per-coil grids sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilStack {
    grids: Vec<ComplexGrid>,
}

impl CoilStack {
    pub fn new(grids: Vec<ComplexGrid>) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| Error::invalid("coils", "a coil stack needs at least one coil"))?;
        let shape = first.shape();
        for g in &grids[1..] {
            g.ensure_shape(shape)?;
        }
        Ok(Self { grids })
    }

    pub fn single(grid: ComplexGrid) -> Self {
        Self { grids: vec![grid] }
    }

    pub fn zeros(coils: usize, height: usize, width: usize) -> Self {
        assert!(coils > 0, "coil stack needs at least one coil");
        Self {
            grids: (0..coils).map(|_| ComplexGrid::zeros(height, width)).collect(),
        }
    }

    #[inline]
    pub fn coils(&self) -> usize {
        self.grids.len()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.grids[0].shape()
    }

    #[inline]
    pub fn grids(&self) -> &[ComplexGrid] {
        &self.grids
    }

    #[inline]
    pub fn coil(&self, i: usize) -> &ComplexGrid {
        &self.grids[i]
    }

    pub fn into_grids(self) -> Vec<ComplexGrid> {
        self.grids
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ComplexGrid> {
        self.grids.iter()
    }

    /// Applies `f` to every coil, preserving coil order.
    pub fn map_coils(&self, f: impl Fn(&ComplexGrid) -> ComplexGrid) -> Result<Self> {
        Self::new(self.grids.iter().map(f).collect())
    }

    pub fn try_map_coils(
        &self,
        f: impl Fn(&ComplexGrid) -> Result<ComplexGrid>,
    ) -> Result<Self> {
        Self::new(self.grids.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    pub fn ensure_compatible(&self, other: &Self) -> Result<()> {
        if self.coils() != other.coils() {
            return Err(Error::CoilMismatch {
                expected: self.coils(),
                found: other.coils(),
            });
        }
        other.grids[0].ensure_shape(self.shape())
    }

    pub fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(&ComplexGrid, &ComplexGrid) -> Result<ComplexGrid>,
    ) -> Result<Self> {
        self.ensure_compatible(other)?;
        Self::new(
            self.grids
                .iter()
                .zip(&other.grids)
                .map(|(a, b)| f(a, b))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            grids: self.grids.iter().map(|g| g.scale(alpha)).collect(),
        }
    }

    pub fn scale_complex(&self, alpha: Complex64) -> Self {
        Self {
            grids: self.grids.iter().map(|g| g.scale_complex(alpha)).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.grids
            .iter()
            .map(|g| g.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.ensure_compatible(other)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.grids.iter().zip(&other.grids) {
            acc += a.inner(b)?;
        }
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.grids.iter().all(|g| g.is_finite())
    }

    /// All samples of all coils, coil-major.
    pub fn samples(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.grids.iter().flat_map(|g| g.as_slice().iter().copied())
    }
}

impl Index<usize> for CoilStack {
    type Output = ComplexGrid;

    fn index(&self, i: usize) -> &ComplexGrid {
        &self.grids[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counting(h: usize, w: usize) -> RealGrid {
        RealGrid::from_fn(h, w, |r, c| (r * w + c + 1) as f64)
    }

    #[test]
    fn crop_4x4_to_2x2() {
        let g = counting(4, 4);
        let c = g.center_crop(2, 2).unwrap();
        assert_eq!(c.as_slice(), &[6.0, 7.0, 10.0, 11.0]);
    }

    #[test]
    fn crop_to_same_size_is_identity() {
        let g = counting(5, 3);
        assert_eq!(g.center_crop(5, 3).unwrap(), g);
    }

    #[test]
    fn crop_odd_margin_drops_bottom_right() {
        // 5 -> 2 leaves a margin of 3: one row on top, two on the bottom.
        let g = counting(5, 5);
        let c = g.center_crop(2, 2).unwrap();
        assert_eq!(c.as_slice(), &[7.0, 8.0, 12.0, 13.0]);
    }

    #[test]
    fn crop_640x368_to_320x320() {
        let g = ComplexGrid::from_fn(640, 368, |r, c| Complex64::new(r as f64, c as f64));
        let c = g.center_crop(320, 320).unwrap();
        assert_eq!(c.shape(), (320, 320));
        assert_eq!(c[(0, 0)], Complex64::new(160.0, 24.0));
        assert_eq!(c[(319, 319)], Complex64::new(479.0, 343.0));
    }

    #[test]
    fn crop_rejects_oversize_and_zero() {
        let g = counting(4, 4);
        assert!(matches!(
            g.center_crop(5, 2),
            Err(Error::CropExceedsInput { .. })
        ));
        assert!(g.center_crop(0, 2).is_err());
    }

    #[test]
    fn norms_and_linear_plumbing() {
        assert_eq!(ComplexGrid::zeros(3, 3).l2_norm(), 0.0);
        let g = ComplexGrid::from_vec(1, 1, vec![Complex64::new(3.0, 4.0)]).unwrap();
        assert_eq!(g.l2_norm(), 5.0);
        assert_eq!(g.abs().as_slice(), &[5.0]);

        let h = ComplexGrid::from_fn(3, 4, |r, c| Complex64::new(r as f64 - 1.5, c as f64 * 0.3));
        let z = h.add(&h.scale(-1.0)).unwrap();
        assert!(z.as_slice().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = ComplexGrid::zeros(2, 3);
        let b = ComplexGrid::zeros(3, 2);
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
        assert!(CoilStack::new(vec![a, b]).is_err());
        assert!(CoilStack::new(vec![]).is_err());
        assert!(RealGrid::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn crop_with_two_odd_margins_shifts_by_one() {
        let g = counting(1, 5);
        let nested = g.center_crop(1, 4).unwrap().center_crop(1, 3).unwrap();
        assert_eq!(nested.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(g.center_crop(1, 3).unwrap().as_slice(), &[2.0, 3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn crop_composes(h in 1usize..24, w in 1usize..24, fa in 0.0f64..1.0, fb in 0.0f64..1.0) {
            let g = counting(h, w);
            let ah = 1 + ((h - 1) as f64 * fa) as usize;
            let aw = 1 + ((w - 1) as f64 * fa) as usize;
            let bh = 1 + ((ah - 1) as f64 * fb) as usize;
            let bw = 1 + ((aw - 1) as f64 * fb) as usize;
            // floor offsets compose unless both nested margins are odd
            let composes = |outer: usize, mid: usize, inner: usize| (outer - mid).is_multiple_of(2) || (mid - inner).is_multiple_of(2);
            prop_assume!(composes(h, ah, bh) && composes(w, aw, bw));
            let outer = g.center_crop(ah, aw).unwrap();
            prop_assert_eq!(outer.center_crop(bh, bw).unwrap(), g.center_crop(bh, bw).unwrap());
        }
    }
}
