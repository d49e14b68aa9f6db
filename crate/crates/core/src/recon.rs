//! Reference reconstructions: zero-filled RSS and a total-variation
//! regularized least-squares solver run per coil.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{adjoint, apply_mask, forward, rss, UndersamplingMask};
use crate::error::{Error, Result};
use crate::grid::{CoilStack, ComplexGrid, RealGrid};
use crate::rng::seeded;

/// RSS of the inverse transform of the masked k-space, center-cropped.
pub fn zero_filled(kspace: &CoilStack, mask: &UndersamplingMask, crop: (usize, usize)) -> Result<RealGrid> {
    rss(&adjoint(kspace, mask)?).center_crop(crop.0, crop.1)
}

/// A differentiable real objective of complex coil images. Gradients use
/// the convention `df/dRe + i df/dIm`.
pub trait Objective {
    fn value(&self, x: &CoilStack) -> Result<f64>;
    fn gradient(&self, x: &CoilStack) -> Result<CoilStack>;
}

/// `sum_i ||M F x_i - k_i||^2 + lambda * TV_mu(x)` with anisotropic,
/// smoothed total variation `sum sqrt(|d|^2 + mu^2)` over forward
/// differences along both axes.
#[derive(Debug, Clone)]
pub struct TvObjective {
    kspace: CoilStack,
    mask: UndersamplingMask,
    pub lambda: f64,
    pub mu: f64,
}

impl TvObjective {
    pub fn new(kspace: &CoilStack, mask: &UndersamplingMask, lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and non-negative"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid("mu", "must be finite and positive"));
        }
        Ok(Self {
            kspace: apply_mask(kspace, mask)?,
            mask: mask.clone(),
            lambda,
            mu,
        })
    }

    fn residual(&self, x: &CoilStack) -> Result<CoilStack> {
        forward(x, &self.mask)?.sub(&self.kspace)
    }

    /// `||A x - k||` over all coils.
    pub fn data_residual(&self, x: &CoilStack) -> Result<f64> {
        Ok(self.residual(x)?.l2_norm())
    }

    fn tv(&self, g: &ComplexGrid) -> f64 {
        let (h, w) = g.shape();
        let mu2 = self.mu * self.mu;
        let mut acc = 0.0;
        for r in 0..h {
            for c in 0..w {
                let v = g[(r, c)];
                if c + 1 < w {
                    acc += ((g[(r, c + 1)] - v).norm_sqr() + mu2).sqrt();
                }
                if r + 1 < h {
                    acc += ((g[(r + 1, c)] - v).norm_sqr() + mu2).sqrt();
                }
            }
        }
        acc
    }

    fn tv_gradient(&self, g: &ComplexGrid, out: &mut ComplexGrid, weight: f64) {
        let (h, w) = g.shape();
        let mu2 = self.mu * self.mu;
        for r in 0..h {
            for c in 0..w {
                let v = g[(r, c)];
                if c + 1 < w {
                    let d = g[(r, c + 1)] - v;
                    let t = d * (weight / (d.norm_sqr() + mu2).sqrt());
                    out[(r, c + 1)] += t;
                    out[(r, c)] -= t;
                }
                if r + 1 < h {
                    let d = g[(r + 1, c)] - v;
                    let t = d * (weight / (d.norm_sqr() + mu2).sqrt());
                    out[(r + 1, c)] += t;
                    out[(r, c)] -= t;
                }
            }
        }
    }
}

impl Objective for TvObjective {
    fn value(&self, x: &CoilStack) -> Result<f64> {
        let data = self.residual(x)?.l2_norm().powi(2);
        if self.lambda == 0.0 {
            return Ok(data);
        }
        let tv: f64 = x.iter().map(|g| self.tv(g)).sum();
        Ok(data + self.lambda * tv)
    }

    fn gradient(&self, x: &CoilStack) -> Result<CoilStack> {
        let data = adjoint(&self.residual(x)?, &self.mask)?.scale(2.0);
        if self.lambda == 0.0 {
            return Ok(data);
        }
        let mut grids = data.into_grids();
        for (out, g) in grids.iter_mut().zip(x.iter()) {
            self.tv_gradient(g, out, self.lambda);
        }
        CoilStack::new(grids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvParams {
    pub lambda: f64,
    pub iterations: usize,
    /// Initial and largest gradient step.
    pub step: f64,
    /// TV smoothing; `None` uses `1e-6` times the peak zero-filled intensity.
    pub mu: Option<f64>,
    pub max_halvings: usize,
    /// Start from the zero-filled images instead of zero.
    pub warm_start: bool,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            iterations: 100,
            step: 0.5,
            mu: None,
            max_halvings: 40,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvResult {
    /// Center-cropped RSS of the reconstructed coils.
    pub image: RealGrid,
    pub coils: CoilStack,
    /// Objective value before the first and after every accepted step.
    pub objective: Vec<f64>,
    /// `||A x - k||` at the returned solution.
    pub data_residual: f64,
}

/// Gradient descent on [`TvObjective`], by default from the zero-filled
/// images. A step
/// that would increase the objective is halved until it does not; if
/// `max_halvings` halvings do not suffice away from a stationary point, the
/// solver reports [`Error::Divergence`].
pub fn tv_reconstruct(
    kspace: &CoilStack,
    mask: &UndersamplingMask,
    params: &TvParams,
    crop: (usize, usize),
) -> Result<TvResult> {
    if !(params.step > 0.0 && params.step.is_finite()) {
        return Err(Error::invalid("step", "must be finite and positive"));
    }
    let zf = adjoint(kspace, mask)?;
    let mu = match params.mu {
        Some(mu) => mu,
        None => 1e-6 * rss(&zf).max().max(f64::MIN_POSITIVE),
    };
    let mut x = if params.warm_start {
        zf
    } else {
        let (h, w) = zf.shape();
        CoilStack::zeros(zf.coils(), h, w)
    };
    let objective = TvObjective::new(kspace, mask, params.lambda, mu)?;
    let mut f = objective.value(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFinite("initial objective"));
    }
    let mut trace = vec![f];
    let mut step = params.step;
    let scale = x.l2_norm().max(1.0);

    'outer: for iteration in 0..params.iterations {
        let g = objective.gradient(&x)?;
        let gnorm = g.l2_norm();
        if gnorm == 0.0 {
            break;
        }
        let mut halvings = 0;
        loop {
            let candidate = x.sub(&g.scale(step))?;
            let fc = objective.value(&candidate)?;
            if fc <= f {
                x = candidate;
                f = fc;
                trace.push(f);
                step = (2.0 * step).min(params.step);
                break;
            }
            if halvings == params.max_halvings {
                // no descent left within rounding: treat as converged
                if fc.is_finite() && step * gnorm <= 1e-12 * scale {
                    break 'outer;
                }
                return Err(Error::Divergence { iteration, halvings });
            }
            step *= 0.5;
            halvings += 1;
        }
    }

    Ok(TvResult {
        image: rss(&x).center_crop(crop.0, crop.1)?,
        data_residual: objective.data_residual(&x)?,
        coils: x,
        objective: trace,
    })
}

/// Largest relative disagreement between the analytic directional
/// derivative `Re <grad f, v>` and central differences with step `eps`,
/// over `directions` random unit directions.
pub fn gradient_check<O: Objective>(
    objective: &O,
    x: &CoilStack,
    directions: usize,
    eps: f64,
    seed: u64,
) -> Result<f64> {
    let g = objective.gradient(x)?;
    let mut rng = seeded(seed);
    let (coils, (h, w)) = (x.coils(), x.shape());
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let grids = (0..coils)
            .map(|_| {
                ComplexGrid::from_fn(h, w, |_, _| {
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                })
            })
            .collect();
        let v = CoilStack::new(grids)?;
        let v = v.scale(1.0 / v.l2_norm());
        let analytic = g.inner(&v)?.re;
        let plus = objective.value(&x.add(&v.scale(eps))?)?;
        let minus = objective.value(&x.sub(&v.scale(eps))?)?;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{apply_sensitivities, make_random_mask};
    use crate::fourier::fft2c_coils;
    use crate::phantom::{shepp_logan, synth_sensitivities, Variant};

    fn setup(n: usize, coils: usize) -> (CoilStack, UndersamplingMask) {
        let object = shepp_logan(n, n, Variant::Modified).unwrap().to_complex();
        let maps = synth_sensitivities(n, n, coils, &mut seeded(1)).unwrap();
        let k = fft2c_coils(&apply_sensitivities(&object, &maps).unwrap());
        let mask = make_random_mask(n, 4, 0.08, &mut seeded(2)).unwrap();
        (apply_mask(&k, &mask).unwrap(), mask)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (k, mask) = setup(32, 2);
        let x = adjoint(&k, &mask).unwrap();
        for lambda in [0.0, 0.05] {
            let obj = TvObjective::new(&k, &mask, lambda, 1e-3).unwrap();
            let err = gradient_check(&obj, &x, 10, 1e-5, 3).unwrap();
            assert!(err < 1e-4, "lambda {lambda}: {err}");
        }
    }

    #[test]
    fn data_gradient_at_zero() {
        let (k, mask) = setup(32, 2);
        let obj = TvObjective::new(&k, &mask, 0.0, 1e-3).unwrap();
        let g = obj.gradient(&CoilStack::zeros(2, 32, 32)).unwrap();
        let expect = adjoint(&k, &mask).unwrap().scale(-2.0);
        assert!(g.sub(&expect).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn objective_is_monotone() {
        let (k, mask) = setup(32, 2);
        let params = TvParams {
            lambda: 0.01,
            iterations: 30,
            ..TvParams::default()
        };
        let res = tv_reconstruct(&k, &mask, &params, (32, 32)).unwrap();
        assert!(res.objective.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.objective.last() < res.objective.first());
    }

    #[test]
    fn unregularized_full_sampling_returns_zero_filled() {
        let (k, _) = setup(32, 3);
        let full = UndersamplingMask::full(32);
        let params = TvParams {
            lambda: 0.0,
            iterations: 20,
            ..TvParams::default()
        };
        let res = tv_reconstruct(&k, &full, &params, (32, 32)).unwrap();
        let zf = zero_filled(&k, &full, (32, 32)).unwrap();
        assert!(res.image.sub(&zf).unwrap().l2_norm() <= 1e-4 * zf.l2_norm());
    }

    #[test]
    fn unregularized_masked_objective_is_monotone() {
        let (k, mask) = setup(32, 2);
        let params = TvParams {
            lambda: 0.0,
            iterations: 10,
            step: 0.2,
            warm_start: false,
            ..TvParams::default()
        };
        let res = tv_reconstruct(&k, &mask, &params, (32, 32)).unwrap();
        assert_eq!(res.objective.len(), 11);
        assert!(res.objective.windows(2).all(|w| w[1] < w[0]));
        // each step shrinks the residual on sampled columns by 1 - 2 * step
        let ratio = res.objective[1] / res.objective[0];
        assert!((ratio - 0.36).abs() < 1e-12, "{ratio}");
    }

    #[test]
    fn residual_shrinks_with_lambda() {
        let (k, mask) = setup(32, 2);
        let run = |lambda| {
            let params = TvParams {
                lambda,
                iterations: 40,
                ..TvParams::default()
            };
            tv_reconstruct(&k, &mask, &params, (32, 32)).unwrap().data_residual
        };
        assert!(run(1e-6) < run(1e-1));
    }

    #[test]
    fn zero_filled_full_mask_is_exact_and_undersampling_hurts() {
        let n = 64;
        let object = shepp_logan(n, n, Variant::Modified).unwrap();
        let maps = synth_sensitivities(n, n, 4, &mut seeded(1)).unwrap();
        let k = fft2c_coils(&apply_sensitivities(&object.to_complex(), &maps).unwrap());
        let full = zero_filled(&k, &UndersamplingMask::full(n), (48, 48)).unwrap();
        let truth = object.center_crop(48, 48).unwrap();
        assert!(full.sub(&truth).unwrap().as_slice().iter().all(|d| d.abs() < 1e-6));
        let mask = make_random_mask(n, 8, 0.04, &mut seeded(5)).unwrap();
        let under = zero_filled(&k, &mask, (48, 48)).unwrap();
        let s_full = crate::metrics::ssim(&full, &truth, 1.0).unwrap();
        let s_under = crate::metrics::ssim(&under, &truth, 1.0).unwrap();
        assert!(s_under < s_full);
        assert_eq!(under, zero_filled(&k, &mask, (48, 48)).unwrap());
    }

    #[test]
    fn invalid_parameters() {
        let (k, mask) = setup(32, 1);
        assert!(TvObjective::new(&k, &mask, -1.0, 1e-3).is_err());
        assert!(TvObjective::new(&k, &mask, 1.0, 0.0).is_err());
        let bad = TvParams {
            step: 0.0,
            ..TvParams::default()
        };
        assert!(tv_reconstruct(&k, &mask, &bad, (32, 32)).is_err());
    }
}
