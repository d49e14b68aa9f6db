//! Image quality metrics and statistical checks on measurement noise.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::{CoilStack, RealGrid};

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 7;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Structural similarity with a uniform 7x7 window, sample covariance and
/// stabilizers `(0.01 R)^2`, `(0.03 R)^2`, averaged over every window that
/// fits inside the image.
pub fn ssim(x: &RealGrid, reference: &RealGrid, data_range: f64) -> Result<f64> {
    reference.ensure_shape(x.shape())?;
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::invalid("data_range", "must be positive and finite"));
    }
    let (h, w) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "shape",
            format!("images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM"),
        ));
    }
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let cov_norm = np / (np - 1.0);

    let (xs, ys) = (x.as_slice(), reference.as_slice());
    let mut total = 0.0;
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                let row = r * w;
                for idx in row + c0..row + c0 + SSIM_WINDOW {
                    let (a, b) = (xs[idx], ys[idx]);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (ux, uy) = (sx / np, sy / np);
            let vx = cov_norm * (sxx / np - ux * ux);
            let vy = cov_norm * (syy / np - uy * uy);
            let vxy = cov_norm * (sxy / np - ux * uy);
            let num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2);
            let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
            total += num / den;
        }
    }
    Ok(total / ((h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1)) as f64)
}

/// Peak signal-to-noise ratio in dB; infinite for identical images.
pub fn psnr(x: &RealGrid, reference: &RealGrid, data_range: f64) -> Result<f64> {
    reference.ensure_shape(x.shape())?;
    if data_range.is_nan() || data_range <= 0.0 {
        return Err(Error::invalid("data_range", "must be positive"));
    }
    let mse = x.sub(reference)?.l2_norm().powi(2) / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// `||x - ref||^2 / ||ref||^2`.
pub fn nmse(x: &RealGrid, reference: &RealGrid) -> Result<f64> {
    reference.ensure_shape(x.shape())?;
    let err = x.sub(reference)?.l2_norm().powi(2);
    let energy = reference.l2_norm().powi(2);
    if energy == 0.0 {
        return Ok(if err == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(err / energy)
}

/// Fewest samples accepted by [`validate_noise`] and [`cross_coil_covariance`].
pub const MIN_NOISE_SAMPLES: usize = 10_000;

/// Pass thresholds of [`validate_noise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseThresholds {
    /// Largest accepted `|mean| / standard error` per component.
    pub mean_z: f64,
    /// Largest accepted relative difference between re and im variances.
    pub variance_ratio: f64,
    /// Largest accepted `|corr(re, im)|`.
    pub correlation: f64,
    /// Smallest accepted Kolmogorov-Smirnov p-value.
    pub ks_p_value: f64,
}

impl Default for NoiseThresholds {
    fn default() -> Self {
        Self {
            mean_z: 4.0,
            variance_ratio: 0.05,
            correlation: 0.02,
            ks_p_value: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub samples: usize,
    pub mean_re: f64,
    pub mean_im: f64,
    pub var_re: f64,
    pub var_im: f64,
    pub correlation: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
    pub correlation_ok: bool,
    pub normality_ok: bool,
    pub pass: bool,
}

/// Checks that samples look like i.i.d. circular complex Gaussian noise:
/// zero mean, equal re/im variance, uncorrelated re/im, and Gaussian shape
/// (KS test of the pooled standardized components).
pub fn validate_noise(samples: &[Complex64]) -> Result<NoiseReport> {
    validate_noise_with(samples, &NoiseThresholds::default())
}

pub fn validate_noise_with(samples: &[Complex64], t: &NoiseThresholds) -> Result<NoiseReport> {
    let n = samples.len();
    if n < MIN_NOISE_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_NOISE_SAMPLES,
            found: n,
        });
    }
    if samples.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("noise samples"));
    }
    let nf = n as f64;
    let mean_re = samples.iter().map(|v| v.re).sum::<f64>() / nf;
    let mean_im = samples.iter().map(|v| v.im).sum::<f64>() / nf;
    let (mut srr, mut sii, mut sri) = (0.0, 0.0, 0.0);
    for v in samples {
        let (a, b) = (v.re - mean_re, v.im - mean_im);
        srr += a * a;
        sii += b * b;
        sri += a * b;
    }
    let var_re = srr / (nf - 1.0);
    let var_im = sii / (nf - 1.0);
    if var_re == 0.0 || var_im == 0.0 {
        return Err(Error::invalid("noise", "samples have zero variance"));
    }
    let correlation = sri / (srr * sii).sqrt();

    let mean_ok = mean_re.abs() <= t.mean_z * (var_re / nf).sqrt()
        && mean_im.abs() <= t.mean_z * (var_im / nf).sqrt();
    let variance_ok = (var_re - var_im).abs() <= t.variance_ratio * var_re.max(var_im);
    let correlation_ok = correlation.abs() <= t.correlation;

    let (sd_re, sd_im) = (var_re.sqrt(), var_im.sqrt());
    let mut z: Vec<f64> = samples
        .iter()
        .flat_map(|v| [(v.re - mean_re) / sd_re, (v.im - mean_im) / sd_im])
        .collect();
    let (ks_statistic, ks_p_value) = ks_normal(&mut z);
    let normality_ok = ks_p_value >= t.ks_p_value;

    Ok(NoiseReport {
        samples: n,
        mean_re,
        mean_im,
        var_re,
        var_im,
        correlation,
        ks_statistic,
        ks_p_value,
        mean_ok,
        variance_ok,
        correlation_ok,
        normality_ok,
        pass: mean_ok && variance_ok && correlation_ok && normality_ok,
    })
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample KS statistic against N(0, 1) and its asymptotic p-value.
fn ks_normal(values: &mut [f64]) -> (f64, f64) {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let f = normal_cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    (d, kolmogorov_q(d, values.len()))
}

/// `P(D > d)` for `n` samples via the Kolmogorov series with the
/// finite-sample correction `sqrt(n) + 0.12 + 0.11 / sqrt(n)`.
fn kolmogorov_q(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample covariance between coils with the standard error of each entry
/// under independence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilCovariance {
    pub coils: usize,
    pub samples: usize,
    /// Row-major `C[i][j] = E[(n_i - mu_i) conj(n_j - mu_j)]`.
    pub covariance: Vec<Complex64>,
    /// `sqrt(C_ii C_jj / M)`.
    pub standard_error: Vec<f64>,
}

impl CoilCovariance {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.covariance[i * self.coils + j]
    }

    /// Largest `|C_ij| / SE_ij` over off-diagonal entries.
    pub fn max_offdiag_z(&self) -> f64 {
        let mut z: f64 = 0.0;
        for i in 0..self.coils {
            for j in 0..self.coils {
                if i != j {
                    let idx = i * self.coils + j;
                    z = z.max(self.covariance[idx].norm() / self.standard_error[idx]);
                }
            }
        }
        z
    }

    /// Largest `|C_ij| / sqrt(C_ii C_jj)` over off-diagonal entries.
    pub fn max_offdiag_correlation(&self) -> f64 {
        let mut rho: f64 = 0.0;
        for i in 0..self.coils {
            for j in 0..self.coils {
                if i != j {
                    let norm = (self.get(i, i).re * self.get(j, j).re).sqrt();
                    rho = rho.max(self.get(i, j).norm() / norm);
                }
            }
        }
        rho
    }
}

/// Covariance of the noise across coils, pooling every pixel of every stack.
pub fn cross_coil_covariance(stacks: &[CoilStack]) -> Result<CoilCovariance> {
    let first = stacks.first().ok_or(Error::InsufficientSamples {
        required: MIN_NOISE_SAMPLES,
        found: 0,
    })?;
    let coils = first.coils();
    for s in stacks {
        if s.coils() != coils {
            return Err(Error::CoilMismatch {
                expected: coils,
                found: s.coils(),
            });
        }
    }
    let m: usize = stacks.iter().map(|s| s.coil(0).len()).sum();
    if m < MIN_NOISE_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_NOISE_SAMPLES,
            found: m,
        });
    }
    let mf = m as f64;
    let mut mean = vec![Complex64::default(); coils];
    for s in stacks {
        for (i, g) in s.iter().enumerate() {
            mean[i] += g.as_slice().iter().sum::<Complex64>();
        }
    }
    for v in &mut mean {
        *v /= mf;
    }
    let mut covariance = vec![Complex64::default(); coils * coils];
    for s in stacks {
        let len = s.coil(0).len();
        for idx in 0..len {
            for i in 0..coils {
                let a = s.coil(i).as_slice()[idx] - mean[i];
                for j in 0..coils {
                    let b = s.coil(j).as_slice()[idx] - mean[j];
                    covariance[i * coils + j] += a * b.conj();
                }
            }
        }
    }
    for v in &mut covariance {
        *v /= mf;
    }
    let standard_error = (0..coils * coils)
        .map(|idx| {
            let (i, j) = (idx / coils, idx % coils);
            (covariance[i * coils + i].re * covariance[j * coils + j].re / mf).sqrt()
        })
        .collect();
    Ok(CoilCovariance {
        coils,
        samples: m,
        covariance,
        standard_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{add_noise, NoiseModel};
    use crate::rng::seeded;
    use rand::Rng;

    fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<Complex64> {
        let zero = CoilStack::zeros(1, 1, n);
        add_noise(&zero, NoiseModel::new(sigma).unwrap(), &mut seeded(seed))
            .samples()
            .collect()
    }

    fn ramp(h: usize, w: usize) -> RealGrid {
        RealGrid::from_fn(h, w, |r, c| ((r * w + c) % 17) as f64 / 16.0)
    }

    #[test]
    fn ssim_identity_and_errors() {
        let a = ramp(16, 12);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        assert!(ssim(&a, &ramp(16, 11), 1.0).is_err());
        assert!(ssim(&ramp(6, 6), &ramp(6, 6), 1.0).is_err());
        assert!(ssim(&a, &a, 0.0).is_err());
    }

    #[test]
    fn ssim_matches_scikit_image() {
        // skimage.metrics.structural_similarity(x, y, win_size=7,
        // data_range=1.0) on these exact arrays
        let x = RealGrid::from_fn(12, 10, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0);
        let y = RealGrid::from_fn(12, 10, |r, c| ((r * 5 + c * 2) % 13) as f64 / 12.0);
        let s = ssim(&x, &y, 1.0).unwrap();
        assert!((s - SKIMAGE_REFERENCE).abs() < 1e-12, "{s}");
    }

    #[test]
    fn ssim_of_inverted_checkerboard_is_negative() {
        // every 7x7 window holds 25 and 24 of the two values (or vice versa),
        // so means nearly match and the covariance is minus the variance
        let x = RealGrid::from_fn(16, 16, |r, c| ((r + c) % 2) as f64);
        let y = x.map(|v| 1.0 - v);
        let s = ssim(&x, &y, 1.0).unwrap();
        let np = 49.0;
        let (m1, m2) = (25.0 / np, 24.0 / np);
        let var = np / (np - 1.0) * (m1 - m1 * m1);
        let c1 = 1e-4;
        let c2 = 9e-4;
        let window = (2.0 * m1 * m2 + c1) * (-2.0 * var + c2) / ((m1 * m1 + m2 * m2 + c1) * (2.0 * var + c2));
        assert!(s < 0.0);
        assert!((s - window).abs() < 1e-12, "{s} vs {window}");
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let x = RealGrid::from_fn(64, 64, |r, c| ((r / 8 + c / 8) % 2) as f64 * 0.8 + 0.1);
        let mut last = 1.0;
        for sigma in [0.01, 0.02, 0.04] {
            let mut rng = seeded(11);
            let noisy = x.map(|v| v + sigma * (rng.random::<f64>() - 0.5) * 12f64.sqrt());
            let s = ssim(&noisy, &x, 1.0).unwrap();
            assert!(s < last, "{sigma}: {s}");
            last = s;
        }
    }

    #[test]
    fn ssim_is_symmetric() {
        let x = ramp(20, 20);
        let mut rng = seeded(12);
        let y = x.map(|v| v + 0.05 * rng.random::<f64>());
        let (a, b) = (ssim(&x, &y, 1.0).unwrap(), ssim(&y, &x, 1.0).unwrap());
        assert!((a - b).abs() < 1e-15 && a < 1.0);
    }

    #[test]
    fn nmse_is_scale_covariant() {
        let a = ramp(8, 8);
        let b = a.map(|v| v * 0.9 + 0.05);
        let s = 3.5;
        let lhs = nmse(&b.scale(s), &a.scale(s)).unwrap();
        assert!((lhs - nmse(&b, &a).unwrap()).abs() < 1e-14);
    }

    const SKIMAGE_REFERENCE: f64 = 0.059_900_873_156_670_98;

    #[test]
    fn psnr_and_nmse() {
        let a = ramp(8, 8);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(nmse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&b, &a, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let z = RealGrid::zeros(8, 8);
        assert_eq!(nmse(&z, &a).unwrap(), 1.0);
        assert_eq!(nmse(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_noise_passes() {
        for seed in 0..5 {
            let r = validate_noise(&gaussian(40_000, 0.3, seed)).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn non_gaussian_noise_fails() {
        let mut rng = seeded(4);
        let uniform: Vec<Complex64> = (0..40_000)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let r = validate_noise(&uniform).unwrap();
        assert!(!r.normality_ok && !r.pass);

        let rectified: Vec<Complex64> = gaussian(40_000, 1.0, 5)
            .into_iter()
            .map(|v| Complex64::new(v.norm(), v.im))
            .collect();
        assert!(!validate_noise(&rectified).unwrap().pass);

        let unequal: Vec<Complex64> = gaussian(40_000, 1.0, 6)
            .into_iter()
            .map(|v| Complex64::new(v.re, 1.2 * v.im))
            .collect();
        let r = validate_noise(&unequal).unwrap();
        assert!(!r.variance_ok && !r.pass);

        let correlated: Vec<Complex64> = gaussian(40_000, 1.0, 7)
            .into_iter()
            .map(|v| Complex64::new(v.re, 0.8 * v.im + 0.2 * v.re))
            .collect();
        assert!(!validate_noise(&correlated).unwrap().correlation_ok);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            validate_noise(&gaussian(100, 1.0, 0)),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn kolmogorov_tail() {
        // Q(lambda) at lambda = 1.36 is about 0.049
        let n = 1_000_000;
        let d = 1.36 / ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt());
        assert!((kolmogorov_q(d, n) - 0.0494).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0, n), 1.0);
        assert!(kolmogorov_q(0.5, n) < 1e-100);
    }

    #[test]
    fn independent_coils_have_small_covariance() {
        let zero = CoilStack::zeros(4, 100, 100);
        let noise = add_noise(&zero, NoiseModel::new(1.0).unwrap(), &mut seeded(3));
        let cov = cross_coil_covariance(std::slice::from_ref(&noise)).unwrap();
        assert!(cov.max_offdiag_z() < 5.0);
        for i in 0..4 {
            assert!((cov.get(i, i).re / 2.0 - 1.0).abs() < 0.02);
        }

        // coil 1 copies coil 0
        let mut grids = noise.into_grids();
        grids[1] = grids[0].clone();
        let cov = cross_coil_covariance(&[CoilStack::new(grids).unwrap()]).unwrap();
        assert!(cov.max_offdiag_z() > 50.0);
        assert!((cov.max_offdiag_correlation() - 1.0).abs() < 1e-12);
    }
}
