//! The augmentation pipeline: probability schedule, transform sampling and
//! generation of (undersampled k-space, target) training pairs.
//!
//! Three modes share the same sampled [`TransformSpec`]:
//!
//! * [`Mode::MrAugment`] transforms the complex coil images and re-applies
//!   the forward model, so measurement noise stays additive complex Gaussian.
//! * [`Mode::Naive`] transforms the real RSS target and re-synthesizes
//!   measurements from it as a zero-phase object. This discards phase and
//!   rectifies noise; it exists as a negative control.
//! * [`Mode::ObjectLevel`] coil-combines with known maps, transforms the
//!   object and re-modulates by the maps, which correlates noise across coils.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    apply_mask, apply_sensitivities, forward, make_random_mask, rss, SensitivityMaps,
    UndersamplingMask,
};
use crate::error::{Error, Result};
use crate::fourier::ifft2c_coils;
use crate::grid::{CoilStack, RealGrid};
use crate::rng::{seeded, SliceKey, Stream};
use crate::transforms::{compose, compose_real, Interpolation, TransformKind, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `p(t) = p_max / (1 - e^-c) * (1 - e^(-t c / T))`.
    Exponential,
    /// `p(t) = p_max`.
    Constant,
}

/// Relative firing weight of each transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub hflip: f64,
    pub vflip: f64,
    pub rot90: f64,
    pub rotate: f64,
    pub translate: f64,
    pub scale_iso: f64,
    pub scale_aniso: f64,
    pub shear: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            hflip: 0.5,
            vflip: 0.5,
            rot90: 0.5,
            rotate: 0.5,
            translate: 1.0,
            scale_iso: 0.5,
            scale_aniso: 0.5,
            shear: 1.0,
        }
    }
}

impl Weights {
    /// Only flips, quarter turns and (whole-pixel) translations.
    pub fn pixel_preserving(&self) -> Self {
        Self {
            rotate: 0.0,
            scale_iso: 0.0,
            scale_aniso: 0.0,
            shear: 0.0,
            ..*self
        }
    }

    pub fn uniform(w: f64) -> Self {
        Self {
            hflip: w,
            vflip: w,
            rot90: w,
            rotate: w,
            translate: w,
            scale_iso: w,
            scale_aniso: w,
            shear: w,
        }
    }

    /// `(name, weight)` in pipeline order.
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("hflip", self.hflip),
            ("vflip", self.vflip),
            ("rot90", self.rot90),
            ("translate", self.translate),
            ("rotate", self.rotate),
            ("scale_iso", self.scale_iso),
            ("scale_aniso", self.scale_aniso),
            ("shear", self.shear),
        ]
    }
}

/// Closed parameter ranges sampled uniformly when a transform fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub rotate_deg: (f64, f64),
    /// Fraction of the width.
    pub translate_x: (f64, f64),
    /// Fraction of the height.
    pub translate_y: (f64, f64),
    pub scale_iso: (f64, f64),
    pub scale_aniso: (f64, f64),
    pub shear_deg: (f64, f64),
}

impl Default for Ranges {
    fn default() -> Self {
        Self {
            rotate_deg: (-180.0, 180.0),
            translate_x: (-0.08, 0.08),
            translate_y: (-0.125, 0.125),
            scale_iso: (0.75, 1.25),
            scale_aniso: (0.75, 1.25),
            shear_deg: (-12.5, 12.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_max: f64,
    /// Sharpness `c` of the exponential schedule.
    pub schedule_c: f64,
    pub total_epochs: u64,
    pub schedule: ScheduleKind,
    pub weights: Weights,
    pub ranges: Ranges,
    /// Round sampled translations to whole pixels (making them permutations).
    pub integer_translation: bool,
    pub upsample: usize,
    pub acceleration: u32,
    pub center_fraction: f64,
    /// Target size; clamped to the augmented image size.
    pub crop: (usize, usize),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_max: 0.55,
            schedule_c: 5.0,
            total_epochs: 50,
            schedule: ScheduleKind::Exponential,
            weights: Weights::default(),
            ranges: Ranges::default(),
            integer_translation: true,
            upsample: 2,
            acceleration: 8,
            center_fraction: 0.04,
            crop: (320, 320),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_max) {
            return Err(Error::invalid("p_max", format!("{} is outside [0, 1]", self.p_max)));
        }
        if !(self.schedule_c >= 0.0 && self.schedule_c.is_finite()) {
            return Err(Error::invalid("schedule_c", "must be finite and non-negative"));
        }
        if self.total_epochs == 0 {
            return Err(Error::invalid("total_epochs", "must be positive"));
        }
        for (name, w) in self.weights.entries() {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid("weights", format!("{name} weight {w} is outside [0, 1]")));
            }
        }
        let r = &self.ranges;
        for (name, (lo, hi)) in [
            ("rotate_deg", r.rotate_deg),
            ("translate_x", r.translate_x),
            ("translate_y", r.translate_y),
            ("scale_iso", r.scale_iso),
            ("scale_aniso", r.scale_aniso),
            ("shear_deg", r.shear_deg),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid("ranges", format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        if r.scale_iso.0 <= 0.0 || r.scale_aniso.0 <= 0.0 {
            return Err(Error::invalid("ranges", "scale factors must be positive"));
        }
        if r.shear_deg.0.abs() >= 90.0 || r.shear_deg.1.abs() >= 90.0 {
            return Err(Error::invalid("ranges", "shear angles must lie inside (-90, 90)"));
        }
        if self.upsample == 0 {
            return Err(Error::invalid("upsample", "must be at least 1"));
        }
        if self.acceleration == 0 {
            return Err(Error::invalid("acceleration", "must be at least 1"));
        }
        if !(self.center_fraction > 0.0 && self.center_fraction < 1.0) {
            return Err(Error::invalid("center_fraction", "must lie in (0, 1)"));
        }
        if self.crop.0 == 0 || self.crop.1 == 0 {
            return Err(Error::invalid("crop", "must be positive"));
        }
        Ok(())
    }

    pub fn interpolation(&self) -> Interpolation {
        Interpolation {
            upsample: self.upsample,
        }
    }

    /// Crop actually applied to an image of the given size.
    pub fn crop_for(&self, height: usize, width: usize) -> (usize, usize) {
        (self.crop.0.min(height), self.crop.1.min(width))
    }
}

/// Augmentation probability at epoch `t` (clamped to `total_epochs`).
pub fn schedule_p(epoch: u64, cfg: &AugmentConfig) -> f64 {
    let total = cfg.total_epochs.max(1);
    let t = epoch.min(total);
    match cfg.schedule {
        ScheduleKind::Constant => cfg.p_max,
        ScheduleKind::Exponential => {
            if t == total {
                return cfg.p_max;
            }
            let c = cfg.schedule_c;
            let frac = t as f64 / total as f64;
            if c == 0.0 {
                // limit c -> 0
                return cfg.p_max * frac;
            }
            cfg.p_max * ((-(t as f64) * c / total as f64).exp_m1() / (-c).exp_m1())
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Draws which transforms fire and with which parameters. Each transform
/// fires independently with probability `p * w_i`. Every transform consumes
/// a fixed number of draws from both streams whether or not it fires.
pub fn sample_transforms<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    cfg: &AugmentConfig,
    p: f64,
    shape: (usize, usize),
    fire_rng: &mut R1,
    param_rng: &mut R2,
) -> Vec<TransformKind> {
    let (mut h, mut w) = shape;
    let w8 = &cfg.weights;
    let r = &cfg.ranges;
    let mut fire = |weight: f64| -> bool {
        let u: f64 = fire_rng.random();
        u < p * weight
    };
    let mut out = Vec::new();

    if fire(w8.hflip) {
        out.push(TransformKind::HFlip);
    }
    if fire(w8.vflip) {
        out.push(TransformKind::VFlip);
    }

    let k = param_rng.random_range(0..4u8);
    if fire(w8.rot90) {
        out.push(TransformKind::Rot90 { k });
        if k % 2 == 1 {
            std::mem::swap(&mut h, &mut w);
        }
    }

    let (mut dx, mut dy) = (uniform(param_rng, r.translate_x), uniform(param_rng, r.translate_y));
    if fire(w8.translate) {
        if cfg.integer_translation {
            dx = (dx * w as f64).round() / w as f64;
            dy = (dy * h as f64).round() / h as f64;
        }
        out.push(TransformKind::Translate { dx, dy });
    }

    let angle = uniform(param_rng, r.rotate_deg);
    if fire(w8.rotate) {
        out.push(TransformKind::Rotate { angle });
    }

    let s = uniform(param_rng, r.scale_iso);
    if fire(w8.scale_iso) {
        out.push(TransformKind::ScaleIso { s });
    }

    let (sx, sy) = (uniform(param_rng, r.scale_aniso), uniform(param_rng, r.scale_aniso));
    if fire(w8.scale_aniso) {
        out.push(TransformKind::ScaleAniso { sx, sy });
    }

    let (angle_x, angle_y) = (uniform(param_rng, r.shear_deg), uniform(param_rng, r.shear_deg));
    if fire(w8.shear) {
        out.push(TransformKind::Shear { angle_x, angle_y });
    }
    out
}

/// The spec for one slice at one epoch, drawn from the slice's substreams.
pub fn sample_spec(cfg: &AugmentConfig, shape: (usize, usize), key: &SliceKey) -> TransformSpec {
    let p = schedule_p(key.epoch, cfg);
    let transforms = sample_transforms(
        cfg,
        p,
        shape,
        &mut key.rng(Stream::TransformSampling),
        &mut key.rng(Stream::TransformParams),
    );
    TransformSpec {
        volume: key.volume,
        slice: key.slice,
        epoch: key.epoch,
        probability: p,
        transforms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[serde(rename = "mraugment")]
    MrAugment,
    Naive,
    ObjectLevel,
}

impl Mode {
    pub fn needs_maps(self) -> bool {
        !matches!(self, Mode::MrAugment)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MrAugment => "mraugment",
            Mode::Naive => "naive",
            Mode::ObjectLevel => "object-level",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mraugment" => Ok(Mode::MrAugment),
            "naive" => Ok(Mode::Naive),
            "object-level" => Ok(Mode::ObjectLevel),
            other => Err(Error::invalid(
                "mode",
                format!("unknown mode {other:?} (expected mraugment, naive or object-level)"),
            )),
        }
    }
}

/// How the undersampling mask of a pair is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskChoice {
    /// Fresh random mask from this seed, sized to the augmented image.
    Random { seed: u64 },
    /// Use exactly this mask.
    Given(UndersamplingMask),
}

/// One augmented training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    /// Undersampled augmented k-space `M F D(x)`.
    pub kspace: CoilStack,
    /// Center-cropped target image.
    pub target: RealGrid,
    pub spec: TransformSpec,
    pub mask: UndersamplingMask,
    pub mask_seed: Option<u64>,
}

/// Fully sampled augmented coil images plus the uncropped target.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedImages {
    pub coils: CoilStack,
    pub target: RealGrid,
}

fn require_maps(maps: Option<&SensitivityMaps>) -> Result<&SensitivityMaps> {
    maps.ok_or(Error::MissingSensitivities)
}

/// Applies `transforms` to the coil images `x` under `mode`.
pub fn augment_images(
    mode: Mode,
    images: &CoilStack,
    maps: Option<&SensitivityMaps>,
    transforms: &[TransformKind],
    interp: Interpolation,
) -> Result<AugmentedImages> {
    match mode {
        Mode::MrAugment => {
            let coils = compose(images, transforms, interp)?;
            let target = rss(&coils);
            Ok(AugmentedImages { coils, target })
        }
        Mode::Naive => {
            let maps = require_maps(maps)?;
            let target = compose_real(&rss(images), transforms, interp)?;
            let coils = apply_sensitivities(&target.to_complex(), maps)?;
            Ok(AugmentedImages { coils, target })
        }
        Mode::ObjectLevel => {
            let maps = require_maps(maps)?;
            let object = CoilStack::single(maps.combine(images)?);
            let augmented = compose(&object, transforms, interp)?;
            let coils = apply_sensitivities(augmented.coil(0), maps)?;
            let target = rss(&coils);
            Ok(AugmentedImages { coils, target })
        }
    }
}

/// Builds a pair from fully sampled k-space and an already drawn spec.
pub fn build_pair(
    mode: Mode,
    kspace: &CoilStack,
    maps: Option<&SensitivityMaps>,
    spec: TransformSpec,
    mask: MaskChoice,
    cfg: &AugmentConfig,
) -> Result<AugmentedPair> {
    cfg.validate()?;
    let images = ifft2c_coils(kspace);
    let augmented = augment_images(mode, &images, maps, &spec.transforms, cfg.interpolation())?;
    let (h, w) = augmented.coils.shape();

    let (mask, mask_seed) = match mask {
        MaskChoice::Random { seed } => (
            make_random_mask(w, cfg.acceleration, cfg.center_fraction, &mut seeded(seed))?,
            Some(seed),
        ),
        MaskChoice::Given(m) => (m, None),
    };

    // With no transform the augmented k-space is the input k-space; skipping
    // the F F^-1 round trip keeps it bit-exact.
    let kspace_out = if mode == Mode::MrAugment && spec.is_empty() {
        apply_mask(kspace, &mask)?
    } else {
        forward(&augmented.coils, &mask)?
    };

    let (ch, cw) = cfg.crop_for(h, w);
    let target = augmented.target.center_crop(ch, cw)?;
    if !kspace_out.is_finite() || !target.is_finite() {
        return Err(Error::NonFinite("augmentation pipeline"));
    }
    Ok(AugmentedPair {
        kspace: kspace_out,
        target,
        spec,
        mask,
        mask_seed,
    })
}

/// Coil-level augmentation of one fully sampled slice.
pub fn augment_slice(
    kspace: &CoilStack,
    cfg: &AugmentConfig,
    key: &SliceKey,
) -> Result<AugmentedPair> {
    augment_slice_with_mode(Mode::MrAugment, kspace, None, cfg, key)
}

/// Augments one slice under any mode, drawing spec and mask from `key`.
pub fn augment_slice_with_mode(
    mode: Mode,
    kspace: &CoilStack,
    maps: Option<&SensitivityMaps>,
    cfg: &AugmentConfig,
    key: &SliceKey,
) -> Result<AugmentedPair> {
    let spec = sample_spec(cfg, kspace.shape(), key);
    build_pair(
        mode,
        kspace,
        maps,
        spec,
        MaskChoice::Random {
            seed: key.stream_seed(Stream::Mask),
        },
        cfg,
    )
}

/// Augments the real target and re-synthesizes measurements from it.
pub fn naive_augment_slice(
    kspace: &CoilStack,
    maps: Option<&SensitivityMaps>,
    cfg: &AugmentConfig,
    key: &SliceKey,
) -> Result<AugmentedPair> {
    augment_slice_with_mode(Mode::Naive, kspace, maps, cfg, key)
}

/// Object-level augmentation: `S_i D(sum_j conj(S_j) x_j)` per coil.
pub fn object_level_augment(
    kspace: &CoilStack,
    maps: Option<&SensitivityMaps>,
    cfg: &AugmentConfig,
    key: &SliceKey,
) -> Result<CoilStack> {
    let spec = sample_spec(cfg, kspace.shape(), key);
    let images = ifft2c_coils(kspace);
    Ok(augment_images(Mode::ObjectLevel, &images, maps, &spec.transforms, cfg.interpolation())?.coils)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{add_noise, NoiseModel};
    use crate::fourier::fft2c_coils;
    use crate::grid::ComplexGrid;
    use crate::phantom::{shepp_logan, synth_sensitivities, Variant};
    use crate::transforms::apply_pixel_preserving;
    use num_complex::Complex64;

    fn cfg_small() -> AugmentConfig {
        AugmentConfig {
            crop: (24, 24),
            ..AugmentConfig::default()
        }
    }

    fn phantom_kspace(coils: usize, sigma: f64, seed: u64) -> (CoilStack, SensitivityMaps) {
        let object = shepp_logan(32, 32, Variant::Modified).unwrap().to_complex();
        let maps = synth_sensitivities(32, 32, coils, &mut seeded(seed)).unwrap();
        let images = apply_sensitivities(&object, &maps).unwrap();
        let noisy = add_noise(&images, NoiseModel::new(sigma).unwrap(), &mut seeded(seed + 1));
        (fft2c_coils(&noisy), maps)
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = AugmentConfig {
            total_epochs: 100,
            ..AugmentConfig::default()
        };
        assert_eq!(schedule_p(0, &cfg), 0.0);
        assert_eq!(schedule_p(100, &cfg), 0.55);
        assert_eq!(schedule_p(250, &cfg), 0.55);
        // 0.55 / (1 - e^-5) * (1 - e^-2.5), evaluated with 40-digit arithmetic
        assert!((schedule_p(50, &cfg) - 0.508_278_000_988_316).abs() < 1e-12);
        let constant = AugmentConfig {
            schedule: ScheduleKind::Constant,
            ..cfg.clone()
        };
        assert!((0..=100).all(|t| schedule_p(t, &constant) == 0.55));
        let mut prev = 0.0;
        for t in 0..=100 {
            let p = schedule_p(t, &cfg);
            assert!(p >= prev && p <= 0.55);
            prev = p;
        }
    }

    #[test]
    fn sampling_extremes() {
        let cfg = AugmentConfig::default();
        for seed in 0..50 {
            let t = sample_transforms(&cfg, 0.0, (32, 32), &mut seeded(seed), &mut seeded(seed + 1000));
            assert!(t.is_empty());
        }
        let all = AugmentConfig {
            weights: Weights::uniform(1.0),
            ..AugmentConfig::default()
        };
        let t = sample_transforms(&all, 1.0, (32, 32), &mut seeded(1), &mut seeded(2));
        let names: Vec<_> = t.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            ["hflip", "vflip", "rot90", "translate", "rotate", "scale_iso", "scale_aniso", "shear"]
        );
    }

    #[test]
    fn sampled_parameters_stay_in_range() {
        let cfg = AugmentConfig {
            weights: Weights::uniform(1.0),
            integer_translation: false,
            ..AugmentConfig::default()
        };
        for seed in 0..200 {
            for t in sample_transforms(&cfg, 1.0, (40, 30), &mut seeded(seed), &mut seeded(seed + 7)) {
                match t {
                    TransformKind::Rot90 { k } => assert!(k < 4),
                    TransformKind::Rotate { angle } => assert!((-180.0..=180.0).contains(&angle)),
                    TransformKind::Translate { dx, dy } => {
                        assert!(dx.abs() <= 0.08 && dy.abs() <= 0.125)
                    }
                    TransformKind::ScaleIso { s } => assert!((0.75..=1.25).contains(&s)),
                    TransformKind::ScaleAniso { sx, sy } => {
                        assert!((0.75..=1.25).contains(&sx) && (0.75..=1.25).contains(&sy))
                    }
                    TransformKind::Shear { angle_x, angle_y } => {
                        assert!(angle_x.abs() <= 12.5 && angle_y.abs() <= 12.5)
                    }
                    TransformKind::HFlip | TransformKind::VFlip => {}
                }
            }
        }
    }

    #[test]
    fn integer_translation_accounts_for_quarter_turns() {
        let cfg = AugmentConfig {
            weights: Weights::uniform(1.0).pixel_preserving(),
            ..AugmentConfig::default()
        };
        for seed in 0..100 {
            let t = sample_transforms(&cfg, 1.0, (40, 30), &mut seeded(seed), &mut seeded(seed + 3));
            let mut shape = (40, 30);
            for kind in &t {
                assert!(kind.is_pixel_preserving(shape.0, shape.1), "{kind:?} on {shape:?}");
                if let TransformKind::Rot90 { k } = kind {
                    if k % 2 == 1 {
                        shape = (shape.1, shape.0);
                    }
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = [
            AugmentConfig { p_max: 1.5, ..AugmentConfig::default() },
            AugmentConfig { total_epochs: 0, ..AugmentConfig::default() },
            AugmentConfig { upsample: 0, ..AugmentConfig::default() },
            AugmentConfig { center_fraction: 0.0, ..AugmentConfig::default() },
            AugmentConfig {
                weights: Weights { shear: 1.2, ..Weights::default() },
                ..AugmentConfig::default()
            },
            AugmentConfig {
                ranges: Ranges { rotate_deg: (10.0, -10.0), ..Ranges::default() },
                ..AugmentConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn identity_path_is_bit_exact() {
        let (k, _) = phantom_kspace(3, 0.02, 5);
        let cfg = AugmentConfig {
            p_max: 0.0,
            acceleration: 1,
            ..cfg_small()
        };
        let pair = augment_slice(&k, &cfg, &SliceKey::new(1, 0, 0, 10)).unwrap();
        assert!(pair.spec.is_empty());
        assert!(pair.mask.is_full());
        assert_eq!(pair.kspace, k);
        let expect = rss(&ifft2c_coils(&k)).center_crop(24, 24).unwrap();
        assert_eq!(pair.target, expect);
    }

    #[test]
    fn pairs_are_deterministic() {
        let (k, _) = phantom_kspace(2, 0.02, 6);
        let cfg = AugmentConfig {
            p_max: 1.0,
            schedule: ScheduleKind::Constant,
            ..cfg_small()
        };
        let key = SliceKey::new(3, 1, 2, 4);
        let a = augment_slice(&k, &cfg, &key).unwrap();
        let b = augment_slice(&k, &cfg, &key).unwrap();
        assert_eq!(a, b);
        assert!(!a.spec.is_empty());
        let (ms, me) = a.mask.center_range();
        assert!(a.mask.selected()[ms..me].iter().all(|&s| s));
        for g in a.kspace.iter() {
            for r in 0..g.height() {
                for c in 0..g.width() {
                    if !a.mask.is_selected(c) {
                        assert_eq!(g[(r, c)], Complex64::new(0.0, 0.0));
                    }
                }
            }
        }
        assert_eq!(a.target.shape(), (24, 24));
    }

    #[test]
    fn hflip_commutes_with_rss_target() {
        let (k, _) = phantom_kspace(1, 0.05, 7);
        let cfg = AugmentConfig {
            acceleration: 1,
            crop: (32, 32),
            ..cfg_small()
        };
        let spec = TransformSpec {
            transforms: vec![TransformKind::HFlip],
            ..TransformSpec::identity(0, 0, 0)
        };
        let pair = build_pair(Mode::MrAugment, &k, None, spec, MaskChoice::Given(UndersamplingMask::full(32)), &cfg).unwrap();
        let base = rss(&ifft2c_coils(&k));
        let flipped = apply_pixel_preserving(&CoilStack::single(base.to_complex()), &TransformKind::HFlip)
            .unwrap()
            .coil(0)
            .re();
        assert_eq!(pair.target, flipped);
    }

    #[test]
    fn mask_seed_changes_only_kspace() {
        let (k, _) = phantom_kspace(2, 0.02, 8);
        let cfg = AugmentConfig { p_max: 1.0, ..cfg_small() };
        let spec = sample_spec(&cfg, k.shape(), &SliceKey::new(1, 0, 0, 50));
        let a = build_pair(Mode::MrAugment, &k, None, spec.clone(), MaskChoice::Random { seed: 1 }, &cfg).unwrap();
        let b = build_pair(Mode::MrAugment, &k, None, spec, MaskChoice::Random { seed: 2 }, &cfg).unwrap();
        assert_eq!(a.target, b.target);
        assert_ne!(a.mask, b.mask);
        for (ga, gb) in a.kspace.iter().zip(b.kspace.iter()) {
            for r in 0..ga.height() {
                for c in 0..ga.width() {
                    if a.mask.is_selected(c) && b.mask.is_selected(c) {
                        assert_eq!(ga[(r, c)], gb[(r, c)]);
                    }
                }
            }
        }
    }

    #[test]
    fn modes_requiring_maps_fail_without_them() {
        let (k, _) = phantom_kspace(2, 0.0, 9);
        let key = SliceKey::new(0, 0, 0, 0);
        assert!(matches!(
            naive_augment_slice(&k, None, &cfg_small(), &key),
            Err(Error::MissingSensitivities)
        ));
        assert!(matches!(
            object_level_augment(&k, None, &cfg_small(), &key),
            Err(Error::MissingSensitivities)
        ));
    }

    #[test]
    fn naive_matches_mraugment_without_noise_for_permutations() {
        let (k, maps) = phantom_kspace(1, 0.0, 10);
        let cfg = AugmentConfig { acceleration: 1, crop: (32, 32), ..cfg_small() };
        let spec = TransformSpec {
            transforms: vec![TransformKind::VFlip, TransformKind::Rot90 { k: 1 }],
            ..TransformSpec::identity(0, 0, 0)
        };
        let full = MaskChoice::Given(UndersamplingMask::full(32));
        let a = build_pair(Mode::MrAugment, &k, None, spec.clone(), full.clone(), &cfg).unwrap();
        let b = build_pair(Mode::Naive, &k, Some(&maps), spec, full, &cfg).unwrap();
        let err = a.target.sub(&b.target).unwrap().l2_norm() / a.target.l2_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn object_level_identity_reproduces_projection() {
        let (k, maps) = phantom_kspace(4, 0.05, 11);
        let images = ifft2c_coils(&k);
        let out = augment_images(Mode::ObjectLevel, &images, Some(&maps), &[], Interpolation::default()).unwrap();
        let combined = maps.combine(&images).unwrap();
        for (o, s) in out.coils.iter().zip(maps.maps().iter()) {
            let expect = s.hadamard(&combined).unwrap();
            assert!(o.sub(&expect).unwrap().l2_norm() < 1e-12);
        }
    }

    #[test]
    fn single_coil_object_level_equals_coil_level() {
        let (k, maps) = phantom_kspace(1, 0.05, 12);
        let images = ifft2c_coils(&k);
        let ts = [TransformKind::Rotate { angle: 21.0 }, TransformKind::HFlip];
        let a = augment_images(Mode::MrAugment, &images, None, &ts, Interpolation::default()).unwrap();
        let b = augment_images(Mode::ObjectLevel, &images, Some(&maps), &ts, Interpolation::default()).unwrap();
        assert_eq!(a.coils, b.coils);
    }

    #[test]
    fn naive_residual_is_the_discarded_noise_and_phase() {
        let n = 64;
        let object = shepp_logan(n, n, Variant::Modified).unwrap().to_complex();
        let maps = SensitivityMaps::unit(n, n);
        let clean = apply_sensitivities(&object, &maps).unwrap();
        let sigma = 0.05;
        let noisy = add_noise(&clean, NoiseModel::new(sigma).unwrap(), &mut seeded(99));
        let k = fft2c_coils(&noisy);
        let cfg = AugmentConfig { acceleration: 1, crop: (n, n), ..cfg_small() };
        let pair = build_pair(
            Mode::Naive,
            &k,
            Some(&maps),
            TransformSpec::identity(0, 0, 0),
            MaskChoice::Given(UndersamplingMask::full(n)),
            &cfg,
        )
        .unwrap();
        let residual = k.sub(&pair.kspace).unwrap();
        // x - |x| pixelwise, i.e. the imaginary part plus the rectification of the real part
        let x = ifft2c_coils(&k);
        let expect = fft2c_coils(&x.map_coils(|g| g.sub(&g.abs().to_complex()).unwrap()).unwrap());
        assert!(residual.sub(&expect).unwrap().l2_norm() < 1e-9 * expect.l2_norm());

        let noise_energy = noisy.sub(&clean).unwrap().l2_norm().powi(2);
        let ratio = residual.l2_norm().powi(2) / noise_energy;
        // the imaginary half of the noise is always discarded; rectification in
        // the background adds more
        assert!(ratio > 0.5 && ratio < 1.5, "{ratio}");
    }

    #[test]
    fn sensitivities_of_ones_single_coil() {
        let g = ComplexGrid::from_fn(4, 4, |_, _| Complex64::new(1.0, 0.0));
        assert_eq!(SensitivityMaps::unit(4, 4).maps().coil(0), &g);
    }
}
