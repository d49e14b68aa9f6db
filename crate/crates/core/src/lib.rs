//! Simulation of accelerated-MRI acquisitions and physics-consistent data
//! augmentation.
//!
//! Augmentations are applied to complex, noisy coil images and the
//! undersampled measurements are re-synthesized from the augmented images.
//! This keeps the measurement noise statistics of the training pairs
//! consistent with real acquisitions. See [`pipeline::augment_slice`].

pub mod acquisition;
pub mod dataset;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod recon;
pub mod rng;
pub mod transforms;

pub use acquisition::{
    add_noise, adjoint, apply_mask, apply_sensitivities, forward, make_random_mask, rss,
    validation_mask,
    NoiseModel, SensitivityMaps, UndersamplingMask,
};
pub use error::{Error, Result};
pub use fourier::{fft2c, ifft2c};
pub use grid::{CoilStack, ComplexGrid, RealGrid};
pub use metrics::{cross_coil_covariance, nmse, psnr, ssim, validate_noise, NoiseReport};
pub use phantom::{shepp_logan, synth_sensitivities, SimulationParams, Variant};
pub use pipeline::{
    augment_slice, naive_augment_slice, object_level_augment, schedule_p, sample_transforms,
    AugmentConfig, AugmentedPair, Mode,
};
pub use recon::{tv_reconstruct, zero_filled, TvParams};
pub use rng::SliceKey;
pub use transforms::{Interpolation, TransformKind, TransformSpec};
