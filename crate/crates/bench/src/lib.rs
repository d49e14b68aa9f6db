//! Fixtures shared by the benchmarks.

use mraugment::fourier::fft2c_coils;
use mraugment::rng::seeded;
use mraugment::{add_noise, apply_sensitivities, shepp_logan, synth_sensitivities};
use mraugment::{CoilStack, NoiseModel, RealGrid, Variant};

/// Noisy fully sampled k-space of a Shepp-Logan phantom.
pub fn phantom_kspace(n: usize, coils: usize) -> CoilStack {
    let object = shepp_logan(n, n, Variant::Modified).expect("valid size").to_complex();
    let maps = synth_sensitivities(n, n, coils, &mut seeded(1)).expect("valid maps");
    let images = apply_sensitivities(&object, &maps).expect("matching shapes");
    let noisy = add_noise(&images, NoiseModel::new(0.01).expect("valid sigma"), &mut seeded(2));
    fft2c_coils(&noisy)
}

pub fn phantom_image(n: usize) -> RealGrid {
    shepp_logan(n, n, Variant::Modified).expect("valid size")
}
