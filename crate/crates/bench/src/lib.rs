//! Shared fixtures for the benchmarks.

use spatial_lrd_core::theta::{default_window, theta_fft, DEFAULT_RHO};
use spatial_lrd_core::{Amplitude, CoefficientModel, IntBox, RegionPrototype, SiteSet, ThetaField};

pub fn long_memory() -> CoefficientModel {
    CoefficientModel::isotropic(2, 1.5, 1.0, Amplitude::Power).unwrap()
}

pub fn short_memory() -> CoefficientModel {
    CoefficientModel::isotropic(2, 3.0, 1.0, Amplitude::Constant).unwrap()
}

/// Sites of the inflated disc and the default window.
pub fn disc(lambda: f64) -> (SiteSet, IntBox) {
    let sites = RegionPrototype::ball(2, 0.5)
        .unwrap()
        .enumerate_sites(lambda)
        .unwrap();
    (sites, default_window(2, lambda, DEFAULT_RHO))
}

pub fn field(model: &CoefficientModel, lambda: f64) -> ThetaField {
    let (sites, window) = disc(lambda);
    theta_fft(model, &sites, &window).unwrap()
}
