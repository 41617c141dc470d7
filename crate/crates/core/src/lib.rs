//! Ray-based system-level simulator for RIS-aided indoor coverage.
//!
//! The crate embeds a far-field reconfigurable-intelligent-surface (RIS)
//! scattering model inside a deterministic image-method ray tracer. On top of
//! the per-link machinery it provides coverage sweeps over target areas,
//! power delay profiles, coverage statistics, and an anechoic-chamber style
//! angular sweep of the RIS scattering pattern.
//!
//! Module map:
//!
//! - [`scene`]: planar facets, materials, scene documents, factory generator
//! - [`raytrace`]: image-method multipath between two points
//! - [`em`]: free-space gain, Fresnel coefficients, per-path amplitudes
//! - [`ris`]: unit-cell grid, scattering functions, phase design, cascade
//! - [`channel`]: SISO channel composition, RX power, PDP
//! - [`coverage`]: grid sweeps and CDF / coverage-rate / mean-gain statistics
//! - [`chamber`]: normal-incidence angular sweep and lobe extraction
//! - [`scenario`]: JSON study configs, CSV outputs, run manifests
//! - [`fixtures`]: golden-output regression fixtures

pub mod chamber;
pub mod channel;
pub mod coverage;
pub mod em;
pub mod fixtures;
pub mod raytrace;
pub mod report;
pub mod ris;
pub mod scenario;
pub mod scene;

pub use num_complex::Complex64;

/// Points and directions in the scene frame (meters).
pub type Vec3 = nalgebra::Vector3<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

pub(crate) fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub(crate) fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}
