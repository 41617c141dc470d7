//! Complex path amplitudes.
//!
//! Amplitudes are dimensionless voltage gains: received field = amplitude ×
//! transmitted field, with free-space propagation phase `e^{-j2πd/λ}`.
//! Antennas are isotropic, unit gain and vertically polarized.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::raytrace::{Interaction, PropagationPath};
use crate::scene::{Material, Scene};
use crate::{Vec3, SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};

#[derive(Debug, Error, PartialEq)]
pub enum EmError {
    #[error("distance must be positive (got {0} m)")]
    NonPositiveDistance(f64),
    #[error("frequency must be positive and finite (got {0} Hz)")]
    InvalidFrequency(f64),
    #[error("surface {0} has no resolvable material")]
    UnresolvedMaterial(usize),
    #[error("RIS-cascaded paths carry their own amplitude")]
    CascadedPath,
}

/// Single-carrier description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Carrier {
    frequency: f64,
    wavelength: f64,
}

impl Carrier {
    pub fn new(frequency_hz: f64) -> Result<Self, EmError> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(EmError::InvalidFrequency(frequency_hz));
        }
        Ok(Self {
            frequency: frequency_hz,
            wavelength: SPEED_OF_LIGHT / frequency_hz,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Free-space wavenumber 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence.
    Te,
    /// Electric field in the plane of incidence.
    Tm,
}

/// Free-space field gain `λ/(4πd) · e^{-j2πd/λ}`.
pub fn friis_gain(distance: f64, wavelength: f64) -> Result<Complex64, EmError> {
    if !(distance > 0.0) {
        return Err(EmError::NonPositiveDistance(distance));
    }
    Ok(propagation_phasor(distance, wavelength) * (wavelength / (4.0 * PI * distance)))
}

/// `e^{-j2πd/λ}` with the phase reduced modulo 2π first.
pub fn propagation_phasor(distance: f64, wavelength: f64) -> Complex64 {
    let cycles = (distance / wavelength).fract();
    Complex64::from_polar(1.0, -2.0 * PI * cycles)
}

/// Complex relative permittivity `ε_r − jσ/(2πfε0)`.
pub fn complex_permittivity(material: &Material, frequency: f64) -> Complex64 {
    Complex64::new(
        material.relative_permittivity,
        -material.conductivity / (2.0 * PI * frequency * VACUUM_PERMITTIVITY),
    )
}

/// Fresnel reflection coefficient for a wave arriving from free space at
/// `theta_inc` (radians from the normal).
pub fn fresnel_coeff(
    theta_inc: f64,
    material: &Material,
    wavelength: f64,
    polarization: Polarization,
) -> Complex64 {
    let eps = complex_permittivity(material, SPEED_OF_LIGHT / wavelength);
    fresnel_from_cos(theta_inc.cos(), eps, polarization)
}

fn fresnel_from_cos(cos_i: f64, eps: Complex64, polarization: Polarization) -> Complex64 {
    let sin2 = 1.0 - cos_i * cos_i;
    let root = (eps - sin2).sqrt();
    match polarization {
        Polarization::Te => (cos_i - root) / (cos_i + root),
        Polarization::Tm => (eps * cos_i - root) / (eps * cos_i + root),
    }
}

/// Unit vector of vertical polarization transverse to propagation direction `k`.
fn vertical_transverse(k: &Vec3) -> Option<Vec3> {
    let e = Vec3::z() - k.z * k;
    let n = e.norm();
    (n > 1e-12).then(|| e / n)
}

/// Reflection coefficient seen by the vertically polarized field at one facet.
///
/// The vertical field is split into TE/TM parts against the facet's plane of
/// incidence. The TE weight is the mean of the splits computed from the
/// incoming and outgoing directions, which keeps the result identical for the
/// reversed path. TE/TM magnitudes are recombined in power; the phase follows
/// the dominant component.
fn reflection_coeff(k_in: &Vec3, k_out: &Vec3, normal: &Vec3, eps: Complex64) -> Complex64 {
    let cos_i = k_in.dot(normal).abs().min(1.0);
    let te = fresnel_from_cos(cos_i, eps, Polarization::Te);
    let plane_normal = k_in.cross(normal);
    let pn = plane_normal.norm();
    if pn < 1e-12 {
        return te;
    }
    let e_s = plane_normal / pn;
    let weight = |k: &Vec3| vertical_transverse(k).map(|e| e.dot(&e_s).powi(2));
    let w_s = match (weight(k_in), weight(k_out)) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.5,
    };
    let tm = fresnel_from_cos(cos_i, eps, Polarization::Tm);
    let magnitude = (w_s * te.norm_sqr() + (1.0 - w_s) * tm.norm_sqr()).sqrt();
    let phase = if w_s >= 0.5 { te.arg() } else { tm.arg() };
    Complex64::from_polar(magnitude, phase)
}

/// Field factor for a flat per-traversal loss in dB.
pub fn transmission_factor(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 20.0)
}

/// Product of all reflection and transmission coefficients along a path,
/// excluding free-space spreading.
pub fn interaction_gain(
    path: &PropagationPath,
    carrier: &Carrier,
    scene: &Scene,
) -> Result<Complex64, EmError> {
    let vertices = path.vertices();
    let mut gain = Complex64::new(1.0, 0.0);
    for (j, interaction) in path.interactions.iter().enumerate() {
        match *interaction {
            Interaction::Reflection { surface, .. } => {
                let material = material_of(scene, surface)?;
                let eps = complex_permittivity(material, carrier.frequency());
                let k_in = (vertices[j + 1] - vertices[j]).normalize();
                let k_out = (vertices[j + 2] - vertices[j + 1]).normalize();
                let normal = scene.surface(surface).normal();
                gain *= reflection_coeff(&k_in, &k_out, &normal, eps);
            }
            Interaction::Transmission { surface, .. } => {
                gain *= transmission_factor(material_of(scene, surface)?.transmission_loss_db);
            }
            Interaction::RisScatter { .. } => return Err(EmError::CascadedPath),
        }
    }
    Ok(gain)
}

fn material_of(scene: &Scene, surface: usize) -> Result<&Material, EmError> {
    scene
        .surfaces()
        .get(surface)
        .and_then(|s| scene.material(s.material_id()))
        .ok_or(EmError::UnresolvedMaterial(surface))
}

/// Complex amplitude of a conventional path: Friis spreading over the full
/// unfolded length times every interaction coefficient.
pub fn path_amplitude(
    path: &PropagationPath,
    carrier: &Carrier,
    scene: &Scene,
) -> Result<Complex64, EmError> {
    Ok(friis_gain(path.length, carrier.wavelength())? * interaction_gain(path, carrier, scene)?)
}

/// Received power `Pt + 20·log10|a|`; `-inf` for a zero amplitude.
pub fn dbm_from_amplitude(amplitude: Complex64, pt_dbm: f64) -> f64 {
    let m = amplitude.norm();
    if m == 0.0 {
        f64::NEG_INFINITY
    } else {
        pt_dbm + 20.0 * m.log10()
    }
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}
