//! Anechoic-chamber style angular sweep of a panel's scattering pattern.
//!
//! The transmitter faces the panel along its normal. The receiver moves on
//! an arc in the plane spanned by the normal and the panel x axis, always
//! pointing at the panel center.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::em::{dbm_from_amplitude, Carrier};
use crate::raytrace::PropagationPath;
use crate::ris::{
    design_phases, pair_amplitude, PanelWeights, PhaseModel, RisConfig, RisError, RisLeg, RisPanel,
};
use crate::scene::Scene;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum ChamberError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("found {found} lobe maxima, {wanted} requested")]
    TooFewLobes { found: usize, wanted: usize },
    #[error(transparent)]
    Ris(#[from] RisError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub tx_distance: f64,
    pub rx_distance: f64,
    #[serde(default)]
    pub theta_min_deg: f64,
    #[serde(default = "default_theta_max")]
    pub theta_max_deg: f64,
    #[serde(default = "default_step")]
    pub step_deg: f64,
    /// Number of lobes to report.
    #[serde(default = "default_lobes")]
    pub lobes: usize,
    /// Scattering direction the panel is configured for (0 = specular).
    #[serde(default)]
    pub steer_deg: f64,
    /// Optional receiver weighting `cos^q θ` in power.
    #[serde(default)]
    pub rx_pattern_q: Option<f64>,
}

fn default_theta_max() -> f64 {
    90.0
}

fn default_step() -> f64 {
    0.05
}

fn default_lobes() -> usize {
    3
}

impl SweepParams {
    pub fn validate(&self) -> Result<(), ChamberError> {
        let bad = |m: String| Err(ChamberError::InvalidSweep(m));
        if !(self.tx_distance > 0.0 && self.rx_distance > 0.0) {
            return bad("tx_distance and rx_distance must be > 0".into());
        }
        if !(-90.0..=90.0).contains(&self.theta_min_deg)
            || !(-90.0..=90.0).contains(&self.theta_max_deg)
            || self.theta_min_deg > self.theta_max_deg
        {
            return bad(format!(
                "need -90 <= theta_min <= theta_max <= 90 (got {}, {})",
                self.theta_min_deg, self.theta_max_deg
            ));
        }
        if !(self.step_deg.is_finite() && self.step_deg > 0.0) {
            return bad(format!("step_deg must be > 0 (got {})", self.step_deg));
        }
        if !(self.steer_deg.abs() < 90.0) {
            return bad(format!(
                "steer_deg must lie in (-90, 90) (got {})",
                self.steer_deg
            ));
        }
        if let Some(q) = self.rx_pattern_q {
            if !(q.is_finite() && q >= 0.0) {
                return bad(format!("rx_pattern_q must be >= 0 (got {q})"));
            }
        }
        Ok(())
    }

    /// Sample angles `θ_k = θ_min + k·step` up to `θ_max`.
    pub fn angles_deg(&self) -> Vec<f64> {
        let n = ((self.theta_max_deg - self.theta_min_deg) / self.step_deg + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| self.theta_min_deg + k as f64 * self.step_deg)
            .collect()
    }
}

/// Unit direction at `theta_deg` from the normal, towards +x_axis.
pub fn arc_direction(panel: &RisPanel, theta_deg: f64) -> Vec3 {
    let t = theta_deg.to_radians();
    t.cos() * panel.normal + t.sin() * panel.x_axis
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub theta_deg: f64,
    pub power_dbm: f64,
}

/// Received power along the arc.
pub fn chamber_sweep(
    panel: &RisPanel,
    carrier: &Carrier,
    pt_dbm: f64,
    params: &SweepParams,
) -> Result<Vec<SweepSample>, ChamberError> {
    params.validate()?;
    let scene = Scene::empty();
    let tx = panel.center + params.tx_distance * panel.normal;
    let leg_a = RisLeg::incoming(
        PropagationPath::direct(tx, panel.center),
        panel,
        &scene,
        carrier,
    )?;
    let config = if params.steer_deg == 0.0 {
        RisConfig::uniform(panel)
    } else {
        let target = arc_direction(panel, params.steer_deg);
        design_phases(panel, &panel.normal, &target, carrier.wavelength())?
    };
    let weights = PanelWeights::new(panel, &config)?;
    params
        .angles_deg()
        .into_iter()
        .map(|theta_deg| {
            let rx = panel.center + params.rx_distance * arc_direction(panel, theta_deg);
            let leg_b = RisLeg::outgoing(
                PropagationPath::direct(panel.center, rx),
                panel,
                &scene,
                carrier,
            )?;
            let amp = pair_amplitude(
                &leg_a,
                &leg_b,
                panel,
                &weights,
                carrier,
                PhaseModel::PlaneWave,
            );
            let mut power_dbm = amp.map_or(f64::NEG_INFINITY, |a| dbm_from_amplitude(a, pt_dbm));
            if let Some(q) = params.rx_pattern_q {
                power_dbm += 10.0 * q * theta_deg.to_radians().cos().max(0.0).log10();
            }
            Ok(SweepSample {
                theta_deg,
                power_dbm,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lobe {
    /// 1 for the strongest lobe.
    pub rank: usize,
    pub theta_deg: f64,
    pub power_dbm: f64,
    /// Level relative to the strongest lobe (dB).
    pub relative_db: f64,
}

/// The `n` largest local maxima of the sweep, strongest first.
///
/// Interior maxima must exceed both neighbours; a flat run of equal maxima
/// resolves to its lowest angle. An endpoint counts when it exceeds its only
/// neighbour. Equal peaks are ordered by angle.
pub fn extract_lobes(sweep: &[SweepSample], n: usize) -> Result<Vec<Lobe>, ChamberError> {
    let p: Vec<f64> = sweep.iter().map(|s| s.power_dbm).collect();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < p.len() {
        let mut j = i;
        while j + 1 < p.len() && p[j + 1] == p[i] {
            j += 1;
        }
        let left_ok = i == 0 || p[i - 1] < p[i];
        let right_ok = j + 1 == p.len() || p[j + 1] < p[i];
        let isolated = p.len() == 1;
        if left_ok && right_ok && !isolated && p[i].is_finite() {
            peaks.push(i);
        }
        i = j + 1;
    }
    if peaks.len() < n {
        return Err(ChamberError::TooFewLobes {
            found: peaks.len(),
            wanted: n,
        });
    }
    peaks.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let reference = peaks.first().map_or(0.0, |&k| p[k]);
    Ok(peaks
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(r, k)| Lobe {
            rank: r + 1,
            theta_deg: sweep[k].theta_deg,
            power_dbm: p[k],
            relative_db: p[k] - reference,
        })
        .collect())
}

/// Normalized power pattern of a uniform line array of `n` elements at
/// half-wavelength pitch, `|sin(Nψ/2) / (N sin(ψ/2))|²` with `ψ = π sinθ`.
pub fn uniform_line_array_factor(n: usize, theta: f64) -> f64 {
    let psi = std::f64::consts::PI * theta.sin();
    let den = n as f64 * (psi / 2.0).sin();
    if den.abs() < 1e-15 {
        return 1.0;
    }
    ((n as f64 * psi / 2.0).sin() / den).powi(2)
}
