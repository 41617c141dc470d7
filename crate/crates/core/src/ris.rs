//! Far-field RIS model.
//!
//! A panel is a centered rectangular lattice of unit cells (UCs). Each UC
//! re-radiates with a real scattering strength `g_uc` (square root of its
//! radar cross section, meters) shared across the panel, times a programmable
//! reflection coefficient `A·e^{jβ(n)}`. Mutual coupling is neglected, so the
//! panel response is the diagonal `Ω(n,n) = g_uc·A·e^{jβ(n)}`.
//!
//! A cascaded BS → RIS → MS contribution built from an incoming leg of length
//! `d_a` and an outgoing leg of length `d_b` is
//!
//! ```text
//! λ / ((4π)^{3/2} d_a d_b) · e^{-j2π(d_a+d_b)/λ} · Γ_a Γ_b · Σ_n Ω(n,n) e^{jφ_n}
//! φ_n = (2π/λ) (û_i + û_s) · r_n
//! ```
//!
//! where `û_i` points from the panel back along the incoming leg, `û_s` along
//! the outgoing leg, and `r_n` is the UC offset from the panel center. With
//! the phases from [`design_phases`] every term of the sum has the same phase
//! and its magnitude reaches `K·g_uc·A`, which reproduces the bistatic radar
//! equation `Pr/Pt = (K g A)² λ² / ((4π)³ d_a² d_b²)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PathContribution;
use crate::em::{interaction_gain, propagation_phasor, Carrier, EmError};
use crate::raytrace::{Interaction, PathTag, PropagationPath};
use crate::scene::Scene;
use crate::Vec3;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, PartialEq)]
pub enum RisError {
    #[error("invalid RIS panel: {0}")]
    InvalidPanel(String),
    #[error("angle {0} rad is outside [0, π/2]")]
    AngleOutOfRange(f64),
    #[error("alpha must be finite and >= 0 (got {0})")]
    InvalidAlpha(f64),
    #[error("{which} direction lies behind the panel (cos θ = {cos})")]
    BehindPanel { which: &'static str, cos: f64 },
    #[error("configuration has {got} phases, panel has {expected} unit cells")]
    ConfigSize { expected: usize, got: usize },
    #[error("phase {0} is outside [0, 2π)")]
    PhaseOutOfRange(f64),
    #[error("path endpoint {0:?} is not on the panel center")]
    EndpointNotOnPanel([f64; 3]),
    #[error("far-field violated: {distance:.3} m link, threshold {threshold:.3} m")]
    FarField { distance: f64, threshold: f64 },
    #[error(transparent)]
    Em(#[from] EmError),
}

/// Unit-cell scattering functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScatteringModel {
    /// `g = [dx dy G F(θi) F(θs)]^{1/2}`, `F = cos^α`, `G = 2(α+1)`.
    Tang2020,
    /// `g = (4π cosθi cosθs)^{1/2} dx dy / λ`.
    #[default]
    Tang2022,
    /// `g = G λ [F(θi) F(θs) / 4π]^{1/2}`, `F = cos^α`, `G = 2(α+1)`.
    Ellingson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisPanel {
    pub center: Vec3,
    pub normal: Vec3,
    pub x_axis: Vec3,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Common reflection amplitude `A = τ(n)`.
    pub amplitude: f64,
    pub model: ScatteringModel,
    pub alpha: f64,
}

impl RisPanel {
    /// Panel with `A = 1`, the default scattering model and `α = 1`.
    /// `normal` and `x_axis` are normalized; they must be perpendicular.
    pub fn new(
        center: Vec3,
        normal: Vec3,
        x_axis: Vec3,
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
    ) -> Result<Self, RisError> {
        if normal.norm() == 0.0 || x_axis.norm() == 0.0 {
            return Err(RisError::InvalidPanel(
                "zero-length normal or x_axis".into(),
            ));
        }
        let panel = Self {
            center,
            normal: normal.normalize(),
            x_axis: x_axis.normalize(),
            nx,
            ny,
            dx,
            dy,
            amplitude: 1.0,
            model: ScatteringModel::default(),
            alpha: 1.0,
        };
        panel.validate()?;
        Ok(panel)
    }

    /// Panel with half-wavelength unit cells.
    pub fn half_wavelength(
        center: Vec3,
        normal: Vec3,
        x_axis: Vec3,
        nx: usize,
        ny: usize,
        wavelength: f64,
    ) -> Result<Self, RisError> {
        Self::new(
            center,
            normal,
            x_axis,
            nx,
            ny,
            0.5 * wavelength,
            0.5 * wavelength,
        )
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self, RisError> {
        self.amplitude = amplitude;
        self.validate()?;
        Ok(self)
    }

    pub fn with_model(mut self, model: ScatteringModel, alpha: f64) -> Result<Self, RisError> {
        self.model = model;
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), RisError> {
        let bad = |m: String| Err(RisError::InvalidPanel(m));
        if self.center.iter().any(|c| !c.is_finite()) {
            return bad("center must be finite".into());
        }
        if (self.normal.norm() - 1.0).abs() > 1e-9 || (self.x_axis.norm() - 1.0).abs() > 1e-9 {
            return bad("normal and x_axis must be unit vectors".into());
        }
        if self.normal.dot(&self.x_axis).abs() > 1e-9 {
            return bad("x_axis must be perpendicular to the normal".into());
        }
        if self.nx == 0 || self.ny == 0 {
            return bad(format!(
                "nx and ny must be >= 1 (got {} x {})",
                self.nx, self.ny
            ));
        }
        if !(self.dx.is_finite() && self.dx > 0.0 && self.dy.is_finite() && self.dy > 0.0) {
            return bad(format!(
                "dx and dy must be > 0 (got {}, {})",
                self.dx, self.dy
            ));
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return bad(format!(
                "amplitude must lie in [0, 1] (got {})",
                self.amplitude
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(RisError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }

    /// Number of unit cells `K = nx·ny`.
    pub fn uc_count(&self) -> usize {
        self.nx * self.ny
    }

    /// In-plane axis completing the right-handed frame `(x_axis, y_axis, normal)`.
    pub fn y_axis(&self) -> Vec3 {
        self.normal.cross(&self.x_axis)
    }

    fn lattice_x(&self) -> Vec<f64> {
        lattice(self.nx, self.dx)
    }

    fn lattice_y(&self) -> Vec<f64> {
        lattice(self.ny, self.dy)
    }

    /// UC offsets from the center, row-major with x fastest.
    pub fn uc_offsets(&self) -> Vec<Vec3> {
        let (xs, ys) = (self.lattice_x(), self.lattice_y());
        let (ex, ey) = (self.x_axis, self.y_axis());
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| x * ex + y * ey))
            .collect()
    }
}

fn lattice(n: usize, pitch: f64) -> Vec<f64> {
    let mid = 0.5 * (n as f64 - 1.0);
    (0..n).map(|i| (i as f64 - mid) * pitch).collect()
}

/// Absolute UC centers, row-major with x fastest.
pub fn uc_positions(panel: &RisPanel) -> Vec<Vec3> {
    panel
        .uc_offsets()
        .into_iter()
        .map(|r| panel.center + r)
        .collect()
}

fn check_angle(theta: f64) -> Result<f64, RisError> {
    if !(0.0..=PI / 2.0).contains(&theta) {
        return Err(RisError::AngleOutOfRange(theta));
    }
    Ok(theta.cos().max(0.0))
}

/// UC scattering strength `g_uc` (meters) for incidence `theta_i` and
/// scattering `theta_s`, both measured from the panel normal.
pub fn uc_scattering(
    model: ScatteringModel,
    theta_i: f64,
    theta_s: f64,
    wavelength: f64,
    dx: f64,
    dy: f64,
    alpha: f64,
) -> Result<f64, RisError> {
    let (ci, cs) = (check_angle(theta_i)?, check_angle(theta_s)?);
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(RisError::InvalidAlpha(alpha));
    }
    Ok(scattering_from_cos(
        model, ci, cs, wavelength, dx, dy, alpha,
    ))
}

/// First row of the scattering table with an explicit maximum gain `G`.
pub fn uc_scattering_with_gain(
    theta_i: f64,
    theta_s: f64,
    dx: f64,
    dy: f64,
    gain: f64,
    alpha: f64,
) -> Result<f64, RisError> {
    let (ci, cs) = (check_angle(theta_i)?, check_angle(theta_s)?);
    Ok((dx * dy * gain * ci.powf(alpha) * cs.powf(alpha)).sqrt())
}

fn scattering_from_cos(
    model: ScatteringModel,
    cos_i: f64,
    cos_s: f64,
    wavelength: f64,
    dx: f64,
    dy: f64,
    alpha: f64,
) -> f64 {
    match model {
        ScatteringModel::Tang2022 => (4.0 * PI * cos_i * cos_s).sqrt() * dx * dy / wavelength,
        ScatteringModel::Tang2020 => {
            let gain = 2.0 * (alpha + 1.0);
            (dx * dy * gain * cos_i.powf(alpha) * cos_s.powf(alpha)).sqrt()
        }
        ScatteringModel::Ellingson => {
            let gain = 2.0 * (alpha + 1.0);
            gain * wavelength * (cos_i.powf(alpha) * cos_s.powf(alpha) / (4.0 * PI)).sqrt()
        }
    }
}

fn panel_scattering(panel: &RisPanel, cos_i: f64, cos_s: f64, wavelength: f64) -> f64 {
    scattering_from_cos(
        panel.model,
        cos_i,
        cos_s,
        wavelength,
        panel.dx,
        panel.dy,
        panel.alpha,
    )
}

/// Fraunhofer distance `2D²/λ` with `D` the panel diagonal.
pub fn fraunhofer_distance(panel: &RisPanel, wavelength: f64) -> f64 {
    let w = panel.nx as f64 * panel.dx;
    let h = panel.ny as f64 * panel.dy;
    2.0 * (w * w + h * h) / wavelength
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FarFieldMode {
    Off,
    #[default]
    Warn,
    Strict,
}

/// How link distances are held against the far-field threshold
/// `factor · 2D²/λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarFieldPolicy {
    pub mode: FarFieldMode,
    pub factor: f64,
}

impl Default for FarFieldPolicy {
    fn default() -> Self {
        Self {
            mode: FarFieldMode::Warn,
            factor: 1.0,
        }
    }
}

impl FarFieldPolicy {
    pub fn threshold(&self, panel: &RisPanel, wavelength: f64) -> f64 {
        self.factor * fraunhofer_distance(panel, wavelength)
    }

    /// `Ok(true)` when `distance` is in the far field, `Ok(false)` for a
    /// tolerated violation, `Err` in strict mode.
    pub fn check(
        &self,
        panel: &RisPanel,
        wavelength: f64,
        distance: f64,
    ) -> Result<bool, RisError> {
        let threshold = self.threshold(panel, wavelength);
        if distance >= threshold || self.mode == FarFieldMode::Off {
            return Ok(true);
        }
        match self.mode {
            FarFieldMode::Strict => Err(RisError::FarField {
                distance,
                threshold,
            }),
            _ => Ok(false),
        }
    }
}

/// Purpose a configuration was designed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigMode {
    /// Designed once for an anchor location and held everywhere.
    Fixed,
    /// Designed for the location being evaluated.
    MsSpecific,
}

/// Programmable phases `β(n)` for every UC, row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RisConfig {
    pub beta: Vec<f64>,
    pub mode: Option<ConfigMode>,
    /// Location the phases were designed for, if any.
    pub anchor: Option<Vec3>,
}

impl RisConfig {
    /// All phases zero: the panel acts as a specular reflector.
    pub fn uniform(panel: &RisPanel) -> Self {
        Self {
            beta: vec![0.0; panel.uc_count()],
            mode: None,
            anchor: None,
        }
    }

    /// Records the design purpose and location.
    pub fn designed_for(mut self, mode: ConfigMode, anchor: Vec3) -> Self {
        self.mode = Some(mode);
        self.anchor = Some(anchor);
        self
    }

    pub fn validate(&self, panel: &RisPanel) -> Result<(), RisError> {
        if self.beta.len() != panel.uc_count() {
            return Err(RisError::ConfigSize {
                expected: panel.uc_count(),
                got: self.beta.len(),
            });
        }
        if let Some(&b) = self.beta.iter().find(|b| !(0.0..TWO_PI).contains(*b)) {
            return Err(RisError::PhaseOutOfRange(b));
        }
        Ok(())
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TWO_PI);
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// Phases steering the incident wave from `incident_dir` toward `target_dir`
/// (both unit vectors pointing away from the panel).
///
/// `β(n) = −(2π/λ)(û_i + û_s)·r_n mod 2π` cancels the geometric phase of
/// every UC so that all cascade terms add in phase.
pub fn design_phases(
    panel: &RisPanel,
    incident_dir: &Vec3,
    target_dir: &Vec3,
    wavelength: f64,
) -> Result<RisConfig, RisError> {
    let ci = incident_dir.dot(&panel.normal);
    if !(ci > 0.0) {
        return Err(RisError::BehindPanel {
            which: "incident",
            cos: ci,
        });
    }
    let cs = target_dir.dot(&panel.normal);
    if !(cs > 0.0) {
        return Err(RisError::BehindPanel {
            which: "target",
            cos: cs,
        });
    }
    let k = TWO_PI / wavelength;
    let steer = incident_dir + target_dir;
    let beta = panel
        .uc_offsets()
        .iter()
        .map(|r| wrap_phase(-k * steer.dot(r)))
        .collect();
    Ok(RisConfig {
        beta,
        mode: None,
        anchor: None,
    })
}

/// Diagonal of `Ω`: `g_uc·A·e^{jβ(n)}` with `g_uc` shared by all UCs.
pub fn omega_entries(
    panel: &RisPanel,
    config: &RisConfig,
    theta_i: f64,
    theta_s: f64,
    wavelength: f64,
) -> Result<Vec<Complex64>, RisError> {
    config.validate(panel)?;
    let g = uc_scattering(
        panel.model,
        theta_i,
        theta_s,
        wavelength,
        panel.dx,
        panel.dy,
        panel.alpha,
    )?;
    Ok(config
        .beta
        .iter()
        .map(|&b| Complex64::from_polar(g * panel.amplitude, b))
        .collect())
}

/// Per-UC phase model used when summing over the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Plane-wave offsets `(û_i + û_s)·r_n`.
    #[default]
    PlaneWave,
    /// Exact spherical distances from the neighbouring path vertices to each UC.
    ExactDistance,
}

/// Panel weights `A·e^{jβ(n)}` laid out for fast array sums.
#[derive(Debug, Clone)]
pub struct PanelWeights {
    weights: Vec<Complex64>,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PanelWeights {
    pub fn new(panel: &RisPanel, config: &RisConfig) -> Result<Self, RisError> {
        config.validate(panel)?;
        Ok(Self {
            weights: config
                .beta
                .iter()
                .map(|&b| Complex64::from_polar(panel.amplitude, b))
                .collect(),
            xs: panel.lattice_x(),
            ys: panel.lattice_y(),
        })
    }

    /// `Σ_n A e^{jβ(n)} e^{jk s·r_n}`, separable over the lattice axes.
    fn plane_wave_sum(&self, panel: &RisPanel, steer: &Vec3, k: f64) -> Complex64 {
        let (sx, sy) = (steer.dot(&panel.x_axis), steer.dot(&panel.y_axis()));
        let ex: Vec<Complex64> = self
            .xs
            .iter()
            .map(|x| Complex64::from_polar(1.0, k * sx * x))
            .collect();
        let nx = ex.len();
        self.ys
            .iter()
            .enumerate()
            .map(|(j, y)| {
                let row = &self.weights[j * nx..(j + 1) * nx];
                let inner: Complex64 = row.iter().zip(&ex).map(|(w, e)| w * e).sum();
                inner * Complex64::from_polar(1.0, k * sy * y)
            })
            .sum()
    }

    /// Exact-distance counterpart of [`Self::plane_wave_sum`], normalized so
    /// that it tends to the plane-wave sum in the far field.
    fn exact_sum(&self, panel: &RisPanel, a: &RisLeg, b: &RisLeg, k: f64) -> Complex64 {
        let (ex, ey) = (panel.x_axis, panel.y_axis());
        let nx = self.xs.len();
        let (base_a, base_b) = (a.length - a.adjacent, b.length - b.adjacent);
        let mut sum = Complex64::new(0.0, 0.0);
        for (j, y) in self.ys.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                let p = panel.center + *x * ex + *y * ey;
                let da = base_a + (a.neighbour - p).norm();
                let db = base_b + (b.neighbour - p).norm();
                let excess = (da - a.length) + (db - b.length);
                let w = self.weights[j * nx + i];
                sum +=
                    w * (a.length * b.length / (da * db)) * Complex64::from_polar(1.0, -k * excess);
            }
        }
        sum
    }
}

/// One leg of a cascade: a traced path ending (incoming) or starting
/// (outgoing) at the panel center, with its interaction coefficients.
#[derive(Debug, Clone)]
pub struct RisLeg {
    pub path: PropagationPath,
    /// Product of reflection/transmission coefficients along the leg.
    pub gain: Complex64,
    pub length: f64,
    /// Unit vector from the panel toward the leg's neighbouring vertex.
    pub direction: Vec3,
    /// Cosine of the angle between `direction` and the panel normal.
    pub cos_theta: f64,
    /// Vertex adjacent to the panel along the leg.
    pub neighbour: Vec3,
    /// Distance from the panel center to `neighbour`.
    pub adjacent: f64,
}

fn on_center(panel: &RisPanel, p: &Vec3) -> bool {
    (p - panel.center).norm() <= 1e-9 * panel.center.norm().max(1.0)
}

impl RisLeg {
    /// Leg from a source to the panel (`path.rx` is the panel center).
    pub fn incoming(
        path: PropagationPath,
        panel: &RisPanel,
        scene: &Scene,
        carrier: &Carrier,
    ) -> Result<Self, RisError> {
        if !on_center(panel, &path.rx) {
            return Err(RisError::EndpointNotOnPanel(crate::arr3(&path.rx)));
        }
        let direction = -path.arrival_dir;
        let neighbour = path.interactions.last().map_or(path.tx, Interaction::point);
        Self::build(path, panel, scene, carrier, direction, neighbour)
    }

    /// Leg from the panel to a receiver (`path.tx` is the panel center).
    pub fn outgoing(
        path: PropagationPath,
        panel: &RisPanel,
        scene: &Scene,
        carrier: &Carrier,
    ) -> Result<Self, RisError> {
        if !on_center(panel, &path.tx) {
            return Err(RisError::EndpointNotOnPanel(crate::arr3(&path.tx)));
        }
        let direction = path.departure_dir;
        let neighbour = path
            .interactions
            .first()
            .map_or(path.rx, Interaction::point);
        Self::build(path, panel, scene, carrier, direction, neighbour)
    }

    fn build(
        path: PropagationPath,
        panel: &RisPanel,
        scene: &Scene,
        carrier: &Carrier,
        direction: Vec3,
        neighbour: Vec3,
    ) -> Result<Self, RisError> {
        let gain = interaction_gain(&path, carrier, scene)?;
        Ok(Self {
            gain,
            length: path.length,
            cos_theta: direction.dot(&panel.normal),
            adjacent: (neighbour - panel.center).norm(),
            direction,
            neighbour,
            path,
        })
    }

    /// True when the leg reaches the illuminated side of the panel.
    pub fn is_lit(&self) -> bool {
        self.cos_theta > 0.0
    }
}

/// Cascade prefactor `λ / ((4π)^{3/2} d_a d_b) · e^{-jk(d_a+d_b)} · Γ_a Γ_b`.
fn cascade_prefactor(a: &RisLeg, b: &RisLeg, wavelength: f64) -> Complex64 {
    let spread = wavelength / ((4.0 * PI).powf(1.5) * a.length * b.length);
    propagation_phasor(a.length + b.length, wavelength) * a.gain * b.gain * spread
}

/// Complex amplitude of one (incoming, outgoing) pair under `weights`;
/// `None` when either leg reaches the panel from behind or at grazing.
pub fn pair_amplitude(
    a: &RisLeg,
    b: &RisLeg,
    panel: &RisPanel,
    weights: &PanelWeights,
    carrier: &Carrier,
    phase_model: PhaseModel,
) -> Option<Complex64> {
    if !(a.is_lit() && b.is_lit()) {
        return None;
    }
    let lambda = carrier.wavelength();
    let k = carrier.wavenumber();
    let g = panel_scattering(panel, a.cos_theta.min(1.0), b.cos_theta.min(1.0), lambda);
    let sum = match phase_model {
        PhaseModel::PlaneWave => weights.plane_wave_sum(panel, &(a.direction + b.direction), k),
        PhaseModel::ExactDistance => weights.exact_sum(panel, a, b, k),
    };
    Some(cascade_prefactor(a, b, lambda) * g * sum)
}

/// Magnitude of a pair under its own optimal configuration,
/// `K·g_uc·A·|Γ_a Γ_b|·λ / ((4π)^{3/2} d_a d_b)`.
pub fn optimal_pair_magnitude(a: &RisLeg, b: &RisLeg, panel: &RisPanel, wavelength: f64) -> f64 {
    if !(a.is_lit() && b.is_lit()) {
        return 0.0;
    }
    let g = panel_scattering(
        panel,
        a.cos_theta.min(1.0),
        b.cos_theta.min(1.0),
        wavelength,
    );
    let spread = wavelength / ((4.0 * PI).powf(1.5) * a.length * b.length);
    panel.uc_count() as f64 * g * panel.amplitude * a.gain.norm() * b.gain.norm() * spread
}

/// The pair with the largest amplitude under a hypothetical optimal
/// configuration; ties go to the shorter combined length, then to the lower
/// indices.
pub fn strongest_pair(
    legs_a: &[RisLeg],
    legs_b: &[RisLeg],
    panel: &RisPanel,
    wavelength: f64,
) -> Option<(usize, usize)> {
    let mut best: Option<(f64, f64, usize, usize)> = None;
    for (i, a) in legs_a.iter().enumerate() {
        for (j, b) in legs_b.iter().enumerate() {
            let m = optimal_pair_magnitude(a, b, panel, wavelength);
            if m <= 0.0 {
                continue;
            }
            let len = a.length + b.length;
            let better = match best {
                None => true,
                Some((bm, bl, _, _)) => m > bm || (m == bm && len < bl),
            };
            if better {
                best = Some((m, len, i, j));
            }
        }
    }
    best.map(|(_, _, i, j)| (i, j))
}

/// Phases designed for the geometry of a specific pair.
pub fn design_for_pair(
    a: &RisLeg,
    b: &RisLeg,
    panel: &RisPanel,
    wavelength: f64,
) -> Result<RisConfig, RisError> {
    design_phases(panel, &a.direction, &b.direction, wavelength)
}

/// Cascade every lit (incoming, outgoing) pair into a RIS-tagged path.
pub fn cascade_legs(
    legs_a: &[RisLeg],
    legs_b: &[RisLeg],
    panel: &RisPanel,
    config: &RisConfig,
    carrier: &Carrier,
    phase_model: PhaseModel,
) -> Result<Vec<PathContribution>, RisError> {
    let weights = PanelWeights::new(panel, config)?;
    let mut out = Vec::new();
    for a in legs_a {
        for b in legs_b {
            if let Some(amplitude) = pair_amplitude(a, b, panel, &weights, carrier, phase_model) {
                out.push(PathContribution {
                    path: join_legs(a, b, panel),
                    amplitude,
                });
            }
        }
    }
    Ok(out)
}

fn join_legs(a: &RisLeg, b: &RisLeg, panel: &RisPanel) -> PropagationPath {
    let mut interactions = a.path.interactions.clone();
    interactions.push(Interaction::RisScatter {
        point: panel.center,
    });
    interactions.extend_from_slice(&b.path.interactions);
    let mut path = PropagationPath::from_vertices(a.path.tx, b.path.rx, interactions, PathTag::Ris);
    path.length = a.length + b.length;
    path.delay = path.length / crate::SPEED_OF_LIGHT;
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CascadeOptions {
    pub phase_model: PhaseModel,
    pub far_field: FarFieldPolicy,
}

/// Cascades traced BS → panel paths with panel → MS paths.
///
/// Far-field distances (panel to the adjacent vertex of each leg) are checked
/// against `options.far_field`; violations are logged in warn mode.
pub fn ris_cascade(
    scene: &Scene,
    paths_a: &[PropagationPath],
    paths_b: &[PropagationPath],
    panel: &RisPanel,
    config: &RisConfig,
    carrier: &Carrier,
    options: &CascadeOptions,
) -> Result<Vec<PathContribution>, RisError> {
    let legs_a = paths_a
        .iter()
        .map(|p| RisLeg::incoming(p.clone(), panel, scene, carrier))
        .collect::<Result<Vec<_>, _>>()?;
    let legs_b = paths_b
        .iter()
        .map(|p| RisLeg::outgoing(p.clone(), panel, scene, carrier))
        .collect::<Result<Vec<_>, _>>()?;
    let violations = far_field_violations(&legs_a, &legs_b, panel, carrier, &options.far_field)?;
    if violations > 0 {
        log::warn!(
            "{violations} RIS leg(s) closer than the far-field threshold {:.2} m",
            options.far_field.threshold(panel, carrier.wavelength())
        );
    }
    cascade_legs(
        &legs_a,
        &legs_b,
        panel,
        config,
        carrier,
        options.phase_model,
    )
}

/// Number of lit legs whose panel-adjacent segment is inside the far-field
/// threshold. Fails on the first violation in strict mode.
pub fn far_field_violations(
    legs_a: &[RisLeg],
    legs_b: &[RisLeg],
    panel: &RisPanel,
    carrier: &Carrier,
    policy: &FarFieldPolicy,
) -> Result<usize, RisError> {
    let mut count = 0;
    for leg in legs_a.iter().chain(legs_b).filter(|l| l.is_lit()) {
        if !policy.check(panel, carrier.wavelength(), leg.adjacent)? {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, lambda: f64) -> RisPanel {
        RisPanel::half_wavelength(Vec3::zeros(), Vec3::z(), Vec3::x(), n, n, lambda).unwrap()
    }

    fn direct_legs(panel: &RisPanel, src: Vec3, dst: Vec3, carrier: &Carrier) -> (RisLeg, RisLeg) {
        let scene = Scene::empty();
        let a = RisLeg::incoming(
            PropagationPath::direct(src, panel.center),
            panel,
            &scene,
            carrier,
        )
        .unwrap();
        let b = RisLeg::outgoing(
            PropagationPath::direct(panel.center, dst),
            panel,
            &scene,
            carrier,
        )
        .unwrap();
        (a, b)
    }

    #[test]
    fn uc_position_examples() {
        let one = square(1, 0.1);
        assert_eq!(uc_positions(&one), vec![Vec3::zeros()]);

        let d = 0.3;
        let two =
            RisPanel::new(Vec3::new(1.0, 1.0, 1.0), Vec3::z(), Vec3::x(), 2, 2, d, d).unwrap();
        let p = uc_positions(&two);
        let c = Vec3::new(1.0, 1.0, 1.0);
        let close = |a: Vec3, b: Vec3| (a - b).norm() < 1e-15;
        assert!(close(p[0] - c, Vec3::new(-d / 2.0, -d / 2.0, 0.0)));
        assert!(close(p[1] - c, Vec3::new(d / 2.0, -d / 2.0, 0.0)));
        assert!(close(p[3] - c, Vec3::new(d / 2.0, d / 2.0, 0.0)));

        let lambda = 0.0111;
        let big = square(16, lambda);
        let xs: Vec<f64> = uc_positions(&big).iter().map(|p| p.x).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        // Center-to-center span plus one cell pitch is the physical extent.
        assert!((span + big.dx - 8.0 * lambda).abs() < 1e-12);
    }

    #[test]
    fn scattering_examples() {
        let lambda = crate::SPEED_OF_LIGHT / 27e9;
        let h = lambda / 2.0;
        let g = uc_scattering(ScatteringModel::Tang2022, 0.0, 0.0, lambda, h, h, 1.0).unwrap();
        assert!((g / lambda - (4.0 * PI).sqrt() / 4.0).abs() < 1e-12);
        assert!((g - 0.009840).abs() < 5e-7);

        let null =
            uc_scattering(ScatteringModel::Tang2022, 0.3, PI / 2.0, lambda, h, h, 1.0).unwrap();
        assert!(null < 1e-7 * lambda);

        let g20 = uc_scattering(ScatteringModel::Tang2020, 0.0, 0.0, lambda, h, h, 1.0).unwrap();
        assert!((g20 - lambda).abs() < 1e-15);

        assert!(matches!(
            uc_scattering(ScatteringModel::Tang2022, -0.1, 0.0, lambda, h, h, 1.0),
            Err(RisError::AngleOutOfRange(_))
        ));
        assert!(matches!(
            uc_scattering(ScatteringModel::Ellingson, 0.1, 0.0, lambda, h, h, -1.0),
            Err(RisError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn ellingson_normal_incidence() {
        // α = 0: G = 2, g = 2λ/√(4π).
        let g = uc_scattering(ScatteringModel::Ellingson, 0.0, 0.0, 0.1, 0.05, 0.05, 0.0).unwrap();
        assert!((g - 0.2 / (4.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fraunhofer_examples() {
        let l27 = crate::SPEED_OF_LIGHT / 27e9;
        let d = fraunhofer_distance(&square(32, l27), l27);
        assert!((d - 1024.0 * l27).abs() < 1e-9);
        assert!((d - 11.37).abs() < 5e-3);
        assert!(d < 13.19);

        let single = fraunhofer_distance(&square(1, l27), l27);
        assert!((single - l27).abs() < 1e-15);

        let l37 = crate::SPEED_OF_LIGHT / 3.7e9;
        let d = fraunhofer_distance(&square(32, l37), l37);
        assert!((d - 82.97).abs() < 5e-3);
    }

    #[test]
    fn far_field_policy_modes() {
        let lambda = 0.0111;
        let panel = square(32, lambda);
        let warn = FarFieldPolicy::default();
        assert_eq!(warn.check(&panel, lambda, 100.0), Ok(true));
        assert_eq!(warn.check(&panel, lambda, 1.0), Ok(false));
        let strict = FarFieldPolicy {
            mode: FarFieldMode::Strict,
            factor: 1.0,
        };
        assert!(matches!(
            strict.check(&panel, lambda, 1.0),
            Err(RisError::FarField { .. })
        ));
        let off = FarFieldPolicy {
            mode: FarFieldMode::Off,
            factor: 1.0,
        };
        assert_eq!(off.check(&panel, lambda, 1.0), Ok(true));
    }

    #[test]
    fn design_examples() {
        let lambda = 1.0;
        let single = square(1, lambda);
        let c = design_phases(
            &single,
            &Vec3::z(),
            &Vec3::new(0.5, 0.0, 0.8).normalize(),
            lambda,
        )
        .unwrap();
        assert_eq!(c.beta, vec![0.0]);

        let panel = square(4, lambda);
        let c = design_phases(&panel, &Vec3::z(), &Vec3::z(), lambda).unwrap();
        assert!(c.beta.iter().all(|&b| b == c.beta[0]));

        let pair = RisPanel::new(Vec3::zeros(), Vec3::z(), Vec3::x(), 2, 1, 0.5, 0.5).unwrap();
        let target = Vec3::new(30f64.to_radians().sin(), 0.0, 30f64.to_radians().cos());
        let c = design_phases(&pair, &Vec3::z(), &target, lambda).unwrap();
        let diff = (c.beta[1] - c.beta[0]).rem_euclid(TWO_PI);
        let circular = diff.min(TWO_PI - diff);
        assert!((circular - PI / 2.0).abs() < 1e-12);

        assert!(matches!(
            design_phases(&panel, &-Vec3::z(), &Vec3::z(), lambda),
            Err(RisError::BehindPanel {
                which: "incident",
                ..
            })
        ));
    }

    #[test]
    fn omega_examples() {
        let lambda = crate::SPEED_OF_LIGHT / 27e9;
        let panel = square(1, lambda);
        let g = uc_scattering(
            ScatteringModel::Tang2022,
            0.0,
            0.0,
            lambda,
            panel.dx,
            panel.dy,
            1.0,
        )
        .unwrap();
        let zero = RisConfig::uniform(&panel);
        let o = omega_entries(&panel, &zero, 0.0, 0.0, lambda).unwrap();
        assert!((o[0] - Complex64::new(0.009840, 0.0)).norm() < 5e-7);
        assert_eq!(o[0], Complex64::new(g, 0.0));

        let quarter = RisConfig {
            beta: vec![PI / 2.0],
            mode: None,
            anchor: None,
        };
        let o = omega_entries(&panel, &quarter, 0.0, 0.0, lambda).unwrap();
        assert!((o[0] - Complex64::new(0.0, g)).norm() < 1e-15);

        let off = square(4, lambda).with_amplitude(0.0).unwrap();
        let o = omega_entries(&off, &RisConfig::uniform(&off), 0.2, 0.4, lambda).unwrap();
        assert!(o.iter().all(|x| *x == Complex64::new(0.0, 0.0)));

        assert!(matches!(
            omega_entries(&off, &zero, 0.0, 0.0, lambda),
            Err(RisError::ConfigSize {
                expected: 16,
                got: 1
            })
        ));
    }

    #[test]
    fn single_uc_cascade_matches_radar_equation() {
        let carrier = Carrier::new(27e9).unwrap();
        let lambda = carrier.wavelength();
        let panel = square(1, lambda);
        let (a, b) = direct_legs(&panel, Vec3::z(), Vec3::z(), &carrier);
        let config = design_for_pair(&a, &b, &panel, lambda).unwrap();
        let out =
            cascade_legs(&[a], &[b], &panel, &config, &carrier, PhaseModel::PlaneWave).unwrap();
        let amp = out[0].amplitude.norm();

        let g = (4.0 * PI).sqrt() * lambda / 4.0;
        let pr_over_pt = (g * lambda).powi(2) / (4.0 * PI).powi(3);
        assert!((amp * amp - pr_over_pt).abs() <= 1e-12 * pr_over_pt);
        assert!((amp / 2.452e-6 - 1.0).abs() < 1e-3, "{amp}");
        assert!((20.0 * amp.log10() + 112.2).abs() < 0.05);
        assert_eq!(out[0].path.tag, PathTag::Ris);
        assert!((out[0].path.length - 2.0).abs() < 1e-15);
    }

    #[test]
    fn coherent_sum_scales_with_uc_count() {
        let carrier = Carrier::new(27e9).unwrap();
        let lambda = carrier.wavelength();
        let src = Vec3::new(3.0, 1.0, 20.0);
        let dst = Vec3::new(-5.0, 2.0, 18.0);
        let one = square(1, lambda);
        let (a1, b1) = direct_legs(&one, src, dst, &carrier);
        let c1 = design_for_pair(&a1, &b1, &one, lambda).unwrap();
        let single = cascade_legs(&[a1], &[b1], &one, &c1, &carrier, PhaseModel::PlaneWave)
            .unwrap()[0]
            .amplitude;

        let many = square(8, lambda);
        let (a, b) = direct_legs(&many, src, dst, &carrier);
        let c = design_for_pair(&a, &b, &many, lambda).unwrap();
        let full = cascade_legs(&[a], &[b], &many, &c, &carrier, PhaseModel::PlaneWave).unwrap()[0]
            .amplitude;
        assert!((full.norm() / single.norm() - 64.0).abs() < 1e-9);
    }

    #[test]
    fn alternating_phases_cancel() {
        let carrier = Carrier::new(3.7e9).unwrap();
        let panel = square(4, carrier.wavelength());
        let beta = (0..16).map(|n| if n % 2 == 0 { 0.0 } else { PI }).collect();
        let config = RisConfig {
            beta,
            mode: None,
            anchor: None,
        };
        let (a, b) = direct_legs(
            &panel,
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(0.0, 0.0, 7.0),
            &carrier,
        );
        let reference = optimal_pair_magnitude(&a, &b, &panel, carrier.wavelength());
        let out =
            cascade_legs(&[a], &[b], &panel, &config, &carrier, PhaseModel::PlaneWave).unwrap();
        assert!(out[0].amplitude.norm() < 1e-12 * reference);
    }

    #[test]
    fn amplitude_zero_switches_panel_off() {
        let carrier = Carrier::new(3.7e9).unwrap();
        let panel = square(4, carrier.wavelength()).with_amplitude(0.0).unwrap();
        let (a, b) = direct_legs(
            &panel,
            Vec3::new(1.0, 0.0, 5.0),
            Vec3::new(0.0, 2.0, 7.0),
            &carrier,
        );
        let config = design_for_pair(&a, &b, &panel, carrier.wavelength()).unwrap();
        let out =
            cascade_legs(&[a], &[b], &panel, &config, &carrier, PhaseModel::PlaneWave).unwrap();
        assert_eq!(out[0].amplitude, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn shadowed_pairs_contribute_nothing() {
        let carrier = Carrier::new(3.7e9).unwrap();
        let panel = square(2, carrier.wavelength());
        let (a, b) = direct_legs(
            &panel,
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(0.0, 1.0, -3.0),
            &carrier,
        );
        let out = cascade_legs(
            &[a],
            &[b],
            &panel,
            &RisConfig::uniform(&panel),
            &carrier,
            PhaseModel::PlaneWave,
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn exact_distance_converges_to_plane_wave() {
        let carrier = Carrier::new(27e9).unwrap();
        let lambda = carrier.wavelength();
        let panel = square(8, lambda);
        let (a, b) = direct_legs(
            &panel,
            Vec3::new(40.0, 10.0, 300.0),
            Vec3::new(-30.0, 5.0, 250.0),
            &carrier,
        );
        let config = design_for_pair(&a, &b, &panel, lambda).unwrap();
        let pw = cascade_legs(
            &[a.clone()],
            &[b.clone()],
            &panel,
            &config,
            &carrier,
            PhaseModel::PlaneWave,
        )
        .unwrap();
        let ex = cascade_legs(
            &[a],
            &[b],
            &panel,
            &config,
            &carrier,
            PhaseModel::ExactDistance,
        )
        .unwrap();
        let rel = (pw[0].amplitude - ex[0].amplitude).norm() / pw[0].amplitude.norm();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn leg_endpoints_must_touch_panel() {
        let carrier = Carrier::new(3.7e9).unwrap();
        let panel = square(2, carrier.wavelength());
        let off = PropagationPath::direct(Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.1, 0.0, 0.0));
        assert!(matches!(
            RisLeg::incoming(off, &panel, &Scene::empty(), &carrier),
            Err(RisError::EndpointNotOnPanel(_))
        ));
    }

    #[test]
    fn strongest_pair_prefers_short_lit_legs() {
        let carrier = Carrier::new(3.7e9).unwrap();
        let lambda = carrier.wavelength();
        let panel = square(4, lambda);
        let scene = Scene::empty();
        let leg_in = |p: Vec3| {
            RisLeg::incoming(
                PropagationPath::direct(p, panel.center),
                &panel,
                &scene,
                &carrier,
            )
            .unwrap()
        };
        let leg_out = |p: Vec3| {
            RisLeg::outgoing(
                PropagationPath::direct(panel.center, p),
                &panel,
                &scene,
                &carrier,
            )
            .unwrap()
        };
        let legs_a = vec![
            leg_in(Vec3::new(0.0, 0.0, 20.0)),
            leg_in(Vec3::new(0.0, 0.0, 10.0)),
        ];
        let legs_b = vec![
            leg_out(Vec3::new(0.0, 0.0, -5.0)),
            leg_out(Vec3::new(0.0, 3.0, 4.0)),
        ];
        assert_eq!(
            strongest_pair(&legs_a, &legs_b, &panel, lambda),
            Some((1, 1))
        );
        assert_eq!(strongest_pair(&legs_a, &legs_b[..1], &panel, lambda), None);
    }
}
