//! Coverage sweeps over a rectangular target area and their statistics.
//!
//! Each grid point is evaluated independently, so results do not depend on
//! the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    compose_channel, conventional_contributions, total_rx_power, ChannelSample, PathContribution,
    SumMode,
};
use crate::em::{mw_to_dbm, Carrier, EmError};
use crate::raytrace::{trace_paths, TraceError, TraceOptions};
use crate::ris::{
    cascade_legs, design_for_pair, far_field_violations, strongest_pair, CascadeOptions,
    ConfigMode, RisConfig, RisError, RisLeg, RisPanel,
};
use crate::scene::Scene;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("invalid target area: {0}")]
    InvalidArea(String),
    #[error("anchor {0:?} has no usable BS-RIS-MS pair")]
    AnchorUnreachable([f64; 3]),
    #[error("RIS mode requires a RIS panel")]
    MissingPanel,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("statistics need at least one grid point")]
    EmptyGrid,
    #[error("grids differ in size ({0} vs {1} points)")]
    LatticeMismatch(usize, usize),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Ris(#[from] RisError),
}

/// Horizontal rectangle sampled on a regular lattice at a fixed MS height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetArea {
    /// Lower-left corner `[x, y]`.
    pub origin: [f64; 2],
    pub extent_x: f64,
    pub extent_y: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_ms_height")]
    pub ms_height: f64,
}

fn default_resolution() -> f64 {
    2.0
}

fn default_ms_height() -> f64 {
    1.5
}

impl TargetArea {
    pub fn validate(&self) -> Result<(), CoverageError> {
        let bad = |m: String| Err(CoverageError::InvalidArea(m));
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return bad(format!("resolution must be > 0 (got {})", self.resolution));
        }
        for (name, e) in [("extent_x", self.extent_x), ("extent_y", self.extent_y)] {
            if !(e.is_finite() && e > 0.0) {
                return bad(format!("{name} must be > 0 (got {e})"));
            }
        }
        if !self
            .origin
            .iter()
            .chain([&self.ms_height])
            .all(|v| v.is_finite())
        {
            return bad("origin and ms_height must be finite".into());
        }
        Ok(())
    }

    /// Number of samples along x and y, `ceil(extent / resolution)`.
    pub fn counts(&self) -> (usize, usize) {
        let n = |e: f64| ((e / self.resolution - 1e-9).ceil() as usize).max(1);
        (n(self.extent_x), n(self.extent_y))
    }

    /// Lattice points `origin + (i·res, j·res)`, x fastest.
    pub fn points(&self) -> Vec<Vec3> {
        let (nx, ny) = self.counts();
        let res = self.resolution;
        (0..ny)
            .flat_map(|j| {
                (0..nx).map(move |i| {
                    Vec3::new(
                        self.origin[0] + i as f64 * res,
                        self.origin[1] + j as f64 * res,
                        self.ms_height,
                    )
                })
            })
            .collect()
    }
}

/// How the RIS phases are chosen across the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RisMode {
    /// Conventional paths only.
    None,
    /// One configuration, designed for `anchor`, held at every point.
    Fixed { anchor: Vec3 },
    /// A configuration redesigned for every point.
    MsSpecific,
}

/// Everything needed to evaluate a link from the BS to any MS position.
#[derive(Debug, Clone)]
pub struct LinkSetup {
    pub scene: Scene,
    pub carrier: Carrier,
    pub pt_dbm: f64,
    pub bs: Vec3,
    pub panel: Option<RisPanel>,
    pub trace: TraceOptions,
    pub cascade: CascadeOptions,
    pub sum_mode: SumMode,
}

/// Channel at one point plus the RIS-free baseline.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub sample: ChannelSample,
    pub power_dbm: f64,
    pub baseline_dbm: f64,
    pub far_field_violations: usize,
}

/// Precomputes the BS → RIS legs once per sweep.
#[derive(Debug)]
pub struct CoverageEngine {
    setup: LinkSetup,
    legs_a: Vec<RisLeg>,
}

impl CoverageEngine {
    pub fn new(setup: LinkSetup) -> Result<Self, CoverageError> {
        let legs_a = match &setup.panel {
            Some(panel) => trace_paths(&setup.scene, &setup.bs, &panel.center, &setup.trace)?
                .into_iter()
                .map(|p| RisLeg::incoming(p, panel, &setup.scene, &setup.carrier))
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(Self { setup, legs_a })
    }

    pub fn setup(&self) -> &LinkSetup {
        &self.setup
    }

    pub fn incoming_legs(&self) -> &[RisLeg] {
        &self.legs_a
    }

    fn panel(&self) -> Result<&RisPanel, CoverageError> {
        self.setup.panel.as_ref().ok_or(CoverageError::MissingPanel)
    }

    pub fn conventional(&self, ms: &Vec3) -> Result<Vec<PathContribution>, CoverageError> {
        let s = &self.setup;
        let paths = trace_paths(&s.scene, &s.bs, ms, &s.trace)?;
        Ok(conventional_contributions(&s.scene, paths, &s.carrier)?)
    }

    pub fn outgoing_legs(&self, ms: &Vec3) -> Result<Vec<RisLeg>, CoverageError> {
        let s = &self.setup;
        let panel = self.panel()?;
        trace_paths(&s.scene, &panel.center, ms, &s.trace)?
            .into_iter()
            .map(|p| Ok(RisLeg::outgoing(p, panel, &s.scene, &s.carrier)?))
            .collect()
    }

    /// Configuration designed for the strongest pair towards `ms`, if any.
    pub fn design_for(&self, ms: &Vec3) -> Result<Option<RisConfig>, CoverageError> {
        let panel = self.panel()?;
        let legs_b = self.outgoing_legs(ms)?;
        let lambda = self.setup.carrier.wavelength();
        match strongest_pair(&self.legs_a, &legs_b, panel, lambda) {
            Some((i, j)) => Ok(Some(
                design_for_pair(&self.legs_a[i], &legs_b[j], panel, lambda)?
                    .designed_for(ConfigMode::MsSpecific, *ms),
            )),
            None => Ok(None),
        }
    }

    /// Configuration for a fixed-mode sweep.
    pub fn fixed_config(&self, anchor: &Vec3) -> Result<RisConfig, CoverageError> {
        let config = self
            .design_for(anchor)?
            .ok_or(CoverageError::AnchorUnreachable(crate::arr3(anchor)))?;
        Ok(config.designed_for(ConfigMode::Fixed, *anchor))
    }

    /// RIS contributions at `ms` under `config`, plus the far-field violation count.
    pub fn ris_contributions(
        &self,
        ms: &Vec3,
        config: &RisConfig,
    ) -> Result<(Vec<PathContribution>, usize), CoverageError> {
        let s = &self.setup;
        let panel = self.panel()?;
        let legs_b = self.outgoing_legs(ms)?;
        let violations = far_field_violations(
            &self.legs_a,
            &legs_b,
            panel,
            &s.carrier,
            &s.cascade.far_field,
        )?;
        let out = cascade_legs(
            &self.legs_a,
            &legs_b,
            panel,
            config,
            &s.carrier,
            s.cascade.phase_model,
        )?;
        Ok((out, violations))
    }

    /// Evaluates one point. `fixed` must hold the fixed-mode configuration
    /// when `mode` is [`RisMode::Fixed`].
    pub fn evaluate(
        &self,
        ms: &Vec3,
        mode: RisMode,
        fixed: Option<&RisConfig>,
    ) -> Result<PointResult, CoverageError> {
        let s = &self.setup;
        let conventional = self.conventional(ms)?;
        let config = match mode {
            RisMode::None => None,
            RisMode::Fixed { .. } => Some(fixed.cloned().ok_or(CoverageError::MissingPanel)?),
            RisMode::MsSpecific => self.design_for(ms)?,
        };
        let (ris, violations) = match config {
            Some(c) => self.ris_contributions(ms, &c)?,
            None => (Vec::new(), 0),
        };
        let sample = compose_channel(conventional, ris, s.carrier);
        let baseline_dbm = total_rx_power(&sample.without_ris(), s.pt_dbm, s.sum_mode);
        Ok(PointResult {
            power_dbm: total_rx_power(&sample, s.pt_dbm, s.sum_mode),
            sample,
            baseline_dbm,
            far_field_violations: violations,
        })
    }
}

/// Run description attached to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    pub mode: RisMode,
    /// `(nx, ny)` of the panel, if one is deployed.
    pub ris_size: Option<(usize, usize)>,
    pub frequency_hz: f64,
}

/// Received power over a target area.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub area: TargetArea,
    pub meta: GridMeta,
    pub nx: usize,
    pub ny: usize,
    pub points: Vec<Vec3>,
    pub power_dbm: Vec<f64>,
    /// Same points without any RIS contribution.
    pub baseline_dbm: Vec<f64>,
    pub far_field_violations: usize,
}

/// Sweeps `area` with `workers` threads (0 selects the rayon default).
pub fn compute_coverage(
    engine: &CoverageEngine,
    area: &TargetArea,
    mode: RisMode,
    workers: usize,
) -> Result<CoverageGrid, CoverageError> {
    area.validate()?;
    let fixed = match mode {
        RisMode::Fixed { anchor } => Some(engine.fixed_config(&anchor)?),
        RisMode::MsSpecific => {
            engine.panel()?;
            None
        }
        RisMode::None => None,
    };
    let points = area.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CoverageError::Pool(e.to_string()))?;
    let results: Vec<PointResult> = pool.install(|| {
        points
            .par_iter()
            .map(|ms| engine.evaluate(ms, mode, fixed.as_ref()))
            .collect::<Result<_, _>>()
    })?;
    let (nx, ny) = area.counts();
    let far_field_violations = results.iter().map(|r| r.far_field_violations).sum();
    if far_field_violations > 0 {
        log::warn!("{far_field_violations} RIS leg(s) inside the far-field threshold");
    }
    let setup = engine.setup();
    Ok(CoverageGrid {
        area: area.clone(),
        meta: GridMeta {
            mode,
            ris_size: setup.panel.as_ref().map(|p| (p.nx, p.ny)),
            frequency_hz: setup.carrier.frequency(),
        },
        nx,
        ny,
        power_dbm: results.iter().map(|r| r.power_dbm).collect(),
        baseline_dbm: results.iter().map(|r| r.baseline_dbm).collect(),
        points,
        far_field_violations,
    })
}

fn non_empty(values: &[f64]) -> Result<(), CoverageError> {
    if values.is_empty() {
        Err(CoverageError::EmptyGrid)
    } else {
        Ok(())
    }
}

/// Empirical CDF as `(value, P[X <= value])` pairs in ascending order;
/// `-inf` samples are counted at the low end.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>, CoverageError> {
    non_empty(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// Percentage of samples strictly above `threshold_dbm`.
pub fn coverage_rate(values: &[f64], threshold_dbm: f64) -> Result<f64, CoverageError> {
    non_empty(values)?;
    let above = values.iter().filter(|&&v| v > threshold_dbm).count();
    Ok(100.0 * above as f64 / values.len() as f64)
}

/// Arithmetic mean of the dB values (`-inf` if any sample is `-inf`).
pub fn mean_db(values: &[f64]) -> Result<f64, CoverageError> {
    non_empty(values)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean of the linear powers, expressed in dBm.
pub fn mean_linear_dbm(values: &[f64]) -> Result<f64, CoverageError> {
    non_empty(values)?;
    let mw = values.iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>() / values.len() as f64;
    Ok(if mw == 0.0 {
        f64::NEG_INFINITY
    } else {
        mw_to_dbm(mw)
    })
}

/// Average dB improvement of `with` over `without`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanGain {
    /// NaN when no point is finite in both grids.
    pub gain_db: f64,
    /// Points skipped because either grid is `-inf` there.
    pub ignored: usize,
}

/// Difference of the dB-domain means over points finite in both grids.
pub fn mean_gain(with: &[f64], without: &[f64]) -> Result<MeanGain, CoverageError> {
    if with.len() != without.len() {
        return Err(CoverageError::LatticeMismatch(with.len(), without.len()));
    }
    non_empty(with)?;
    let diffs: Vec<f64> = with
        .iter()
        .zip(without)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| a - b)
        .collect();
    let gain_db = if diffs.is_empty() {
        f64::NAN
    } else {
        diffs.iter().sum::<f64>() / diffs.len() as f64
    };
    Ok(MeanGain {
        gain_db,
        ignored: with.len() - diffs.len(),
    })
}

/// Default thresholds for coverage-rate reporting (dBm): minimum service
/// and high throughput.
pub const DEFAULT_THRESHOLDS_DBM: [f64; 2] = [-105.0, -80.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    pub cdf: Vec<(f64, f64)>,
    /// `(threshold dBm, percent)` pairs.
    pub coverage_rate: Vec<(f64, f64)>,
    /// dB-domain mean.
    pub mean_power: f64,
    /// Linear-domain mean, in dBm.
    pub mean_power_linear: f64,
    pub min_power: f64,
}

impl CoverageStats {
    pub fn from_values(values: &[f64], thresholds: &[f64]) -> Result<Self, CoverageError> {
        Ok(Self {
            cdf: cdf(values)?,
            coverage_rate: thresholds
                .iter()
                .map(|&t| Ok((t, coverage_rate(values, t)?)))
                .collect::<Result<_, CoverageError>>()?,
            mean_power: mean_db(values)?,
            mean_power_linear: mean_linear_dbm(values)?,
            min_power: values.iter().cloned().fold(f64::INFINITY, f64::min),
        })
    }
}
