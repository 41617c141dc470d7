//! JSON study configurations, command execution and run manifests.
//!
//! A configuration describes one deployment: a scene, one base station, an
//! optional RIS panel, a target area and the per-command settings. Running a
//! command yields a set of named CSV outputs, which [`write_outputs`] stores
//! atomically together with a `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chamber::{chamber_sweep, extract_lobes, ChamberError, SweepParams};
use crate::channel::{power_delay_profile, SumMode};
use crate::coverage::{
    cdf, compute_coverage, mean_gain, CoverageEngine, CoverageError, CoverageStats, LinkSetup,
    RisMode, TargetArea, DEFAULT_THRESHOLDS_DBM,
};
use crate::em::{Carrier, EmError};
use crate::raytrace::TraceOptions;
use crate::report;
use crate::ris::{
    fraunhofer_distance, CascadeOptions, FarFieldPolicy, PhaseModel, RisError, RisPanel,
    ScatteringModel,
};
use crate::scene::{Scene, SceneDocument};
use crate::{vec3, Vec3};

/// Name written into manifests.
pub const TOOL_NAME: &str = "risim";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Chamber(#[from] ChamberError),
    #[error(transparent)]
    Ris(#[from] RisError),
    #[error(transparent)]
    Em(#[from] EmError),
}

impl ScenarioError {
    fn config(field: &str, reason: impl ToString) -> Self {
        Self::Config {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }

    /// True for problems in the user's configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config { .. })
    }
}

/// Scene given either as a path (relative to the config file) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    File(String),
    Inline(SceneDocument),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    /// Defaults to `normalize(ẑ × normal)`, or `x̂` for a horizontal panel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_axis: Option<[f64; 3]>,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "half")]
    pub dx_over_lambda: f64,
    #[serde(default = "half")]
    pub dy_over_lambda: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub model: ScatteringModel,
    #[serde(default = "one")]
    pub alpha: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn default_pt() -> f64 {
    30.0
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl PanelConfig {
    pub fn build(&self, wavelength: f64) -> Result<RisPanel, ScenarioError> {
        let normal = vec3(self.normal);
        let x_axis = match self.x_axis {
            Some(x) => vec3(x),
            None => {
                let x = Vec3::z().cross(&normal);
                if x.norm() < 1e-9 {
                    Vec3::x()
                } else {
                    x
                }
            }
        };
        RisPanel::new(
            vec3(self.center),
            normal,
            x_axis,
            self.nx,
            self.ny,
            self.dx_over_lambda * wavelength,
            self.dy_over_lambda * wavelength,
        )
        .and_then(|p| p.with_amplitude(self.amplitude))
        .and_then(|p| p.with_model(self.model, self.alpha))
        .map_err(|e| ScenarioError::config("ris", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    None,
    Fixed,
    #[default]
    MsSpecific,
}

impl std::str::FromStr for ModeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "fixed" => Ok(Self::Fixed),
            "ms_specific" | "ms-specific" => Ok(Self::MsSpecific),
            other => Err(format!("unknown mode `{other}` (none, fixed, ms_specific)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    #[serde(default = "two")]
    pub max_reflections: usize,
    #[serde(default = "yes")]
    pub allow_transmission: bool,
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            max_reflections: 2,
            allow_transmission: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scene: SceneSource,
    pub frequency_hz: f64,
    #[serde(default = "default_pt")]
    pub pt_dbm: f64,
    pub bs: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ris: Option<PanelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<TargetArea>,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<[f64; 3]>,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub far_field: FarFieldPolicy,
    #[serde(default)]
    pub phase_model: PhaseModel,
    #[serde(default)]
    pub sum_mode: SumMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chamber: Option<SweepParams>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

impl ScenarioConfig {
    /// Parses a configuration; `base_dir` resolves a file-based scene, which
    /// is then inlined so the returned config is self-contained.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("(document)")
                .to_string();
            ScenarioError::Config { field, reason: msg }
        })?;
        if let SceneSource::File(rel) = &cfg.scene {
            let path = base_dir.join(rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ScenarioError::config("scene", format!("{}: {e}", path.display())))?;
            let doc: SceneDocument =
                serde_json::from_str(&text).map_err(|e| ScenarioError::config("scene", e))?;
            cfg.scene = SceneSource::Inline(doc);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn scene(&self) -> Result<Scene, ScenarioError> {
        match &self.scene {
            SceneSource::Inline(doc) => doc
                .clone()
                .into_scene()
                .map_err(|e| ScenarioError::config("scene", e)),
            SceneSource::File(p) => Err(ScenarioError::config(
                "scene",
                format!("unresolved file {p}"),
            )),
        }
    }

    pub fn carrier(&self) -> Result<Carrier, ScenarioError> {
        Carrier::new(self.frequency_hz).map_err(|e| ScenarioError::config("frequency_hz", e))
    }

    pub fn panel(&self) -> Result<Option<RisPanel>, ScenarioError> {
        let lambda = self.carrier()?.wavelength();
        self.ris.as_ref().map(|r| r.build(lambda)).transpose()
    }

    fn require_panel(&self) -> Result<RisPanel, ScenarioError> {
        self.panel()?
            .ok_or_else(|| ScenarioError::config("ris", "this command needs a RIS panel"))
    }

    fn require_area(&self) -> Result<&TargetArea, ScenarioError> {
        let area = self
            .area
            .as_ref()
            .ok_or_else(|| ScenarioError::config("area", "this command needs a target area"))?;
        area.validate()
            .map_err(|e| ScenarioError::config("area", e))?;
        Ok(area)
    }

    pub fn ris_mode(&self) -> Result<RisMode, ScenarioError> {
        match self.mode {
            ModeName::None => Ok(RisMode::None),
            ModeName::MsSpecific => Ok(RisMode::MsSpecific),
            ModeName::Fixed => self
                .anchor
                .map(|a| RisMode::Fixed { anchor: vec3(a) })
                .ok_or_else(|| ScenarioError::config("anchor", "fixed mode needs an anchor")),
        }
    }

    fn validate_basics(&self) -> Result<(), ScenarioError> {
        if !self.pt_dbm.is_finite() {
            return Err(ScenarioError::config("pt_dbm", "must be finite"));
        }
        if !self.bs.iter().all(|v| v.is_finite()) {
            return Err(ScenarioError::config("bs", "must be finite"));
        }
        if self.trace.max_reflections > crate::raytrace::MAX_REFLECTION_ORDER {
            return Err(ScenarioError::config(
                "trace.max_reflections",
                format!("must be <= {}", crate::raytrace::MAX_REFLECTION_ORDER),
            ));
        }
        if !(self.far_field.factor.is_finite() && self.far_field.factor > 0.0) {
            return Err(ScenarioError::config("far_field.factor", "must be > 0"));
        }
        Ok(())
    }

    pub fn link_setup(&self) -> Result<LinkSetup, ScenarioError> {
        self.validate_basics()?;
        Ok(LinkSetup {
            scene: self.scene()?,
            carrier: self.carrier()?,
            pt_dbm: self.pt_dbm,
            bs: vec3(self.bs),
            panel: self.panel()?,
            trace: TraceOptions {
                max_reflections: self.trace.max_reflections,
                allow_transmission: self.trace.allow_transmission,
            },
            cascade: CascadeOptions {
                phase_model: self.phase_model,
                far_field: self.far_field,
            },
            sum_mode: self.sum_mode,
        })
    }
}

/// A command with its arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Coverage,
    Pdp { ms: [f64; 3] },
    Chamber,
    FfCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Coverage => "coverage",
            Command::Pdp { .. } => "pdp",
            Command::Chamber => "chamber",
            Command::FfCheck => "ffcheck",
        }
    }

    /// Arguments as they would appear on the command line.
    pub fn args(&self) -> Vec<String> {
        match self {
            Command::Pdp { ms } => vec![
                "--ms".into(),
                ms.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ],
            _ => Vec::new(),
        }
    }
}

/// Named CSV outputs of one command, in a stable order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

/// Runs `command` with `workers` threads (0 selects the default).
pub fn execute(
    cfg: &ScenarioConfig,
    command: &Command,
    workers: usize,
) -> Result<RunOutput, ScenarioError> {
    match command {
        Command::Coverage => run_coverage(cfg, workers),
        Command::Pdp { ms } => run_pdp(cfg, vec3(*ms)),
        Command::Chamber => run_chamber(cfg),
        Command::FfCheck => run_ffcheck(cfg),
    }
}

fn run_coverage(cfg: &ScenarioConfig, workers: usize) -> Result<RunOutput, ScenarioError> {
    let area = cfg.require_area()?.clone();
    let mode = cfg.ris_mode()?;
    let setup = cfg.link_setup()?;
    if mode != RisMode::None && setup.panel.is_none() {
        return Err(ScenarioError::config("ris", "RIS modes need a RIS panel"));
    }
    let with_ris = mode != RisMode::None;
    let engine = CoverageEngine::new(setup)?;
    let grid = compute_coverage(&engine, &area, mode, workers)?;

    let mut rows = stat_rows("", &grid.power_dbm)?;
    if with_ris {
        rows.extend(stat_rows("baseline_", &grid.baseline_dbm)?);
        let gain = mean_gain(&grid.power_dbm, &grid.baseline_dbm)?;
        rows.push(("mean_gain_db".into(), report::fmt_db(gain.gain_db)));
        rows.push(("mean_gain_ignored_points".into(), gain.ignored.to_string()));
    }
    rows.push((
        "far_field_violations".into(),
        grid.far_field_violations.to_string(),
    ));

    Ok(RunOutput {
        files: vec![
            ("grid.csv".into(), report::grid_csv(&grid, with_ris)),
            ("cdf.csv".into(), report::cdf_csv(&cdf(&grid.power_dbm)?)),
            ("stats.csv".into(), report::stats_csv(&rows)),
        ],
    })
}

/// Summary rows for one grid: dB- and linear-domain means, minimum and
/// coverage rates (percent) at the default thresholds.
fn stat_rows(prefix: &str, values: &[f64]) -> Result<Vec<(String, String)>, ScenarioError> {
    let stats = CoverageStats::from_values(values, &DEFAULT_THRESHOLDS_DBM)?;
    let mut rows = vec![
        (
            format!("{prefix}mean_dbm_db_domain"),
            report::fmt_db(stats.mean_power),
        ),
        (
            format!("{prefix}mean_dbm_linear_domain"),
            report::fmt_db(stats.mean_power_linear),
        ),
        (format!("{prefix}min_dbm"), report::fmt_db(stats.min_power)),
    ];
    for (t, pct) in &stats.coverage_rate {
        rows.push((
            format!("{prefix}coverage_pct_above_{t}dbm"),
            format!("{pct:.2}"),
        ));
    }
    Ok(rows)
}

fn run_pdp(cfg: &ScenarioConfig, ms: Vec3) -> Result<RunOutput, ScenarioError> {
    let mode = match cfg.ris_mode()? {
        RisMode::None => RisMode::None,
        m if cfg.ris.is_some() => m,
        _ => RisMode::None,
    };
    let engine = CoverageEngine::new(cfg.link_setup()?)?;
    let fixed = match mode {
        RisMode::Fixed { anchor } => Some(engine.fixed_config(&anchor)?),
        _ => None,
    };
    let point = engine.evaluate(&ms, mode, fixed.as_ref())?;
    let pdp = power_delay_profile(&point.sample, cfg.pt_dbm);
    Ok(RunOutput {
        files: vec![("pdp.csv".into(), report::pdp_csv(&pdp))],
    })
}

fn run_chamber(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    let params = cfg.chamber.as_ref().ok_or_else(|| {
        ScenarioError::config("chamber", "the chamber command needs sweep settings")
    })?;
    params
        .validate()
        .map_err(|e| ScenarioError::config("chamber", e))?;
    let panel = cfg.require_panel()?;
    let sweep = chamber_sweep(&panel, &cfg.carrier()?, cfg.pt_dbm, params)?;
    let lobes = extract_lobes(&sweep, params.lobes)?;
    Ok(RunOutput {
        files: vec![
            ("sweep.csv".into(), report::sweep_csv(&sweep)),
            ("lobes.csv".into(), report::lobes_csv(&lobes)),
        ],
    })
}

fn run_ffcheck(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    cfg.validate_basics()?;
    let panel = cfg.require_panel()?;
    let lambda = cfg.carrier()?.wavelength();
    let fraunhofer = fraunhofer_distance(&panel, lambda);
    let threshold = cfg.far_field.factor * fraunhofer;
    let mut s = String::from("link,x,y,z,distance_m,fraunhofer_m,far_field\n");
    let mut row = |link: &str, p: Vec3| {
        let d = (p - panel.center).norm();
        s.push_str(&format!(
            "{link},{},{},{},{},{},{}\n",
            report::fmt_pos(p.x),
            report::fmt_pos(p.y),
            report::fmt_pos(p.z),
            report::fmt_pos(d),
            report::fmt_pos(threshold),
            d >= threshold
        ));
    };
    row("bs_ris", vec3(cfg.bs));
    if let Some(area) = &cfg.area {
        area.validate()
            .map_err(|e| ScenarioError::config("area", e))?;
        for p in area.points() {
            row("ris_ms", p);
        }
    }
    Ok(RunOutput {
        files: vec![("ffcheck.csv".into(), s)],
    })
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: ScenarioConfig,
    pub wall_time_s: f64,
    /// SHA-256 of every output file.
    pub outputs: BTreeMap<String, String>,
}

/// Runs a command and writes its outputs plus `manifest.json` into `out_dir`.
pub fn run_to_dir(
    cfg: &ScenarioConfig,
    command: &Command,
    workers: usize,
    out_dir: &Path,
) -> Result<Manifest, ScenarioError> {
    let start = Instant::now();
    let output = execute(cfg, command, workers)?;
    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        args: command.args(),
        config: cfg.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: output
            .files
            .iter()
            .map(|(n, c)| (n.clone(), sha256_hex(c.as_bytes())))
            .collect(),
    };
    write_outputs(out_dir, &output, &manifest)?;
    Ok(manifest)
}

pub fn write_outputs(
    out_dir: &Path,
    output: &RunOutput,
    manifest: &Manifest,
) -> Result<(), ScenarioError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ScenarioError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    for (name, contents) in &output.files {
        let path = out_dir.join(name);
        report::write_atomic(&path, contents.as_bytes()).map_err(io(&path))?;
    }
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifests always serialize");
    report::write_atomic(&path, json.as_bytes()).map_err(io(&path))?;
    Ok(())
}
