//! Run configuration: one TOML file, paths relative to the file's directory.
//!
//! ```toml
//! timezone = "America/Los_Angeles"
//! year = 2019
//! resolution_minutes = 60          # 15, 30 or 60
//! profile_step_minutes = 60        # step of the profile files
//! load_profile = "../profiles/mep_load_2019.csv"
//! pv_unit_profile = "../profiles/pv_unit_2019.csv"
//! tariffs = ["../tariffs/e19tou.toml", "../tariffs/b19tou.toml"]
//! pv_capacity_kw = 231.8
//! baseline = "E19TOU"              # optional
//! relative_mode = "difference"     # difference | ratio
//! month = 7                        # optional; `bill` solves only this month
//!
//! [battery]
//! power_kw = 250.0
//! duration_hours = 2.0
//!
//! [solver]
//! backend = "bundled"              # bundled | external
//! command = "/path/to/solver"      # external only; else $BILLOPT_EXTERNAL_SOLVER
//! time_limit_seconds = 60.0
//!
//! [sweep]
//! parameters = ["pv_capacity", "pv_capacity_no_bes", "bes_power_2h", "bes_power_4h"]
//! points = 10                      # evenly spaced from 0 to the case size
//! # explicit grids override `points`:
//! # values = { pv_capacity = [0.0, 100.0, 231.8] }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use billopt_core::analysis::{RelativeMode, SweepParameter, SweepSpec};
use billopt_core::bes::{BatteryConfig, BatterySpec};
use billopt_core::profiles::{parse_profile_csv, parse_pv_unit_csv, PvUnitProfile, SiteProfile, TimeGrid};
use billopt_core::tariff::TariffSchedule;
use billopt_core::{Backend, SolverConfig, EXTERNAL_SOLVER_ENV};
use chrono_tz::Tz;
use serde::Deserialize;

use crate::error::CliError;

pub const RESOLUTIONS: [u32; 3] = [15, 30, 60];
pub const DEFAULT_SWEEP_POINTS: usize = 10;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub timezone: String,
    pub year: i32,
    #[serde(default = "default_resolution")]
    pub resolution_minutes: u32,
    #[serde(default = "default_resolution")]
    pub profile_step_minutes: u32,
    pub load_profile: PathBuf,
    #[serde(default)]
    pub pv_unit_profile: Option<PathBuf>,
    pub tariffs: Vec<PathBuf>,
    #[serde(default)]
    pub pv_capacity_kw: f64,
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub relative_mode: Option<String>,
    #[serde(default)]
    pub month: Option<u32>,
    #[serde(default)]
    pub battery: Option<BatteryConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_resolution() -> u32 {
    60
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub command: Option<PathBuf>,
    #[serde(default)]
    pub feasibility_tolerance: Option<f64>,
    #[serde(default)]
    pub optimality_tolerance: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub time_limit_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub parameters: Vec<String>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub values: BTreeMap<String, Vec<f64>>,
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub resolution: Option<u32>,
    pub solver: Option<String>,
    pub baseline: Option<String>,
}

/// Validated configuration with absolute paths.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub timezone: Tz,
    pub year: i32,
    pub resolution_minutes: u32,
    pub profile_step_minutes: u32,
    pub load_profile: PathBuf,
    pub pv_unit_profile: Option<PathBuf>,
    pub tariffs: Vec<PathBuf>,
    pub pv_capacity_kw: f64,
    pub baseline: Option<String>,
    pub relative_mode: RelativeMode,
    pub month: Option<u32>,
    pub battery: BatterySpec<f64>,
    pub solver: SolverConfig,
    pub sweep_parameters: Vec<SweepParameter>,
    pub sweep_points: usize,
    pub sweep_values: BTreeMap<String, Vec<f64>>,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

fn existing(base: &Path, rel: &Path, config: &Path) -> Result<PathBuf, CliError> {
    let p = base.join(rel);
    if !p.is_file() {
        return Err(config_err(config, format!("referenced file {} does not exist", p.display())));
    }
    Ok(p)
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e))?;
        let file: RunConfigFile = toml::from_str(&text).map_err(|e| config_err(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::resolve(file, dir, path, overrides)
    }

    fn resolve(file: RunConfigFile, dir: &Path, path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let timezone: Tz = file
            .timezone
            .parse()
            .map_err(|_| config_err(path, format!("unknown timezone `{}`", file.timezone)))?;
        let resolution_minutes = overrides.resolution.unwrap_or(file.resolution_minutes);
        if !RESOLUTIONS.contains(&resolution_minutes) {
            return Err(config_err(path, format!("resolution must be one of 15, 30, 60 minutes, got {resolution_minutes}")));
        }
        if !RESOLUTIONS.contains(&file.profile_step_minutes) {
            return Err(config_err(path, "profile_step_minutes must be 15, 30 or 60"));
        }
        if file.tariffs.is_empty() {
            return Err(config_err(path, "no tariffs listed"));
        }
        if let Some(m) = file.month {
            if !(1..=12).contains(&m) {
                return Err(config_err(path, format!("month must be 1..12, got {m}")));
            }
        }
        if !(file.pv_capacity_kw.is_finite() && file.pv_capacity_kw >= 0.0) {
            return Err(config_err(path, "pv_capacity_kw must be finite and >= 0"));
        }
        let load_profile = existing(dir, &file.load_profile, path)?;
        let pv_unit_profile = file.pv_unit_profile.as_deref().map(|p| existing(dir, p, path)).transpose()?;
        if pv_unit_profile.is_none() && file.pv_capacity_kw > 0.0 {
            return Err(config_err(path, "pv_capacity_kw > 0 needs pv_unit_profile"));
        }
        let tariffs = file.tariffs.iter().map(|t| existing(dir, t, path)).collect::<Result<Vec<_>, _>>()?;
        let relative_mode = file
            .relative_mode
            .as_deref()
            .unwrap_or("difference")
            .parse::<RelativeMode>()
            .map_err(|e| config_err(path, e))?;
        let battery = match &file.battery {
            Some(b) => b.to_spec().map_err(|e| config_err(path, e))?,
            None => BatterySpec::none(),
        };
        let solver = solver_config(&file.solver, dir, overrides.solver.as_deref()).map_err(|e| config_err(path, e))?;

        let sweep_points = file.sweep.points.unwrap_or(DEFAULT_SWEEP_POINTS);
        let mut sweep_parameters = Vec::new();
        for name in &file.sweep.parameters {
            sweep_parameters.push(name.parse::<SweepParameter>().map_err(|e| config_err(path, e))?);
        }
        for (name, values) in &file.sweep.values {
            let parameter: SweepParameter = name.parse().map_err(|e| config_err(path, e))?;
            if !sweep_parameters.contains(&parameter) && parameter != SweepParameter::PvCapacity {
                return Err(config_err(path, format!("sweep values given for `{name}`, which is not in sweep.parameters")));
            }
            SweepSpec::new(parameter, values.clone()).map_err(|e| config_err(path, e))?;
        }

        Ok(Self {
            timezone,
            year: file.year,
            resolution_minutes,
            profile_step_minutes: file.profile_step_minutes,
            load_profile,
            pv_unit_profile,
            tariffs,
            pv_capacity_kw: file.pv_capacity_kw,
            baseline: overrides.baseline.clone().or(file.baseline),
            relative_mode,
            month: file.month,
            battery,
            solver,
            sweep_parameters,
            sweep_points,
            sweep_values: file.sweep.values,
        })
    }

    /// Grid for one sweep: explicit values if configured, else evenly spaced
    /// from 0 to the case size (PV capacity or battery power).
    pub fn sweep_spec(&self, parameter: SweepParameter) -> Result<SweepSpec, CliError> {
        let spec = match self.sweep_values.get(&parameter.to_string()) {
            Some(v) => SweepSpec::new(parameter, v.clone()),
            None => {
                let max = match parameter {
                    SweepParameter::PvCapacity | SweepParameter::PvCapacityNoBes => self.pv_capacity_kw,
                    SweepParameter::BesPower { .. } => self.battery.power_rating_kw,
                };
                SweepSpec::evenly_spaced(parameter, max, self.sweep_points)
            }
        };
        spec.map_err(|e| CliError::Config(format!("sweep {parameter}: {e}")))
    }

    pub fn sweep_specs(&self) -> Result<Vec<SweepSpec>, CliError> {
        self.sweep_parameters.iter().map(|&p| self.sweep_spec(p)).collect()
    }

    /// PV capacities for the BVA command (the `pv_capacity` grid).
    pub fn pv_grid(&self) -> Result<Vec<f64>, CliError> {
        Ok(self.sweep_spec(SweepParameter::PvCapacity)?.values)
    }
}

fn solver_config(section: &SolverSection, dir: &Path, flag: Option<&str>) -> Result<SolverConfig, String> {
    let mut cfg = SolverConfig::default();
    let backend = flag.or(section.backend.as_deref()).unwrap_or("bundled");
    cfg.backend = match backend {
        "bundled" => Backend::Bundled,
        "external" => {
            let command = match &section.command {
                Some(c) => dir.join(c),
                None => std::env::var_os(EXTERNAL_SOLVER_ENV)
                    .map(PathBuf::from)
                    .ok_or_else(|| format!("external solver needs solver.command or ${EXTERNAL_SOLVER_ENV}"))?,
            };
            Backend::External { command }
        }
        other => return Err(format!("unknown solver `{other}` (expected bundled or external)")),
    };
    if let Some(v) = section.feasibility_tolerance {
        cfg.feasibility_tolerance = v;
    }
    if let Some(v) = section.optimality_tolerance {
        cfg.optimality_tolerance = v;
    }
    if let Some(v) = section.max_iterations {
        cfg.max_iterations = v;
    }
    if let Some(s) = section.time_limit_seconds {
        if !(s.is_finite() && s > 0.0) {
            return Err(format!("time_limit_seconds must be > 0, got {s}"));
        }
        cfg.time_limit = Some(Duration::from_secs_f64(s));
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Profiles and tariffs named by a [`RunConfig`], at the working resolution.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub site: SiteProfile<f64>,
    pub pv_unit: Option<PvUnitProfile<f64>>,
    pub tariffs: Vec<TariffSchedule>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let file_grid = TimeGrid::year(cfg.timezone, cfg.year, cfg.profile_step_minutes).map_err(CliError::data)?;
        let at = |p: &Path, e: &dyn std::fmt::Display| CliError::Data(format!("{}: {e}", p.display()));
        let load = parse_profile_csv(&cfg.load_profile, &file_grid).map_err(|e| at(&cfg.load_profile, &e))?;
        let site = SiteProfile::load_only(file_grid.clone(), load)
            .and_then(|s| s.resampled(cfg.resolution_minutes))
            .map_err(|e| at(&cfg.load_profile, &e))?;
        let pv_unit = match &cfg.pv_unit_profile {
            Some(p) => Some(
                parse_pv_unit_csv(p, &file_grid)
                    .and_then(|u| u.resampled(cfg.resolution_minutes))
                    .map_err(|e| at(p, &e))?,
            ),
            None => None,
        };
        let mut tariffs: Vec<TariffSchedule> = Vec::new();
        for p in &cfg.tariffs {
            let t = TariffSchedule::load(p).map_err(|e| match e {
                billopt_core::tariff::TariffError::Io { .. } => CliError::Config(e.to_string()),
                other => at(p, &other),
            })?;
            if tariffs.iter().any(|u| u.name() == t.name()) {
                return Err(CliError::Config(format!("tariff name `{}` appears twice", t.name())));
            }
            tariffs.push(t);
        }
        if let Some(b) = &cfg.baseline {
            if !tariffs.iter().any(|t| t.name() == b) {
                return Err(CliError::Config(format!("baseline tariff `{b}` is not among the configured tariffs")));
            }
        }
        Ok(Self { site, pv_unit, tariffs })
    }
}
