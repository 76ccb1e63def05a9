//! Annual bills, asset-size sweeps, and battery value added.

use std::fmt;
use std::str::FromStr;

use billopt_solver::{Basis, SolverConfig};
use chrono::Datelike;
use thiserror::Error;

use crate::bes::{simultaneous_intervals, BatteryError, BatterySpec};
use crate::billing::BillBreakdown;
use crate::lp_model::{build_instance, check_tolerance, solve_month, InstanceError, SolutionBundle, SolveError};
use crate::profiles::{PvUnitProfile, SiteProfile};
use crate::tariff::{check_eligibility, Eligibility, TariffError, TariffSchedule};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("month {year}-{month:02}: {source}")]
    Instance {
        year: i32,
        month: u32,
        source: InstanceError,
    },
    #[error("month {year}-{month:02}: {source}")]
    Solve { year: i32, month: u32, source: SolveError },
    #[error("site profile must start on January 1 and cover a full year")]
    NotAYear,
    #[error("unknown sweep parameter `{0}` (expected pv_capacity, pv_capacity_no_bes, bes_power_2h or bes_power_4h)")]
    UnknownParameter(String),
    #[error("sweep values must be finite, >= 0, strictly ascending and at least two: {0}")]
    BadSweepValues(String),
    #[error("baseline tariff `{0}` is not among the swept tariffs")]
    UnknownBaseline(String),
    #[error("sweeps to compare differ in shape")]
    Mismatch,
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error(transparent)]
    Tariff(#[from] TariffError),
}

/// One solved month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthResult<T> {
    pub year: i32,
    pub month: u32,
    pub base_kw: Vec<T>,
    pub pv_kw: Vec<T>,
    pub solution: SolutionBundle<T>,
    /// Full-equivalent cycles: discharged energy / BER (0 without storage).
    pub cycles: T,
    /// Intervals with simultaneous charge and discharge.
    pub simultaneous: Vec<usize>,
}

impl<T: Scalar> MonthResult<T> {
    pub fn bill(&self) -> &BillBreakdown<T> {
        &self.solution.bill
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnualResult<T> {
    pub months: Vec<MonthResult<T>>,
    /// Sum of the monthly totals in calendar order.
    pub total: T,
}

impl<T: Scalar> AnnualResult<T> {
    pub fn cycles(&self) -> T {
        self.months.iter().fold(T::zero(), |a, m| a + m.cycles)
    }

    pub fn bases(&self) -> Vec<Option<Basis>> {
        self.months.iter().map(|m| m.solution.basis.clone()).collect()
    }
}

pub fn year_of<T: Scalar>(site: &SiteProfile<T>) -> Result<i32, AnalysisError> {
    let start = site.grid().start();
    let (year, month) = site.grid().first_month();
    if month != 1 || start.day() != 1 {
        return Err(AnalysisError::NotAYear);
    }
    Ok(year)
}

/// One calendar month of `site`, optimized on its own.
#[allow(clippy::too_many_arguments)]
pub fn month_bill<T: Scalar>(
    site: &SiteProfile<T>,
    tariff: &TariffSchedule,
    spec: &BatterySpec<T>,
    pv_capacity_kw: T,
    pv_unit: Option<&PvUnitProfile<T>>,
    config: &SolverConfig,
    year: i32,
    month: u32,
    warm: Option<&Basis>,
) -> Result<MonthResult<T>, AnalysisError> {
    let inst = build_instance(site, tariff, spec, year, month, pv_capacity_kw, pv_unit)
        .map_err(|source| AnalysisError::Instance { year, month, source })?;
    let solution = solve_month(&inst, config, warm).map_err(|source| AnalysisError::Solve { year, month, source })?;
    let cycles = if spec.energy_rating_kwh > T::zero() {
        solution.dispatch.discharged_energy_kwh() / spec.energy_rating_kwh
    } else {
        T::zero()
    };
    let simultaneous = simultaneous_intervals(&solution.dispatch, check_tolerance());
    Ok(MonthResult {
        year,
        month,
        base_kw: inst.base_kw,
        pv_kw: inst.pv_kw,
        solution,
        cycles,
        simultaneous,
    })
}

/// Twelve independent monthly optimizations; `warm` holds an optional starting
/// basis per month.
pub fn annual_bill<T: Scalar>(
    site: &SiteProfile<T>,
    tariff: &TariffSchedule,
    spec: &BatterySpec<T>,
    pv_capacity_kw: T,
    pv_unit: Option<&PvUnitProfile<T>>,
    config: &SolverConfig,
    warm: Option<&[Option<Basis>]>,
) -> Result<AnnualResult<T>, AnalysisError> {
    let year = year_of(site)?;
    let mut months = Vec::with_capacity(12);
    let mut total = T::zero();
    for month in 1..=12u32 {
        let basis = warm.and_then(|w| w.get(month as usize - 1)).and_then(Option::as_ref);
        let m = month_bill(site, tariff, spec, pv_capacity_kw, pv_unit, config, year, month, basis)?;
        total = total + m.solution.bill.total;
        months.push(m);
    }
    Ok(AnnualResult { months, total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepParameter {
    /// PV size with the configured battery.
    PvCapacity,
    /// PV size with no battery.
    PvCapacityNoBes,
    /// Battery power with energy = duration * power.
    BesPower { duration_hours: f64 },
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParameter::PvCapacity => f.write_str("pv_capacity"),
            SweepParameter::PvCapacityNoBes => f.write_str("pv_capacity_no_bes"),
            SweepParameter::BesPower { duration_hours } => write!(f, "bes_power_{duration_hours}h"),
        }
    }
}

impl FromStr for SweepParameter {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pv_capacity" => Ok(SweepParameter::PvCapacity),
            "pv_capacity_no_bes" => Ok(SweepParameter::PvCapacityNoBes),
            _ => s
                .strip_prefix("bes_power_")
                .and_then(|r| r.strip_suffix('h'))
                .and_then(|h| h.parse::<f64>().ok())
                .filter(|h| h.is_finite() && *h > 0.0)
                .map(|duration_hours| SweepParameter::BesPower { duration_hours })
                .ok_or_else(|| AnalysisError::UnknownParameter(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Result<Self, AnalysisError> {
        let ok = values.len() >= 2
            && values.iter().all(|v| v.is_finite() && *v >= 0.0)
            && values.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(AnalysisError::BadSweepValues(format!("{values:?}")));
        }
        Ok(Self { parameter, values })
    }

    /// `points` evenly spaced values from 0 to `max`.
    pub fn evenly_spaced(parameter: SweepParameter, max: f64, points: usize) -> Result<Self, AnalysisError> {
        let n = points.max(2);
        let values = (0..n).map(|i| if i + 1 == n { max } else { max * i as f64 / (n - 1) as f64 }).collect();
        Self::new(parameter, values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub value: T,
    pub pv_capacity_kw: T,
    pub spec: BatterySpec<T>,
    pub annual: AnnualResult<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    pub tariff: String,
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint<T>>,
}

impl<T: Scalar> SweepResult<T> {
    pub fn totals(&self) -> Vec<T> {
        self.points.iter().map(|p| p.annual.total).collect()
    }

    pub fn values(&self) -> Vec<T> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Site and asset inputs shared by every point of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a, T> {
    pub site: &'a SiteProfile<T>,
    pub pv_unit: Option<&'a PvUnitProfile<T>>,
    /// PV size held fixed in battery sweeps.
    pub pv_capacity_kw: T,
    /// Battery used in PV sweeps; its SOC fractions and efficiency carry over to battery sweeps.
    pub spec: BatterySpec<T>,
}

impl<'a, T: Scalar> Scenario<'a, T> {
    fn point(&self, parameter: SweepParameter, value: T) -> Result<(T, BatterySpec<T>), AnalysisError> {
        Ok(match parameter {
            SweepParameter::PvCapacity => (value, self.spec),
            SweepParameter::PvCapacityNoBes => (value, BatterySpec::none()),
            SweepParameter::BesPower { duration_hours } => {
                (self.pv_capacity_kw, self.spec.resized(value * T::of(duration_hours), value)?)
            }
        })
    }
}

/// Annual bills at every sweep value for every tariff, ordered by (tariff, value).
/// Each point starts the simplex from the previous point's monthly bases.
pub fn sweep<T: Scalar>(
    scenario: &Scenario<'_, T>,
    tariffs: &[TariffSchedule],
    spec: &SweepSpec,
    config: &SolverConfig,
) -> Result<Vec<SweepResult<T>>, AnalysisError> {
    tariffs.iter().map(|t| sweep_tariff(scenario, t, spec, config, None)).collect()
}

/// One tariff's sweep. `start` seeds the first point with monthly bases, e.g.
/// from another sweep of the same tariff.
pub fn sweep_tariff<T: Scalar>(
    scenario: &Scenario<'_, T>,
    tariff: &TariffSchedule,
    spec: &SweepSpec,
    config: &SolverConfig,
    start: Option<&[Option<Basis>]>,
) -> Result<SweepResult<T>, AnalysisError> {
    let spec = SweepSpec::new(spec.parameter, spec.values.clone())?;
    let mut points: Vec<SweepPoint<T>> = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let value = T::of(v);
        let (pv, battery) = scenario.point(spec.parameter, value)?;
        let warm = points.last().map(|p| p.annual.bases());
        log::info!("{} {} = {v}", tariff.name(), spec.parameter);
        let annual = annual_bill(scenario.site, tariff, &battery, pv, scenario.pv_unit, config, warm.as_deref().or(start))?;
        points.push(SweepPoint {
            value,
            pv_capacity_kw: pv,
            spec: battery,
            annual,
        });
    }
    Ok(SweepResult {
        tariff: tariff.name().to_string(),
        parameter: spec.parameter,
        points,
    })
}

impl<T: Scalar> SweepResult<T> {
    /// Monthly bases of the last point, for seeding a follow-on sweep.
    pub fn final_bases(&self) -> Option<Vec<Option<Basis>>> {
        self.points.last().map(|p| p.annual.bases())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelativeMode {
    /// value - baseline value
    Difference,
    /// value / baseline value
    Ratio,
}

impl FromStr for RelativeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "difference" => Ok(RelativeMode::Difference),
            "ratio" => Ok(RelativeMode::Ratio),
            _ => Err(format!("unknown relative mode `{s}` (expected difference or ratio)")),
        }
    }
}

impl RelativeMode {
    pub fn apply<T: Scalar>(self, value: T, baseline: T) -> T {
        match self {
            RelativeMode::Difference => value - baseline,
            RelativeMode::Ratio => value / baseline,
        }
    }
}

/// Per-tariff series expressed against the series of the `baseline` tariff at the same sweep value.
pub fn relative_to_baseline<T: Scalar>(
    series: &[(String, Vec<T>)],
    baseline: &str,
    mode: RelativeMode,
) -> Result<Vec<(String, Vec<T>)>, AnalysisError> {
    let base = &series
        .iter()
        .find(|(name, _)| name == baseline)
        .ok_or_else(|| AnalysisError::UnknownBaseline(baseline.to_string()))?
        .1;
    series
        .iter()
        .map(|(name, values)| {
            if values.len() != base.len() {
                return Err(AnalysisError::Mismatch);
            }
            Ok((name.clone(), values.iter().zip(base).map(|(&v, &b)| mode.apply(v, b)).collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvaResult<T> {
    pub tariff: String,
    pub without_bes: AnnualResult<T>,
    pub with_bes: AnnualResult<T>,
    /// Annual bill without the battery minus annual bill with it.
    pub bva: T,
}

pub fn battery_value_added<T: Scalar>(
    site: &SiteProfile<T>,
    tariff: &TariffSchedule,
    spec: &BatterySpec<T>,
    pv_capacity_kw: T,
    pv_unit: Option<&PvUnitProfile<T>>,
    config: &SolverConfig,
) -> Result<BvaResult<T>, AnalysisError> {
    let without_bes = annual_bill(site, tariff, &BatterySpec::none(), pv_capacity_kw, pv_unit, config, None)?;
    let with_bes = annual_bill(site, tariff, spec, pv_capacity_kw, pv_unit, config, Some(&without_bes.bases()))?;
    Ok(BvaResult {
        tariff: tariff.name().to_string(),
        bva: without_bes.total - with_bes.total,
        without_bes,
        with_bes,
    })
}

/// BVA at every value of a PV sweep, from paired sweeps with and without the battery.
#[derive(Debug, Clone, PartialEq)]
pub struct BvaSweep<T> {
    pub tariff: String,
    pub pv_capacity_kw: Vec<T>,
    pub without_bes: Vec<T>,
    pub with_bes: Vec<T>,
    pub bva: Vec<T>,
}

pub fn bva_from_sweeps<T: Scalar>(without: &SweepResult<T>, with: &SweepResult<T>) -> Result<BvaSweep<T>, AnalysisError> {
    if without.tariff != with.tariff || without.values() != with.values() {
        return Err(AnalysisError::Mismatch);
    }
    let (a, b) = (without.totals(), with.totals());
    Ok(BvaSweep {
        tariff: with.tariff.clone(),
        pv_capacity_kw: with.values(),
        bva: a.iter().zip(&b).map(|(&x, &y)| x - y).collect(),
        without_bes: a,
        with_bes: b,
    })
}

pub fn bva_sweep<T: Scalar>(
    scenario: &Scenario<'_, T>,
    tariffs: &[TariffSchedule],
    pv_values: &[f64],
    config: &SolverConfig,
) -> Result<Vec<BvaSweep<T>>, AnalysisError> {
    let without_spec = SweepSpec::new(SweepParameter::PvCapacityNoBes, pv_values.to_vec())?;
    let with_spec = SweepSpec::new(SweepParameter::PvCapacity, pv_values.to_vec())?;
    tariffs
        .iter()
        .map(|t| {
            let without = sweep_tariff(scenario, t, &without_spec, config, None)?;
            let with = sweep_tariff(scenario, t, &with_spec, config, without.final_bases().as_deref())?;
            bva_from_sweeps(&without, &with)
        })
        .collect()
}

/// Eligibility of a site with the given assets for `tariff`'s option.
pub fn eligibility<T: Scalar>(
    site: &SiteProfile<T>,
    tariff: &TariffSchedule,
    spec: &BatterySpec<T>,
    pv_capacity_kw: T,
    pv_unit: Option<&PvUnitProfile<T>>,
) -> Result<Eligibility, AnalysisError> {
    let h: T = site.grid().step_hours();
    let site_pv = site.pv_generation_kw().iter().fold(T::zero(), |a, &p| a + p) * h;
    let added = pv_unit.map_or(T::zero(), |u| u.energy_per_kw() * pv_capacity_kw);
    Ok(check_eligibility(
        tariff.option(),
        (site_pv + added).to_f64_lossy(),
        site.total_demand_kwh().to_f64_lossy(),
        spec.power_rating_kw.to_f64_lossy(),
        site.peak_demand_kw().to_f64_lossy(),
    )?)
}
