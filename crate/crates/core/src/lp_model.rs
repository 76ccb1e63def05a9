//! The monthly bill-minimization LP: instance data, assembly, and mapping the
//! solver output back to a dispatch and a bill.
//!
//! Column and row names, with `t` the interval index and `p` the demand entry index:
//!
//! | name              | meaning                                        |
//! |-------------------|------------------------------------------------|
//! | `dnet_t{t}`       | net demand, free                               |
//! | `dimp_t{t}`       | imported part of net demand, >= 0              |
//! | `soc_t{t}`        | state of charge at the end of `t`              |
//! | `pcha_t{t}`       | charging power                                 |
//! | `pdis_t{t}`       | discharging power                              |
//! | `dmax`            | monthly maximum net demand                     |
//! | `dtou{p}_{label}` | maximum net demand over demand entry `p`       |
//! | `maxd_t{t}`       | `dnet <= dmax`                                 |
//! | `toud{p}_t{t}`    | `dnet <= dtou{p}` for `t` in entry `p`         |
//! | `imp_t{t}`        | `dnet <= dimp`                                 |
//! | `socbal_t{t}`     | SOC recursion                                  |
//! | `socend`          | final SOC equals initial SOC                   |
//! | `chroom_t{t}`     | charge energy fits above the previous SOC      |
//! | `disavail_t{t}`   | discharge energy is available                  |
//! | `rating_t{t}`     | charge + discharge <= power rating             |
//! | `noexport_t{t}`   | discharge <= base demand + charge              |
//! | `netdef_t{t}`     | `dnet - pcha + pdis = base - pv`               |

use billopt_solver::{solve_with_basis, Basis, LpProblem, RawSolution, Sense, SolverConfig, SolverError, Status, VarId};
use thiserror::Error;

use crate::bes::{validate_dispatch, BatteryDispatch, BatterySpec, LengthError};
use crate::billing::{bill_of_dispatch, BillBreakdown, BillingError};
use crate::profiles::{scale_pv, ProfileError, PvUnitProfile, SiteProfile, TimeGrid};
use crate::tariff::{DemandPeriodSet, TariffSchedule};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Length(#[from] LengthError),
    #[error("{what}[{index}] = {value} is not a valid rate")]
    BadRate { what: &'static str, index: usize, value: f64 },
    #[error("sell rate {nsr} exceeds energy rate {er} at interval {index}")]
    SellAboveBuy { index: usize, er: f64, nsr: f64 },
    #[error("{what}[{index}] = {value} is not a valid power")]
    BadPower { what: &'static str, index: usize, value: f64 },
    #[error("demand entry `{label}` refers to interval {index} outside the month")]
    BadInterval { label: String, index: usize },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver status {0}")]
    NotOptimal(Status),
}

impl SolveError {
    pub fn status(&self) -> Option<&Status> {
        match self {
            SolveError::NotOptimal(s) => Some(s),
            SolveError::Solver(_) => None,
        }
    }
}

/// Every parameter of one month's optimization, aligned to `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyInstance<T> {
    pub grid: TimeGrid,
    pub base_kw: Vec<T>,
    pub pv_kw: Vec<T>,
    pub spec: BatterySpec<T>,
    pub er: Vec<T>,
    pub nsr: Vec<T>,
    pub dr_max: T,
    pub demand_periods: DemandPeriodSet<T>,
}

impl<T: Scalar> MonthlyInstance<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TimeGrid,
        base_kw: Vec<T>,
        pv_kw: Vec<T>,
        spec: BatterySpec<T>,
        er: Vec<T>,
        nsr: Vec<T>,
        dr_max: T,
        demand_periods: DemandPeriodSet<T>,
    ) -> Result<Self, InstanceError> {
        let n = grid.count();
        for (series, v) in [("base_kw", &base_kw), ("pv_kw", &pv_kw), ("er", &er), ("nsr", &nsr)] {
            if v.len() != n {
                return Err(LengthError {
                    series,
                    found: v.len(),
                    expected: n,
                }
                .into());
            }
        }
        for (what, v) in [("base_kw", &base_kw), ("pv_kw", &pv_kw)] {
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= T::zero())) {
                return Err(InstanceError::BadPower {
                    what,
                    index: i,
                    value: v[i].to_f64_lossy(),
                });
            }
        }
        let bad_rate = |x: &T| !(x.is_finite() && *x >= T::zero());
        for (what, v) in [("er", &er), ("nsr", &nsr)] {
            if let Some(i) = v.iter().position(bad_rate) {
                return Err(InstanceError::BadRate {
                    what,
                    index: i,
                    value: v[i].to_f64_lossy(),
                });
            }
        }
        if let Some(i) = (0..n).find(|&i| nsr[i] > er[i]) {
            return Err(InstanceError::SellAboveBuy {
                index: i,
                er: er[i].to_f64_lossy(),
                nsr: nsr[i].to_f64_lossy(),
            });
        }
        if bad_rate(&dr_max) {
            return Err(InstanceError::BadRate {
                what: "dr_max",
                index: 0,
                value: dr_max.to_f64_lossy(),
            });
        }
        for (p, e) in demand_periods.entries.iter().enumerate() {
            if bad_rate(&e.rate) {
                return Err(InstanceError::BadRate {
                    what: "demand_rate",
                    index: p,
                    value: e.rate.to_f64_lossy(),
                });
            }
            if let Some(&i) = e.intervals.iter().find(|&&i| i >= n) {
                return Err(InstanceError::BadInterval {
                    label: e.label.clone(),
                    index: i,
                });
            }
        }
        Ok(Self {
            grid,
            base_kw,
            pv_kw,
            spec,
            er,
            nsr,
            dr_max,
            demand_periods,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.count()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.count() == 0
    }

    pub fn step_hours(&self) -> T {
        self.grid.step_hours()
    }

    /// Net demand for a battery net draw of zero: base minus PV.
    pub fn net_without_battery(&self) -> Vec<T> {
        self.base_kw.iter().zip(&self.pv_kw).map(|(&b, &p)| b - p).collect()
    }

    /// Net demand under `dispatch`: base - PV + charge - discharge.
    pub fn net_demand(&self, dispatch: &BatteryDispatch<T>) -> Vec<T> {
        (0..self.len())
            .map(|t| self.base_kw[t] - self.pv_kw[t] + dispatch.charge_kw[t] - dispatch.discharge_kw[t])
            .collect()
    }

    /// Same instance with a different battery.
    pub fn with_spec(&self, spec: BatterySpec<T>) -> Self {
        Self { spec, ..self.clone() }
    }

    /// Same instance with every rate multiplied by `alpha`.
    pub fn with_scaled_rates(&self, alpha: T) -> Self {
        Self {
            er: self.er.iter().map(|&r| r * alpha).collect(),
            nsr: self.nsr.iter().map(|&r| r * alpha).collect(),
            dr_max: self.dr_max * alpha,
            demand_periods: self.demand_periods.scaled(alpha),
            ..self.clone()
        }
    }
}

/// Instance for one calendar month of `site`, with PV of `pv_capacity_kw`
/// drawn from `pv_unit` added to any PV already in the site profile.
pub fn build_instance<T: Scalar>(
    site: &SiteProfile<T>,
    tariff: &TariffSchedule,
    spec: &BatterySpec<T>,
    year: i32,
    month: u32,
    pv_capacity_kw: T,
    pv_unit: Option<&PvUnitProfile<T>>,
) -> Result<MonthlyInstance<T>, InstanceError> {
    let grid = TimeGrid::month(site.grid().timezone(), year, month, site.grid().step_minutes())?;
    let month_site = site.slice(&grid)?;
    let mut pv_kw = month_site.pv_generation_kw().to_vec();
    if let Some(unit) = pv_unit {
        let added = scale_pv(&unit.slice(&grid)?, pv_capacity_kw)?;
        for (p, a) in pv_kw.iter_mut().zip(added) {
            *p = *p + a;
        }
    } else if pv_capacity_kw != T::zero() {
        return Err(ProfileError::BadCapacity(pv_capacity_kw.to_f64_lossy()).into());
    }
    MonthlyInstance::new(
        grid.clone(),
        month_site.base_demand_kw().to_vec(),
        pv_kw,
        *spec,
        tariff.energy_rate_series(&grid),
        tariff.nem_sell_rate_series(&grid),
        T::of(tariff.monthly_demand_rate()),
        tariff.demand_periods_for_month(&grid),
    )
}

/// Column positions of the monthly LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub intervals: usize,
    pub demand_entries: usize,
}

impl VarLayout {
    pub const PER_INTERVAL: usize = 5;

    pub fn dnet(&self, t: usize) -> VarId {
        VarId(5 * t)
    }
    pub fn dimp(&self, t: usize) -> VarId {
        VarId(5 * t + 1)
    }
    pub fn soc(&self, t: usize) -> VarId {
        VarId(5 * t + 2)
    }
    pub fn pcha(&self, t: usize) -> VarId {
        VarId(5 * t + 3)
    }
    pub fn pdis(&self, t: usize) -> VarId {
        VarId(5 * t + 4)
    }
    pub fn dmax(&self) -> VarId {
        VarId(5 * self.intervals)
    }
    pub fn dtou(&self, p: usize) -> VarId {
        VarId(5 * self.intervals + 1 + p)
    }
    pub fn num_vars(&self) -> usize {
        5 * self.intervals + 1 + self.demand_entries
    }
}

fn name_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_@.-".contains(c) { c } else { '_' })
        .collect()
}

pub fn assemble_lp<T: Scalar>(inst: &MonthlyInstance<T>) -> LpProblem<T> {
    let n = inst.len();
    let layout = VarLayout {
        intervals: n,
        demand_entries: inst.demand_periods.len(),
    };
    let h = inst.step_hours();
    let s = &inst.spec;
    let eta = s.round_trip_efficiency;
    let (zero, one, inf) = (T::zero(), T::one(), T::infinity());
    let mut lp = LpProblem::new(format!("month_{}", inst.grid.start().format("%Y_%m")));

    for t in 0..n {
        lp.add_var(format!("dnet_t{t}"), -inf, inf, h * inst.nsr[t]);
        lp.add_var(format!("dimp_t{t}"), zero, inf, h * (inst.er[t] - inst.nsr[t]));
        lp.add_var(format!("soc_t{t}"), s.soc_min_kwh, s.soc_max_kwh, zero);
        lp.add_var(format!("pcha_t{t}"), zero, s.power_rating_kw, zero);
        lp.add_var(format!("pdis_t{t}"), zero, s.power_rating_kw, zero);
    }
    lp.add_var("dmax", zero, inf, inst.dr_max);
    for (p, e) in inst.demand_periods.entries.iter().enumerate() {
        lp.add_var(format!("dtou{p}_{}", name_safe(&e.label)), zero, inf, e.rate);
    }
    debug_assert_eq!(lp.num_vars(), layout.num_vars());

    for t in 0..n {
        lp.add_row(format!("maxd_t{t}"), vec![(layout.dnet(t), one), (layout.dmax(), -one)], Sense::Le, zero);
    }
    for (p, e) in inst.demand_periods.entries.iter().enumerate() {
        for &t in &e.intervals {
            lp.add_row(format!("toud{p}_t{t}"), vec![(layout.dnet(t), one), (layout.dtou(p), -one)], Sense::Le, zero);
        }
    }
    for t in 0..n {
        lp.add_row(format!("imp_t{t}"), vec![(layout.dnet(t), one), (layout.dimp(t), -one)], Sense::Le, zero);
    }
    for t in 0..n {
        let mut terms = vec![(layout.soc(t), one), (layout.pcha(t), -h * eta), (layout.pdis(t), h)];
        let rhs = if t == 0 {
            s.soc_init_kwh
        } else {
            terms.push((layout.soc(t - 1), -one));
            zero
        };
        lp.add_row(format!("socbal_t{t}"), terms, Sense::Eq, rhs);
    }
    if n > 0 {
        lp.add_row("socend", vec![(layout.soc(n - 1), one)], Sense::Eq, s.soc_init_kwh);
    }
    for t in 0..n {
        let (mut ch, mut dis) = (vec![(layout.pcha(t), h * eta)], vec![(layout.pdis(t), h)]);
        let (ch_rhs, dis_rhs) = if t == 0 {
            (s.energy_rating_kwh - s.soc_init_kwh, s.soc_init_kwh)
        } else {
            ch.push((layout.soc(t - 1), one));
            dis.push((layout.soc(t - 1), -one));
            (s.energy_rating_kwh, zero)
        };
        lp.add_row(format!("chroom_t{t}"), ch, Sense::Le, ch_rhs);
        lp.add_row(format!("disavail_t{t}"), dis, Sense::Le, dis_rhs);
    }
    for t in 0..n {
        lp.add_row(format!("rating_t{t}"), vec![(layout.pcha(t), one), (layout.pdis(t), one)], Sense::Le, s.power_rating_kw);
        lp.add_row(format!("noexport_t{t}"), vec![(layout.pdis(t), one), (layout.pcha(t), -one)], Sense::Le, inst.base_kw[t]);
        lp.add_row(
            format!("netdef_t{t}"),
            vec![(layout.dnet(t), one), (layout.pcha(t), -one), (layout.pdis(t), one)],
            Sense::Eq,
            inst.base_kw[t] - inst.pv_kw[t],
        );
    }
    lp
}

/// Optimal month: dispatch, demand series, and the bill recomputed from the dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBundle<T> {
    pub objective_value: T,
    pub dispatch: BatteryDispatch<T>,
    pub net_demand_kw: Vec<T>,
    pub import_kw: Vec<T>,
    pub d_max_kw: T,
    pub d_tou_kw: Vec<(String, T)>,
    pub bill: BillBreakdown<T>,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

impl<T: Scalar> SolutionBundle<T> {
    pub fn status(&self) -> Status {
        Status::Optimal
    }
}

/// Absolute kW/kWh tolerance and relative objective tolerance for checking solutions.
pub fn check_tolerance<T: Scalar>() -> T {
    T::of(1e-6).max(T::default_tolerance() * T::of(10.0))
}

fn running_max<T: Scalar>(values: impl Iterator<Item = T>) -> T {
    values.fold(T::zero(), T::max)
}

fn failure(message: String) -> SolveError {
    SolveError::NotOptimal(Status::NumericalFailure(message))
}

/// Maps a raw solver result to a checked [`SolutionBundle`]. A solution that
/// fails any consistency check is reported as a numerical failure.
pub fn extract_solution<T: Scalar>(
    inst: &MonthlyInstance<T>,
    lp: &LpProblem<T>,
    raw: RawSolution<T>,
) -> Result<SolutionBundle<T>, SolveError> {
    if raw.status != Status::Optimal {
        return Err(SolveError::NotOptimal(raw.status));
    }
    let n = inst.len();
    let layout = VarLayout {
        intervals: n,
        demand_entries: inst.demand_periods.len(),
    };
    if raw.values.len() != lp.num_vars() || lp.num_vars() != layout.num_vars() {
        return Err(failure(format!(
            "solution has {} values for {} columns",
            raw.values.len(),
            layout.num_vars()
        )));
    }
    let tol = check_tolerance::<T>();
    let x = |v: VarId| raw.values[v.0];
    let charge: Vec<T> = (0..n).map(|t| x(layout.pcha(t)).max(T::zero())).collect();
    let discharge: Vec<T> = (0..n).map(|t| x(layout.pdis(t)).max(T::zero())).collect();
    let soc: Vec<T> = (0..n).map(|t| x(layout.soc(t))).collect();
    let net: Vec<T> = (0..n).map(|t| x(layout.dnet(t))).collect();
    let dispatch = BatteryDispatch {
        grid: inst.grid.clone(),
        charge_kw: charge,
        discharge_kw: discharge,
        soc_kwh: soc,
    };

    let identity = inst.net_demand(&dispatch);
    if let Some(t) = (0..n).find(|&t| (identity[t] - net[t]).abs() > tol) {
        return Err(failure(format!(
            "net demand identity off by {:e} kW at interval {t}",
            (identity[t] - net[t]).abs()
        )));
    }
    let violations = validate_dispatch(&inst.spec, &dispatch, &inst.base_kw, tol).map_err(|e| failure(e.to_string()))?;
    if let Some(v) = violations.first() {
        return Err(failure(format!(
            "dispatch violates {:?} at interval {} by {:e} ({} violations)",
            v.rule,
            v.interval,
            v.excess,
            violations.len()
        )));
    }

    let import: Vec<T> = net.iter().map(|&d| d.max(T::zero())).collect();
    let d_max = running_max(net.iter().copied());
    if inst.dr_max > T::zero() && (x(layout.dmax()) - d_max).abs() > tol {
        return Err(failure(format!(
            "monthly maximum demand {} disagrees with the net demand maximum {d_max}",
            x(layout.dmax())
        )));
    }
    let d_tou: Vec<(String, T)> = inst
        .demand_periods
        .entries
        .iter()
        .map(|e| (e.label.clone(), running_max(e.intervals.iter().map(|&t| net[t]))))
        .collect();

    let bill = match bill_of_dispatch(inst, &dispatch) {
        Ok(b) => b,
        Err(BillingError::InvalidDispatch(v)) => return Err(failure(format!("billing rejected dispatch: {v:?}"))),
        Err(e) => return Err(failure(e.to_string())),
    };
    let scale = raw.objective.abs().max(T::one());
    if (bill.total - raw.objective).abs() > tol * scale {
        return Err(failure(format!(
            "recomputed bill {} disagrees with LP objective {}",
            bill.total, raw.objective
        )));
    }
    Ok(SolutionBundle {
        objective_value: raw.objective,
        dispatch,
        net_demand_kw: net,
        import_kw: import,
        d_max_kw: d_max,
        d_tou_kw: d_tou,
        bill,
        iterations: raw.iterations,
        basis: raw.basis,
    })
}

/// Assembles, solves and extracts one month. A failed warm start is retried cold.
pub fn solve_month<T: Scalar>(
    inst: &MonthlyInstance<T>,
    config: &SolverConfig,
    warm: Option<&Basis>,
) -> Result<SolutionBundle<T>, SolveError> {
    let lp = assemble_lp(inst);
    let raw = solve_with_basis(&lp, config, warm)?;
    match extract_solution(inst, &lp, raw) {
        Err(SolveError::NotOptimal(Status::NumericalFailure(msg))) if warm.is_some() => {
            log::debug!("warm start failed ({msg}); retrying cold");
            let raw = solve_with_basis(&lp, config, None)?;
            extract_solution(inst, &lp, raw)
        }
        other => other,
    }
}
