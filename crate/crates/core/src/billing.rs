//! Bill of a fixed dispatch, and a brute-force optimizer for tiny instances.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bes::{validate_dispatch, BatteryDispatch, LengthError, Violation};
use crate::lp_model::{check_tolerance, MonthlyInstance};
use crate::Scalar;

/// Enumeration is used only when `levels^intervals` stays at or below this.
pub const MAX_ENUMERATED_SEQUENCES: f64 = 1e7;
pub const MAX_ENUMERATED_INTERVALS: usize = 12;
pub const MAX_DP_INTERVALS: usize = 48;
/// Upper bound on Pareto labels alive in one DP layer.
pub const MAX_DP_LABELS: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum BillingError {
    #[error(transparent)]
    Length(#[from] LengthError),
    #[error("dispatch violates battery constraints: {0:?}")]
    InvalidDispatch(Vec<Violation>),
    #[error("power_levels must be >= 2, got {0}")]
    Levels(usize),
    #[error("instance too large for the brute-force oracle: {0}; use fewer intervals or power levels")]
    TooLarge(String),
    #[error("no feasible dispatch on the power grid")]
    NoFeasibleDispatch,
}

/// One month's bill split by component. `nem_revenue` is <= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BillBreakdown<T> {
    pub max_demand_charge: T,
    pub tou_demand_charges: Vec<(String, T)>,
    pub energy_charge: T,
    pub nem_revenue: T,
    pub total: T,
}

impl<T: Scalar> BillBreakdown<T> {
    pub fn from_parts(max_demand_charge: T, tou_demand_charges: Vec<(String, T)>, energy_charge: T, nem_revenue: T) -> Self {
        let mut b = Self {
            max_demand_charge,
            tou_demand_charges,
            energy_charge,
            nem_revenue,
            total: T::zero(),
        };
        b.total = b.sum_of_parts();
        b
    }

    /// Components summed in a fixed order: max demand, period demands, energy, NEM.
    pub fn sum_of_parts(&self) -> T {
        let demand = self.tou_demand_charges.iter().fold(self.max_demand_charge, |a, (_, c)| a + *c);
        demand + self.energy_charge + self.nem_revenue
    }

    pub fn tou_demand_total(&self) -> T {
        self.tou_demand_charges.iter().fold(T::zero(), |a, (_, c)| a + *c)
    }
}

/// Bill for a net demand series, with no battery checks.
pub fn bill_of_net_demand<T: Scalar>(inst: &MonthlyInstance<T>, net_kw: &[T]) -> BillBreakdown<T> {
    assert_eq!(net_kw.len(), inst.len(), "net demand length must match the instance grid");
    let h = inst.step_hours();
    let peak = |idx: &mut dyn Iterator<Item = T>| idx.fold(T::zero(), T::max);
    let max_demand_charge = inst.dr_max * peak(&mut net_kw.iter().copied());
    let tou = inst
        .demand_periods
        .entries
        .iter()
        .map(|e| (e.label.clone(), e.rate * peak(&mut e.intervals.iter().map(|&t| net_kw[t]))))
        .collect();
    let (mut energy, mut nem) = (T::zero(), T::zero());
    for (t, &d) in net_kw.iter().enumerate() {
        let import = d.max(T::zero());
        energy = energy + h * import * inst.er[t];
        nem = nem + h * (d - import) * inst.nsr[t];
    }
    BillBreakdown::from_parts(max_demand_charge, tou, energy, nem)
}

/// Bill under `dispatch`, which must satisfy every battery constraint.
pub fn bill_of_dispatch<T: Scalar>(inst: &MonthlyInstance<T>, dispatch: &BatteryDispatch<T>) -> Result<BillBreakdown<T>, BillingError> {
    let violations = validate_dispatch(&inst.spec, dispatch, &inst.base_kw, check_tolerance())?;
    if !violations.is_empty() {
        return Err(BillingError::InvalidDispatch(violations));
    }
    Ok(bill_of_net_demand(inst, &inst.net_demand(dispatch)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Enumeration when within its guard, otherwise dynamic programming.
    Auto,
    Enumerate,
    DynamicProgramming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub bill: BillBreakdown<T>,
    pub dispatch: BatteryDispatch<T>,
    pub mode: OracleMode,
}

/// Best bill over dispatches whose net battery power takes `power_levels`
/// evenly spaced values in `[-BPR, BPR]` (or lands the SOC exactly on a
/// limit), the last interval restoring the initial SOC. Never below the LP
/// optimum; never worse when the grid is refined by doubling its spacing.
pub fn brute_force_optimal<T: Scalar>(inst: &MonthlyInstance<T>, power_levels: usize) -> Result<OracleResult<T>, BillingError> {
    brute_force_with_mode(inst, power_levels, OracleMode::Auto)
}

pub fn brute_force_with_mode<T: Scalar>(
    inst: &MonthlyInstance<T>,
    power_levels: usize,
    mode: OracleMode,
) -> Result<OracleResult<T>, BillingError> {
    if power_levels < 2 {
        return Err(BillingError::Levels(power_levels));
    }
    let n = inst.len();
    if n == 0 {
        return Err(BillingError::TooLarge("empty month".into()));
    }
    let sequences = (power_levels as f64).powi(n as i32);
    let enumerable = n <= MAX_ENUMERATED_INTERVALS && sequences <= MAX_ENUMERATED_SEQUENCES;
    let mode = match mode {
        OracleMode::Auto if enumerable => OracleMode::Enumerate,
        OracleMode::Auto => OracleMode::DynamicProgramming,
        m => m,
    };
    match mode {
        OracleMode::Enumerate if !enumerable => {
            return Err(BillingError::TooLarge(format!(
                "{power_levels}^{n} sequences over {n} intervals exceeds enumeration limits"
            )))
        }
        OracleMode::DynamicProgramming if n > MAX_DP_INTERVALS => {
            return Err(BillingError::TooLarge(format!("{n} intervals exceeds {MAX_DP_INTERVALS}")))
        }
        _ => {}
    }
    let lattice = Lattice::new(inst, power_levels);
    let actions = match mode {
        OracleMode::Enumerate => lattice.enumerate(),
        _ => lattice.dynamic_program()?,
    }
    .ok_or(BillingError::NoFeasibleDispatch)?;
    let (charge, discharge): (Vec<T>, Vec<T>) = actions.into_iter().unzip();
    let dispatch = BatteryDispatch::from_power(&inst.grid, &inst.spec, charge, discharge)?;
    let bill = bill_of_dispatch(inst, &dispatch)?;
    Ok(OracleResult { bill, dispatch, mode })
}

/// Battery state as an anchor SOC plus whole lattice steps charged and
/// discharged since reaching it: SOC = anchor + h * q * (eta * charged - discharged).
/// Anchors are the initial SOC and the two SOC limits.
type State = (Anchor, i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Anchor {
    Init,
    Min,
    Max,
}

struct Lattice<'a, T> {
    inst: &'a MonthlyInstance<T>,
    /// kW per lattice step.
    q: T,
    span: i64,
    h: T,
    tol: T,
    /// Demand groups holding each interval: 0 is the monthly maximum, p + 1 is entry p.
    groups_at: Vec<Vec<usize>>,
    group_rates: Vec<T>,
}

#[derive(Clone)]
struct Label<T> {
    maxes: Vec<T>,
    cost: T,
    parent: usize,
    action: (T, T),
}

impl<'a, T: Scalar> Lattice<'a, T> {
    fn new(inst: &'a MonthlyInstance<T>, levels: usize) -> Self {
        let span = (levels - 1) as i64;
        let mut groups_at = vec![vec![0]; inst.len()];
        let mut group_rates = vec![inst.dr_max];
        for (p, e) in inst.demand_periods.entries.iter().enumerate() {
            for &t in &e.intervals {
                groups_at[t].push(p + 1);
            }
            group_rates.push(e.rate);
        }
        let s = &inst.spec;
        Self {
            inst,
            q: s.power_rating_kw / T::of(span as f64),
            span,
            h: inst.step_hours(),
            tol: T::of(1e-9) * (T::one() + s.energy_rating_kwh + s.power_rating_kw),
            groups_at,
            group_rates,
        }
    }

    fn soc(&self, (anchor, nc, nd): State) -> T {
        let s = &self.inst.spec;
        let base = match anchor {
            Anchor::Init => s.soc_init_kwh,
            Anchor::Min => s.soc_min_kwh,
            Anchor::Max => s.soc_max_kwh,
        };
        base + self.h * self.q * (s.round_trip_efficiency * T::of(nc as f64) - T::of(nd as f64))
    }

    /// Checks one interval's move from `prev` to `next` SOC with the given powers.
    fn allowed(&self, t: usize, prev: T, next: T, c: T, d: T) -> bool {
        let s = &self.inst.spec;
        let tol = self.tol;
        next >= s.soc_min_kwh - tol
            && next <= s.soc_max_kwh + tol
            && self.h * s.round_trip_efficiency * c <= s.energy_rating_kwh - prev + tol
            && self.h * d <= prev + tol
            && c + d <= s.power_rating_kw + tol
            && d <= self.inst.base_kw[t] + c + tol
    }

    /// Moves available in a non-final interval: the power grid, plus the moves
    /// that land exactly on either SOC limit.
    fn moves(&self, t: usize, state: State) -> Vec<(T, T, State)> {
        let s = &self.inst.spec;
        let prev = self.soc(state);
        let mut out = Vec::new();
        for k in 0..=self.span {
            let m = 2 * k - self.span;
            let (c, d, next) = if m >= 0 {
                (self.q * T::of(m as f64), T::zero(), (state.0, state.1 + m, state.2))
            } else {
                (T::zero(), self.q * T::of((-m) as f64), (state.0, state.1, state.2 - m))
            };
            if self.allowed(t, prev, self.soc(next), c, d) {
                out.push((c, d, next));
            }
        }
        if prev < s.soc_max_kwh {
            let c = (s.soc_max_kwh - prev) / (self.h * s.round_trip_efficiency);
            if self.allowed(t, prev, s.soc_max_kwh, c, T::zero()) {
                out.push((c, T::zero(), (Anchor::Max, 0, 0)));
            }
        }
        if prev > s.soc_min_kwh {
            let d = (prev - s.soc_min_kwh) / self.h;
            if self.allowed(t, prev, s.soc_min_kwh, T::zero(), d) {
                out.push((T::zero(), d, (Anchor::Min, 0, 0)));
            }
        }
        out
    }

    /// The move that returns the SOC to its initial value, if allowed.
    fn closing_move(&self, t: usize, state: State) -> Option<(T, T)> {
        let s = &self.inst.spec;
        let prev = self.soc(state);
        let surplus = prev - s.soc_init_kwh;
        let (c, d) = if surplus < T::zero() {
            (-surplus / (self.h * s.round_trip_efficiency), T::zero())
        } else {
            (T::zero(), surplus / self.h)
        };
        self.allowed(t, prev, s.soc_init_kwh, c, d).then_some((c, d))
    }

    fn energy_cost(&self, t: usize, c: T, d: T) -> T {
        let i = self.inst;
        let net = i.base_kw[t] - i.pv_kw[t] + c - d;
        let import = net.max(T::zero());
        self.h * (import * i.er[t] + (net - import) * i.nsr[t])
    }

    fn advance(&self, t: usize, maxes: &mut [T], c: T, d: T) {
        let net = self.inst.base_kw[t] - self.inst.pv_kw[t] + c - d;
        for &g in &self.groups_at[t] {
            maxes[g] = maxes[g].max(net);
        }
    }

    fn value(&self, maxes: &[T], cost: T) -> T {
        maxes.iter().zip(&self.group_rates).fold(cost, |a, (&m, &r)| a + m * r)
    }

    fn enumerate(&self) -> Option<Vec<(T, T)>> {
        struct Search<T> {
            path: Vec<(T, T)>,
            best: Option<(T, Vec<(T, T)>)>,
        }
        fn go<T: Scalar>(l: &Lattice<T>, s: &mut Search<T>, t: usize, state: State, maxes: Vec<T>, cost: T) {
            let n = l.inst.len();
            if t + 1 == n {
                if let Some((c, d)) = l.closing_move(t, state) {
                    let mut m = maxes;
                    l.advance(t, &mut m, c, d);
                    let v = l.value(&m, cost + l.energy_cost(t, c, d));
                    if s.best.as_ref().is_none_or(|(b, _)| v < *b) {
                        let mut path = s.path.clone();
                        path.push((c, d));
                        s.best = Some((v, path));
                    }
                }
                return;
            }
            for (c, d, next) in l.moves(t, state) {
                let mut m = maxes.clone();
                l.advance(t, &mut m, c, d);
                s.path.push((c, d));
                go(l, s, t + 1, next, m, cost + l.energy_cost(t, c, d));
                s.path.pop();
            }
        }
        let mut search = Search { path: Vec::new(), best: None };
        go(self, &mut search, 0, (Anchor::Init, 0, 0), vec![T::zero(); self.group_rates.len()], T::zero());
        search.best.map(|(_, p)| p)
    }

    fn dynamic_program(&self) -> Result<Option<Vec<(T, T)>>, BillingError> {
        let n = self.inst.len();
        let groups = self.group_rates.len();
        let mut layers: Vec<Vec<Label<T>>> = Vec::with_capacity(n);
        let mut frontier: BTreeMap<State, Vec<usize>> = BTreeMap::new();
        let root = Label {
            maxes: vec![T::zero(); groups],
            cost: T::zero(),
            parent: usize::MAX,
            action: (T::zero(), T::zero()),
        };
        let mut prev_layer = vec![root];
        frontier.insert((Anchor::Init, 0, 0), vec![0]);

        for t in 0..n.saturating_sub(1) {
            let mut layer: Vec<Label<T>> = Vec::new();
            let mut next: BTreeMap<State, Vec<usize>> = BTreeMap::new();
            for (&state, ids) in &frontier {
                let moves = self.moves(t, state);
                for &id in ids {
                    let from = &prev_layer[id];
                    for &(c, d, to) in &moves {
                        let mut maxes = from.maxes.clone();
                        self.advance(t, &mut maxes, c, d);
                        let cand = Label {
                            maxes,
                            cost: from.cost + self.energy_cost(t, c, d),
                            parent: id,
                            action: (c, d),
                        };
                        insert_pareto(&mut layer, next.entry(to).or_default(), cand);
                    }
                }
            }
            let alive: usize = next.values().map(Vec::len).sum();
            if alive > MAX_DP_LABELS {
                return Err(BillingError::TooLarge(format!("{alive} DP labels at interval {t}")));
            }
            layers.push(std::mem::replace(&mut prev_layer, layer));
            frontier = next;
        }
        layers.push(prev_layer);

        let t = n - 1;
        let mut best: Option<(T, usize, (T, T))> = None;
        for (&state, ids) in &frontier {
            let Some((c, d)) = self.closing_move(t, state) else { continue };
            for &id in ids {
                let l = &layers[t][id];
                let mut maxes = l.maxes.clone();
                self.advance(t, &mut maxes, c, d);
                let v = self.value(&maxes, l.cost + self.energy_cost(t, c, d));
                if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                    best = Some((v, id, (c, d)));
                }
            }
        }
        Ok(best.map(|(_, mut id, last)| {
            let mut path = vec![last];
            for layer in layers[1..].iter().rev() {
                let l = &layer[id];
                path.push(l.action);
                id = l.parent;
            }
            path.reverse();
            path
        }))
    }
}

/// Adds `cand` to a state's label list unless an existing label is at least as
/// good in every demand maximum and in energy cost; drops labels it beats.
fn insert_pareto<T: Scalar>(arena: &mut Vec<Label<T>>, ids: &mut Vec<usize>, cand: Label<T>) {
    let dominates = |a: &Label<T>, b: &Label<T>| a.cost <= b.cost && a.maxes.iter().zip(&b.maxes).all(|(x, y)| x <= y);
    if ids.iter().any(|&i| dominates(&arena[i], &cand)) {
        return;
    }
    ids.retain(|&i| !dominates(&cand, &arena[i]));
    arena.push(cand);
    ids.push(arena.len() - 1);
}
