#![allow(dead_code)]

use billopt_core::bes::{BatteryDispatch, BatterySpec};
use billopt_core::lp_model::MonthlyInstance;
use billopt_core::profiles::TimeGrid;
use billopt_core::tariff::{DemandKind, DemandPeriod, DemandPeriodSet};
use chrono::NaiveDate;
use rand::Rng;

pub fn day_grid(step_minutes: u32, count: usize) -> TimeGrid {
    let d = NaiveDate::from_ymd_opt(2019, 7, 10).unwrap();
    TimeGrid::between_dates(chrono_tz::UTC, d, d.succ_opt().unwrap(), step_minutes)
        .unwrap()
        .sub_grid(0, count)
        .unwrap()
}

/// Hours in an average month; demand rates are prorated to the horizon so a
/// short instance keeps a monthly bill's balance of demand and energy charges.
pub const MONTH_HOURS: f64 = 730.0;

/// Small instance with a peak window, PV in the middle, and a battery.
pub fn random_instance(rng: &mut impl Rng, n: usize, step_minutes: u32) -> MonthlyInstance<f64> {
    let grid = day_grid(step_minutes, n);
    let prorate = n as f64 * step_minutes as f64 / 60.0 / MONTH_HOURS;
    let base: Vec<f64> = (0..n).map(|_| rng.gen_range(20.0..80.0)).collect();
    let pv_peak = rng.gen_range(0.0..60.0);
    let pv: Vec<f64> = (0..n)
        .map(|t| {
            let x = (t as f64 + 0.5) / n as f64;
            pv_peak * (std::f64::consts::PI * x).sin().max(0.0)
        })
        .collect();
    let peak_start = rng.gen_range(0..n / 2);
    let peak_end = rng.gen_range(peak_start + 2..=n);
    let (off, on) = (rng.gen_range(0.05..0.15), rng.gen_range(0.15..0.45));
    let er: Vec<f64> = (0..n).map(|t| if (peak_start..peak_end).contains(&t) { on } else { off }).collect();
    let nbc = rng.gen_range(0.0..0.04);
    let nsr = er.iter().map(|r| (r - nbc).max(0.0)).collect();
    let mut entries = vec![DemandPeriod {
        label: "peak".to_string(),
        kind: DemandKind::Period,
        intervals: (peak_start..peak_end).collect(),
        rate: rng.gen_range(0.0..20.0) * prorate,
    }];
    if rng.gen_bool(0.5) {
        entries.push(DemandPeriod {
            label: "late".to_string(),
            kind: DemandKind::Period,
            intervals: (n / 2..n).collect(),
            rate: rng.gen_range(0.0..5.0) * prorate,
        });
    }
    let bpr = rng.gen_range(5.0..25.0);
    let spec = BatterySpec::with_duration(bpr, rng.gen_range(1.0..4.0)).unwrap();
    MonthlyInstance::new(
        grid,
        base,
        pv,
        spec,
        er,
        nsr,
        rng.gen_range(0.0..20.0) * prorate,
        DemandPeriodSet { entries },
    )
    .unwrap()
}

/// Random dispatch that satisfies every battery constraint: a clipped random
/// walk that keeps enough steps in hand to return to the initial SOC.
pub fn random_feasible_dispatch(rng: &mut impl Rng, inst: &MonthlyInstance<f64>) -> BatteryDispatch<f64> {
    let s = &inst.spec;
    let n = inst.len();
    let h = inst.step_hours();
    let eta = s.round_trip_efficiency;
    let margin = 1e-9;
    // Slowest guaranteed return per step from above and below J_init.
    let down: Vec<f64> = (0..n).map(|t| h * s.power_rating_kw.min(inst.base_kw[t])).collect();
    let up = h * eta * s.power_rating_kw;
    let mut soc = s.soc_init_kwh;
    let (mut charge, mut discharge) = (vec![0.0; n], vec![0.0; n]);
    for t in 0..n {
        let rest = n - t - 1;
        let room_down: f64 = down[t + 1..].iter().sum();
        let room_up = up * rest as f64;
        // Reachable SOC after this step that can still return to J_init.
        let hi = (s.soc_init_kwh + room_down).min(s.soc_max_kwh).min(s.energy_rating_kwh);
        let lo = (s.soc_init_kwh - room_up).max(s.soc_min_kwh);
        let lowest = (soc - h * s.power_rating_kw.min(inst.base_kw[t])).max(lo);
        let highest = (soc + h * eta * s.power_rating_kw).min(hi);
        let target = if rest == 0 {
            s.soc_init_kwh
        } else if lowest < highest {
            lowest + (highest - lowest) * rng.gen_range(margin..1.0 - margin)
        } else {
            soc.clamp(lowest, highest)
        };
        let (c, d) = if target >= soc {
            ((target - soc) / (h * eta), 0.0)
        } else {
            (0.0, (soc - target) / h)
        };
        charge[t] = c;
        discharge[t] = d;
        soc += h * (eta * c - d);
    }
    BatteryDispatch::from_power(&inst.grid, &inst.spec, charge, discharge).unwrap()
}
