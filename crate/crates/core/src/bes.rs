//! Battery parameters and dispatch arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::TimeGrid;
use crate::Scalar;

pub const DEFAULT_EFFICIENCY: f64 = 0.85;
pub const DEFAULT_INITIAL_SOC_FRACTION: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("{field} must be finite and >= 0, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("round-trip efficiency must lie in (0, 1], got {0}")]
    Efficiency(f64),
    #[error("state-of-charge limits must satisfy 0 <= min ({min}) <= init ({init}) <= max ({max}) <= energy rating ({rating})")]
    SocOrder { min: f64, init: f64, max: f64, rating: f64 },
    #[error("duration must be finite and > 0, got {0}")]
    Duration(f64),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{series} has {found} values, expected {expected}")]
pub struct LengthError {
    pub series: &'static str,
    pub found: usize,
    pub expected: usize,
}

/// Battery energy storage parameters. SOC values are kWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatterySpec<T> {
    pub energy_rating_kwh: T,
    pub power_rating_kw: T,
    pub round_trip_efficiency: T,
    pub soc_min_kwh: T,
    pub soc_max_kwh: T,
    pub soc_init_kwh: T,
}

impl<T: Scalar> BatterySpec<T> {
    /// Spec with default efficiency and SOC window `[0, BER]`, starting half full.
    pub fn new(energy_rating_kwh: T, power_rating_kw: T) -> Result<Self, BatteryError> {
        Self {
            energy_rating_kwh,
            power_rating_kw,
            round_trip_efficiency: T::of(DEFAULT_EFFICIENCY),
            soc_min_kwh: T::zero(),
            soc_max_kwh: energy_rating_kwh,
            soc_init_kwh: energy_rating_kwh * T::of(DEFAULT_INITIAL_SOC_FRACTION),
        }
        .validated()
    }

    /// `hours`-duration battery: BER = hours * BPR.
    pub fn with_duration(power_rating_kw: T, hours: T) -> Result<Self, BatteryError> {
        if !(hours.is_finite() && hours > T::zero()) {
            return Err(BatteryError::Duration(hours.to_f64_lossy()));
        }
        Self::new(power_rating_kw * hours, power_rating_kw)
    }

    /// No storage at all.
    pub fn none() -> Self {
        Self::new(T::zero(), T::zero()).expect("zero battery is valid")
    }

    pub fn validated(self) -> Result<Self, BatteryError> {
        for (field, v) in [
            ("energy_rating_kwh", self.energy_rating_kwh),
            ("power_rating_kw", self.power_rating_kw),
            ("soc_min_kwh", self.soc_min_kwh),
        ] {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(BatteryError::Negative {
                    field,
                    value: v.to_f64_lossy(),
                });
            }
        }
        let eta = self.round_trip_efficiency;
        if !(eta > T::zero() && eta <= T::one()) {
            return Err(BatteryError::Efficiency(eta.to_f64_lossy()));
        }
        let ordered = self.soc_min_kwh <= self.soc_init_kwh
            && self.soc_init_kwh <= self.soc_max_kwh
            && self.soc_max_kwh <= self.energy_rating_kwh;
        if !ordered || !self.soc_init_kwh.is_finite() || !self.soc_max_kwh.is_finite() {
            return Err(BatteryError::SocOrder {
                min: self.soc_min_kwh.to_f64_lossy(),
                init: self.soc_init_kwh.to_f64_lossy(),
                max: self.soc_max_kwh.to_f64_lossy(),
                rating: self.energy_rating_kwh.to_f64_lossy(),
            });
        }
        Ok(self)
    }

    /// Same SOC fractions and efficiency, different size.
    pub fn resized(&self, energy_rating_kwh: T, power_rating_kw: T) -> Result<Self, BatteryError> {
        let frac = |v: T| {
            if self.energy_rating_kwh > T::zero() {
                v / self.energy_rating_kwh
            } else {
                T::zero()
            }
        };
        let (min, init) = (frac(self.soc_min_kwh), frac(self.soc_init_kwh));
        let max = if self.energy_rating_kwh > T::zero() {
            frac(self.soc_max_kwh)
        } else {
            T::one()
        };
        let init = if self.energy_rating_kwh > T::zero() {
            init
        } else {
            T::of(DEFAULT_INITIAL_SOC_FRACTION)
        };
        Self {
            energy_rating_kwh,
            power_rating_kw,
            round_trip_efficiency: self.round_trip_efficiency,
            soc_min_kwh: min * energy_rating_kwh,
            soc_max_kwh: (max * energy_rating_kwh).min(energy_rating_kwh),
            soc_init_kwh: init * energy_rating_kwh,
        }
        .validated()
    }

    pub fn is_none(&self) -> bool {
        self.energy_rating_kwh == T::zero() || self.power_rating_kw == T::zero()
    }
}

/// Config-file form of a battery; omitted fields take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub power_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_min_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_max_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_init_fraction: Option<f64>,
}

impl BatteryConfig {
    pub fn to_spec<T: Scalar>(&self) -> Result<BatterySpec<T>, BatteryError> {
        let power = self.power_kw;
        let energy = match (self.energy_kwh, self.duration_hours) {
            (Some(e), _) => e,
            (None, Some(h)) => {
                if !(h.is_finite() && h > 0.0) {
                    return Err(BatteryError::Duration(h));
                }
                h * power
            }
            (None, None) => 2.0 * power,
        };
        let e = T::of(energy);
        BatterySpec {
            energy_rating_kwh: e,
            power_rating_kw: T::of(power),
            round_trip_efficiency: T::of(self.efficiency.unwrap_or(DEFAULT_EFFICIENCY)),
            soc_min_kwh: e * T::of(self.soc_min_fraction.unwrap_or(0.0)),
            soc_max_kwh: e * T::of(self.soc_max_fraction.unwrap_or(1.0)),
            soc_init_kwh: e * T::of(self.soc_init_fraction.unwrap_or(DEFAULT_INITIAL_SOC_FRACTION)),
        }
        .validated()
    }
}

/// Charge and discharge power per interval with the resulting end-of-interval SOC.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryDispatch<T> {
    pub grid: TimeGrid,
    pub charge_kw: Vec<T>,
    pub discharge_kw: Vec<T>,
    pub soc_kwh: Vec<T>,
}

impl<T: Scalar> BatteryDispatch<T> {
    /// Battery idle for the whole grid, holding its initial charge.
    pub fn idle(grid: &TimeGrid, spec: &BatterySpec<T>) -> Self {
        let n = grid.count();
        Self {
            grid: grid.clone(),
            charge_kw: vec![T::zero(); n],
            discharge_kw: vec![T::zero(); n],
            soc_kwh: vec![spec.soc_init_kwh; n],
        }
    }

    /// Builds a dispatch whose SOC follows from the power series.
    pub fn from_power(grid: &TimeGrid, spec: &BatterySpec<T>, charge_kw: Vec<T>, discharge_kw: Vec<T>) -> Result<Self, LengthError> {
        check_len("charge_kw", charge_kw.len(), grid.count())?;
        check_len("discharge_kw", discharge_kw.len(), grid.count())?;
        let soc_kwh = soc_trajectory(spec, &charge_kw, &discharge_kw, grid.step_hours());
        Ok(Self {
            grid: grid.clone(),
            charge_kw,
            discharge_kw,
            soc_kwh,
        })
    }

    /// Net battery draw from the site bus: charge minus discharge.
    pub fn net_kw(&self) -> Vec<T> {
        self.charge_kw.iter().zip(&self.discharge_kw).map(|(&c, &d)| c - d).collect()
    }

    pub fn discharged_energy_kwh(&self) -> T {
        let h: T = self.grid.step_hours();
        self.discharge_kw.iter().fold(T::zero(), |a, &d| a + d * h)
    }

    pub fn charged_energy_kwh(&self) -> T {
        let h: T = self.grid.step_hours();
        self.charge_kw.iter().fold(T::zero(), |a, &c| a + c * h)
    }
}

fn check_len(series: &'static str, found: usize, expected: usize) -> Result<(), LengthError> {
    if found == expected {
        Ok(())
    } else {
        Err(LengthError { series, found, expected })
    }
}

/// SOC after one interval: `prev + step_hours * (eta * charge - discharge)`.
pub fn soc_step<T: Scalar>(prev_soc_kwh: T, charge_kw: T, discharge_kw: T, eta: T, step_hours: T) -> T {
    prev_soc_kwh + step_hours * (eta * charge_kw - discharge_kw)
}

pub fn soc_trajectory<T: Scalar>(spec: &BatterySpec<T>, charge_kw: &[T], discharge_kw: &[T], step_hours: T) -> Vec<T> {
    let mut soc = spec.soc_init_kwh;
    charge_kw
        .iter()
        .zip(discharge_kw)
        .map(|(&c, &d)| {
            soc = soc_step(soc, c, d, spec.round_trip_efficiency, step_hours);
            soc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DispatchRule {
    /// SOC series disagrees with the recursion.
    SocRecursion,
    /// SOC after the last interval differs from the initial SOC.
    TerminalSoc,
    SocBounds,
    /// Charge energy exceeds the headroom left at the start of the interval.
    ChargeRoom,
    /// Discharge energy exceeds the energy stored at the start of the interval.
    DischargeAvailable,
    /// Charge plus discharge exceeds the power rating.
    PowerRating,
    /// Discharge exceeds site load plus charge, i.e. battery export.
    Export,
    /// Negative or non-finite power.
    NegativePower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: DispatchRule,
    pub interval: usize,
    /// How far past the limit, in kW or kWh.
    pub excess: f64,
}

/// Checks a dispatch against every battery constraint; an empty list means valid.
pub fn validate_dispatch<T: Scalar>(
    spec: &BatterySpec<T>,
    dispatch: &BatteryDispatch<T>,
    base_demand_kw: &[T],
    tolerance: T,
) -> Result<Vec<Violation>, LengthError> {
    let n = dispatch.grid.count();
    check_len("charge_kw", dispatch.charge_kw.len(), n)?;
    check_len("discharge_kw", dispatch.discharge_kw.len(), n)?;
    check_len("soc_kwh", dispatch.soc_kwh.len(), n)?;
    check_len("base_demand_kw", base_demand_kw.len(), n)?;
    let h: T = dispatch.grid.step_hours();
    let eta = spec.round_trip_efficiency;
    let mut out = Vec::new();
    let mut flag = |rule, interval, excess: T| {
        if excess.is_nan() || excess > tolerance {
            out.push(Violation {
                rule,
                interval,
                excess: excess.to_f64_lossy(),
            });
        }
    };
    let mut prev = spec.soc_init_kwh;
    for t in 0..n {
        let (c, d, j) = (dispatch.charge_kw[t], dispatch.discharge_kw[t], dispatch.soc_kwh[t]);
        flag(DispatchRule::NegativePower, t, -c.min(d));
        flag(DispatchRule::SocRecursion, t, (j - soc_step(prev, c, d, eta, h)).abs());
        flag(DispatchRule::SocBounds, t, (spec.soc_min_kwh - j).max(j - spec.soc_max_kwh));
        flag(DispatchRule::ChargeRoom, t, h * eta * c - (spec.energy_rating_kwh - prev));
        flag(DispatchRule::DischargeAvailable, t, h * d - prev);
        flag(DispatchRule::PowerRating, t, c + d - spec.power_rating_kw);
        flag(DispatchRule::Export, t, d - base_demand_kw[t] - c);
        prev = j;
    }
    if n > 0 {
        flag(DispatchRule::TerminalSoc, n - 1, (prev - spec.soc_init_kwh).abs());
    }
    Ok(out)
}

/// Intervals where charge and discharge both exceed `tolerance`.
pub fn simultaneous_intervals<T: Scalar>(dispatch: &BatteryDispatch<T>, tolerance: T) -> Vec<usize> {
    dispatch
        .charge_kw
        .iter()
        .zip(&dispatch.discharge_kw)
        .enumerate()
        .filter(|(_, (&c, &d))| c > tolerance && d > tolerance)
        .map(|(t, _)| t)
        .collect()
}
