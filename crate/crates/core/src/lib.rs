//! Bill minimization for a site with PV and battery storage under
//! time-of-use tariffs with demand charges and net metering.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `f64` aliases below cover the usual case.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod bes;
pub mod billing;
pub mod lp_model;
pub mod profiles;
pub mod report;
pub mod tariff;

pub use billopt_solver::{Backend, Basis, LpProblem, Scalar, SolverConfig, Status, EXTERNAL_SOLVER_ENV};

pub type BatterySpec = bes::BatterySpec<f64>;
pub type BatteryDispatch = bes::BatteryDispatch<f64>;
pub type BillBreakdown = billing::BillBreakdown<f64>;
pub type MonthlyInstance = lp_model::MonthlyInstance<f64>;
pub type SolutionBundle = lp_model::SolutionBundle<f64>;
pub type SiteProfile = profiles::SiteProfile<f64>;
pub type PvUnitProfile = profiles::PvUnitProfile<f64>;
pub type DemandPeriodSet = tariff::DemandPeriodSet<f64>;
pub type AnnualResult = analysis::AnnualResult<f64>;
pub type SweepResult = analysis::SweepResult<f64>;
