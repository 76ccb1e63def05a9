//! Time-of-use tariffs as data: calendar, energy and demand rates, net
//! metering sell rate, and eligibility rules.
//!
//! Tariff files are TOML:
//!
//! ```toml
//! name = "B19TOU"
//! timezone = "America/Los_Angeles"
//! option = "base"                  # base | option-r | option-s
//! non_bypassable_charge = 0.025    # $/kWh
//! monthly_demand_rate = 20.0       # $/kW on the monthly maximum
//! daily_demand_rate = 1.2          # optional, $/kW on each day's maximum
//! holidays = ["2019-01-01"]
//! default_period = "off-peak"      # optional, fills cells no window claims
//!
//! [[seasons]]                      # month-day ranges, inclusive, may wrap the year end
//! name = "summer"
//! from = "06-01"
//! to = "09-30"
//!
//! [[windows]]                      # [start_hour, end_hour) local clock time
//! period = "peak"
//! seasons = ["summer"]             # omitted = all seasons
//! day_classes = ["weekday"]        # weekday | weekend | holiday; omitted = all
//! start_hour = 16
//! end_hour = 21
//!
//! [energy_rates]                   # $/kWh, flat or per season
//! peak = { summer = 0.30, winter = 0.20 }
//! off-peak = 0.12
//!
//! [demand_rates]                   # $/kW, flat or per season; missing = 0
//! peak = { summer = 18.0 }
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Timelike, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::TimeGrid;
use crate::Scalar;

/// Option R threshold: PV share of annual consumption.
pub const OPTION_R_MIN_PV_SHARE: f64 = 0.15;
/// Option S threshold: battery power as a share of maximum annual demand.
pub const OPTION_S_MIN_BES_SHARE: f64 = 0.10;

const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TariffError {
    #[error("cannot read tariff file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("tariff syntax: {0}")]
    Syntax(String),
    #[error("unknown timezone `{0}`")]
    Timezone(String),
    #[error("season `{name}`: bad month-day `{value}` (expected MM-DD)")]
    BadMonthDay { name: String, value: String },
    #[error("duplicate season `{0}`")]
    DuplicateSeason(String),
    #[error("day {0} is covered by no season")]
    SeasonGap(String),
    #[error("day {day} is covered by seasons `{first}` and `{second}`")]
    SeasonOverlap {
        day: String,
        first: String,
        second: String,
    },
    #[error("window for `{period}` refers to unknown season `{season}`")]
    UnknownSeason { period: String, season: String },
    #[error("window for `{period}` has bad hours {start}..{end}")]
    BadHours { period: String, start: u32, end: u32 },
    #[error("{season} {day_class} hour {hour} is covered by `{first}` and `{second}`")]
    WindowOverlap {
        season: String,
        day_class: DayClass,
        hour: u32,
        first: String,
        second: String,
    },
    #[error("{season} {day_class} hour {hour} belongs to no period")]
    CoverageGap {
        season: String,
        day_class: DayClass,
        hour: u32,
    },
    #[error("{table} names `{period}`, which is not a calendar period")]
    UnknownPeriod { table: &'static str, period: String },
    #[error("{table} for `{period}` names unknown season `{season}`")]
    UnknownRateSeason {
        table: &'static str,
        period: String,
        season: String,
    },
    #[error("no energy rate for period `{period}` in season `{season}`")]
    MissingEnergyRate { period: String, season: String },
    #[error("{what} must be finite and >= 0, got {value}")]
    BadRate { what: String, value: f64 },
    #[error("eligibility check needs annual consumption > 0")]
    ZeroConsumption,
    #[error("eligibility inputs must be finite and >= 0")]
    BadEligibilityInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayClass {
    Weekday,
    Weekend,
    Holiday,
}

impl DayClass {
    pub const ALL: [DayClass; 3] = [DayClass::Weekday, DayClass::Weekend, DayClass::Holiday];

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for DayClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DayClass::Weekday => "weekday",
            DayClass::Weekend => "weekend",
            DayClass::Holiday => "holiday",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TariffOption {
    #[default]
    Base,
    OptionR,
    OptionS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Season {
    pub name: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub period: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seasons: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub day_classes: Vec<DayClass>,
    pub start_hour: u32,
    pub end_hour: u32,
}

/// A rate that is either the same all year or set per season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Flat(f64),
    BySeason(BTreeMap<String, f64>),
}

impl Rate {
    pub fn in_season(&self, season: &str) -> Option<f64> {
        match self {
            Rate::Flat(r) => Some(*r),
            Rate::BySeason(m) => m.get(season).copied(),
        }
    }

    fn scaled(&self, alpha: f64) -> Rate {
        match self {
            Rate::Flat(r) => Rate::Flat(r * alpha),
            Rate::BySeason(m) => Rate::BySeason(m.iter().map(|(k, v)| (k.clone(), v * alpha)).collect()),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Rate::Flat(r) => vec![*r],
            Rate::BySeason(m) => m.values().copied().collect(),
        }
    }
}

/// On-disk tariff description; [`TariffSchedule`] is its validated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffFile {
    pub name: String,
    pub timezone: String,
    #[serde(default)]
    pub option: TariffOption,
    pub non_bypassable_charge: f64,
    pub monthly_demand_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily_demand_rate: Option<f64>,
    #[serde(default)]
    pub holidays: Vec<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_period: Option<String>,
    pub seasons: Vec<Season>,
    #[serde(default)]
    pub windows: Vec<Window>,
    pub energy_rates: BTreeMap<String, Rate>,
    #[serde(default)]
    pub demand_rates: BTreeMap<String, Rate>,
}

/// Validated tariff with a precomputed (season, day class, hour) lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffSchedule {
    file: TariffFile,
    tz: Tz,
    periods: Vec<String>,
    /// Season index for each day of a leap year (ordinal 0..366).
    season_of_day: Vec<usize>,
    /// `cells[season][day_class][hour]` = period index.
    cells: Vec<[[usize; 24]; 3]>,
    holidays: HashSet<NaiveDate>,
}

fn parse_month_day(season: &str, text: &str) -> Result<NaiveDate, TariffError> {
    let bad = || TariffError::BadMonthDay {
        name: season.to_string(),
        value: text.to_string(),
    };
    let (m, d) = text.split_once('-').ok_or_else(bad)?;
    if m.len() != 2 || d.len() != 2 {
        return Err(bad());
    }
    let (m, d): (u32, u32) = (m.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?);
    NaiveDate::from_ymd_opt(2000, m, d).ok_or_else(bad)
}

/// Position of a date within a leap year, so 02-29 has its own slot.
fn leap_ordinal(date: NaiveDate) -> usize {
    NaiveDate::from_ymd_opt(2000, date.month(), date.day())
        .expect("every month-day exists in a leap year")
        .ordinal0() as usize
}

fn check_rate(what: impl Into<String>, value: f64) -> Result<(), TariffError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(TariffError::BadRate {
            what: what.into(),
            value,
        })
    }
}

impl TariffSchedule {
    pub fn new(file: TariffFile) -> Result<Self, TariffError> {
        let tz: Tz = file
            .timezone
            .parse()
            .map_err(|_| TariffError::Timezone(file.timezone.clone()))?;
        check_rate("non_bypassable_charge", file.non_bypassable_charge)?;
        check_rate("monthly_demand_rate", file.monthly_demand_rate)?;
        if let Some(r) = file.daily_demand_rate {
            check_rate("daily_demand_rate", r)?;
        }

        // Seasons must tile the (leap) year exactly once.
        let mut season_names = Vec::new();
        let mut season_of_day = vec![usize::MAX; 366];
        for (si, s) in file.seasons.iter().enumerate() {
            if season_names.contains(&s.name) {
                return Err(TariffError::DuplicateSeason(s.name.clone()));
            }
            season_names.push(s.name.clone());
            let from = leap_ordinal(parse_month_day(&s.name, &s.from)?);
            let to = leap_ordinal(parse_month_day(&s.name, &s.to)?);
            let mut day = from;
            loop {
                if season_of_day[day] != usize::MAX {
                    return Err(TariffError::SeasonOverlap {
                        day: ordinal_label(day),
                        first: file.seasons[season_of_day[day]].name.clone(),
                        second: s.name.clone(),
                    });
                }
                season_of_day[day] = si;
                if day == to {
                    break;
                }
                day = (day + 1) % 366;
            }
        }
        if let Some(day) = season_of_day.iter().position(|&s| s == usize::MAX) {
            return Err(TariffError::SeasonGap(ordinal_label(day)));
        }

        // Periods in order of first mention.
        let mut periods: Vec<String> = Vec::new();
        let mut intern = |name: &str| match periods.iter().position(|p| p == name) {
            Some(i) => i,
            None => {
                periods.push(name.to_string());
                periods.len() - 1
            }
        };
        const EMPTY: usize = usize::MAX;
        let mut cells = vec![[[EMPTY; 24]; 3]; file.seasons.len()];
        for w in &file.windows {
            if w.start_hour >= w.end_hour || w.end_hour > 24 {
                return Err(TariffError::BadHours {
                    period: w.period.clone(),
                    start: w.start_hour,
                    end: w.end_hour,
                });
            }
            let p = intern(&w.period);
            let seasons: Vec<usize> = if w.seasons.is_empty() {
                (0..file.seasons.len()).collect()
            } else {
                w.seasons
                    .iter()
                    .map(|s| {
                        season_names.iter().position(|n| n == s).ok_or_else(|| TariffError::UnknownSeason {
                            period: w.period.clone(),
                            season: s.clone(),
                        })
                    })
                    .collect::<Result<_, _>>()?
            };
            let classes: &[DayClass] = if w.day_classes.is_empty() { &DayClass::ALL } else { &w.day_classes };
            for &s in &seasons {
                for &c in classes {
                    for h in w.start_hour..w.end_hour {
                        let cell = &mut cells[s][c.index()][h as usize];
                        if *cell != EMPTY && *cell != p {
                            return Err(TariffError::WindowOverlap {
                                season: season_names[s].clone(),
                                day_class: c,
                                hour: h,
                                first: periods[*cell].clone(),
                                second: w.period.clone(),
                            });
                        }
                        *cell = p;
                    }
                }
            }
        }
        let default = file.default_period.as_deref().map(&mut intern);
        for (s, by_class) in cells.iter_mut().enumerate() {
            for c in DayClass::ALL {
                for h in 0..24 {
                    let cell = &mut by_class[c.index()][h];
                    if *cell == EMPTY {
                        *cell = default.ok_or_else(|| TariffError::CoverageGap {
                            season: season_names[s].clone(),
                            day_class: c,
                            hour: h as u32,
                        })?;
                    }
                }
            }
        }

        for (table, rates) in [("energy_rates", &file.energy_rates), ("demand_rates", &file.demand_rates)] {
            for (period, rate) in rates {
                if !periods.contains(period) {
                    return Err(TariffError::UnknownPeriod {
                        table,
                        period: period.clone(),
                    });
                }
                if let Rate::BySeason(m) = rate {
                    if let Some(season) = m.keys().find(|s| !season_names.contains(s)) {
                        return Err(TariffError::UnknownRateSeason {
                            table,
                            period: period.clone(),
                            season: season.clone(),
                        });
                    }
                }
                for v in rate.values() {
                    check_rate(format!("{table}.{period}"), v)?;
                }
            }
        }
        // Every period that actually occurs in a season needs an energy rate there.
        for (s, by_class) in cells.iter().enumerate() {
            let used: BTreeSet<usize> = by_class.iter().flatten().copied().collect();
            for p in used {
                let has = file
                    .energy_rates
                    .get(&periods[p])
                    .and_then(|r| r.in_season(&season_names[s]))
                    .is_some();
                if !has {
                    return Err(TariffError::MissingEnergyRate {
                        period: periods[p].clone(),
                        season: season_names[s].clone(),
                    });
                }
            }
        }

        let holidays = file.holidays.iter().copied().collect();
        Ok(Self {
            file,
            tz,
            periods,
            season_of_day,
            cells,
            holidays,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TariffError> {
        let file: TariffFile = toml::from_str(text).map_err(|e| TariffError::Syntax(e.to_string()))?;
        Self::new(file)
    }

    pub fn load(path: &Path) -> Result<Self, TariffError> {
        let text = std::fs::read_to_string(path).map_err(|source| TariffError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.file).expect("tariff data is always representable in TOML")
    }

    pub fn file(&self) -> &TariffFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn option(&self) -> TariffOption {
        self.file.option
    }

    pub fn timezone(&self) -> Tz {
        self.tz
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn monthly_demand_rate(&self) -> f64 {
        self.file.monthly_demand_rate
    }

    pub fn daily_demand_rate(&self) -> Option<f64> {
        self.file.daily_demand_rate
    }

    pub fn non_bypassable_charge(&self) -> f64 {
        self.file.non_bypassable_charge
    }

    /// Copy with every rate (energy, demand, daily, non-bypassable) multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self, TariffError> {
        let mut f = self.file.clone();
        f.non_bypassable_charge *= alpha;
        f.monthly_demand_rate *= alpha;
        f.daily_demand_rate = f.daily_demand_rate.map(|r| r * alpha);
        for r in f.energy_rates.values_mut().chain(f.demand_rates.values_mut()) {
            *r = r.scaled(alpha);
        }
        Self::new(f)
    }

    pub fn season_of(&self, date: NaiveDate) -> &str {
        &self.file.seasons[self.season_of_day[leap_ordinal(date)]].name
    }

    pub fn day_class(&self, date: NaiveDate) -> DayClass {
        if self.holidays.contains(&date) {
            DayClass::Holiday
        } else if matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            DayClass::Weekend
        } else {
            DayClass::Weekday
        }
    }

    fn lookup<Z: TimeZone>(&self, ts: &DateTime<Z>) -> (usize, usize) {
        let local = ts.with_timezone(&self.tz);
        let date = local.date_naive();
        let season = self.season_of_day[leap_ordinal(date)];
        let period = self.cells[season][self.day_class(date).index()][local.hour() as usize];
        (period, season)
    }

    /// TOU period in effect at `ts` (local clock time of the tariff).
    pub fn period_of<Z: TimeZone>(&self, ts: &DateTime<Z>) -> &str {
        &self.periods[self.lookup(ts).0]
    }

    fn energy_rate_at(&self, period: usize, season: usize) -> f64 {
        self.file.energy_rates[&self.periods[period]]
            .in_season(&self.file.seasons[season].name)
            .expect("validated: every occurring period has an energy rate")
    }

    fn demand_rate_at(&self, period: usize, season: usize) -> f64 {
        self.file
            .demand_rates
            .get(&self.periods[period])
            .and_then(|r| r.in_season(&self.file.seasons[season].name))
            .unwrap_or(0.0)
    }

    /// ER(t), decided by each interval's start.
    pub fn energy_rate_series<T: Scalar>(&self, grid: &TimeGrid) -> Vec<T> {
        grid.timestamps()
            .map(|ts| {
                let (p, s) = self.lookup(&ts);
                T::of(self.energy_rate_at(p, s))
            })
            .collect()
    }

    /// NSR(t) = max(ER(t) - non-bypassable charge, 0).
    pub fn nem_sell_rate_series<T: Scalar>(&self, grid: &TimeGrid) -> Vec<T> {
        let nbc = T::of(self.file.non_bypassable_charge);
        self.energy_rate_series::<T>(grid)
            .into_iter()
            .map(|er| (er - nbc).max(T::zero()))
            .collect()
    }

    /// Demand-charge groups for the intervals of `grid`: one per rated
    /// (period, season) that occurs, then one per local day if a daily rate is set.
    pub fn demand_periods_for_month<T: Scalar>(&self, grid: &TimeGrid) -> DemandPeriodSet<T> {
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        let mut days: Vec<(NaiveDate, Vec<usize>)> = Vec::new();
        for (t, ts) in grid.timestamps().enumerate() {
            let (p, s) = self.lookup(&ts);
            if self.demand_rate_at(p, s) > 0.0 {
                groups.entry((p, s)).or_default().push(t);
            }
            let date = ts.with_timezone(&self.tz).date_naive();
            match days.last_mut() {
                Some((d, members)) if *d == date => members.push(t),
                _ => days.push((date, vec![t])),
            }
        }
        let mut entries = Vec::new();
        for (&(p, s), members) in &groups {
            let split = groups.keys().filter(|(q, _)| *q == p).count() > 1;
            let label = if split {
                format!("{}@{}", self.periods[p], self.file.seasons[s].name)
            } else {
                self.periods[p].clone()
            };
            entries.push(DemandPeriod {
                label,
                kind: DemandKind::Period,
                intervals: members.clone(),
                rate: T::of(self.demand_rate_at(p, s)),
            });
        }
        if let Some(rate) = self.file.daily_demand_rate.filter(|&r| r > 0.0) {
            for (date, members) in days {
                entries.push(DemandPeriod {
                    label: format!("day-{date}"),
                    kind: DemandKind::Daily,
                    intervals: members,
                    rate: T::of(rate),
                });
            }
        }
        DemandPeriodSet { entries }
    }
}

fn ordinal_label(day: usize) -> String {
    let d = NaiveDate::from_yo_opt(2000, day as u32 + 1).expect("valid ordinal");
    d.format("%m-%d").to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemandKind {
    /// Maximum over a TOU period within the month.
    Period,
    /// Maximum over one calendar day.
    Daily,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandPeriod<T> {
    pub label: String,
    pub kind: DemandKind,
    /// Sorted interval indices of the month grid.
    pub intervals: Vec<usize>,
    /// $/kW applied to the maximum net demand over `intervals`.
    pub rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandPeriodSet<T> {
    pub entries: Vec<DemandPeriod<T>>,
}

impl<T: Scalar> DemandPeriodSet<T> {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| DemandPeriod {
                    rate: e.rate * alpha,
                    ..e.clone()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eligibility {
    pub eligible: bool,
    pub reason: String,
}

/// Whether a customer qualifies for a tariff option. Thresholds are inclusive.
pub fn check_eligibility(
    option: TariffOption,
    annual_pv_energy_kwh: f64,
    annual_consumption_kwh: f64,
    bes_power_kw: f64,
    max_annual_demand_kw: f64,
) -> Result<Eligibility, TariffError> {
    let inputs = [annual_pv_energy_kwh, annual_consumption_kwh, bes_power_kw, max_annual_demand_kw];
    if inputs.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TariffError::BadEligibilityInput);
    }
    Ok(match option {
        TariffOption::Base => Eligibility {
            eligible: true,
            reason: "base tariff has no eligibility requirement".into(),
        },
        TariffOption::OptionR => {
            if annual_consumption_kwh <= 0.0 {
                return Err(TariffError::ZeroConsumption);
            }
            let share = annual_pv_energy_kwh / annual_consumption_kwh;
            Eligibility {
                eligible: share >= OPTION_R_MIN_PV_SHARE - THRESHOLD_SLACK,
                reason: format!("PV supplies {:.2}% of annual energy (needs {:.0}%)", share * 100.0, OPTION_R_MIN_PV_SHARE * 100.0),
            }
        }
        TariffOption::OptionS => {
            let share = if max_annual_demand_kw > 0.0 {
                bes_power_kw / max_annual_demand_kw
            } else if bes_power_kw > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            Eligibility {
                eligible: share >= OPTION_S_MIN_BES_SHARE - THRESHOLD_SLACK,
                reason: format!(
                    "battery power is {:.2}% of maximum annual demand (needs {:.0}%)",
                    share * 100.0,
                    OPTION_S_MIN_BES_SHARE * 100.0
                ),
            }
        }
    })
}
