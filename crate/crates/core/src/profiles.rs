//! Time grids and the demand / PV power series aligned to them.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, LocalResult, NaiveDate, NaiveDateTime, TimeZone};
use chrono_tz::Tz;
use thiserror::Error;

use crate::Scalar;

/// Largest per-kW output accepted in a PV unit profile.
pub const MAX_PV_UNIT_OUTPUT: f64 = 1.2;

pub const DEMAND_HEADER: &str = "kw";
pub const PV_UNIT_HEADER: &str = "kw_per_kw";

/// Format used when writing timestamps: RFC 3339 with a numeric offset.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%:z";

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("step of {0} minutes does not divide 60")]
    BadStep(u32),
    #[error("time grid must have at least one interval")]
    EmptyGrid,
    #[error("{what} has {got} values but the grid has {expected} intervals")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{what}[{index}] = {value} is {problem}")]
    BadValue {
        what: &'static str,
        index: usize,
        value: f64,
        problem: &'static str,
    },
    #[error("cannot resample from {from} to {to} minutes")]
    IncompatibleSteps { from: u32, to: u32 },
    #[error("series of length {len} is not a whole number of {factor}-interval groups")]
    RaggedSeries { len: usize, factor: usize },
    #[error("PV capacity must be finite and >= 0, got {0}")]
    BadCapacity(f64),
    #[error("profile does not cover {0}")]
    NotCovered(String),
    #[error("invalid date {year}-{month:02}")]
    BadDate { year: i32, month: u32 },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing interval {timestamp} (expected at line {line})")]
    MissingInterval { line: u64, timestamp: String },
    #[error("line {line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { line: u64, timestamp: String },
    #[error("line {line}: timestamp {timestamp} is not aligned with the grid (expected {expected})")]
    Misaligned {
        line: u64,
        timestamp: String,
        expected: String,
    },
    #[error("line {line}: row beyond the end of the grid")]
    ExtraRow { line: u64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered sequence of equal-length intervals; interval `t` covers
/// `[start + t*step, start + (t+1)*step)` in absolute time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    start: DateTime<Tz>,
    step_minutes: u32,
    count: usize,
}

impl TimeGrid {
    pub fn new(start: DateTime<Tz>, step_minutes: u32, count: usize) -> Result<Self, ProfileError> {
        if step_minutes == 0 || 60 % step_minutes != 0 {
            return Err(ProfileError::BadStep(step_minutes));
        }
        if count == 0 {
            return Err(ProfileError::EmptyGrid);
        }
        Ok(Self {
            start,
            step_minutes,
            count,
        })
    }

    /// Grid from local midnight on `from` to local midnight on `to` (exclusive).
    pub fn between_dates(tz: Tz, from: NaiveDate, to: NaiveDate, step_minutes: u32) -> Result<Self, ProfileError> {
        let start = local_midnight(tz, from);
        let end = local_midnight(tz, to);
        let minutes = (end - start).num_minutes();
        if step_minutes == 0 || 60 % step_minutes != 0 {
            return Err(ProfileError::BadStep(step_minutes));
        }
        if minutes <= 0 {
            return Err(ProfileError::EmptyGrid);
        }
        Self::new(start, step_minutes, (minutes / step_minutes as i64) as usize)
    }

    /// One calendar month in local time.
    pub fn month(tz: Tz, year: i32, month: u32, step_minutes: u32) -> Result<Self, ProfileError> {
        let bad = || ProfileError::BadDate { year, month };
        let from = NaiveDate::from_ymd_opt(year, month, 1).ok_or_else(bad)?;
        let to = if month == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, month + 1, 1)
        }
        .ok_or_else(bad)?;
        Self::between_dates(tz, from, to, step_minutes)
    }

    /// One calendar year in local time.
    pub fn year(tz: Tz, year: i32, step_minutes: u32) -> Result<Self, ProfileError> {
        let bad = || ProfileError::BadDate { year, month: 1 };
        let from = NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(bad)?;
        let to = NaiveDate::from_ymd_opt(year + 1, 1, 1).ok_or_else(bad)?;
        Self::between_dates(tz, from, to, step_minutes)
    }

    pub fn start(&self) -> DateTime<Tz> {
        self.start
    }

    pub fn timezone(&self) -> Tz {
        self.start.timezone()
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn step_hours<T: Scalar>(&self) -> T {
        T::of(self.step_minutes as f64 / 60.0)
    }

    pub fn step(&self) -> Duration {
        Duration::minutes(self.step_minutes as i64)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Start of interval `t` (may be `count` for the end of the grid).
    pub fn timestamp(&self, t: usize) -> DateTime<Tz> {
        self.start + Duration::minutes(self.step_minutes as i64 * t as i64)
    }

    pub fn end(&self) -> DateTime<Tz> {
        self.timestamp(self.count)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Tz>> + '_ {
        (0..self.count).map(|t| self.timestamp(t))
    }

    /// Index of the interval starting exactly at `ts`.
    pub fn index_of<Z: TimeZone>(&self, ts: &DateTime<Z>) -> Option<usize> {
        let minutes = (ts.clone().with_timezone(&self.timezone()) - self.start).num_seconds();
        let step = self.step_minutes as i64 * 60;
        (minutes >= 0 && minutes % step == 0 && ((minutes / step) as usize) < self.count)
            .then(|| (minutes / step) as usize)
    }

    pub fn sub_grid(&self, offset: usize, count: usize) -> Result<Self, ProfileError> {
        if offset + count > self.count {
            return Err(ProfileError::NotCovered(format!(
                "intervals {offset}..{} of a {}-interval grid",
                offset + count,
                self.count
            )));
        }
        Self::new(self.timestamp(offset), self.step_minutes, count)
    }

    /// Same span at a different step.
    pub fn with_step(&self, step_minutes: u32) -> Result<Self, ProfileError> {
        let total = self.count as u64 * self.step_minutes as u64;
        if step_minutes == 0 || !total.is_multiple_of(step_minutes as u64) {
            return Err(ProfileError::IncompatibleSteps {
                from: self.step_minutes,
                to: step_minutes,
            });
        }
        Self::new(self.start, step_minutes, (total / step_minutes as u64) as usize)
    }

    /// Calendar month containing the first interval, as (year, month).
    pub fn first_month(&self) -> (i32, u32) {
        (self.start.year(), self.start.month())
    }
}

pub fn local_midnight(tz: Tz, date: NaiveDate) -> DateTime<Tz> {
    let naive = date.and_hms_opt(0, 0, 0).expect("midnight exists");
    match tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => t,
        LocalResult::Ambiguous(a, _) => a,
        // Midnight skipped by a DST jump: take the first instant of the day.
        LocalResult::None => (1..=180)
            .find_map(|m| tz.from_local_datetime(&(naive + Duration::minutes(m))).earliest())
            .expect("local day has a first instant"),
    }
}

pub fn format_timestamp(ts: &DateTime<Tz>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

fn check_series<T: Scalar>(
    what: &'static str,
    values: &[T],
    grid: &TimeGrid,
    max: Option<f64>,
) -> Result<(), ProfileError> {
    if values.len() != grid.count() {
        return Err(ProfileError::LengthMismatch {
            what,
            got: values.len(),
            expected: grid.count(),
        });
    }
    for (index, &v) in values.iter().enumerate() {
        let problem = if !v.is_finite() {
            "not finite"
        } else if v < T::zero() {
            "negative"
        } else if max.is_some_and(|m| v.to_f64_lossy() > m) {
            "above the per-kW limit"
        } else {
            continue;
        };
        return Err(ProfileError::BadValue {
            what,
            index,
            value: v.to_f64_lossy(),
            problem,
        });
    }
    Ok(())
}

/// Base demand and PV generation on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteProfile<T> {
    grid: TimeGrid,
    base_demand_kw: Vec<T>,
    pv_generation_kw: Vec<T>,
}

impl<T: Scalar> SiteProfile<T> {
    pub fn new(grid: TimeGrid, base_demand_kw: Vec<T>, pv_generation_kw: Vec<T>) -> Result<Self, ProfileError> {
        check_series("base_demand_kw", &base_demand_kw, &grid, None)?;
        check_series("pv_generation_kw", &pv_generation_kw, &grid, None)?;
        Ok(Self {
            grid,
            base_demand_kw,
            pv_generation_kw,
        })
    }

    /// Site without PV.
    pub fn load_only(grid: TimeGrid, base_demand_kw: Vec<T>) -> Result<Self, ProfileError> {
        let zeros = vec![T::zero(); base_demand_kw.len()];
        Self::new(grid, base_demand_kw, zeros)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn base_demand_kw(&self) -> &[T] {
        &self.base_demand_kw
    }

    pub fn pv_generation_kw(&self) -> &[T] {
        &self.pv_generation_kw
    }

    pub fn with_pv(&self, pv_generation_kw: Vec<T>) -> Result<Self, ProfileError> {
        Self::new(self.grid.clone(), self.base_demand_kw.clone(), pv_generation_kw)
    }

    /// The part of this profile covering `target` (same step, contained span).
    pub fn slice(&self, target: &TimeGrid) -> Result<Self, ProfileError> {
        let range = covered_range(&self.grid, target)?;
        Ok(Self {
            grid: target.clone(),
            base_demand_kw: self.base_demand_kw[range.clone()].to_vec(),
            pv_generation_kw: self.pv_generation_kw[range].to_vec(),
        })
    }

    pub fn resampled(&self, to_step: u32) -> Result<Self, ProfileError> {
        let from = self.grid.step_minutes();
        Self::new(
            self.grid.with_step(to_step)?,
            resample(&self.base_demand_kw, from, to_step)?,
            resample(&self.pv_generation_kw, from, to_step)?,
        )
    }

    pub fn peak_demand_kw(&self) -> T {
        self.base_demand_kw.iter().copied().fold(T::zero(), T::max)
    }

    pub fn total_demand_kwh(&self) -> T {
        let h: T = self.grid.step_hours();
        self.base_demand_kw.iter().copied().sum::<T>() * h
    }
}

/// PV output per kW of installed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct PvUnitProfile<T> {
    grid: TimeGrid,
    per_kw_output: Vec<T>,
}

impl<T: Scalar> PvUnitProfile<T> {
    pub fn new(grid: TimeGrid, per_kw_output: Vec<T>) -> Result<Self, ProfileError> {
        check_series("per_kw_output", &per_kw_output, &grid, Some(MAX_PV_UNIT_OUTPUT))?;
        Ok(Self { grid, per_kw_output })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn per_kw_output(&self) -> &[T] {
        &self.per_kw_output
    }

    pub fn slice(&self, target: &TimeGrid) -> Result<Self, ProfileError> {
        let range = covered_range(&self.grid, target)?;
        Ok(Self {
            grid: target.clone(),
            per_kw_output: self.per_kw_output[range].to_vec(),
        })
    }

    pub fn resampled(&self, to_step: u32) -> Result<Self, ProfileError> {
        Self::new(
            self.grid.with_step(to_step)?,
            resample(&self.per_kw_output, self.grid.step_minutes(), to_step)?,
        )
    }

    /// Annual (or whole-profile) energy per kW of capacity.
    pub fn energy_per_kw(&self) -> T {
        let h: T = self.grid.step_hours();
        self.per_kw_output.iter().copied().sum::<T>() * h
    }
}

fn covered_range(outer: &TimeGrid, target: &TimeGrid) -> Result<std::ops::Range<usize>, ProfileError> {
    let not_covered = || {
        ProfileError::NotCovered(format!(
            "{} .. {} at {} min",
            format_timestamp(&target.start()),
            format_timestamp(&target.end()),
            target.step_minutes()
        ))
    };
    if outer.step_minutes() != target.step_minutes() {
        return Err(not_covered());
    }
    let offset = outer.index_of(&target.start()).ok_or_else(not_covered)?;
    if offset + target.count() > outer.count() {
        return Err(not_covered());
    }
    Ok(offset..offset + target.count())
}

/// Output of a PV system of `capacity_kw`.
pub fn scale_pv<T: Scalar>(unit: &PvUnitProfile<T>, capacity_kw: T) -> Result<Vec<T>, ProfileError> {
    if !capacity_kw.is_finite() || capacity_kw < T::zero() {
        return Err(ProfileError::BadCapacity(capacity_kw.to_f64_lossy()));
    }
    Ok(unit.per_kw_output.iter().map(|&u| u * capacity_kw).collect())
}

/// Changes the step of a power series. Downsampling averages each group of
/// fine intervals; upsampling repeats each coarse value.
pub fn resample<T: Scalar>(series: &[T], from_step: u32, to_step: u32) -> Result<Vec<T>, ProfileError> {
    let incompatible = ProfileError::IncompatibleSteps {
        from: from_step,
        to: to_step,
    };
    if from_step == 0 || to_step == 0 {
        return Err(incompatible);
    }
    if to_step == from_step {
        Ok(series.to_vec())
    } else if to_step.is_multiple_of(from_step) {
        let factor = (to_step / from_step) as usize;
        if !series.len().is_multiple_of(factor) {
            return Err(ProfileError::RaggedSeries {
                len: series.len(),
                factor,
            });
        }
        let n = T::of(factor as f64);
        Ok(series
            .chunks(factor)
            .map(|c| c.iter().copied().sum::<T>() / n)
            .collect())
    } else if from_step.is_multiple_of(to_step) {
        let factor = (from_step / to_step) as usize;
        Ok(series
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, factor))
            .collect())
    } else {
        Err(incompatible)
    }
}

// ------------------------------------------------------------------- CSV

fn parse_timestamp(text: &str, tz: Tz, previous: Option<DateTime<Tz>>) -> Result<DateTime<Tz>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.with_timezone(&tz));
    }
    let naive = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .ok_or_else(|| format!("unparseable timestamp `{text}`"))?;
    match tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => Ok(t),
        // Repeated wall-clock hour: take the earlier instant unless the
        // previous row already used it.
        LocalResult::Ambiguous(a, b) => Ok(if previous.is_some_and(|p| p >= a) { b } else { a }),
        LocalResult::None => Err(format!("local time `{text}` does not exist in {tz}")),
    }
}

/// Reads a two-column profile CSV (`timestamp,<value_header>`) that must
/// supply exactly one row per interval of `grid`, in order.
pub fn read_profile<T: Scalar, R: Read>(reader: R, grid: &TimeGrid, value_header: &str) -> Result<Vec<T>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != value_header {
        return Err(ProfileError::Parse {
            line: 1,
            message: format!("expected header `timestamp,{value_header}`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let tz = grid.timezone();
    let mut values = Vec::with_capacity(grid.count());
    let mut previous: Option<DateTime<Tz>> = None;
    let mut last_line = 1;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        last_line = line;
        if record.len() != 2 {
            return Err(ProfileError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0], tz, previous).map_err(|message| ProfileError::Parse { line, message })?;
        let value: f64 = record[1].parse().map_err(|_| ProfileError::Parse {
            line,
            message: format!("non-numeric value `{}`", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(ProfileError::Parse {
                line,
                message: format!("non-finite value `{}`", &record[1]),
            });
        }
        if previous == Some(ts) {
            return Err(ProfileError::DuplicateTimestamp {
                line,
                timestamp: format_timestamp(&ts),
            });
        }
        let index = values.len();
        if index >= grid.count() {
            return Err(ProfileError::ExtraRow { line });
        }
        let expected = grid.timestamp(index);
        if ts != expected {
            if ts > expected && grid.index_of(&ts).is_some() {
                return Err(ProfileError::MissingInterval {
                    line,
                    timestamp: format_timestamp(&expected),
                });
            }
            return Err(ProfileError::Misaligned {
                line,
                timestamp: format_timestamp(&ts),
                expected: format_timestamp(&expected),
            });
        }
        values.push(T::of(value));
        previous = Some(ts);
    }
    if values.len() < grid.count() {
        return Err(ProfileError::MissingInterval {
            line: last_line + 1,
            timestamp: format_timestamp(&grid.timestamp(values.len())),
        });
    }
    Ok(values)
}

/// Reads a base-demand profile (`timestamp,kw`) from a file.
pub fn parse_profile_csv<T: Scalar>(path: &Path, grid: &TimeGrid) -> Result<Vec<T>, ProfileError> {
    read_profile(std::fs::File::open(path)?, grid, DEMAND_HEADER)
}

/// Reads a PV unit profile (`timestamp,kw_per_kw`) from a file.
pub fn parse_pv_unit_csv<T: Scalar>(path: &Path, grid: &TimeGrid) -> Result<PvUnitProfile<T>, ProfileError> {
    let values = read_profile(std::fs::File::open(path)?, grid, PV_UNIT_HEADER)?;
    PvUnitProfile::new(grid.clone(), values)
}

/// Writes a profile CSV readable by [`read_profile`]. Values are written in
/// shortest round-trip decimal form.
pub fn write_profile<T: Scalar, W: Write>(writer: W, grid: &TimeGrid, values: &[T], value_header: &str) -> Result<(), ProfileError> {
    if values.len() != grid.count() {
        return Err(ProfileError::LengthMismatch {
            what: "series",
            got: values.len(),
            expected: grid.count(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", value_header])?;
    for (t, v) in values.iter().enumerate() {
        w.write_record([format_timestamp(&grid.timestamp(t)), format!("{}", v.to_f64_lossy())])?;
    }
    w.flush()?;
    Ok(())
}
