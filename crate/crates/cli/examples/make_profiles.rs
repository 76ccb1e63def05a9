//! Writes the synthetic hourly 2019 profiles shipped under `data/profiles`.
//!
//! cargo run -p billopt-cli --example make_profiles -- [OUT_DIR]
//!
//! * `mep_load_2019.csv`: commercial load peaking in the morning and evening, max 220.9 kW.
//! * `mdp_load_2019.csv`: load peaking at midday, max 326.5 kW.
//! * `pv_unit_2019.csv`: output per kW of PV at about 37.5 N, about 1700 kWh/kW per year.
//!
//! Output is deterministic (fixed seed).

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;

use billopt_core::profiles::{write_profile, TimeGrid, DEMAND_HEADER, PV_UNIT_HEADER};
use chrono::{Datelike, Timelike, Weekday};
use chrono_tz::America::Los_Angeles;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const YEAR: i32 = 2019;
const SEED: u64 = 20_190_101;
const MEP_MAX_KW: f64 = 220.9;
const MDP_MAX_KW: f64 = 326.5;
const PV_KWH_PER_KW: f64 = 1700.0;
const LATITUDE_DEG: f64 = 37.5;
const LONGITUDE_DEG: f64 = -122.0;

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((hour - center) / width).powi(2)).exp()
}

/// Summer weighting in [0, 1]: 1 in mid-July, 0 in mid-January.
fn summer(day_of_year: f64) -> f64 {
    0.5 - 0.5 * (2.0 * PI * (day_of_year - 15.0) / 365.0).cos()
}

fn mep_shape(hour: f64, doy: f64, workday: bool) -> f64 {
    let level = if workday { 1.0 } else { 0.55 };
    0.35 + level * (0.55 * bump(hour, 8.5, 1.6) + 0.65 * bump(hour, 19.0, 1.8) + 0.25 * bump(hour, 13.5, 2.5))
        * (0.85 + 0.25 * summer(doy))
}

fn mdp_shape(hour: f64, doy: f64, workday: bool) -> f64 {
    let level = if workday { 1.0 } else { 0.5 };
    0.25 + level * (0.8 * bump(hour, 13.5, 2.6) + 0.1 * bump(hour, 8.0, 1.5)) * (0.7 + 0.45 * summer(doy))
}

/// Cosine of the solar zenith angle at a UTC instant.
fn cos_zenith(doy: f64, utc_hour: f64) -> f64 {
    let decl = (23.44f64).to_radians() * (2.0 * PI * (284.0 + doy) / 365.0).sin();
    let solar_hour = utc_hour + LONGITUDE_DEG / 15.0;
    let hour_angle = (15.0 * (solar_hour - 12.0)).to_radians();
    let lat = LATITUDE_DEG.to_radians();
    lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos()
}

fn scale_to_max(values: &mut [f64], target: f64) {
    let (argmax, max) = values.iter().cloned().enumerate().fold((0, f64::MIN), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    for v in values.iter_mut() {
        *v = (*v * target / max * 1000.0).round() / 1000.0;
    }
    values[argmax] = target;
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/profiles"));
    std::fs::create_dir_all(&out)?;
    let grid = TimeGrid::year(Los_Angeles, YEAR, 60)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let n = grid.count();
    let mut mep = Vec::with_capacity(n);
    let mut mdp = Vec::with_capacity(n);
    let mut pv = Vec::with_capacity(n);
    let mut day = None;
    let (mut weather, mut load_day) = (1.0, 1.0);
    for t in 0..n {
        let ts = grid.timestamp(t);
        let date = ts.date_naive();
        if day != Some(date) {
            day = Some(date);
            // Clear most days, with cloudier spells in winter.
            let s = summer(date.ordinal() as f64);
            weather = if rng.gen::<f64>() < 0.35 - 0.3 * s { rng.gen_range(0.2..0.7) } else { rng.gen_range(0.9..1.0) };
            load_day = rng.gen_range(0.93..1.07);
        }
        let doy = date.ordinal() as f64;
        let hour = ts.hour() as f64 + 0.5;
        let workday = !matches!(ts.weekday(), Weekday::Sat | Weekday::Sun);
        let noise = |rng: &mut ChaCha8Rng| rng.gen_range(0.97..1.03);
        mep.push(mep_shape(hour, doy, workday) * load_day * noise(&mut rng));
        mdp.push(mdp_shape(hour, doy, workday) * load_day * noise(&mut rng));

        let mid = ts.with_timezone(&chrono::Utc) + chrono::Duration::minutes(30);
        let utc_hour = mid.hour() as f64 + mid.minute() as f64 / 60.0;
        let cz = cos_zenith(mid.ordinal() as f64, utc_hour);
        pv.push(if cz > 0.0 { cz.powf(1.15) * weather } else { 0.0 });
    }
    scale_to_max(&mut mep, MEP_MAX_KW);
    scale_to_max(&mut mdp, MDP_MAX_KW);
    let energy: f64 = pv.iter().sum();
    for p in pv.iter_mut() {
        *p = ((*p * PV_KWH_PER_KW / energy).min(1.2) * 10_000.0).round() / 10_000.0;
    }

    for (name, values, header, note) in [
        ("mep_load_2019.csv", &mep, DEMAND_HEADER, "synthetic load, morning and evening peaks, max 220.9 kW"),
        ("mdp_load_2019.csv", &mdp, DEMAND_HEADER, "synthetic load, midday peak, max 326.5 kW"),
        ("pv_unit_2019.csv", &pv, PV_UNIT_HEADER, "synthetic PV output per kW installed, 37.5 N"),
    ] {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join(name))?);
        writeln!(f, "# {note}; hourly, America/Los_Angeles, {YEAR}; generated by examples/make_profiles.rs")?;
        write_profile(&mut f, &grid, values, header)?;
        f.flush()?;
        let total: f64 = values.iter().sum();
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        println!("{name}: {n} rows, max {max}, sum {total:.1}");
    }
    Ok(())
}
