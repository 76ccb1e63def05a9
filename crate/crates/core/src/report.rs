//! CSV output. Money columns carry full precision, with a `_display`
//! companion rounded to cents. Timestamps use the profile reader's format.

use std::io::Write;

use crate::analysis::{AnnualResult, BvaSweep, MonthResult, SweepResult};
use crate::billing::BillBreakdown;
use crate::profiles::format_timestamp;
use crate::Scalar;

pub type CsvResult = Result<(), csv::Error>;

pub const DISPATCH_HEADER: [&str; 8] = [
    "timestamp",
    "base_kw",
    "pv_kw",
    "charge_kw",
    "discharge_kw",
    "soc_kwh",
    "net_kw",
    "import_kw",
];

const BILL_COLUMNS: [&str; 8] = [
    "max_demand_charge",
    "tou_demand_charge",
    "energy_charge",
    "nem_revenue",
    "total",
    "total_display",
    "tou_detail",
    "cycles",
];

/// Shortest text that parses back to the same value.
pub fn num<T: Scalar>(v: T) -> String {
    v.to_string()
}

pub fn cents<T: Scalar>(v: T) -> String {
    format!("{:.2}", v.to_f64_lossy())
}

fn bill_fields<T: Scalar>(b: &BillBreakdown<T>, cycles: T) -> Vec<String> {
    let detail = b
        .tou_demand_charges
        .iter()
        .map(|(label, c)| format!("{label}={}", num(*c)))
        .collect::<Vec<_>>()
        .join(";");
    vec![
        num(b.max_demand_charge),
        num(b.tou_demand_total()),
        num(b.energy_charge),
        num(b.nem_revenue),
        num(b.total),
        cents(b.total),
        detail,
        num(cycles),
    ]
}

/// One row per interval of every month, in time order.
pub fn write_dispatch_csv<T: Scalar, W: Write>(out: W, months: &[MonthResult<T>]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DISPATCH_HEADER)?;
    for m in months {
        let s = &m.solution;
        let d = &s.dispatch;
        for (t, ts) in d.grid.timestamps().enumerate() {
            w.write_record([
                format_timestamp(&ts),
                num(m.base_kw[t]),
                num(m.pv_kw[t]),
                num(d.charge_kw[t]),
                num(d.discharge_kw[t]),
                num(d.soc_kwh[t]),
                num(s.net_demand_kw[t]),
                num(s.import_kw[t]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per month plus a final `annual` row.
pub fn write_monthly_csv<T: Scalar, W: Write>(out: W, tariff: &str, annual: &AnnualResult<T>) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tariff", "month"];
    header.extend(BILL_COLUMNS);
    header.push("simultaneous_intervals");
    w.write_record(&header)?;
    for m in &annual.months {
        let mut row = vec![tariff.to_string(), format!("{}-{:02}", m.year, m.month)];
        row.extend(bill_fields(m.bill(), m.cycles));
        row.push(m.simultaneous.len().to_string());
        w.write_record(&row)?;
    }
    let blank = String::new;
    w.write_record([
        tariff.to_string(),
        "annual".into(),
        blank(),
        blank(),
        blank(),
        blank(),
        num(annual.total),
        cents(annual.total),
        blank(),
        num(annual.cycles()),
        annual.months.iter().map(|m| m.simultaneous.len()).sum::<usize>().to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// One row per (tariff, sweep value, month).
pub fn write_sweep_detail_csv<T: Scalar, W: Write>(out: W, results: &[SweepResult<T>]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tariff", "parameter", "value", "pv_capacity_kw", "bes_power_kw", "bes_energy_kwh", "month"];
    header.extend(BILL_COLUMNS);
    w.write_record(&header)?;
    for r in results {
        for p in &r.points {
            for m in &p.annual.months {
                let mut row = vec![
                    r.tariff.clone(),
                    r.parameter.to_string(),
                    num(p.value),
                    num(p.pv_capacity_kw),
                    num(p.spec.power_rating_kw),
                    num(p.spec.energy_rating_kwh),
                    format!("{}-{:02}", m.year, m.month),
                ];
                row.extend(bill_fields(m.bill(), m.cycles));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Annual totals of one tariff's sweep; `relative` adds a column against a baseline.
pub fn write_sweep_summary_csv<T: Scalar, W: Write>(out: W, result: &SweepResult<T>, relative: Option<&[T]>) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "tariff",
        "value",
        "pv_capacity_kw",
        "bes_power_kw",
        "bes_energy_kwh",
        "annual_total",
        "annual_total_display",
        "cycles",
    ];
    if relative.is_some() {
        header.push("relative");
    }
    w.write_record(&header)?;
    for (i, p) in result.points.iter().enumerate() {
        let mut row = vec![
            result.tariff.clone(),
            num(p.value),
            num(p.pv_capacity_kw),
            num(p.spec.power_rating_kw),
            num(p.spec.energy_rating_kwh),
            num(p.annual.total),
            cents(p.annual.total),
            num(p.annual.cycles()),
        ];
        if let Some(rel) = relative {
            row.push(num(rel[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep values down the rows, one column per tariff.
pub fn write_wide_csv<T: Scalar, W: Write>(out: W, value_header: &str, values: &[T], series: &[(String, Vec<T>)]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![value_header.to_string()];
    header.extend(series.iter().map(|(name, _)| name.clone()));
    w.write_record(&header)?;
    for (i, &v) in values.iter().enumerate() {
        let mut row = vec![num(v)];
        row.extend(series.iter().map(|(_, s)| num(s[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bva_csv<T: Scalar, W: Write>(out: W, bva: &BvaSweep<T>, relative: Option<&[T]>) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "tariff",
        "pv_capacity_kw",
        "annual_without_bes",
        "annual_with_bes",
        "bva",
        "bva_display",
    ];
    if relative.is_some() {
        header.push("bva_relative");
    }
    w.write_record(&header)?;
    for i in 0..bva.bva.len() {
        let mut row = vec![
            bva.tariff.clone(),
            num(bva.pv_capacity_kw[i]),
            num(bva.without_bes[i]),
            num(bva.with_bes[i]),
            num(bva.bva[i]),
            cents(bva.bva[i]),
        ];
        if let Some(rel) = relative {
            row.push(num(rel[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
