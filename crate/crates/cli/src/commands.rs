use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use billopt_core::analysis::{
    annual_bill, bva_sweep, eligibility, month_bill, relative_to_baseline, sweep_tariff, AnalysisError, AnnualResult,
    BvaSweep, Scenario, SweepResult, SweepSpec,
};
use billopt_core::report::{
    write_bva_csv, write_dispatch_csv, write_monthly_csv, write_sweep_detail_csv, write_sweep_summary_csv,
    write_wide_csv, CsvResult,
};
use billopt_core::tariff::{TariffOption, TariffSchedule};
use billopt_core::SolverConfig;

use crate::config::{Inputs, RunConfig};
use crate::error::CliError;

/// Classifies analysis failures: solver trouble, bad input data, or bad configuration.
pub fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Solve { .. } => CliError::Solver(e.to_string()),
        AnalysisError::Instance { .. } | AnalysisError::NotAYear | AnalysisError::Tariff(_) => CliError::Data(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

/// File-system-safe form of a tariff name.
pub fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn write_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> CsvResult) -> Result<PathBuf, CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f(BufWriter::new(file)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

fn ensure_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

/// Runs `job` once per tariff on scoped threads; results keep the tariff order.
fn per_tariff<R: Send>(
    tariffs: &[TariffSchedule],
    job: impl Fn(&TariffSchedule) -> Result<R, AnalysisError> + Sync,
) -> Result<Vec<R>, CliError> {
    let results: Vec<Result<R, AnalysisError>> = std::thread::scope(|s| {
        let handles: Vec<_> = tariffs.iter().map(|t| s.spawn(|| job(t))).collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    results.into_iter().map(|r| r.map_err(analysis_error)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BillOutcome {
    pub tariff: String,
    pub total: f64,
    pub files: Vec<PathBuf>,
    pub warning: Option<String>,
}

/// Bills every configured tariff (one month if the config names one) and writes
/// `bill_<tariff>_monthly.csv` and `bill_<tariff>_dispatch.csv`.
pub fn cmd_bill(cfg: &RunConfig, inputs: &Inputs, out: &Path) -> Result<Vec<BillOutcome>, CliError> {
    ensure_dir(out)?;
    let pv = cfg.pv_capacity_kw;
    let annuals = per_tariff(&inputs.tariffs, |t| bill_for(cfg, inputs, t, &cfg.solver))?;
    let mut outcomes = Vec::new();
    for (tariff, annual) in inputs.tariffs.iter().zip(annuals) {
        let stem = file_stem(tariff.name());
        let monthly = write_file(&out.join(format!("bill_{stem}_monthly.csv")), |w| write_monthly_csv(w, tariff.name(), &annual))?;
        let dispatch = write_file(&out.join(format!("bill_{stem}_dispatch.csv")), |w| write_dispatch_csv(w, &annual.months))?;
        let warning = if tariff.option() == TariffOption::Base {
            None
        } else {
            let e = eligibility(&inputs.site, tariff, &cfg.battery, pv, inputs.pv_unit.as_ref()).map_err(analysis_error)?;
            (!e.eligible).then(|| format!("{} eligibility not met: {}", tariff.name(), e.reason))
        };
        outcomes.push(BillOutcome {
            tariff: tariff.name().to_string(),
            total: annual.total,
            files: vec![monthly, dispatch],
            warning,
        });
    }
    Ok(outcomes)
}

fn bill_for(cfg: &RunConfig, inputs: &Inputs, tariff: &TariffSchedule, solver: &SolverConfig) -> Result<AnnualResult<f64>, AnalysisError> {
    let pv_unit = inputs.pv_unit.as_ref();
    match cfg.month {
        None => annual_bill(&inputs.site, tariff, &cfg.battery, cfg.pv_capacity_kw, pv_unit, solver, None),
        Some(month) => {
            let m = month_bill(&inputs.site, tariff, &cfg.battery, cfg.pv_capacity_kw, pv_unit, solver, cfg.year, month, None)?;
            Ok(AnnualResult {
                total: m.solution.bill.total,
                months: vec![m],
            })
        }
    }
}

fn scenario<'a>(cfg: &RunConfig, inputs: &'a Inputs) -> Scenario<'a, f64> {
    Scenario {
        site: &inputs.site,
        pv_unit: inputs.pv_unit.as_ref(),
        pv_capacity_kw: cfg.pv_capacity_kw,
        spec: cfg.battery,
    }
}

type Series = Vec<(String, Vec<f64>)>;

fn relative_series(cfg: &RunConfig, series: &[(String, Vec<f64>)]) -> Result<Option<Series>, CliError> {
    cfg.baseline
        .as_deref()
        .map(|b| relative_to_baseline(series, b, cfg.relative_mode))
        .transpose()
        .map_err(analysis_error)
}

/// Runs every configured sweep. Per parameter it writes a detail CSV (one row
/// per tariff, value and month), one summary per tariff, and a wide summary
/// of annual totals (relative to the baseline when one is set).
pub fn cmd_sweep(cfg: &RunConfig, inputs: &Inputs, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let specs = cfg.sweep_specs()?;
    if specs.is_empty() {
        return Err(CliError::Config("no sweep parameters configured (sweep.parameters)".into()));
    }
    ensure_dir(out)?;
    let by_tariff = run_sweeps(&scenario(cfg, inputs), &inputs.tariffs, &specs, &cfg.solver)?;
    let mut files = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let results: Vec<SweepResult<f64>> = by_tariff.iter().map(|r| r[k].clone()).collect();
        let param = spec.parameter.to_string();
        files.push(write_file(&out.join(format!("sweep_{param}_detail.csv")), |w| write_sweep_detail_csv(w, &results))?);
        let series: Vec<(String, Vec<f64>)> = results.iter().map(|r| (r.tariff.clone(), r.totals())).collect();
        let relative = relative_series(cfg, &series)?;
        for (i, r) in results.iter().enumerate() {
            let rel = relative.as_ref().map(|s| s[i].1.as_slice());
            let path = out.join(format!("sweep_{param}_{}.csv", file_stem(&r.tariff)));
            files.push(write_file(&path, |w| write_sweep_summary_csv(w, r, rel))?);
        }
        let wide = relative.as_deref().unwrap_or(&series);
        files.push(write_file(&out.join(format!("sweep_{param}_summary.csv")), |w| write_wide_csv(w, &param, &spec.values, wide))?);
    }
    Ok(files)
}

/// All sweeps for every tariff, indexed `[tariff][sweep]`. A tariff's sweeps run
/// in order, each seeded with the bases of the previous one.
pub fn run_sweeps(
    sc: &Scenario<'_, f64>,
    tariffs: &[TariffSchedule],
    specs: &[SweepSpec],
    solver: &SolverConfig,
) -> Result<Vec<Vec<SweepResult<f64>>>, CliError> {
    per_tariff(tariffs, |t| {
        let mut done: Vec<SweepResult<f64>> = Vec::with_capacity(specs.len());
        for spec in specs {
            let start = done.last().and_then(SweepResult::final_bases);
            done.push(sweep_tariff(sc, t, spec, solver, start.as_deref())?);
        }
        Ok(done)
    })
}

/// BVA over the PV grid for every tariff: `bva_<tariff>.csv` each and a wide
/// `bva_summary.csv` (relative to the baseline's BVA when one is set).
pub fn cmd_bva(cfg: &RunConfig, inputs: &Inputs, out: &Path) -> Result<(Vec<BvaSweep<f64>>, Vec<PathBuf>), CliError> {
    ensure_dir(out)?;
    let sc = scenario(cfg, inputs);
    let pv_grid = cfg.pv_grid()?;
    let nested = per_tariff(&inputs.tariffs, |t| bva_sweep(&sc, std::slice::from_ref(t), &pv_grid, &cfg.solver))?;
    let bva: Vec<BvaSweep<f64>> = nested.into_iter().flatten().collect();
    let series: Vec<(String, Vec<f64>)> = bva.iter().map(|b| (b.tariff.clone(), b.bva.clone())).collect();
    let relative = relative_series(cfg, &series)?;
    let mut files = Vec::new();
    for (i, b) in bva.iter().enumerate() {
        let rel = relative.as_ref().map(|s| s[i].1.as_slice());
        files.push(write_file(&out.join(format!("bva_{}.csv", file_stem(&b.tariff))), |w| write_bva_csv(w, b, rel))?);
    }
    let values = bva.first().map(|b| b.pv_capacity_kw.clone()).unwrap_or_default();
    let wide = relative.as_deref().unwrap_or(&series);
    files.push(write_file(&out.join("bva_summary.csv"), |w| write_wide_csv(w, "pv_capacity_kw", &values, wide))?);
    Ok((bva, files))
}

/// Parses and coverage-checks a tariff file; returns a short description.
pub fn cmd_validate_tariff(path: &Path) -> Result<String, CliError> {
    let t = TariffSchedule::load(path).map_err(|e| match e {
        billopt_core::tariff::TariffError::Io { .. } => CliError::Config(e.to_string()),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })?;
    let f = t.file();
    let seasons: Vec<&str> = f.seasons.iter().map(|s| s.name.as_str()).collect();
    Ok(format!(
        "{}: ok ({} option, timezone {}, seasons [{}], periods [{}], {} windows)",
        t.name(),
        match t.option() {
            TariffOption::Base => "base",
            TariffOption::OptionR => "option-r",
            TariffOption::OptionS => "option-s",
        },
        t.timezone(),
        seasons.join(", "),
        t.periods().join(", "),
        f.windows.len()
    ))
}
