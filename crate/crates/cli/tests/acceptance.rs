//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//! Runs against the shipped profiles, tariffs and case configs under `data/`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use billopt_cli::commands::{cmd_sweep, run_sweeps};
use billopt_cli::{Inputs, Overrides, RunConfig};
use billopt_core::analysis::{annual_bill, AnnualResult, MonthResult, Scenario, SweepParameter, SweepResult};
use billopt_core::bes::{validate_dispatch, BatterySpec};
use billopt_core::billing::{bill_of_dispatch, bill_of_net_demand, brute_force_optimal};
use billopt_core::lp_model::{build_instance, solve_month, MonthlyInstance};
use billopt_core::SolverConfig;
use common::{random_feasible_dispatch, random_instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const VALIDATION_TOL: f64 = 1e-6;
const SIGN_TOL: f64 = 1e-6;
const EXACT_TOL: f64 = 1e-9;
const HOMOGENEITY_TOL: f64 = 1e-8;
const ORACLE_GAP: f64 = 0.01;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const LOWER_BOUND_BUDGET: Duration = Duration::from_secs(30);
const MONTH_BUDGET: Duration = Duration::from_secs(10);
const YEAR_BUDGET: Duration = Duration::from_secs(120);

#[derive(Default)]
struct Outcome {
    lines: Vec<(u32, bool, String)>,
}

impl Outcome {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        eprintln!("     criterion {id} done");
        self.lines.push((id, pass, format!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" })));
    }

    /// Prints the lines in criterion order; returns the number of failures.
    fn finish(mut self) -> usize {
        self.lines.sort_by_key(|l| l.0);
        for (_, _, line) in &self.lines {
            println!("{line}");
        }
        self.lines.iter().filter(|l| !l.1).count()
    }
}

/// Counts dispatches checked and the violations found.
#[derive(Default)]
struct Validation {
    checked: usize,
    failures: Vec<String>,
}

impl Validation {
    fn check(&mut self, what: &str, spec: &BatterySpec<f64>, m: &MonthResult<f64>) {
        self.checked += 1;
        let v = validate_dispatch(spec, &m.solution.dispatch, &m.base_kw, VALIDATION_TOL).expect("lengths");
        if let Some(first) = v.first() {
            self.failures.push(format!("{what} {}-{:02}: {:?} at {} by {}", m.year, m.month, first.rule, first.interval, first.excess));
        }
    }

    fn check_instance(&mut self, what: &str, inst: &MonthlyInstance<f64>, d: &billopt_core::BatteryDispatch) {
        self.checked += 1;
        let v = validate_dispatch(&inst.spec, d, &inst.base_kw, VALIDATION_TOL).expect("lengths");
        if let Some(first) = v.first() {
            self.failures.push(format!("{what}: {:?} at {} by {}", first.rule, first.interval, first.excess));
        }
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn exact_sum(a: &AnnualResult<f64>) -> bool {
    a.months.iter().fold(0.0, |s, m| s + m.solution.bill.total) == a.total && a.months.len() == 12
}

fn non_increasing(v: &[f64], scale: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + SIGN_TOL * scale)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Sweep results of one case config, indexed `[tariff][sweep]` in the order of `SWEEPS`.
struct Case {
    label: &'static str,
    cfg: RunConfig,
    inputs: Inputs,
    sweeps: Vec<Vec<SweepResult<f64>>>,
}

const SWEEPS: [SweepParameter; 4] = [
    SweepParameter::PvCapacityNoBes,
    SweepParameter::PvCapacity,
    SweepParameter::BesPower { duration_hours: 2.0 },
    SweepParameter::BesPower { duration_hours: 4.0 },
];

impl Case {
    fn load(label: &'static str, file: &str) -> Self {
        let cfg = RunConfig::load(&data_dir().join("configs").join(file), &Overrides::default()).expect("config");
        let inputs = Inputs::load(&cfg).expect("inputs");
        let specs: Vec<_> = SWEEPS.iter().map(|&p| cfg.sweep_spec(p).expect("grid")).collect();
        let started = Instant::now();
        let sweeps = run_sweeps(&scenario(&cfg, &inputs), &inputs.tariffs, &specs, &cfg.solver).expect("sweeps");
        eprintln!("     {label}: {} annual bills in {:.1?}", sweeps.len() * 40, started.elapsed());
        Self { label, cfg, inputs, sweeps }
    }

    fn series(&self, tariff: usize, sweep: usize) -> &SweepResult<f64> {
        &self.sweeps[tariff][sweep]
    }

    fn tariff_index(&self, name: &str) -> usize {
        self.inputs.tariffs.iter().position(|t| t.name() == name).expect("tariff shipped")
    }

    /// Without-battery minus with-battery annual bill at each PV value.
    fn bva(&self, tariff: usize) -> Vec<f64> {
        let (a, b) = (self.series(tariff, 0).totals(), self.series(tariff, 1).totals());
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
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

fn month_instance(case: &Case, tariff: usize, month: u32, pv: f64, spec: &BatterySpec<f64>) -> MonthlyInstance<f64> {
    let c = &case.cfg;
    build_instance(&case.inputs.site, &case.inputs.tariffs[tariff], spec, c.year, month, pv, case.inputs.pv_unit.as_ref()).expect("instance")
}

fn criterion_oracle(out: &mut Outcome, val: &mut Validation) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_gap, mut below, mut not_monotone) = (0.0f64, 0, 0);
    let cases = 20;
    for case in 0..cases {
        let n = 6 + case % 7;
        let inst = random_instance(&mut rng, n, 60);
        let lp = solve_month(&inst, &SolverConfig::default(), None).expect("lp");
        val.check_instance(&format!("oracle case {case}"), &inst, &lp.dispatch);
        let scale = lp.objective_value.abs();
        let mut prev = f64::INFINITY;
        for levels in [5, 9, 17] {
            let o = brute_force_optimal(&inst, levels).expect("oracle").bill.total;
            if o < lp.objective_value - SIGN_TOL * (1.0 + scale) {
                below += 1;
            }
            if o > prev + EXACT_TOL * (1.0 + scale) {
                not_monotone += 1;
            }
            prev = o;
        }
        worst_gap = worst_gap.max((prev - lp.objective_value) / scale);
    }
    let elapsed = started.elapsed();
    out.record(
        1,
        "oracle equivalence",
        below == 0 && not_monotone == 0 && worst_gap <= ORACLE_GAP && elapsed < ORACLE_BUDGET,
        format!(
            "{cases} instances of 6-12 intervals; oracle below LP {below}x, gap grew {not_monotone}x, worst 17-level gap {:.3}% (limit 1%), {elapsed:.1?} (limit 60 s)",
            100.0 * worst_gap
        ),
    );
}

fn criterion_lower_bound(out: &mut Outcome, val: &mut Validation) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut violations, mut rejected, mut tightest) = (0, 0, f64::INFINITY);
    for case in 0..5 {
        let inst = random_instance(&mut rng, 24, 60);
        let lp = solve_month(&inst, &SolverConfig::default(), None).expect("lp");
        val.check_instance(&format!("lower-bound case {case}"), &inst, &lp.dispatch);
        let opt = lp.objective_value;
        for _ in 0..100 {
            let d = random_feasible_dispatch(&mut rng, &inst);
            match bill_of_dispatch(&inst, &d) {
                Ok(b) => {
                    let slack = b.total - opt + SIGN_TOL * (1.0 + opt.abs());
                    tightest = tightest.min(b.total - opt);
                    if slack < 0.0 {
                        violations += 1;
                    }
                }
                Err(_) => rejected += 1,
            }
        }
    }
    let elapsed = started.elapsed();
    out.record(
        2,
        "feasible-dispatch lower bound",
        violations == 0 && rejected == 0 && elapsed < LOWER_BOUND_BUDGET,
        format!("5 hourly days x 100 dispatches; below optimum {violations}x, rejected by validator {rejected}x, smallest excess ${tightest:.4}, {elapsed:.1?} (limit 30 s)"),
    )
}

fn criterion_zero_assets(out: &mut Outcome, cases: &[&Case]) {
    let (mut worst, mut count) = (0.0f64, 0);
    for case in cases {
        for t in 0..case.inputs.tariffs.len() {
            for month in 1..=12 {
                let inst = month_instance(case, t, month, 0.0, &BatterySpec::none());
                let lp = solve_month(&inst, &case.cfg.solver, None).expect("lp").objective_value;
                let direct = bill_of_net_demand(&inst, &inst.base_kw).total;
                worst = worst.max(rel(lp, direct));
                count += 1;
            }
        }
    }
    out.record(
        4,
        "zero-asset reduction",
        worst <= EXACT_TOL,
        format!("{count} months (both sites, every tariff); worst relative difference {worst:.2e} (limit 1e-9)"),
    );
}

fn criterion_homogeneity(out: &mut Outcome, case: &Case, val: &mut Validation) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for name in ["E19TOU", "B19OpS"] {
        let t = case.tariff_index(name);
        let doubled = case.inputs.tariffs[t].scaled(2.0).expect("scaled tariff");
        for month in [1, 4, 7] {
            let inst = month_instance(case, t, month, case.cfg.pv_capacity_kw, &case.cfg.battery);
            let a = solve_month(&inst, &case.cfg.solver, None).expect("lp");
            val.check_instance(&format!("homogeneity {name} {month}"), &inst, &a.dispatch);
            let inst2 = build_instance(
                &case.inputs.site,
                &doubled,
                &case.cfg.battery,
                case.cfg.year,
                month,
                case.cfg.pv_capacity_kw,
                case.inputs.pv_unit.as_ref(),
            )
            .expect("instance");
            let b = solve_month(&inst2, &case.cfg.solver, a.basis.as_ref()).expect("lp");
            worst = worst.max(rel(b.objective_value, 2.0 * a.objective_value));
            count += 1;
        }
    }
    out.record(
        5,
        "homogeneity",
        worst <= HOMOGENEITY_TOL,
        format!("{count} months (Jan, Apr, Jul; E19TOU and B19OpS; {} site with PV and battery); worst relative deviation {worst:.2e} (limit 1e-8)", case.label),
    );
}

fn criterion_pv_monotone(out: &mut Outcome, cases: &[&Case]) {
    let mut bad = Vec::new();
    for case in cases {
        for (t, tariff) in case.inputs.tariffs.iter().enumerate() {
            for s in [0, 1] {
                let v = case.series(t, s).totals();
                if !non_increasing(&v, v[0].abs()) {
                    bad.push(format!("{} {} {}", case.label, tariff.name(), SWEEPS[s]));
                }
            }
        }
    }
    out.record(
        6,
        "PV monotonicity",
        bad.is_empty(),
        if bad.is_empty() {
            "10-point PV grids to case size, with and without battery, every tariff, both sites: non-increasing".into()
        } else {
            format!("increasing in {}", bad.join(", "))
        },
    );
}

fn criterion_bes(out: &mut Outcome, cases: &[&Case]) {
    let (mut bad, mut min_bva, mut zero_dev) = (Vec::new(), f64::INFINITY, 0.0f64);
    for case in cases {
        for (t, tariff) in case.inputs.tariffs.iter().enumerate() {
            let no_bes = *case.series(t, 0).totals().last().expect("points");
            let scale = no_bes.abs();
            for s in [2, 3] {
                let sweep = case.series(t, s);
                let v = sweep.totals();
                if !non_increasing(&v, scale) {
                    bad.push(format!("{} {} {}", case.label, tariff.name(), SWEEPS[s]));
                }
                for &b in &v {
                    min_bva = min_bva.min((no_bes - b) / scale);
                }
                zero_dev = zero_dev.max((no_bes - v[0]).abs() / scale);
            }
            for (x, a) in case.bva(t).iter().zip(case.series(t, 0).totals()) {
                min_bva = min_bva.min(x / a.abs());
            }
        }
    }
    out.record(
        7,
        "battery monotonicity and BVA sign",
        bad.is_empty() && min_bva >= -SIGN_TOL && zero_dev <= SIGN_TOL,
        format!(
            "2 h and 4 h power grids non-increasing{}; smallest BVA/scale {min_bva:.2e} (limit -1e-6); |BVA| at zero power / scale {zero_dev:.2e} (limit 1e-6)",
            if bad.is_empty() { String::new() } else { format!(" except {}", bad.join(", ")) }
        ),
    );
}

fn criterion_aggregation(out: &mut Outcome, cases: &[&Case], val: &mut Validation) {
    let (mut annuals, mut inexact) = (0, 0);
    for case in cases {
        for per_tariff in &case.sweeps {
            for sweep in per_tariff {
                for p in &sweep.points {
                    annuals += 1;
                    if !exact_sum(&p.annual) {
                        inexact += 1;
                    }
                    for m in &p.annual.months {
                        val.check(&format!("{} {} {}={}", case.label, sweep.tariff, sweep.parameter, p.value), &p.spec, m);
                    }
                }
            }
        }
    }
    out.record(
        8,
        "annual aggregation",
        inexact == 0,
        format!("{annuals} annual results; {inexact} differ from the sum of their 12 months"),
    );
}

fn criterion_trends(out: &mut Outcome, mep: &Case, mdp: &Case, val: &mut Validation) {
    let (e19, b19) = (mep.tariff_index("E19TOU"), mep.tariff_index("B19TOU"));
    let last = |c: &Case, t: usize, s: usize| *c.series(t, s).totals().last().expect("points");
    let (a_e, a_b) = (last(mep, e19, 1), last(mep, b19, 1));
    let a = a_b > a_e;

    // Small assets: first nonzero point of the PV and 2 h battery grids together.
    let pv = mdp.series(e19, 1).points[1].value;
    let spec = mdp.series(e19, 2).points[1].spec;
    let mut small = Vec::new();
    for t in [e19, b19] {
        let warm = mdp.series(t, 1).points[1].annual.bases();
        let r = annual_bill(&mdp.inputs.site, &mdp.inputs.tariffs[t], &spec, pv, mdp.inputs.pv_unit.as_ref(), &mdp.cfg.solver, Some(&warm))
            .expect("annual");
        for m in &r.months {
            val.check("small-asset run", &spec, m);
        }
        small.push(r.total);
    }
    let b = small[1] < small[0];

    let mut c = true;
    let mut leaders = Vec::new();
    for case in [mep, mdp] {
        let bva: Vec<(String, f64)> = case
            .inputs
            .tariffs
            .iter()
            .enumerate()
            .map(|(t, tariff)| (tariff.name().to_string(), *case.bva(t).last().expect("points")))
            .collect();
        let best = bva.iter().max_by(|x, y| x.1.total_cmp(&y.1)).expect("tariffs");
        let runner_up = bva.iter().filter(|x| x.0 != best.0).map(|x| x.1).fold(f64::MIN, f64::max);
        c &= best.0 == "B19OpS";
        leaders.push(format!("{} {} ${:.0} vs next ${runner_up:.0}", case.label, best.0, best.1));
    }
    out.record(
        9,
        "qualitative trends (shipped tariffs)",
        a && b && c,
        format!(
            "(a) {} case sizes B19TOU ${a_b:.0} > E19TOU ${a_e:.0}: {a}; (b) {} at PV {pv:.1} kW, battery {:.1} kW B19TOU ${:.0} < E19TOU ${:.0}: {b}; (c) largest BVA {}: {c}",
            mep.label,
            mdp.label,
            spec.power_rating_kw,
            small[1],
            small[0],
            leaders.join("; ")
        ),
    );
}

fn criterion_performance(out: &mut Outcome, case: &Case, val: &mut Validation) {
    let t = case.tariff_index("E19TOU");
    let inst = month_instance(case, t, 7, case.cfg.pv_capacity_kw, &case.cfg.battery);
    let started = Instant::now();
    let sol = solve_month(&inst, &case.cfg.solver, None).expect("lp");
    let month = started.elapsed();
    val.check_instance("performance month", &inst, &sol.dispatch);
    let started = Instant::now();
    let year = annual_bill(
        &case.inputs.site,
        &case.inputs.tariffs[t],
        &case.cfg.battery,
        case.cfg.pv_capacity_kw,
        case.inputs.pv_unit.as_ref(),
        &case.cfg.solver,
        None,
    )
    .expect("annual");
    let annual = started.elapsed();
    let shape_ok = inst.len() == 744 && inst.demand_periods.len() >= 2;
    out.record(
        10,
        "performance floor",
        shape_ok && month < MONTH_BUDGET && annual < YEAR_BUDGET && exact_sum(&year),
        format!(
            "July, {} hourly intervals, {} TOU demand periods, battery: {month:.2?} (limit 10 s); 12 months cold: {annual:.1?} (limit 2 min)",
            inst.len(),
            inst.demand_periods.len()
        ),
    );
}

fn criterion_determinism(out: &mut Outcome, case: &Case) {
    let mut cfg = case.cfg.clone();
    cfg.sweep_parameters = vec![SweepParameter::BesPower { duration_hours: 2.0 }];
    cfg.sweep_values.clear();
    cfg.sweep_values.insert("bes_power_2h".into(), vec![0.0, 125.0, 250.0]);
    let mut inputs = case.inputs.clone();
    inputs.tariffs.retain(|t| t.name() == "E19TOU" || t.name() == "B19OpS");
    let dir = tempfile::tempdir().expect("tempdir");
    let runs: Vec<Vec<(PathBuf, Vec<u8>)>> = ["first", "second"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let files = cmd_sweep(&cfg, &inputs, &out).expect("sweep");
            files
                .into_iter()
                .map(|f| {
                    let bytes = std::fs::read(&f).expect("read csv");
                    (f.strip_prefix(&out).expect("inside out dir").to_path_buf(), bytes)
                })
                .collect()
        })
        .collect();
    let identical = runs[0] == runs[1];
    out.record(
        11,
        "determinism",
        identical && !runs[0].is_empty(),
        format!("two sweep runs ({} site, E19TOU and B19OpS, 3-point 2 h grid): {} CSVs, byte-identical: {identical}", case.label, runs[0].len()),
    );
}

fn main() {
    // Cargo passes harness flags such as --list; only a plain run executes the suite.
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut out = Outcome::default();
    let mut val = Validation::default();

    criterion_oracle(&mut out, &mut val);
    criterion_lower_bound(&mut out, &mut val);

    let mep = Case::load("MEP", "mep.toml");
    let mdp = Case::load("MDP", "mdp.toml");
    let cases = [&mep, &mdp];

    criterion_zero_assets(&mut out, &cases);
    criterion_homogeneity(&mut out, &mep, &mut val);
    criterion_pv_monotone(&mut out, &cases);
    criterion_bes(&mut out, &cases);
    criterion_aggregation(&mut out, &cases, &mut val);
    criterion_trends(&mut out, &mep, &mdp, &mut val);
    criterion_performance(&mut out, &mep, &mut val);
    criterion_determinism(&mut out, &mep);

    out.record(
        3,
        "constraint satisfaction",
        val.failures.is_empty(),
        if val.failures.is_empty() {
            format!("{} LP dispatches from this suite pass validation at 1e-6 (terminal SOC and no-export included)", val.checked)
        } else {
            format!("{} of {} dispatches invalid; first: {}", val.failures.len(), val.checked, val.failures[0])
        },
    );
    let failed = out.finish();
    println!("acceptance: {failed} of 11 criteria failed, {:.1?}", started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
