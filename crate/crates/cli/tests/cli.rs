use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use billopt_core::billing::bill_of_net_demand;
use billopt_core::lp_model::build_instance;
use billopt_core::profiles::{read_profile, TimeGrid, DEMAND_HEADER};
use billopt_core::report::DISPATCH_HEADER;
use billopt_core::tariff::TariffSchedule;
use billopt_core::BatterySpec;
use billopt_cli::{Inputs, Overrides, RunConfig};

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel).display().to_string()
}

fn billopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_billopt")).args(args).output().expect("spawn billopt")
}

/// Config over the shipped MEP profiles with the given tariffs and extra TOML.
fn write_config(dir: &Path, tariffs: &[&str], extra: &str) -> PathBuf {
    let list: Vec<String> = tariffs.iter().map(|t| format!("{:?}", data(&format!("tariffs/{t}.toml")))).collect();
    let text = format!(
        "timezone = \"America/Los_Angeles\"\nyear = 2019\nload_profile = {:?}\npv_unit_profile = {:?}\ntariffs = [{}]\n{extra}\n",
        data("profiles/mep_load_2019.csv"),
        data("profiles/pv_unit_2019.csv"),
        list.join(", ")
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_tariff_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["no_such_tariff"], "");
    let o = billopt(&["bill", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.starts_with("error[config]: ") && err.trim_end().lines().count() == 1, "{err}");
}

#[test]
fn usage_and_input_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(billopt(&["frobnicate"]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &["e19tou"], "");
    let o = billopt(&["bill", "--config", cfg.to_str().unwrap(), "--resolution", "45"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(data("tariffs/e19tou.toml")).unwrap().replace("to = \"04-30\"", "to = \"04-29\"");
    std::fs::write(&bad, text).unwrap();
    let o = billopt(&["validate-tariff", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[data]: "));

    let o = billopt(&["bill", "--config", cfg.to_str().unwrap(), "--solver", "cplex"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn shipped_tariffs_validate() {
    for t in ["e19tou", "e19opr", "b19tou", "b19opr", "b19ops"] {
        let o = billopt(&["validate-tariff", &data(&format!("tariffs/{t}.toml"))]);
        assert!(o.status.success(), "{t}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains(": ok"));
    }
}

#[test]
fn shipped_tariffs_round_trip() {
    for t in ["e19tou", "e19opr", "b19tou", "b19opr", "b19ops"] {
        let a = TariffSchedule::load(Path::new(&data(&format!("tariffs/{t}.toml")))).unwrap();
        let b = TariffSchedule::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b, "{t}");
    }
}

#[test]
fn zero_asset_month_prints_the_direct_bill() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["b19ops"], "month = 7");
    let out = dir.path().join("out");
    let o = billopt(&["bill", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let line = stdout.lines().find(|l| l.starts_with("B19OpS\ttotal\t")).expect("total line");
    let printed: f64 = line.split('\t').nth(2).unwrap().parse().unwrap();

    let rc = RunConfig::load(&cfg, &Overrides::default()).unwrap();
    let inputs = Inputs::load(&rc).unwrap();
    let inst = build_instance(&inputs.site, &inputs.tariffs[0], &BatterySpec::none(), 2019, 7, 0.0, None).unwrap();
    let direct = bill_of_net_demand(&inst, &inst.base_kw).total;
    assert!((printed - direct).abs() <= 1e-9 * direct, "{printed} vs {direct}");
}

#[test]
fn month_bill_writes_both_csvs_in_reader_conventions() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("configs/mep.toml")).unwrap().replace("../", &format!("{}/", data("")));
    let cfg = dir.path().join("mep.toml");
    std::fs::write(&cfg, text.replace("relative_mode = \"difference\"", "relative_mode = \"difference\"\nmonth = 7")).unwrap();
    let out = dir.path().join("out");
    let o = billopt(&["bill", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (header, rows) = read_csv(&out.join("bill_E19TOU_dispatch.csv"));
    assert_eq!(header, DISPATCH_HEADER);
    assert_eq!(rows.len(), 744);
    let (mh, monthly) = read_csv(&out.join("bill_E19TOU_monthly.csv"));
    assert_eq!(monthly.len(), 2);
    assert_eq!(monthly[0][column(&mh, "month")], "2019-07");

    // The dispatch timestamps and values read back with the profile reader.
    let base = column(&header, "base_kw");
    let mut two = format!("timestamp,{DEMAND_HEADER}\n");
    for r in &rows {
        two.push_str(&format!("{},{}\n", r[0], r[base]));
    }
    let grid = TimeGrid::month(chrono_tz::America::Los_Angeles, 2019, 7, 60).unwrap();
    let back: Vec<f64> = read_profile(two.as_bytes(), &grid, DEMAND_HEADER).unwrap();
    let site = read_profile::<f64, _>(
        std::fs::File::open(data("profiles/mep_load_2019.csv")).unwrap(),
        &TimeGrid::year(chrono_tz::America::Los_Angeles, 2019, 60).unwrap(),
        DEMAND_HEADER,
    )
    .unwrap();
    let offset: usize = (1..7).map(|m| TimeGrid::month(chrono_tz::America::Los_Angeles, 2019, m, 60).unwrap().count()).sum();
    assert_eq!(back, site[offset..offset + 744]);
}

#[test]
fn sweep_outputs_rows_baseline_and_durations() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "pv_capacity_kw = 100.0\nbaseline = \"E19TOU\"\n\n[battery]\npower_kw = 50.0\n\n[sweep]\nparameters = [\"pv_capacity_no_bes\", \"bes_power_4h\"]\nvalues = { pv_capacity_no_bes = [0.0, 100.0], bes_power_4h = [0.0, 50.0] }\n";
    let cfg = write_config(dir.path(), &["e19tou", "b19tou"], extra);
    let out = dir.path().join("out");
    let o = billopt(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    for tariff in ["E19TOU", "B19TOU"] {
        let (h, rows) = read_csv(&out.join(format!("sweep_pv_capacity_no_bes_{tariff}.csv")));
        assert_eq!(rows.len(), 2);
        let (h4, rows4) = read_csv(&out.join(format!("sweep_bes_power_4h_{tariff}.csv")));
        for r in &rows4 {
            let bpr: f64 = r[column(&h4, "bes_power_kw")].parse().unwrap();
            let ber: f64 = r[column(&h4, "bes_energy_kwh")].parse().unwrap();
            assert_eq!(ber, 4.0 * bpr);
        }
        if tariff == "E19TOU" {
            assert!(rows.iter().all(|r| r[column(&h, "relative")] == "0"));
        }
    }
    let (h, rows) = read_csv(&out.join("sweep_pv_capacity_no_bes_summary.csv"));
    assert_eq!(h, ["pv_capacity_no_bes", "E19TOU", "B19TOU"]);
    assert!(rows.iter().all(|r| r[1] == "0"));

    let (h, rows) = read_csv(&out.join("sweep_bes_power_4h_detail.csv"));
    assert_eq!(rows.len(), 2 * 2 * 12);
    assert!(h.contains(&"month".to_string()));
}

#[test]
fn bva_without_a_battery_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "pv_capacity_kw = 100.0\nbaseline = \"E19TOU\"\n\n[sweep]\nvalues = { pv_capacity = [0.0, 100.0] }\n";
    let cfg = write_config(dir.path(), &["e19tou", "b19ops"], extra);
    let out = dir.path().join("out");
    let o = billopt(&["bva", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for tariff in ["E19TOU", "B19OpS"] {
        let (h, rows) = read_csv(&out.join(format!("bva_{tariff}.csv")));
        assert_eq!(rows.len(), 2);
        for r in &rows {
            let scale: f64 = r[column(&h, "annual_without_bes")].parse().unwrap();
            let bva: f64 = r[column(&h, "bva")].parse().unwrap();
            assert!(bva.abs() <= 1e-9 * scale, "{tariff}: {bva}");
            assert!(["0.00", "-0.00"].contains(&r[column(&h, "bva_display")].as_str()));
            let rel: f64 = r[column(&h, "bva_relative")].parse().unwrap();
            assert!(rel.abs() <= 1e-9 * scale);
        }
    }
    let (h, _) = read_csv(&out.join("bva_summary.csv"));
    assert_eq!(h, ["pv_capacity_kw", "E19TOU", "B19OpS"]);
}
