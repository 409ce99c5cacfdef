use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_impactval"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    serde_json::from_str(&ok(&all)).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn value_of_empty_position_is_zero() {
    let v = json(&[
        "value", "--p0", "100", "--Q", "0", "--sigma", "2%", "--V", "1",
    ]);
    assert_eq!(v["mtm_value"], 0.0);
    assert_eq!(v["impact_adjusted_value"], 0.0);
}

#[test]
fn value_stock_example() {
    // Q = 5% of the market cap, V = 0.5% daily, sigma = 2%.
    let v = json(&[
        "value", "--Q", "5%", "--V", "0.5%", "--sigma", "2%", "--p0", "1",
    ]);
    let impact = v["impact"].as_f64().unwrap();
    let haircut = v["haircut"].as_f64().unwrap();
    assert!((impact - 0.02 * 10f64.sqrt()).abs() < 1e-12);
    assert!((haircut - 2.0 / 3.0 * impact).abs() < 1e-12);
    assert!((haircut - 0.042).abs() < 0.001);
}

#[test]
fn value_without_volatility_has_no_haircut() {
    let v = json(&[
        "value", "--Q", "1000", "--V", "10", "--sigma", "0", "--p0", "3",
    ]);
    assert_eq!(v["haircut"], 0.0);
    assert_eq!(v["mtm_value"], v["impact_adjusted_value"]);
}

#[test]
fn value_flags_large_impact() {
    let v = json(&[
        "value", "--Q", "100", "--V", "1", "--sigma", "5%", "--p0", "1",
    ]);
    assert_eq!(v["warnings"][0], "WARN_LARGE_IMPACT");
    let v = json(&[
        "value",
        "--Q",
        "100",
        "--V",
        "100",
        "--sigma",
        "1%",
        "--p0",
        "1",
        "--delta-q",
        "50",
    ]);
    assert_eq!(v["warnings"][0], "WARN_LARGE_PARTICIPATION");
}

#[test]
fn missing_flags_exit_2() {
    assert_eq!(run(&["value", "--p0", "100"]).status.code(), Some(2));
    assert_eq!(
        run(&["value", "--Q", "1", "--p0", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["value", "--Q", "abc"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1() {
    assert_eq!(run(&["critical", "--lambda0", "0"]).status.code(), Some(1));
    assert_eq!(
        run(&["value", "--Q=-1", "--p0", "1", "--sigma", "0.01", "--V", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn trajectory_family_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1");
    ok(&[
        "trajectory",
        "--lambda0",
        "9",
        "--calI",
        "0,0.1,0.15,0.19",
        "--out",
        out.to_str().unwrap(),
    ]);
    for cal_i in ["0", "0.1", "0.15", "0.19"] {
        let (header, rows) = read_csv(&out.join(format!("trajectory_lambda9_calI{cal_i}.csv")));
        assert_eq!(
            header,
            [
                "x",
                "q_held",
                "marginal_price",
                "cash",
                "lambda_noimpact",
                "lambda_mtm",
                "lambda_adj"
            ]
        );
        assert_eq!(rows.len(), 1001);
        let mtm = col(&header, "lambda_mtm");
        let diverged: Vec<f64> = rows
            .iter()
            .filter(|r| r[mtm] == "inf")
            .map(|r| r[0].parse().unwrap())
            .collect();
        if cal_i == "0.19" {
            assert!(!diverged.is_empty() && diverged[0] < 1.0);
        } else {
            assert!(diverged.is_empty(), "calI={cal_i}");
        }
    }
    // No impact: leverage falls linearly.
    let (header, rows) = read_csv(&out.join("trajectory_lambda9_calI0.csv"));
    let mtm = col(&header, "lambda_mtm");
    for r in rows {
        let x: f64 = r[0].parse().unwrap();
        let lambda: f64 = r[mtm].parse().unwrap();
        assert_eq!(lambda, 9.0 * (1.0 - x));
    }
}

#[test]
fn trajectory_several_values_need_a_directory() {
    assert_eq!(
        run(&["trajectory", "--lambda0", "9", "--calI", "0.1,0.2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "trajectory",
            "--lambda0",
            "9",
            "--calI",
            "0.1",
            "--grid",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn roundtrip_supercritical_entry_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("trip.csv");
    ok(&[
        "trajectory",
        "--lambda0",
        "9",
        "--calI",
        "0.19",
        "--mode",
        "roundtrip",
        "--grid",
        "101",
        "--out",
        file.to_str().unwrap(),
    ]);
    let (header, rows) = read_csv(&file);
    assert_eq!(header[0], "leg");
    let adj = col(&header, "lambda_adj");
    let entry: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "entry").collect();
    assert_eq!(entry.len(), 101);
    let first = entry.iter().position(|r| r[adj] == "inf").unwrap();
    assert!(first < 100);
}

#[test]
fn trajectory_from_position() {
    let out = ok(&[
        "trajectory",
        "--Q",
        "1000",
        "--p0",
        "10",
        "--L",
        "8000",
        "--sigma",
        "0.05",
        "--V",
        "500",
        "--grid",
        "5",
        "--format",
        "json",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 5);
    assert!((v[0]["lambda_mtm"].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn critical_reports() {
    let v = json(&["critical", "--lambda0", "9"]);
    assert!((v["i_c"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-12);

    let v = json(&["critical", "--lambda0", "9", "--calI", "0.15"]);
    assert_eq!(v["regime"], "SUBCRITICAL");
    let x = v["x_star"].as_f64().unwrap();
    assert!(x > 0.0 && x < 1.0);

    let v = json(&["critical", "--lambda0", "9", "--calI", "0.19"]);
    assert_eq!(v["regime"], "SUPERCRITICAL");
    assert!(v["x_c"].as_f64().unwrap() < 1.0);
}

#[test]
fn bankruptcy_curve_centred_near_critical_impact() {
    let v = json(&[
        "bankruptcy",
        "--lambda0",
        "9",
        "--eta",
        "10",
        "--trials",
        "2000",
        "--seed",
        "3",
    ]);
    let crossing = v["empirical_crossing"].as_f64().unwrap();
    assert!((crossing - 1.0 / 6.0).abs() < 1.0 / 60.0, "{crossing}");
    let points = v["curve"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 31);
    assert_eq!(points[1]["status"]["status"], "infeasible");
}

#[test]
fn bankruptcy_single_trial_is_reproducible() {
    let args = [
        "bankruptcy",
        "--trials",
        "1",
        "--seed",
        "11",
        "--calI-grid",
        "0.1,0.2,0.3",
        "--format",
        "csv",
    ];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert!(a.starts_with("calI,p_bankrupt,std_error,p_bankrupt_noimpact\n"));
}

#[test]
fn bankruptcy_eta_sweep_writes_one_file_each() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "bankruptcy",
        "--eta",
        "0.1,1,10",
        "--trials",
        "200",
        "--calI-grid",
        "0:0.3:0.05",
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    for eta in ["0.1", "1", "10"] {
        let path = dir.path().join(format!("bankruptcy_lambda9_eta{eta}.csv"));
        let (header, rows) = read_csv(&path);
        assert_eq!(header.len(), 4);
        assert_eq!(rows.len(), 7);
    }
}

#[test]
fn report_bundled_table() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.csv");
    ok(&["report", "--format", "csv", "--out", file.to_str().unwrap()]);
    let (header, rows) = read_csv(&file);
    let i1 = col(&header, "impact_vol_based");
    let lc = col(&header, "lambda_c");
    let expected = [0.004, 0.016, 0.063, 0.089, 0.079, 0.135];
    for (row, want) in rows.iter().zip(expected) {
        let got: f64 = row[i1].parse().unwrap();
        assert!((got - want).abs() <= 0.001 + 1e-12, "{}: {got}", row[0]);
    }
    let cds = rows.iter().find(|r| r[0] == "CDS").unwrap();
    assert_eq!(cds[i1], "--");
    assert!((cds[lc].parse::<f64>().unwrap() - 7.5).abs() < 1e-12);

    let text = ok(&["report"]);
    assert!(text.lines().next().unwrap().starts_with("asset"));
    assert!(text
        .lines()
        .any(|l| l.starts_with("CDS") && l.contains("--")));
}

#[test]
fn report_empty_and_partial_configs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = ok(&["report", empty.to_str().unwrap()]);
    assert_eq!(out.lines().count(), 1);

    let partial = dir.path().join("partial.toml");
    fs::write(
        &partial,
        "[nothing]\nQ = 1\n\n[ok]\nQ = 4\nsigma = 0.1\nV = 1\n",
    )
    .unwrap();
    let v: Value = serde_json::from_str(&ok(&[
        "report",
        partial.to_str().unwrap(),
        "--format",
        "json",
    ]))
    .unwrap();
    assert!(v[0]["error"].is_string());
    assert!((v[1]["lambda_c"].as_f64().unwrap() - 7.5).abs() < 1e-12);
}

fn write_series(path: &Path, closes: &[f64], volume: f64) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["date", "close", "volume"]).unwrap();
    for (i, c) in closes.iter().enumerate() {
        w.write_record([chrono_free_date(i), c.to_string(), volume.to_string()])
            .unwrap();
    }
    w.flush().unwrap();
}

/// Consecutive calendar dates from 2000-01-01, without pulling in a date
/// library for the tests.
fn chrono_free_date(offset: usize) -> String {
    let days_in = |y: i32, m: u32| match m {
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    let (mut y, mut m, mut d) = (2000, 1u32, 1u32);
    for _ in 0..offset {
        d += 1;
        if d > days_in(y, m) {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
    }
    format!("{y:04}-{m:02}-{d:02}")
}

#[test]
fn estimate_constant_series_has_zero_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("flat.csv");
    write_series(&file, &[25.0; 200], 3e5);
    let v = json(&["estimate", file.to_str().unwrap()]);
    assert_eq!(v["sigma"], 0.0);
    assert!((v["V"].as_f64().unwrap() - 3e5).abs() < 1e-6);
}

#[test]
fn estimate_gaussian_series() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 0.02).unwrap();
    let mut closes = vec![100.0];
    for _ in 1..10_000 {
        let r: f64 = normal.sample(&mut rng);
        closes.push(closes.last().unwrap() * (1.0 + r));
    }
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.csv");
    write_series(&file, &closes, 1e6);
    let v = json(&[
        "estimate",
        file.to_str().unwrap(),
        "--window",
        "9990",
        "--halflife",
        "1e7",
    ]);
    let sigma = v["sigma"].as_f64().unwrap();
    assert!((sigma / 0.02 - 1.0).abs() < 0.03, "{sigma}");
}

#[test]
fn estimate_short_file_names_required_length() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("short.csv");
    write_series(&file, &[1.0; 20], 1.0);
    let out = run(&["estimate", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("131") && err.contains("short.csv"), "{err}");
}

#[test]
fn estimate_output_feeds_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    let closes: Vec<f64> = (0..300)
        .map(|i| if i % 2 == 0 { 100.0 } else { 101.0 })
        .collect();
    write_series(&series, &closes, 2e6);
    for format in ["json", "text"] {
        let params = dir.path().join(format!("p.{format}"));
        ok(&[
            "estimate",
            series.to_str().unwrap(),
            "--format",
            format,
            "--out",
            params.to_str().unwrap(),
        ]);
        let p = params.to_str().unwrap();
        let v = json(&[
            "value", "--params", p, "--Q", "2e6", "--p0", "100", "--L", "1e8",
        ]);
        assert!(v["impact"].as_f64().unwrap() > 0.0);
        let c = json(&[
            "critical", "--params", p, "--Q", "2e6", "--p0", "100", "--L", "1e8",
        ]);
        assert_eq!(c["regime"], "SUBCRITICAL");
    }
}

#[test]
fn spread_model_from_flags() {
    let v = json(&[
        "value",
        "--impact-model",
        "spread",
        "--Q",
        "100",
        "--p0",
        "1",
        "--S",
        "10%",
        "--v",
        "10",
        "--b",
        "0.6324555320336759",
    ]);
    assert!((v["impact"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    let out = run(&[
        "value",
        "--impact-model",
        "spread",
        "--Q",
        "100",
        "--p0",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["value", "--impact-model", "bogus", "--Q", "1", "--p0", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
