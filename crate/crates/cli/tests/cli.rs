use std::process::Command as Process;

use impasse_cli::{execute, format_number, parse_invocation, parse_grid, write_csv, Command, CliError, CsvTable};

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_impasse"))
}

fn run(args: &[&str]) -> Result<impasse_cli::Report, CliError> {
    let argv = std::iter::once("impasse").chain(args.iter().copied());
    execute(&parse_invocation(argv)?)
}

fn read_back(path: &std::path::Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|f| f.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn parses_documented_invocations() {
    let cases: &[&[&str]] = &[
        &["polytrope", "--N", "3", "--n", "1.5"],
        &["le-bvp", "--model", "power:2", "--alpha", "1", "--beta", "0", "--gamma", "1"],
        &["biocatalyst", "--phi2-grid", "0.1:50:17", "--K-grid", "0.1:50:17"],
        &["oxygen", "--set", "2"],
        &["oxygen", "--a", "0.4", "--K", "0.03", "--alpha", "5"],
        &["catalyst-system", "--mu-u", "30", "--lambda-w", "0.1"],
        &["tf-slope", "--tol", "1e-10", "--epsilon", "1e-4"],
        &["tf-series", "--terms", "50"],
        &["tf-solution", "--points", "0,10,400"],
        &["tf-phase", "--v0-list", "2.7,2.8"],
        &["tf-bvp", "--ion-a", "27"],
        &["tf-bvp", "--crystal-b", "30", "--tol-rel", "1e-10"],
        &["classify"],
        &["--out", "x.csv", "tf-slope"],
    ];
    for args in cases {
        let argv = std::iter::once("impasse").chain(args.iter().copied());
        assert!(parse_invocation(argv).is_ok(), "{args:?}");
    }
    let inv = parse_invocation(["impasse", "tf-solution", "--points", "0,10,400"]).unwrap();
    assert_eq!(inv.command, Command::TfSolution { points: Some(vec![0.0, 10.0, 400.0]) });
}

#[test]
fn usage_errors_exit_two() {
    let bad: &[&[&str]] = &[
        &[],
        &["polytrope", "--N", "4", "--n", "1"],
        &["polytrope", "--N", "3"],
        &["biocatalyst", "--phi2", "1"],
        &["biocatalyst", "--phi2", "1", "--phi2-grid", "0:1:2", "--K", "1"],
        &["oxygen", "--set", "5"],
        &["oxygen", "--a", "1"],
        &["tf-bvp"],
        &["tf-bvp", "--ion-a", "1", "--crystal-b", "1"],
        &["tf-phase", "--v0-list", "1", "--count", "3"],
        &["frobnicate"],
    ];
    for args in bad {
        let out = bin().args(*args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    // semantic checks after parsing
    for args in [
        &["biocatalyst", "--phi2-grid", "1:0:3", "--K", "1"][..],
        &["le-bvp", "--model", "cubic"],
        &["le-bvp", "--N", "2", "--model", "custom:oxygen:1:1"],
        &["tf-slope", "--tol", "1e-15"],
        &["tf-series", "--terms", "0"],
        &["tf-bvp", "--ion-a", "-1"],
        &["polytrope", "--N", "3", "--n", "1", "--epsilon", "0"],
    ] {
        let err = run(args).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{args:?}: {err}");
    }
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let out = bin().arg(flag).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn grid_syntax() {
    assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
    assert_eq!(parse_grid("2:2:1").unwrap(), vec![2.0]);
    let g = parse_grid("0.1:50:17").unwrap();
    assert_eq!(g.len(), 17);
    assert_eq!((g[0], g[16]), (0.1, 50.0));
    for s in ["0:1", "a:1:2", "0:1:0", "1:0:4", "0:nan:2"] {
        assert!(parse_grid(s).is_err(), "{s}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["tf-solution", "--points", "0,10,100"][..], &["biocatalyst", "--phi2-grid", "1:10:3", "--K-grid", "0.1:1:3"]] {
        let mut outs = Vec::new();
        for i in 0..2 {
            let path = dir.path().join(format!("run{i}.csv"));
            let st = bin().args(args).arg("--out").arg(&path).status().unwrap();
            assert!(st.success());
            outs.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(outs[0], outs[1], "{args:?}");
    }
}

#[test]
fn surface_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eta.csv");
    let st = bin()
        .args(["biocatalyst", "--phi2-grid", "0.1:50:17", "--K-grid", "0.1:50:17", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(st.success());
    let (header, rows) = read_back(&path);
    assert_eq!(header, ["phi2", "K", "eta"]);
    assert_eq!(rows.len(), 289);
    let report = run(&["biocatalyst", "--phi2-grid", "0.1:50:17", "--K-grid", "0.1:50:17"]).unwrap();
    for (a, b) in rows.iter().zip(report.table.rows()) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn small_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let empty = CsvTable::new(["x", "u"]);
    let p = dir.path().join("empty.csv");
    write_csv(&empty, &p).unwrap();
    let (h, rows) = read_back(&p);
    assert_eq!(h, ["x", "u"]);
    assert!(rows.is_empty());

    let mut one = CsvTable::new(["x", "u"]);
    one.push(vec![1.0 / 3.0, -2.5e-300]);
    let p = dir.path().join("one.csv");
    write_csv(&one, &p).unwrap();
    let (_, rows) = read_back(&p);
    assert_eq!(rows, one.rows());
}

#[test]
fn unwritable_output_exits_three_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("out.csv");
    let out = bin().args(["tf-series", "--terms", "3", "--out"]).arg(&target).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(!target.exists());

    // a directory in place of the file: persist fails, no stray temp files
    let clash = dir.path().join("clash");
    std::fs::create_dir(&clash).unwrap();
    let out = bin().args(["tf-series", "--terms", "3", "--out"]).arg(&clash).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["clash"]);
}

#[test]
fn stdout_carries_summary_then_table() {
    let out = bin().args(["tf-series", "--terms", "4"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let (comments, csv): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| l.starts_with('#'));
    assert!(comments.iter().any(|l| l.starts_with("# omega = ")));
    assert_eq!(csv[0], "terms,a_n,omega_n,rel_err");
    // a_0 … a_4
    assert_eq!(csv.len(), 6);
    let first: Vec<f64> = csv[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(first[1], 1.0);
}

#[test]
fn solver_failure_exits_one() {
    // |h| grows like u^9: the solution blows up before x = 1
    let err = run(&["le-bvp", "--model", "power:9:50", "--gamma", "1000"]).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    assert!(err.to_string().contains("shooting"));
}

#[test]
fn commands_report_expected_values() {
    let r = run(&["polytrope", "--N", "3", "--n", "1", "--tol-rel", "1e-10", "--tol-abs", "1e-12"]).unwrap();
    let xi1 = r.summary.iter().find(|(k, _)| k == "xi1").unwrap().1.parse::<f64>().unwrap();
    assert!((xi1 - std::f64::consts::PI).abs() < 1e-7, "{xi1}");
    assert_eq!(r.table.header(), ["x", "u", "uprime"]);
    assert_eq!(r.table.len(), 101);

    let r = run(&["classify"]).unwrap();
    let kinds: Vec<f64> = r.table.rows().iter().map(|row| row[1]).collect();
    assert_eq!(kinds, [1.0, 1.0, 1.0, 1.0, 2.0]);

    let r = run(&["tf-phase", "--count", "3"]).unwrap();
    let ends: Vec<f64> = r.table.rows().iter().map(|row| row[1]).collect();
    assert!(ends.contains(&5.0) && ends.contains(&1.0) && ends.contains(&4.0));
    assert_eq!(format_number(1e-5), "1e-5");
}
