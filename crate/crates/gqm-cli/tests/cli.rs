//! End-to-end checks of the gqm binary: output formats, exit codes,
//! config-file precedence and scan determinism.

use std::path::Path;
use std::process::{Command, Output};

fn gqm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gqm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "expected success, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is valid json")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn qfi_reports_the_full_bundle() {
    let out = gqm(&["qfi", "--nbar", "1", "--p", "0.5", "--x", "0.7", "--y", "0.5"]);
    let v = stdout_json(&out);
    assert_eq!(v["f"].as_array().unwrap().len(), 3);
    assert_eq!(v["j"][2][2], 0.0);
    assert!(v["delta_ind"].as_f64().unwrap() > v["delta_sim"].as_f64().unwrap());
    assert!(v["ratio"].as_f64().unwrap() > 1.0);
    assert_eq!(v["compatibility"]["kappa"], 3);
    assert_eq!(v["compatibility"]["commuting_slds"], true);
    assert!(v["compatibility"]["single_probe_optimality"].is_null());
    assert_eq!(v["symplectic_spectrum"].as_array().unwrap().len(), 2);
    // balanced two-arm probe: the phase row of F decouples
    let f_phi_x = v["f"][0][1].as_f64().unwrap();
    assert!(f_phi_x.abs() < 1e-9, "F_phi_x = {f_phi_x}");
}

#[test]
fn qfi_near_pure_boundary_warns_but_succeeds() {
    let out = gqm(&["qfi", "--nbar", "1", "--p", "1", "--x", "1", "--y", "1e-9"]);
    assert_eq!(exit_code(&out), 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("pure-state boundary"),
        "missing warning, stderr: {stderr}"
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["diagnostics"]["near_pure_boundary"], true);
    let regularized: u64 = v["diagnostics"]["regularized_terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_u64().unwrap())
        .sum();
    assert!(regularized > 0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(exit_code(&gqm(&["qfi", "--no-such-flag"])), 2);
    assert_eq!(exit_code(&gqm(&["qfi", "--p", "0.5", "--x", "0.7", "--y", "0.5"])), 2);
    assert_eq!(
        exit_code(&gqm(&["scan", "--nbar", "1", "--x-steps", "0"])),
        2
    );
    assert_eq!(
        exit_code(&gqm(&[
            "qfi", "--nbar", "1", "--p", "0.5", "--x", "0.7", "--y", "0.5", "--format", "csv",
        ])),
        2
    );
}

#[test]
fn invalid_scheme_parameters_exit_2() {
    // p outside [0, 1] is rejected by the library as an invalid argument
    let out = gqm(&["qfi", "--nbar", "1", "--p", "1.5", "--x", "0.7", "--y", "0.5"]);
    assert_eq!(exit_code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

const SCAN_ARGS: &[&str] = &[
    "scan", "--nbar", "0.005", "--x-min", "0.4", "--x-max", "1.6", "--x-steps", "5", "--y-min",
    "0.5", "--y-max", "1.5", "--y-steps", "4",
];

#[test]
fn scan_csv_shape_and_header() {
    let out = gqm(SCAN_ARGS);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,y,nbar,p_opt_ind_com,p_opt_ind_ind_phi,p_opt_ind_ind_x,p_opt_ind_ind_y,\
         p_opt_sim,delta_ind_com,delta_ind_ind,delta_sim,ratio"
    );
    let rows: Vec<&str> = lines.collect();
    // y = 0.5 drops x = 0.4 and x = 1.6 (below the CP boundary), rest survive
    assert_eq!(rows.len(), 18);
    for row in &rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 12, "row: {row}");
        for cell in cells {
            cell.parse::<f64>().expect("numeric cell");
        }
    }
    // y-major order: x ascending within the first block
    let x0: f64 = rows[0].split(',').next().unwrap().parse().unwrap();
    let x1: f64 = rows[1].split(',').next().unwrap().parse().unwrap();
    assert!(x1 > x0);
}

#[test]
fn scan_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, name: &str| -> Vec<u8> {
        let path = dir.path().join(name);
        let mut args: Vec<&str> = SCAN_ARGS.to_vec();
        let path_str = path.to_str().unwrap().to_owned();
        args.extend(["--workers", workers, "--output"]);
        let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        argv.push(path_str);
        let out = Command::new(env!("CARGO_BIN_EXE_gqm"))
            .args(&argv)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    let one = run("1", "w1.csv");
    let four = run("4", "w4.csv");
    assert_eq!(one, four, "scan output depends on the worker count");
}

#[test]
fn scan_json_carries_grid_metadata() {
    let mut args: Vec<&str> = SCAN_ARGS.to_vec();
    args.extend(["--format", "json"]);
    let v = stdout_json(&gqm(&args));
    assert_eq!(v["meta"]["evaluated"], 18);
    assert_eq!(v["meta"]["skipped"], 2);
    assert_eq!(v["rows"].as_array().unwrap().len(), 18);
    let row = &v["rows"][0];
    for key in ["x", "y", "nbar", "p_opt_ind_com", "delta_sim", "ratio"] {
        assert!(row[key].is_f64(), "missing {key}");
    }
}

#[test]
fn scan_include_boundary_keeps_the_edge_points() {
    // x = 0.5 and x = 1.5 sit exactly on y = |1 - x| at y = 0.5
    let edge: &[&str] = &[
        "scan", "--nbar", "0.01", "--x-min", "0.5", "--x-max", "1.5", "--x-steps", "3",
        "--y-min", "0.5", "--y-max", "1.0", "--y-steps", "2", "--format", "json",
    ];
    let v = stdout_json(&gqm(edge));
    assert_eq!(v["meta"]["evaluated"], 4);
    assert_eq!(v["meta"]["skipped"], 2);

    let mut with_edge: Vec<&str> = edge.to_vec();
    with_edge.push("--include-boundary");
    let v = stdout_json(&gqm(&with_edge));
    assert_eq!(v["meta"]["evaluated"], 6);
    assert_eq!(v["meta"]["skipped"], 0);
}

#[test]
fn optimize_emits_all_objectives_by_default() {
    let v = stdout_json(&gqm(&["optimize", "--nbar", "2", "--x", "0.8", "--y", "0.4"]));
    for key in ["ind_combined", "ind_independent", "sim"] {
        assert!(v[key].is_object(), "missing {key}");
    }
    let p = v["ind_combined"]["p_opt"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    // squeezing buys more for the simultaneous figure than for combined
    assert!(v["sim"]["p_opt"].as_f64().unwrap() < p);

    let only = stdout_json(&gqm(&[
        "optimize", "--nbar", "2", "--x", "0.8", "--y", "0.4", "--objective", "sim",
    ]));
    assert!(only["sim"].is_object());
    assert!(only.get("ind_combined").is_none());
}

#[test]
fn config_file_fills_gaps_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# defaults\nnbar = 2.0\np = 0.5\nx = 0.7\ny = 0.5\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let v = stdout_json(&gqm(&["qfi", "--config", cfg]));
    assert_eq!(v["input"]["nbar"].as_f64().unwrap(), 2.0);

    let v = stdout_json(&gqm(&["qfi", "--config", cfg, "--nbar", "3.5"]));
    assert_eq!(v["input"]["nbar"].as_f64().unwrap(), 3.5);
    assert_eq!(v["input"]["p"].as_f64().unwrap(), 0.5);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "nbar 2.0\n").unwrap();
    let out = gqm(&["qfi", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn output_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = gqm(&[
        "qfi", "--nbar", "1", "--p", "0.5", "--x", "0.7", "--y", "0.5", "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(Path::new(&path)).unwrap()).unwrap();
    assert!(v["f"].is_array());
}

#[test]
fn oracle_check_passes_at_the_default_point() {
    let out = gqm(&["oracle-check", "--cutoff", "48"]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["max_deviation"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["checks"].as_array().unwrap().len(), 1);
}

#[test]
fn oracle_check_zero_tolerance_exits_1_with_report() {
    let out = gqm(&["oracle-check", "--cutoff", "40", "--tolerance", "0"]);
    assert_eq!(exit_code(&out), 1);
    // the report is still emitted before the verdict
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn oracle_check_truncation_overflow_exits_3() {
    let out = gqm(&[
        "oracle-check", "--cutoff", "5", "--alpha", "0.9", "--r", "0.42",
    ]);
    assert_eq!(exit_code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutoff"));
}
