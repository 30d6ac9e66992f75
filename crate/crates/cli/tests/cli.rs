use std::path::PathBuf;
use std::process::{Command, Output};

fn system(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../systems")
        .join(name);
    p.to_str().unwrap().to_string()
}

fn run_with_threads(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filippov"))
        .args(args)
        .env("FILIPPOV_THREADS", threads.to_string())
        .output()
        .unwrap()
}

fn run(args: &[&str]) -> Output {
    run_with_threads(args, 2)
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Header and rows of a CSV document, with every row the header's width.
fn csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    for r in &rows {
        assert_eq!(r.len(), header.len(), "{r:?}");
    }
    (header, rows)
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn classify_finds_the_fold_at_minus_one() {
    let out = run(&[
        "classify",
        "--system",
        &system("sec61.sys"),
        "--window",
        "-3:3:601",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv(&stdout(&out));
    assert_eq!(header, ["s", "x", "y", "class"]);
    let fold: Vec<_> = rows.iter().filter(|r| r[3] == "FoldVisible(X1)").collect();
    assert_eq!(fold.len(), 1);
    assert_eq!(fold[0][1].parse::<f64>().unwrap(), -1.0);
    for r in &rows {
        let x: f64 = r[1].parse().unwrap();
        if x < -1.0 {
            assert_eq!(r[3], "Sewing");
        }
    }
    assert!(rows.iter().any(|r| r[3] == "Sliding"));
}

#[test]
fn canard_on_perturbed_member_is_json_report() {
    let out = run(&[
        "canard",
        "--system",
        &system("sec61_perturbed.sys"),
        "--expect",
        "canard",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&stdout(&out));
    assert_eq!(v["found"], true);
    assert_eq!(v["kind"], "III");
    assert!(v["pseudo_equilibria"].as_array().unwrap().is_empty());
}

#[test]
fn canard_below_the_bifurcation_reports_two_pseudo_equilibria() {
    let out = run(&[
        "canard",
        "--system",
        &system("sec61_family.sys"),
        "--mu=-0.25",
        "--expect",
        "no-canard",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&stdout(&out));
    assert_eq!(v["found"], false);
    let kinds: Vec<&str> = v["pseudo_equilibria"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["class"]["PseudoEquilibrium"].as_str().unwrap())
        .collect();
    assert_eq!(kinds.len(), 2);
    assert!(kinds.contains(&"SigmaSaddle") && kinds.contains(&"SigmaAttractor"));
}

#[test]
fn canard_expectation_controls_the_exit_code() {
    let sys = system("sec61_family.sys");
    assert_eq!(
        code(&run(&["canard", "--system", &sys, "--expect", "canard"])),
        0
    );
    assert_eq!(
        code(&run(&[
            "canard", "--system", &sys, "--mu", "0", "--expect", "canard"
        ])),
        1
    );
    assert_eq!(
        code(&run(&["canard", "--system", &sys, "--expect", "sometimes"])),
        2
    );
}

#[test]
fn index_of_circle_system_is_one() {
    let out = run(&[
        "index",
        "--system",
        &system("circle.sys"),
        "--circle",
        "0,0,1.001",
        "--expect",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&stdout(&out));
    assert_eq!(v["index"], 1);
    assert!(v["jumps"].as_array().unwrap().is_empty());
}

#[test]
fn index_reads_path_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.txt");
    std::fs::write(&path, "# clockwise square\n-2,-2\n-2,2\n2,2\n2,-2\n").unwrap();
    let out = run(&[
        "index",
        "--system",
        &system("circle.sys"),
        "--path",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&stdout(&out))["index"], -1);

    std::fs::write(&path, "0,0\n1,oops\n0,1\n").unwrap();
    let out = run(&[
        "index",
        "--system",
        &system("circle.sys"),
        "--path",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn blowup_at_quarter_pi_gives_y_one() {
    let out = run(&[
        "blowup",
        "--system",
        &system("sec62.sys"),
        "--theta",
        "0.7853981634",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv(&stdout(&out));
    assert_eq!(header[..2], ["theta", "y"]);
    assert_eq!(rows.len(), 1);
    let y: f64 = rows[0][1].parse().unwrap();
    assert!((y - 1.0).abs() < 1e-9, "{y}");
}

#[test]
fn blowup_trace_is_json_when_asked() {
    let out = run(&[
        "blowup",
        "--system",
        &system("two_fold.sys"),
        "--window",
        "-20:20",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&stdout(&out));
    assert_eq!(v["fold_ends"].as_array().unwrap().len(), 4);
}

#[test]
fn scan_locates_the_bifurcation() {
    let out = run(&[
        "scan",
        "--system",
        &system("sec61_family.sys"),
        "--mu=-0.25:0.25:5",
        "--expect",
        "bifurcation",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv(&stdout(&out));
    assert_eq!(header, ["mu", "n_zeros_H", "sign_H_at_B", "verdict"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4][3], "canard kind III");
    let out = run(&[
        "scan",
        "--system",
        &system("sec61_family.sys"),
        "--format",
        "json",
    ]);
    let mu = json(&stdout(&out))["bifurcation"].as_f64().unwrap();
    assert!(mu.abs() < 1e-6);
}

#[test]
fn slide_and_orbit_emit_csv() {
    let out = run(&[
        "slide",
        "--system",
        &system("sec61.sys"),
        "--window",
        "0:2:9",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv(&stdout(&out));
    assert_eq!(header, ["s", "x", "y", "region", "H", "xdot", "ydot"]);
    assert_eq!(rows.len(), 9);

    let out = run(&[
        "orbit",
        "--system",
        &system("sec61_perturbed.sys"),
        "--from",
        "0,0.5",
        "--t-max",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv(&stdout(&out));
    assert_eq!(header, ["t", "x", "y", "regime"]);
    assert!(rows.len() > 10);
}

#[test]
fn regularized_cycle_is_hyperbolic() {
    let out = run(&[
        "regularize",
        "--system",
        &system("sec61_family.sys"),
        "--epsilon",
        "0.05",
        "--expect",
        "hyperbolic",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&stdout(&out));
    assert!(v["multiplier"].as_f64().unwrap().abs() < 1.0);
    assert!(v["closure_gap"].as_f64().unwrap() < 1e-9);
}

#[test]
fn convergence_is_decreasing() {
    let out = run(&[
        "converge",
        "--system",
        &system("sec61_family.sys"),
        "--epsilons",
        "0.1,0.05",
        "--expect",
        "convergence",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv(&stdout(&out));
    assert_eq!(header, ["epsilon", "hausdorff", "multiplier", "period"]);
    let d: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(d[1] < d[0]);
}

#[test]
fn output_is_independent_of_thread_count() {
    let sys = system("sec61_family.sys");
    for args in [
        vec!["canard", "--system", &sys],
        vec!["scan", "--system", &sys, "--mu=-0.25:0.25:9"],
        vec!["classify", "--system", &sys, "--window", "-3:3:101"],
    ] {
        let a = run_with_threads(&args, 1);
        let b = run_with_threads(&args, 4);
        assert_eq!(code(&a), 0);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("out.csv");
    let sys = system("sec61.sys");
    let to_file = run(&["classify", "--system", &sys, "-o", file.to_str().unwrap()]);
    assert_eq!(code(&to_file), 0);
    assert!(to_file.stdout.is_empty());
    let direct = run(&["classify", "--system", &sys]);
    assert_eq!(std::fs::read(&file).unwrap(), direct.stdout);
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(code(&run(&["classify"])), 2);
    assert_eq!(code(&run(&["classify", "--system", "/nonexistent.sys"])), 2);
    assert_eq!(
        code(&run(&[
            "classify",
            "--system",
            &system("sec61.sys"),
            "--window",
            "3:-3:10"
        ])),
        2
    );
    assert_eq!(
        code(&run(&[
            "orbit",
            "--system",
            &system("sec61.sys"),
            "--from",
            "zero"
        ])),
        2
    );
    assert_eq!(
        code(&run(&[
            "classify",
            "--system",
            &system("sec61.sys"),
            "--expect",
            "canard"
        ])),
        2
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sys");
    std::fs::write(
        &bad,
        "[system]\nf = \"y\"\nX1 = [\"x +* y\", \"1\"]\nX2 = [\"1\", \"-1\"]\n",
    )
    .unwrap();
    let out = run(&["classify", "--system", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn numeric_failure_exits_three() {
    // the arc from the visible X2 fold at (0, -1) leaves the domain
    let out = run(&[
        "canard",
        "--system",
        &system("two_fold.sys"),
        "--window",
        "-0.5:0.5",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
