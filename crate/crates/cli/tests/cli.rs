use std::path::Path;
use std::process::{Command, Output};

fn geodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodyn"))
        .args(args)
        .env_remove("GEODYN_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn status(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines
        .next()
        .unwrap()
        .split(',')
        .position(|c| c == name)
        .unwrap();
    lines
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

/// Number after `label` on the line starting with it.
fn value_after(text: &str, label: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(label)).unwrap_or_else(|| panic!("{label} in {text}"));
    line[label.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn kepler_run_header_and_rows() {
    let o = geodyn(&["run", "--method", "vi2", "--model", "kepler", "--ecc", "0.6", "--h", "0.05", "--steps", "4000"]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "step,t,x1,x2,v1,v2,H,m,A1,A2,ecc,angle");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4001);
    assert!(rows.iter().all(|r| r.split(',').count() == 12));
    assert!(rows[0].starts_with("0,0.0,0.4,0.0,0.0,2.0,-0.5,"));
    assert!(rows[4000].starts_with("4000,200.0,"));
    assert!(!out.contains('\r'));
}

#[test]
fn relativistic_run_header_and_scaling() {
    let o = geodyn(&[
        "run", "--model", "relativistic", "--method", "k2", "--x0", "1", "0", "--v0", "0", "1.2",
        "--h", "0.05", "--steps", "10", "--c", "2",
    ]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "step,tau,t,x1,x2,gamma,u1,u2,H");
    assert_eq!(out.lines().count(), 12);
    // Row 0 reproduces the physical seed; on the shell H = −c²/2.
    assert_eq!(column(&out, "x1")[0], 1.0);
    assert!((column(&out, "u2")[0] - 1.2).abs() < 1e-15);
    let h = column(&out, "H");
    assert!((h[0] + 2.0).abs() < 1e-12);
    assert!(h.iter().all(|v| (v - h[0]).abs() < 1e-4));
}

#[test]
fn relativistic_two_step_matches_k1() {
    let run = |m: &str| {
        let o = geodyn(&[
            "run", "--model", "relativistic", "--method", m, "--x0", "1", "0", "--v0", "0", "1.2",
            "--h", "0.05", "--steps", "100",
        ]);
        assert_eq!(status(&o), 0, "{}", stderr(&o));
        stdout(&o)
    };
    let (a, b) = (run("k1"), run("del"));
    for name in ["t", "x1", "x2", "u1", "u2"] {
        let gap = column(&a, name)
            .iter()
            .zip(column(&b, name))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-10, "{name}: {gap}");
    }
}

#[test]
fn zero_steps_is_a_usage_error() {
    let o = geodyn(&["run", "--method", "sv", "--ecc", "0.5", "--h", "0.1", "--steps", "0"]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("steps must be at least 1"));
}

#[test]
fn invalid_configs_are_usage_errors() {
    let cases: &[&[&str]] = &[
        &["run", "--method", "sv", "--ecc", "0.5", "--h", "-0.1", "--steps", "3"],
        &["run", "--method", "rk4", "--ecc", "0.5", "--h", "0.1", "--steps", "3"],
        &["run", "--method", "vi1", "--ecc", "0.5", "--h", "0.1", "--steps", "3", "--split", "0.3,0.3"],
        &["run", "--method", "vi1", "--h", "0.1", "--steps", "3"],
        &["run", "--method", "k1", "--model", "relativistic", "--ecc", "0.5", "--h", "0.1", "--steps", "3", "--c", "0"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = geodyn(args);
        assert_eq!(status(&o), 2, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn integrator_failure_reports_step() {
    // Radial infall hits the origin.
    let o = geodyn(&["run", "--method", "sym-euler", "--x0", "1", "0", "--v0", "-1.5", "0", "--h", "0.5", "--steps", "10"]);
    assert_eq!(status(&o), 1);
    assert!(stderr(&o).contains("step 1 failed"), "{}", stderr(&o));
}

#[test]
fn angular_momentum_is_constant_for_sv() {
    let o = geodyn(&["run", "--method", "sv", "--x0", "-3", "0", "--v0", "0", "0.45", "--h", "0.05", "--steps", "100000"]);
    assert_eq!(status(&o), 0);
    let m = column(&stdout(&o), "m");
    assert_eq!(m.len(), 100_001);
    let spread = m.iter().map(|v| (v - m[0]).abs()).fold(0.0, f64::max);
    assert!(spread < 1e-12, "{spread}");
}

#[test]
fn output_is_byte_identical_across_runs() {
    let args = ["run", "--method", "vi1", "--ecc", "0.3", "--h", "0.1", "--steps", "500", "--split", "0.25,0.75"];
    assert_eq!(geodyn(&args).stdout, geodyn(&args).stdout);
    let sweep = ["convergence", "--levels", "3"];
    let serial = Command::new(env!("CARGO_BIN_EXE_geodyn"))
        .args(sweep)
        .env("GEODYN_WORKERS", "1")
        .output()
        .unwrap();
    assert_eq!(status(&serial), 0);
    assert_eq!(serial.stdout, geodyn(&sweep).stdout);
}

#[test]
fn bad_worker_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_geodyn"))
        .args(["check", "kepler"])
        .env("GEODYN_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(status(&o), 2);
}

#[test]
fn two_step_form_reports_same_trajectory() {
    let run = |form: &str| {
        let o = geodyn(&["run", "--method", "vi2", "--ecc", "0.6", "--h", "0.05", "--steps", "200", "--form", form]);
        assert_eq!(status(&o), 0, "{}", stderr(&o));
        stdout(&o)
    };
    let (a, b) = (run("composition"), run("two-step"));
    for name in ["x1", "x2", "v1", "v2"] {
        let gap = column(&a, name)
            .iter()
            .zip(column(&b, name))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-9, "{name}: {gap}");
    }
}

#[test]
fn convergence_table_order_and_slopes() {
    let o = geodyn(&["convergence"]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let (rows, slopes) = out.split_once("\n\n").unwrap();
    let rows: Vec<&str> = rows.lines().collect();
    assert_eq!(rows[0], "method,h,delta_ecc,delta_angle,position_error");
    assert_eq!(rows.len(), 1 + 4 * 6);
    assert!(rows[1].starts_with("sym-euler,0.5,"));
    assert!(rows[6].starts_with("sym-euler,0.015625,"));
    assert!(rows[24].starts_with("vi2,0.015625,"));
    let slopes: Vec<Vec<&str>> = slopes.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let expected = [
        ("sym-euler", "ecc", 2.0),
        ("sym-euler", "angle", 2.0),
        ("sv", "ecc", 4.0),
        ("sv", "angle", 2.0),
        ("vi1", "ecc", 2.0),
        ("vi1", "angle", 2.0),
        ("vi2", "ecc", 4.0),
        ("vi2", "angle", 2.0),
    ];
    assert_eq!(slopes.len(), expected.len());
    for (row, (m, k, p)) in slopes.iter().zip(expected) {
        assert_eq!((row[0], row[1]), (m, k));
        let fitted: f64 = row[2].parse().unwrap();
        assert!((fitted - p).abs() < 0.3, "{m} {k}: {fitted}");
        assert_eq!(row[3], (p as u32).to_string());
    }
}

#[test]
fn single_level_sweep_leaves_slope_empty() {
    let o = geodyn(&["convergence", "--levels", "1", "--metric", "angle", "--methods", "sv"]);
    assert_eq!(status(&o), 0);
    assert!(stderr(&o).contains("warning"));
    assert_eq!(stdout(&o), format!(
        "method,h,delta_angle\nsv,0.5,{}\n\nmethod,metric,fitted_order,predicted_order\nsv,angle,,2\n",
        column(&stdout(&o), "delta_angle")[0]
    ));
}

#[test]
fn check_verdicts_and_exit_codes() {
    for (name, code) in [("kepler", 0), ("relativistic", 0), ("magnetic", 0), ("damped", 1)] {
        let o = geodyn(&["check", name]);
        assert_eq!(status(&o), code, "{name}: {}", stdout(&o));
    }
    let damped = stdout(&geodyn(&["check", "damped"]));
    assert!(damped.trim_end().ends_with("overall FAIL condition (a)"), "{damped}");
    assert_eq!(status(&geodyn(&["check", "no-such-system"])), 2);
}

#[test]
fn check_expression_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, src: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, src).unwrap();
        p
    };
    let ok = write("pendulum.sys", "dim = 1\nstructure = constant-mass\nf1 = -x1 - 0.1*x1^3\n");
    let o = geodyn(&["check", ok.to_str().unwrap()]);
    assert_eq!(status(&o), 0, "{}{}", stdout(&o), stderr(&o));

    let friction = write("friction.sys", "dim = 1\nstructure = constant-mass\nf1 = -x1 - 0.3*v1\n");
    assert_eq!(status(&geodyn(&["check", friction.to_str().unwrap()])), 1);

    let bad = write("bad.sys", "dim = 2\nf1 = x1 + * 2\nf2 = 0\n");
    let o = geodyn(&["check", bad.to_str().unwrap()]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("line 2, column"), "{}", stderr(&o));
}

#[test]
fn modified_linear_frequencies_agree() {
    let o = geodyn(&["modified", "--linear", "--lambda", "1", "--h", "0.1"]);
    assert_eq!(status(&o), 0);
    let out = stdout(&o);
    let series = value_after(&out, "series frequency");
    let dispersion = value_after(&out, "dispersion frequency");
    assert!((series - dispersion).abs() <= 1e-12, "{out}");

    let o = geodyn(&["modified", "--linear", "--lambda", "1", "--h", "2.1"]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("stability boundary"), "{}", stderr(&o));
}

#[test]
fn modified_drift_for_sv() {
    let o = geodyn(&["modified", "--drift", "sv", "--metric", "ecc"]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value_after(&out, "ecc: predicted leading term"), 0.0);
    assert_eq!(value_after(&out, "ecc: predicted order"), 4.0);
    let measured = value_after(&out, "ecc: measured order");
    assert!((measured - 4.0).abs() < 0.3, "{out}");
}

fn assert_svg(path: &Path) {
    let svg = std::fs::read_to_string(path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(r#"width="800" height="600""#));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polyline"));
}

#[test]
fn svg_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let orbit = dir.path().join("orbit.svg");
    let o = geodyn(&[
        "run", "--method", "sv", "--ecc", "0.6", "--h", "0.05", "--steps", "400", "--format", "svg",
        "--output", orbit.to_str().unwrap(),
    ]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    assert_svg(&orbit);

    let energy = dir.path().join("energy.svg");
    let args = [
        "run", "--method", "vi2", "--ecc", "0.6", "--h", "0.05", "--steps", "400", "--format", "svg",
        "--plot", "energy", "--output", energy.to_str().unwrap(),
    ];
    assert_eq!(status(&geodyn(&args)), 0);
    assert_svg(&energy);
    let first = std::fs::read(&energy).unwrap();
    geodyn(&args);
    assert_eq!(first, std::fs::read(&energy).unwrap());

    // |H − H₀| is zero at the first sample.
    let o = geodyn(&[
        "run", "--method", "vi2", "--ecc", "0.6", "--h", "0.05", "--steps", "10", "--format", "svg",
        "--plot", "energy", "--log-y",
    ]);
    assert_eq!(status(&o), 2);

    let sweep = dir.path().join("sweep.svg");
    let o = geodyn(&["convergence", "--levels", "3", "--format", "svg", "-o", sweep.to_str().unwrap()]);
    assert_eq!(status(&o), 0);
    assert_svg(&sweep);
    assert_eq!(std::fs::read_to_string(&sweep).unwrap().matches("<polyline").count(), 8);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# orbit of the sweep\nmethod = vi1\nx0 = -3 0\nv0 = 0 0.45\nh = 0.1\nsteps = 20\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = geodyn(&["--config", c, "run"]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 22);
    let direct = geodyn(&["run", "--method", "vi1", "--x0", "-3", "0", "--v0", "0", "0.45", "--h", "0.1", "--steps", "20"]);
    assert_eq!(o.stdout, direct.stdout);

    let o = geodyn(&["--config", c, "run", "--steps", "5"]);
    assert_eq!(stdout(&o).lines().count(), 7);

    std::fs::write(&cfg, "steps\n").unwrap();
    assert_eq!(status(&geodyn(&["--config", c, "run"])), 2);
}
