use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinmetro"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no '{key}' in output:\n{text}"))
        .parse()
        .unwrap()
}

#[test]
fn meanfield_reference_point() {
    let (code, out, _) = run(&["meanfield", "--gamma", "1", "--theta", "0.3927", "--omega", "0.5", "--n", "100"]);
    assert_eq!(code, 0);
    assert!((value(&out, "M") - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    assert!((value(&out, "r") - 0.5348).abs() < 1e-3);
    assert!(value(&out, "delta omega bound") > 0.0);
}

#[test]
fn dark_state_report() {
    let (code, out, _) = run(&["steady", "--n", "1", "--omega", "0", "--theta", "0", "--gamma", "1"]);
    assert_eq!(code, 0);
    assert!((value(&out, "sz") + 1.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["steady", "--bogus"]).0, 1);
    assert_eq!(run(&["steady", "--gamma", "-1"]).0, 1);
    assert_eq!(run(&["meanfield", "--omega", "2"]).0, 1);
    assert_eq!(run(&["sweep", "--n", "4", "--values", "0.1,0.3", "--tasks", ""]).0, 1);
    assert_eq!(run(&["steady", "--n", "500"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["steady", "--config", "/nonexistent/cfg"]).0, 1);
    // at θ = π/4 the jump operator commutes with the drive and the kernel is degenerate
    let (code, _, err) = run(&["steady", "--n", "4", "--omega", "0.3", "--theta", "0.7853981633974483"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn sweep_rows_do_not_depend_on_worker_count() {
    let args = |jobs: &'static str| {
        vec![
            "sweep", "--n", "10", "--axis", "omega", "--start", "0.05", "--stop", "1.0", "--points", "8",
            "--tasks", "signals,bounds,qfi_perturbed,chi2,xi2,meanfield", "--no-meta", "--jobs", jobs,
        ]
    };
    let (c1, a, _) = run(&args("1"));
    let (c8, b, _) = run(&args("8"));
    assert_eq!((c1, c8), (0, 0));
    assert_eq!(a, b);
    let header = a.lines().next().unwrap();
    assert!(header.starts_with("n,omega_over_gamma,theta,sx,"));
    assert!(header.ends_with(",error"));
    assert_eq!(a.lines().count(), 9);
}

#[test]
fn meta_line_is_optional() {
    let base = ["sweep", "--n", "3", "--values", "0.1,0.2", "--tasks", "meanfield"];
    let (_, with, _) = run(&base);
    assert!(with.starts_with("# spinmetro"));
    let mut quiet = base.to_vec();
    quiet.push("--no-meta");
    let (_, without, _) = run(&quiet);
    assert!(without.starts_with("n,omega_over_gamma,theta,"));
}

#[test]
fn json_rows_share_csv_keys() {
    let (code, out, _) = run(&[
        "sweep", "--n", "6", "--values", "0.2,0.4", "--tasks", "signals,chi2", "--format", "json",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for key in ["n", "omega_over_gamma", "theta", "sz", "chi2", "error"] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = std::env::temp_dir().join(format!("spinmetro-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("mf.cfg");
    std::fs::write(&cfg, "# reference point\nn = 100\nomega = 0.5\ntheta = 0.3927\nformat = json\n").unwrap();
    let (code, out, err) = run(&["meanfield", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["coefficients"]["m"].as_f64().unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    // explicit flags override the file
    let (code, out, _) = run(&["meanfield", "--config", cfg.to_str().unwrap(), "--omega", "0.0", "--format", "text"]);
    assert_eq!(code, 0);
    assert_eq!(value(&out, "M"), 1.0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn scaling_reports_a_fit() {
    let (code, out, err) = run(&[
        "scaling", "--at-critical", "--n-list", "4,6,8,10,12", "--quantities", "qfi_perturbed,chi2",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("fit qfi_perturbed: a = "));
    assert!(out.contains("fit chi2: a = "));
}
