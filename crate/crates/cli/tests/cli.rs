use std::fs;
use std::process::{Command, Output};

fn fredholm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fredholm")).args(args).output().expect("run fredholm")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn list_prints_problem_names() {
    let o = fredholm(&["list"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().next().unwrap(), "deriv2 gravity heat");
}

#[test]
fn solve_writes_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("est.csv");
    let spec = dir.path().join("spectrum.csv");
    let o = fredholm(&[
        "solve", "--kernel", "deriv2", "--m", "64", "--k", "5", "--snr", "8", "--seed", "1",
        "--out", est.to_str().unwrap(), "--dump-spectrum", spec.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&est).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,value"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, v) = l.split_once(',').unwrap();
            (x.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().all(|r| r.0 > 0.0 && r.0 < 1.0 && r.1.is_finite()));
    let sigma: Vec<f64> = fs::read_to_string(&spec).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(sigma.len(), 64);
    assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
    // no temporary files are left behind
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn solve_from_simulated_input_matches_direct_solve() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let o = fredholm(&["simulate", "--kernel", "gravity", "--m", "32", "--delta", "0.01", "--seed", "4", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let direct = fredholm(&["solve", "--kernel", "gravity", "--m", "32", "--k", "6", "--delta", "0.01", "--seed", "4"]);
    let from_file = fredholm(&["solve", "--kernel", "gravity", "--m", "32", "--k", "6", "--delta", "0.01", "--input", data.to_str().unwrap()]);
    assert_eq!(code(&direct), 0);
    assert_eq!(code(&from_file), 0);
    let parse = |o: &Output| -> Vec<f64> {
        String::from_utf8_lossy(&o.stdout).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
    };
    for (a, b) in parse(&direct).iter().zip(parse(&from_file)) {
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn runs_are_deterministic() {
    let args = ["simulate", "--kernel", "heat", "--m", "64", "--snr", "8", "--seed", "9"];
    let a = fredholm(&args);
    let b = fredholm(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = fredholm(&["simulate", "--kernel", "heat", "--m", "64", "--snr", "8", "--seed", "10"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn bounds_lem00_deriv2() {
    let o = fredholm(&["bounds", "--check", "lem00", "--kernel", "deriv2", "--m", "64"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("observed") && out.contains("bound") && out.contains("holds"));
    let bound = 1.0 / (3.0 * 64.0 * 64.0);
    assert!(out.contains(&format!("{bound:.6e}")), "{out}");
}

#[test]
fn bounds_other_checks_pass() {
    for args in [
        vec!["bounds", "--check", "variance-sum", "--m", "64"],
        vec!["bounds", "--check", "averaging-bias", "--m", "4096"],
        vec!["bounds", "--check", "lem002", "--kernel", "gravity", "--m", "32"],
    ] {
        let o = fredholm(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["frobnicate"],
        vec!["solve", "--kernel", "deriv2", "--m", "64", "--k", "5", "--snr", "8", "--unknown", "1"],
        vec!["solve", "--kernel", "deriv2", "--m", "64", "--k", "5"],
        vec!["solve", "--kernel", "nope", "--m", "64", "--k", "5", "--snr", "8"],
        vec!["solve", "--kernel", "deriv2", "--m", "16", "--k", "17", "--snr", "8"],
        vec!["adapt", "--kernel", "deriv2", "--m", "100", "--delta", "0.1", "--gprime-norm", "1"],
        vec!["adapt", "--kernel", "deriv2", "--m", "64", "--delta", "0.1"],
    ] {
        let o = fredholm(&args);
        assert_eq!(code(&o), 1, "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(code(&fredholm(&["--help"])), 0);
}

#[test]
fn adapt_emits_trajectory() {
    let o = fredholm(&["adapt", "--kernel", "deriv2", "--m", "1024", "--delta", "1e-4", "--gprime-norm", "0.05", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let traj = v["trajectory"].as_array().unwrap();
    assert!(!traj.is_empty() && traj.len() <= 5);
    assert_eq!(traj[0]["m_o"], 4);
    let chosen = v["chosen_level"].as_u64().unwrap();
    assert!(traj.iter().any(|t| t["m_o"].as_u64() == Some(chosen)));
}

#[test]
fn table_writes_one_file_per_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("matrix.cfg");
    fs::write(&cfg, "# small matrix\nproblem = deriv2\ns = 0.375, 0.625\nm = 256\nlevels = 256,64,16\nsnr = 64,8\nruns = 3\n").unwrap();
    let out = dir.path().join("results");
    let o = fredholm(&["table", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, vec!["table_deriv2_s0.375.md", "table_deriv2_s0.625.md"]);
    let md = fs::read_to_string(out.join("table_deriv2_s0.375.md")).unwrap();
    assert!(md.contains("| SNR | m_o = 256 | m_o = 64 | m_o = 16 |"));
    assert!(md.contains("| 8^2 |") && md.contains("| 8 |"));

    let again = fredholm(&["table", "--problem", "deriv2", "--s", "0.375", "--m", "256", "--levels", "256,64,16", "--snr", "64,8", "--runs", "3", "--seed", "2", "--format", "markdown"]);
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), md);

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&fredholm(&["table", "--config", cfg.to_str().unwrap()])), 1);
}
