use std::path::Path;
use std::process::{Command, Output};

use tlmodel::solver::ModelSolution;

fn tlmodel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlmodel"))
        .args(args)
        .current_dir(dir)
        .env_remove("TLMODEL_PRECISION")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_reloadable_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlmodel(
        &[
            "solve",
            "--curve",
            "flat:0.05",
            "--n",
            "40",
            "--tau",
            "0.25",
            "--psi",
            "0.2",
            "--out",
            "sol.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max sum-rule residual"));
    let sol = ModelSolution::load_json(dir.path().join("sol.json")).unwrap();
    let l39 = sol.adjusted_libor(39).unwrap().to_f64();
    assert!((l39 / 5.0314e-2 - 1.0).abs() < 1e-5, "{l39}");
    for i in 0..40 {
        let r = sol.sum_rule_residual(i).unwrap().to_f64();
        assert!(r < 1e-40, "{i}: {r}");
        assert!(sol.fra_residual(i).unwrap().to_f64() < 1e-40);
    }
}

#[test]
fn zero_vol_reproduces_forwards() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlmodel(&["solve", "--psi", "0.0", "--out", "sol.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let sol = ModelSolution::load_json(dir.path().join("sol.json")).unwrap();
    for i in 0..40 {
        let fwd = sol.curve().forward_libor_wide(i, sol.precision());
        let gap = (sol.adjusted_libor(i).unwrap() / &fwd).to_f64() - 1.0;
        assert!(gap.abs() < 1e-15, "{i}: {gap}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlmodel(
        &[
            "solve",
            "--curve",
            "flat:-0.01",
            "--psi",
            "0.2",
            "--out",
            "x.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = tlmodel(
        &[
            "solve", "--curve", "nope", "--psi", "0.2", "--out", "x.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = tlmodel(&["solve", "--psi", "4000", "--out", "x.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("horizon"));
    let o = tlmodel(&["figures", "pdf", "--i", "30", "--psi", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("point mass"));
    let o = tlmodel(
        &["figures", "smile", "--i", "40", "--psi", "0.2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = tlmodel(&["figures", "sigma-ln", "--psi", "0.4:0.1:0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn precision_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |bits: &str| {
        Command::new(env!("CARGO_BIN_EXE_tlmodel"))
            .args(["solve", "--psi", "0.2", "--n", "4", "--out", "sol.json"])
            .current_dir(dir.path())
            .env("TLMODEL_PRECISION", bits)
            .output()
            .unwrap()
    };
    assert!(run("128").status.success());
    let sol = ModelSolution::load_json(dir.path().join("sol.json")).unwrap();
    assert_eq!(sol.precision(), 128);
    assert_eq!(run("many").status.code(), Some(2));
}

#[test]
fn zeros_figure_has_nine_per_psi() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlmodel(
        &[
            "figures",
            "zeros",
            "--i",
            "30",
            "--psi",
            "0.30,0.31,0.32,0.33",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "psi,re,im,circle1_radius,circle2_radius"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 36);
    for psi in ["0.3", "0.31", "0.32", "0.33"] {
        let mine: Vec<_> = rows.iter().filter(|r| r[0] == psi).collect();
        assert_eq!(mine.len(), 9, "{psi}");
        let p: f64 = psi.parse().unwrap();
        let c1: f64 = mine[0][3].parse().unwrap();
        let c2: f64 = mine[0][4].parse().unwrap();
        assert!((c1 - (p * p * 7.5f64).exp()).abs() < 1e-12);
        assert!((c2 - (2.0 * p * p * 7.5f64).exp()).abs() < 1e-12);
        // 40 significant digits
        assert_eq!(
            mine[0][1]
                .split('e')
                .next()
                .unwrap()
                .replace(['.', '-'], "")
                .len(),
            40
        );
    }
}

#[test]
fn sigma_ln_turning_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlmodel(
        &[
            "figures",
            "sigma-ln",
            "--i",
            "30",
            "--psi",
            "0.05:0.45:0.005",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let (psis, sig): (Vec<f64>, Vec<f64>) = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse::<f64>().unwrap(), f[1].parse::<f64>().unwrap())
        })
        .unzip();
    assert_eq!(psis.len(), 81);
    let (onset, peak) = tlmodel::distribution::sigma_ln_turning_points(&psis, &sig).unwrap();
    assert!((onset - 0.30).abs() <= 0.015, "{onset}");
    assert!((peak - 0.33).abs() <= 0.01, "{peak}");
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        vec![
            "figures",
            "smile",
            "--psi",
            "0.3",
            "--strikes",
            "0.02:0.1:0.01",
        ],
        vec![
            "figures",
            "pdf",
            "--psi",
            "0.3",
            "--grid",
            "0.01:0.2:0.01",
            "--format",
            "json",
        ],
        vec!["figures", "arrears", "--psi", "0.1,0.2"],
        vec![
            "figures",
            "mc-compare",
            "--psi",
            "0.2,0.45",
            "--paths",
            "5000",
            "--seed",
            "9",
            "--format",
            "json",
        ],
        vec!["figures", "phase", "--r0", "0.05", "--tau", "0.5"],
    ];
    for args in runs {
        let mut a = args.clone();
        a.extend(["--out", "a.out"]);
        let mut b = args.clone();
        b.extend(["--out", "b.out"]);
        assert!(tlmodel(&a, dir.path()).status.success(), "{args:?}");
        assert!(tlmodel(&b, dir.path()).status.success(), "{args:?}");
        let x = std::fs::read(dir.path().join("a.out")).unwrap();
        let y = std::fs::read(dir.path().join("b.out")).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{args:?}");
    }
}

#[test]
fn csv_curve_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,df\n");
    for k in 1..=40 {
        let t = k as f64 * 0.25;
        csv.push_str(&format!("{t},{}\n", (-0.05 * t).exp()));
    }
    std::fs::write(dir.path().join("curve.csv"), csv).unwrap();
    let o = tlmodel(
        &[
            "solve",
            "--curve",
            "csv:curve.csv",
            "--psi",
            "0.2",
            "--out",
            "sol.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sol = ModelSolution::load_json(dir.path().join("sol.json")).unwrap();
    assert!((sol.curve().forward_libor(30) / 5.0314e-2 - 1.0).abs() < 1e-5);
    let o = tlmodel(
        &[
            "solve",
            "--curve",
            "csv:missing.csv",
            "--psi",
            "0.2",
            "--out",
            "sol.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_compare_report_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlmodel(
        &[
            "figures",
            "mc-compare",
            "--psi",
            "0.2",
            "--paths",
            "2000",
            "--seed",
            "4",
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &v[0];
    for key in [
        "psi", "i", "n_paths", "seed", "estimate", "stderr", "analytic", "ratio",
    ] {
        assert!(r.get(key).is_some(), "{key}");
    }
    assert_eq!(r["seed"], 4);
    assert_eq!(r["n_paths"], 2000);
}
