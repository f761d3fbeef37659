use exfree_cli::config::{parse_config, resolve};
use exfree_cli::{
    dispatch, load_config, run_experiment, CliError, Experiment, Overrides, RunConfig,
};
use exfree_core::experiments::swap_time_from_trajectory;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn cfg_from(text: &str) -> Result<RunConfig, CliError> {
    resolve(parse_config(text)?, &Overrides::default())
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exfree-qst"))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

const QST: &str = r#"
experiment = "qst"
g_over_2pi_khz = 80
delta_over_2pi_khz = 475
dims = [4, 3, 4]
samples = 120
"#;

#[test]
fn units_are_converted_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&write(dir.path(), "c.toml", QST)).unwrap();
    assert_eq!(cfg.experiment, Experiment::Qst);
    assert!((cfg.params.g1 - 0.502_654_824_574_366_9).abs() < 1e-12);
    assert!((cfg.params.delta - 2.0 * std::f64::consts::PI * 0.475).abs() < 1e-12);
    assert_eq!(cfg.params.dims.levels(), &[4, 3, 4]);
    assert!(cfg.regime.oscillatory && cfg.warnings.is_empty());
    assert_eq!(cfg.label, "delta-475kHz");
}

#[test]
fn missing_fields_are_named() {
    let e = cfg_from("g_over_2pi_khz = 80\ndelta_over_2pi_khz = 475\n").unwrap_err();
    assert!(e.to_string().contains("`experiment`"), "{e}");
    assert_eq!(e.exit_code(), 2);

    let e = cfg_from("experiment = \"hom\"\ng_over_2pi_khz = 80\n").unwrap_err();
    assert!(e.to_string().contains("`delta_over_2pi_khz`"), "{e}");

    let e = cfg_from("experiment = \"qst\"\ndelta_over_2pi_khz = 475\n").unwrap_err();
    assert!(e.to_string().contains("`g_over_2pi_khz`"), "{e}");

    let e = cfg_from("experiment = \"qst\"\ng_over_2pi_khz = -3\ndelta_over_2pi_khz = 475\n")
        .unwrap_err();
    assert!(e.to_string().contains("`g_over_2pi_khz`"), "{e}");

    let e = cfg_from(&format!("{QST}\nbogus = 1\n")).unwrap_err();
    assert!(e.to_string().contains("bogus"), "{e}");

    let e = cfg_from("experiment = \"teleport\"\ng_over_2pi_khz = 80\n").unwrap_err();
    assert!(e.to_string().contains("`experiment`"), "{e}");

    let e = cfg_from(&QST.replace("dims = [4, 3, 4]", "dims = [4, 3]")).unwrap_err();
    assert!(e.to_string().contains("`dims`"), "{e}");

    let e = cfg_from(&format!("{QST}\n[binomial]\ncode = \"0E\"\n")).unwrap_err();
    assert!(e.to_string().contains("binomial.code"), "{e}");
}

#[test]
fn below_threshold_warns_then_fails_with_regime_code() {
    let cfg = cfg_from(&QST.replace("475", "200")).unwrap();
    assert!(!cfg.regime.oscillatory);
    assert!((cfg.regime.threshold - 2.0 * 2f64.sqrt() * cfg.params.g1).abs() < 1e-12);
    assert!(
        cfg.warnings.iter().any(|w| w.contains("226.3")),
        "{:?}",
        cfg.warnings
    );
    let e = run_experiment(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 3, "{e}");

    // detuning-free experiments do not care
    let cfg = cfg_from("experiment = \"compare-bs\"\ng_over_2pi_khz = 80\n").unwrap();
    assert!(cfg.warnings.is_empty());
}

#[test]
fn config_round_trips() {
    let text = r#"
experiment = "budget"
label = "table"
g_over_2pi_khz = 80.0
delta_over_2pi_khz = 373.0
dims = [6, 5, 6]
method = "lindblad"

[coherence]
modes = [{ t1_us = 265.0, n_th = 0.03 }, { t1_us = 300.0 }, { t1_us = 314.0, tphi_us = 900.0 }]

[[budget.items]]
name = "a"
infidelity = 0.1

[[budget.items]]
name = "b"
simulated = true
"#;
    let raw = parse_config(text).unwrap();
    let back = parse_config(&toml::to_string(&raw).unwrap()).unwrap();
    assert_eq!(raw, back);
    let cfg = resolve(raw, &Overrides::default()).unwrap();
    assert_eq!(cfg.params.coherence.len(), 3);
    assert_eq!(cfg.params.coherence[2].tphi, Some(900.0));
    assert_eq!(cfg.budget.len(), 2);
}

#[test]
fn command_line_overrides_apply() {
    let raw = parse_config(QST).unwrap();
    let o = Overrides {
        experiment: Some(Experiment::Qst),
        out_dir: Some("elsewhere".into()),
        method: Some(exfree_core::Method::Trotter),
        dims: Some(vec![3, 3, 3]),
    };
    let cfg = resolve(raw.clone(), &o).unwrap();
    assert_eq!(cfg.params.dims.levels(), &[3, 3, 3]);
    assert_eq!(cfg.method, exfree_core::Method::Trotter);
    assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));

    let clash = Overrides {
        experiment: Some(Experiment::Hom),
        ..Default::default()
    };
    assert_eq!(resolve(raw, &clash).unwrap_err().exit_code(), 2);
}

#[test]
fn qst_artifacts_and_period() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cfg_from(&QST.replace("[4, 3, 4]", "[6, 5, 6]").replace("120", "600")).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let report = dispatch(&cfg).unwrap();
    let out = dir.path().join("qst/delta-475kHz");
    assert_eq!(report.dirs, vec![out.clone()]);
    for f in [
        "manifest.json",
        "summary.json",
        "trajectory.csv",
        "run-manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(report.lines.iter().any(|l| l.contains("tau_ST = 17.43")));

    let mut rdr = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["t_us", "n1", "n2", "n3", "fidelity"]
    );
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    let swap = swap_time_from_trajectory(&col(0), &col(1), &col(3)).unwrap();
    assert!((swap / 17.434 - 1.0).abs() < 5e-3, "swap time {swap}");

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!((summary["tau_st_us"].as_f64().unwrap() - 17.434).abs() < 1e-3);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"], "qst");
    assert!(manifest["versions"]["exfree-core"].is_string());
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let text = r#"
experiment = "hom"
g_over_2pi_khz = 80
delta_over_2pi_khz = 775
dims = [4, 3, 4]
samples = 60
"#;
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_from(text).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        dispatch(&cfg).unwrap();
        dir
    };
    let (a, b) = (run(), run());
    let files = files_under(a.path());
    assert_eq!(files, files_under(b.path()));
    assert!(files.iter().any(|f| f.ends_with("pauli.csv")));
    for f in files {
        if f.ends_with("run-manifest.json") {
            continue;
        }
        assert_eq!(
            fs::read(a.path().join(&f)).unwrap(),
            fs::read(b.path().join(&f)).unwrap(),
            "{f:?}"
        );
    }
}

#[test]
fn budget_prints_combined_fidelity() {
    let text = r#"
experiment = "budget"
g_over_2pi_khz = 80
delta_over_2pi_khz = 373
dims = [3, 3, 3]

[[budget.items]]
name = "auxiliary qubit excitation"
infidelity = 0.073
[[budget.items]]
name = "residual photons in S2"
infidelity = 0.06
[[budget.items]]
name = "cavity decoherence"
infidelity = 0.042
[[budget.items]]
name = "state preparation and tomography"
infidelity = 0.089
[[budget.items]]
name = "others"
infidelity = 0.037
"#;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cfg_from(text).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let report = dispatch(&cfg).unwrap();
    assert!(
        report
            .lines
            .iter()
            .any(|l| l.starts_with("combined F ≈ 0.80")),
        "{:?}",
        report.lines
    );
    let csv = fs::read_to_string(dir.path().join("budget/delta-373kHz/budget.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn sweep_writes_one_set_per_detuning() {
    let text = r#"
experiment = "sweep"
g_over_2pi_khz = 80
dims = [3, 3, 3]
samples = 40

[sweep]
experiment = "qst"
delta_over_2pi_khz = [373, 463, 475, 675, 775]
"#;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cfg_from(text).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let report = dispatch(&cfg).unwrap();
    assert_eq!(report.dirs.len(), 5);
    for d in ["373", "463", "475", "675", "775"] {
        let p = dir.path().join(format!("sweep/delta-{d}kHz"));
        assert!(p.join("trajectory.csv").is_file(), "{p:?}");
        assert!(p.join("manifest.json").is_file());
    }

    let bad = cfg_from(&text.replace("373, ", "200, 373, ")).unwrap();
    assert!(!bad.warnings.is_empty());
    assert_eq!(run_sweep_err(bad, dir.path()), 3);
}

fn run_sweep_err(mut cfg: RunConfig, out: &Path) -> i32 {
    cfg.out_dir = out.join("bad");
    let code = dispatch(&cfg).unwrap_err().exit_code();
    assert!(!out.join("bad").exists());
    code
}

#[test]
fn calibrations_recover_ground_truth() {
    let g = cfg_from("experiment = \"calibrate-g\"\ng_over_2pi_khz = 80\n").unwrap();
    let out = run_experiment(&g).unwrap();
    assert!(out.summary["relative_error"].as_f64().unwrap().abs() < 1e-3);
    assert!(out.files.contains_key("data.csv"));

    let d = cfg_from("experiment = \"calibrate-delta0\"\ng_over_2pi_khz = 80\n").unwrap();
    let out = run_experiment(&d).unwrap();
    assert!((out.summary["delta_0_over_2pi_khz"].as_f64().unwrap() / 275.0 - 1.0).abs() < 0.02);
}

#[test]
fn failed_runs_leave_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // binomial codewords do not fit in three levels
    let text = r#"
experiment = "binomial"
g_over_2pi_khz = 80
delta_over_2pi_khz = 467.4
dims = [3, 3, 3]
"#;
    let mut cfg = cfg_from(text).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    assert!(dispatch(&cfg).is_err());
    assert!(files_under(dir.path()).is_empty());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let ok = write(dir.path(), "ok.toml", QST);
    let s = bin()
        .args(["qst", "--config"])
        .arg(&ok)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        s.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&s.stderr)
    );
    assert!(String::from_utf8_lossy(&s.stdout).contains("tau_ST"));

    let s = bin()
        .args(["qst", "--dims", "3,3,3", "--method", "trotter", "--config"])
        .arg(&ok)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        s.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&s.stderr)
    );
    let m = fs::read_to_string(out.join("qst/delta-475kHz/manifest.json")).unwrap();
    assert!(m.contains("\"trotter\""));

    let missing = write(dir.path(), "missing.toml", "g_over_2pi_khz = 80\n");
    let s = bin()
        .args(["hom", "--config"])
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&s.stderr).contains("delta_over_2pi_khz"));

    let regime = write(dir.path(), "regime.toml", &QST.replace("475", "200"));
    let s = bin()
        .args(["qst", "--config"])
        .arg(&regime)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&s.stderr).contains("threshold"));

    let flat: String = std::iter::once("t_us,p_vacuum".to_string())
        .chain((0..20).map(|i| format!("{},0.7", i as f64 * 0.25)))
        .collect::<Vec<_>>()
        .join("\n");
    let data = write(dir.path(), "flat.csv", &flat);
    let fit = write(
        dir.path(),
        "fit.toml",
        &format!(
            "experiment = \"calibrate-g\"\ng_over_2pi_khz = 80\n[calibration]\ndata_csv = {:?}\n",
            data.display().to_string()
        ),
    );
    let s = bin()
        .args(["calibrate-g", "--config"])
        .arg(&fit)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        s.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&s.stderr)
    );
    assert!(!out.join("calibrate-g").join("default").exists());
}
