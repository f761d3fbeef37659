//! Runs a configured experiment and writes its artifacts.

use crate::config::{Experiment, RunConfig};
use crate::CliError;
use exfree_core::analytic::{tau_s2, tau_st};
use exfree_core::experiments::{
    compare_tms_vs_bs, error_budget_report, fit_stark_detuning, fit_tms_strength,
    generate_tmsv_trace, run_binomial_transfer, run_hom, run_purified_qst, run_single_photon_qst,
    stark_trace, swap_time_from_trajectory, tau_s2_model, tmsv_vacuum_model, BinomialOptions,
    FitOptions,
};
use exfree_core::model::angular_to_khz;
use exfree_core::{EvolutionSpec, FitResult, Method, ProtocolResult};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// What one run produced before anything touches the disk.
#[derive(Debug, Default)]
pub struct Outcome {
    /// File name to contents.
    pub files: BTreeMap<String, Vec<u8>>,
    pub summary: BTreeMap<String, Value>,
    /// Human-readable summary lines.
    pub lines: Vec<String>,
}

/// Where artifacts went and what to print.
#[derive(Debug, Default)]
pub struct Report {
    pub dirs: Vec<PathBuf>,
    pub lines: Vec<String>,
}

fn runner(e: exfree_core::Error) -> CliError {
    CliError::from(e)
}

fn fmt_e(v: f64) -> String {
    format!("{v:.12e}")
}

fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn swap_time(cfg: &RunConfig) -> Result<f64, CliError> {
    tau_st(&cfg.params).map_err(runner)
}

/// Default duration is `multiple * tau_ST`; asymmetric couplings need an
/// explicit `duration_us`.
fn duration(cfg: &RunConfig, multiple: f64) -> Result<f64, CliError> {
    match cfg.duration {
        Some(d) => Ok(d),
        None => match swap_time(cfg) {
            Ok(t) => Ok(multiple * t),
            Err(_) => Err(CliError::Config(
                "missing field `duration_us` (no closed-form swap time for unequal couplings)"
                    .into(),
            )),
        },
    }
}

fn evolution_spec(cfg: &RunConfig, total: f64) -> EvolutionSpec {
    let mut spec = EvolutionSpec::exact(total)
        .with_method(cfg.method)
        .with_rtol(cfg.rtol)
        .with_uniform_samples(cfg.samples);
    if cfg.method == Method::Trotter {
        spec.trotter_dt = Some(cfg.trotter_dt.unwrap_or(total / 3000.0));
    }
    spec
}

fn timing_lines(cfg: &RunConfig, out: &mut Outcome) {
    let p = &cfg.params;
    out.lines.push(format!(
        "g/2pi = {:.3} kHz, delta/2pi = {:.3} kHz, dims {}, method {}",
        angular_to_khz(p.g1),
        angular_to_khz(p.delta),
        p.dims,
        cfg.method
    ));
    if let (Ok(t), Ok(s)) = (tau_st(p), tau_s2(p)) {
        out.lines
            .push(format!("tau_ST = {t:.4} us, tau_S2 = {s:.4} us"));
    }
}

fn protocol_outcome(cfg: &RunConfig, r: &ProtocolResult) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut buf = Vec::new();
    r.write_trajectory_csv(&mut buf).map_err(runner)?;
    out.files.insert("trajectory.csv".into(), buf);
    for w in &r.wigner {
        let mut buf = Vec::new();
        w.map.write_csv(&mut buf).map_err(runner)?;
        out.files.insert(format!("wigner_{}.csv", w.name), buf);
    }
    for (k, v) in &r.scalars {
        out.summary.insert(k.clone(), json!(v));
    }
    timing_lines(cfg, &mut out);
    Ok(out)
}

fn run_qst(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = evolution_spec(cfg, duration(cfg, 3.0)?);
    let r = run_single_photon_qst(&cfg.params, &spec).map_err(runner)?;
    let mut out = protocol_outcome(cfg, &r)?;
    match swap_time_from_trajectory(&r.times, &r.n1, &r.n3) {
        Ok(t) => {
            out.summary
                .insert("swap_time_from_trajectory_us".into(), json!(t));
            out.summary
                .insert("oscillation_period_us".into(), json!(2.0 * t));
            out.lines.push(format!(
                "swap time from trajectory = {t:.4} us (full period {:.4} us)",
                2.0 * t
            ));
        }
        Err(e) => out.lines.push(format!("swap time not extracted: {e}")),
    }
    if let Some(f) = r.scalar("process_fidelity") {
        out.lines.push(format!(
            "process fidelity at t = {:.3} us: {f:.4}",
            spec.total_time
        ));
    }
    Ok(out)
}

fn run_purified(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = evolution_spec(cfg, duration(cfg, 1.0)?);
    let r =
        run_purified_qst(&cfg.params, &spec, cfg.purification, &cfg.excitation).map_err(runner)?;
    let mut out = protocol_outcome(cfg, &r)?;
    out.summary
        .insert("purification".into(), json!(cfg.purification.as_str()));
    let s = |k: &str| r.scalar(k).unwrap_or(f64::NAN);
    out.lines.push(format!(
        "purification {}: process fidelity {:.4}, qubit failure {:.4}, cavity failure {:.4}",
        cfg.purification.as_str(),
        s("process_fidelity"),
        s("qubit_failure"),
        s("cavity_failure")
    ));
    if let Some(ret) = r.retention.last() {
        out.lines.push(format!("success probability {ret:.4}"));
    }
    Ok(out)
}

fn run_hom_experiment(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = evolution_spec(cfg, duration(cfg, 2.0)?);
    let r = run_hom(&cfg.params, &spec).map_err(runner)?;
    let mut out = protocol_outcome(cfg, &r)?;
    out.files.insert(
        "negativity.csv".into(),
        csv_bytes(
            &["t_us", "negativity", "weight_02"],
            r.negativity
                .iter()
                .map(|n| vec![fmt_e(n.time), fmt_e(n.negativity), fmt_e(n.weight)]),
        )?,
    );
    let mut rows = Vec::new();
    for snap in &r.pauli {
        for (label, v) in snap.table.entries() {
            rows.push(vec![fmt_e(snap.time), label, fmt_e(v)]);
        }
    }
    out.files.insert(
        "pauli.csv".into(),
        csv_bytes(&["t_us", "operator", "expectation"], rows)?,
    );
    let s = |k: &str| r.scalar(k).unwrap_or(f64::NAN);
    out.lines.push(format!(
        "half swap: P11 = {:.3e}, P02+P20 = {:.4}, Bell fidelity {:.4}, negativity {:.4}",
        s("p11_half_swap"),
        s("p02_plus_p20_half_swap"),
        s("bell_fidelity"),
        s("negativity")
    ));
    Ok(out)
}

fn run_binomial(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = evolution_spec(cfg, duration(cfg, 1.0)?);
    let opts = BinomialOptions {
        inject_loss: cfg.binomial.inject_loss,
        wigner_grid: cfg.binomial.wigner_grid,
    };
    let r = run_binomial_transfer(&cfg.params, &spec, cfg.binomial.code, &opts).map_err(runner)?;
    let mut out = protocol_outcome(cfg, &r)?;
    out.summary
        .insert("code".into(), json!(cfg.binomial.code.as_str()));
    let s = |k: &str| r.scalar(k).unwrap_or(f64::NAN);
    out.lines.push(format!(
        "code {}: fidelity {:.4}, even parity {:.4} (F = {:.4}), odd parity {:.4}",
        cfg.binomial.code,
        s("fidelity_unconditioned"),
        s("p_even"),
        s("fidelity_even"),
        s("p_odd")
    ));
    if let (true, Some(f)) = (cfg.binomial.inject_loss, r.scalar("fidelity_odd_error")) {
        out.lines
            .push(format!("odd branch fidelity to the error state {f:.4}"));
    }
    Ok(out)
}

fn fit_summary(out: &mut Outcome, fit: &FitResult) {
    out.summary.insert(
        "fit".into(),
        serde_json::to_value(fit).unwrap_or(Value::Null),
    );
}

fn require_converged(fit: &FitResult) -> Result<(), CliError> {
    if fit.converged && fit.unbounded.is_empty() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "fit did not converge (rms {:.3e}, unbounded {:?})",
            fit.rms, fit.unbounded
        )))
    }
}

fn read_pairs(path: &Path, columns: [&str; 2]) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("field `calibration.data_csv`: {e}")))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Config(format!("field `calibration.data_csv`: {e}")))?
        .clone();
    let idx = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "field `calibration.data_csv`: no column named {name:?}"
                ))
            })
    };
    let (a, b) = (idx(columns[0])?, idx(columns[1])?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec =
            rec.map_err(|e| CliError::Config(format!("field `calibration.data_csv`: {e}")))?;
        let parse = |j: usize| {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "field `calibration.data_csv`: bad number on data row {}",
                        i + 1
                    ))
                })
        };
        out.push((parse(a)?, parse(b)?));
    }
    Ok(out)
}

fn run_calibrate_g(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = cfg.params.g1;
    let c = &cfg.calibration;
    let (samples, synthetic) = match &c.data_csv {
        Some(p) => (read_pairs(p, ["t_us", "p_vacuum"])?, false),
        None => {
            let t_max = c.t_max.unwrap_or(2.0 / g);
            let n = c.points.max(2);
            let grid: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
            (
                generate_tmsv_trace(g, &grid, c.noise).map_err(runner)?,
                true,
            )
        }
    };
    let fit = fit_tms_strength(&samples, &FitOptions::default()).map_err(runner)?;
    require_converged(&fit)?;
    let (a, b, gf) = (
        fit.get("a").unwrap_or(f64::NAN),
        fit.get("b").unwrap_or(f64::NAN),
        fit.get("g").unwrap_or(f64::NAN),
    );
    let mut out = Outcome::default();
    out.files.insert(
        "data.csv".into(),
        csv_bytes(
            &["t_us", "p_vacuum", "p_vacuum_fit"],
            samples
                .iter()
                .map(|&(t, v)| vec![fmt_e(t), fmt_e(v), fmt_e(tmsv_vacuum_model(a, b, gf, t))]),
        )?,
    );
    fit_summary(&mut out, &fit);
    out.summary.insert("g_rad_per_us".into(), json!(gf));
    out.summary
        .insert("g_over_2pi_khz".into(), json!(angular_to_khz(gf)));
    out.lines.push(format!(
        "fitted g/2pi = {:.4} kHz (sigma {:.2e} kHz) from {} points",
        angular_to_khz(gf),
        angular_to_khz(fit.sigma("g").unwrap_or(f64::NAN)),
        samples.len()
    ));
    if synthetic {
        let rel = gf / g - 1.0;
        out.summary.insert("relative_error".into(), json!(rel));
        out.lines
            .push(format!("relative error vs ground truth {rel:.2e}"));
    }
    Ok(out)
}

fn run_calibrate_delta0(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = cfg.params.g1;
    let c = &cfg.calibration;
    let (points, synthetic) = match &c.data_csv {
        Some(p) => (
            read_pairs(p, ["delta_d_khz", "tau_s2_us"])?
                .into_iter()
                .map(|(d, t)| (exfree_core::khz_to_angular(d), t))
                .collect::<Vec<_>>(),
            false,
        ),
        None => (
            stark_trace(&c.delta_d, c.delta0_truth, g).map_err(runner)?,
            true,
        ),
    };
    let fit = fit_stark_detuning(&points, g, &FitOptions::default()).map_err(runner)?;
    require_converged(&fit)?;
    let d0 = fit.get("delta_0").unwrap_or(f64::NAN);
    let mut out = Outcome::default();
    out.files.insert(
        "data.csv".into(),
        csv_bytes(
            &["delta_d_khz", "tau_s2_us", "tau_s2_fit_us"],
            points.iter().map(|&(d, t)| {
                vec![
                    fmt_e(angular_to_khz(d)),
                    fmt_e(t),
                    fmt_e(tau_s2_model(d, d0, g).unwrap_or(f64::NAN)),
                ]
            }),
        )?,
    );
    fit_summary(&mut out, &fit);
    out.summary
        .insert("delta_0_over_2pi_khz".into(), json!(angular_to_khz(d0)));
    out.lines.push(format!(
        "fitted delta_0/2pi = {:.3} kHz (sigma {:.2e} kHz) from {} points",
        angular_to_khz(d0),
        angular_to_khz(fit.sigma("delta_0").unwrap_or(f64::NAN)),
        points.len()
    ));
    if synthetic {
        let rel = d0 / c.delta0_truth - 1.0;
        out.summary.insert("relative_error".into(), json!(rel));
        out.lines
            .push(format!("relative error vs ground truth {rel:.2e}"));
    }
    Ok(out)
}

fn run_budget(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = duration(cfg, 1.0)?;
    let report = error_budget_report(&cfg.params, t, &cfg.budget, cfg.rtol).map_err(runner)?;
    let mut out = Outcome::default();
    let opt = |v: Option<f64>| v.map(fmt_e).unwrap_or_default();
    out.files.insert(
        "budget.csv".into(),
        csv_bytes(
            &["item", "infidelity", "fidelity_with", "fidelity_without"],
            report.rows.iter().map(|r| {
                vec![
                    r.name.clone(),
                    fmt_e(r.infidelity),
                    opt(r.fidelity_with),
                    opt(r.fidelity_without),
                ]
            }),
        )?,
    );
    out.summary.insert("pump_time_us".into(), json!(t));
    out.summary.insert(
        "rows".into(),
        serde_json::to_value(&report.rows).unwrap_or(Value::Null),
    );
    out.summary
        .insert("combined_fidelity".into(), json!(report.combined_fidelity));
    timing_lines(cfg, &mut out);
    for r in &report.rows {
        out.lines
            .push(format!("{:<36} {:>6.2} %", r.name, 100.0 * r.infidelity));
    }
    out.lines.push(format!(
        "combined F ≈ {:.2} ({:.4})",
        report.combined_fidelity, report.combined_fidelity
    ));
    Ok(out)
}

fn run_compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = cfg.params.g1;
    let rows = compare_tms_vs_bs(g, &cfg.compare_grid).map_err(runner)?;
    let opt = |v: Option<f64>| v.map(fmt_e).unwrap_or_default();
    let mut out = Outcome::default();
    out.files.insert(
        "comparison.csv".into(),
        csv_bytes(
            &[
                "delta_over_2pi_khz",
                "tms_tau_st_us",
                "bs_tau_st_us",
                "tms_n2_amplitude",
                "bs_n2_amplitude",
                "tms_oscillatory",
            ],
            rows.iter().map(|r| {
                vec![
                    fmt_e(angular_to_khz(r.delta)),
                    opt(r.tms_tau_st),
                    fmt_e(r.bs_tau_st),
                    opt(r.tms_n2_amplitude),
                    fmt_e(r.bs_n2_amplitude),
                    r.tms_in_regime.to_string(),
                ]
            }),
        )?,
    );
    out.summary.insert(
        "rows".into(),
        serde_json::to_value(&rows).unwrap_or(Value::Null),
    );
    for r in &rows {
        out.lines.push(match (r.tms_tau_st, r.tms_n2_amplitude) {
            (Some(t), Some(a)) => format!(
                "delta/2pi {:>8.1} kHz: tau_ST {t:>8.3} us vs {:>8.3} us, n2 amplitude {a:.4} vs {:.4}",
                angular_to_khz(r.delta),
                r.bs_tau_st,
                r.bs_n2_amplitude
            ),
            _ => format!(
                "delta/2pi {:>8.1} kHz: squeezing chain below threshold; exchange tau_ST {:.3} us",
                angular_to_khz(r.delta),
                r.bs_tau_st
            ),
        });
    }
    Ok(out)
}

/// Runs one non-sweep experiment in memory.
pub fn run_experiment(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.experiment.needs_oscillatory() {
        cfg.params.require_oscillatory().map_err(runner)?;
    }
    let mut out = match cfg.experiment {
        Experiment::Qst => run_qst(cfg),
        Experiment::PurifiedQst => run_purified(cfg),
        Experiment::Hom => run_hom_experiment(cfg),
        Experiment::Binomial => run_binomial(cfg),
        Experiment::CalibrateG => run_calibrate_g(cfg),
        Experiment::CalibrateDelta0 => run_calibrate_delta0(cfg),
        Experiment::Budget => run_budget(cfg),
        Experiment::CompareBs => run_compare(cfg),
        Experiment::Sweep => Err(CliError::Config("a sweep cannot be nested".into())),
    }?;
    out.summary
        .insert("experiment".into(), json!(cfg.experiment.as_str()));
    out.summary.insert("label".into(), json!(cfg.label));
    if let Ok(t) = tau_st(&cfg.params) {
        out.summary.entry("tau_st_us".into()).or_insert(json!(t));
    }
    Ok(out)
}

fn manifest(cfg: &RunConfig) -> Value {
    let p = &cfg.params;
    json!({
        "experiment": cfg.experiment.as_str(),
        "label": cfg.label,
        "config": cfg.source,
        "resolved": {
            "g1_rad_per_us": p.g1,
            "g2_rad_per_us": p.g2,
            "delta_rad_per_us": p.delta,
            "dims": p.dims.levels(),
            "coherence": p.coherence,
            "method": cfg.method.as_str(),
            "samples": cfg.samples,
            "rtol": cfg.rtol,
            "oscillatory": cfg.regime.oscillatory,
            "threshold_rad_per_us": cfg.regime.threshold,
        },
        "versions": {
            "exfree-core": exfree_core::VERSION,
            "exfree-cli": env!("CARGO_PKG_VERSION"),
        },
    })
}

/// Writes into a hidden sibling directory and renames it into place, so a
/// failed write never leaves a half-populated artifact directory.
fn write_artifacts(dir: &Path, cfg: &RunConfig, out: &Outcome) -> Result<(), CliError> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let partial = parent.join(format!(".{name}.partial"));
    let io = |e: std::io::Error| {
        CliError::Runtime(format!("writing artifacts under {}: {e}", parent.display()))
    };
    fs::create_dir_all(parent).map_err(io)?;
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(io)?;
    }
    let result = (|| -> Result<(), CliError> {
        fs::create_dir_all(&partial).map_err(io)?;
        fs::write(partial.join("manifest.json"), json_bytes(&manifest(cfg))?).map_err(io)?;
        fs::write(partial.join("summary.json"), json_bytes(&out.summary)?).map_err(io)?;
        for (file, bytes) in &out.files {
            fs::write(partial.join(file), bytes).map_err(io)?;
        }
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(io)?;
        }
        fs::rename(&partial, dir).map_err(io)
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&partial);
    }
    result
}

fn write_run_manifest(dir: &Path, started: SystemTime, elapsed: f64) -> Result<(), CliError> {
    let secs = |t: SystemTime| {
        t.duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    };
    let v = json!({
        "started_unix_s": secs(started),
        "elapsed_s": elapsed,
        "argv": std::env::args().collect::<Vec<_>>(),
    });
    fs::write(dir.join("run-manifest.json"), json_bytes(&v)?)
        .map_err(|e| CliError::Runtime(format!("writing run manifest: {e}")))
}

fn run_and_write(cfg: &RunConfig, dir: PathBuf) -> Result<(PathBuf, Vec<String>), CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let out = run_experiment(cfg)?;
    write_artifacts(&dir, cfg, &out)?;
    write_run_manifest(&dir, started, clock.elapsed().as_secs_f64())?;
    Ok((dir, out.lines))
}

/// Runs the configured experiment and writes
/// `<out_dir>/<experiment>/<label>/`. Sweep points run in parallel, each in
/// its own directory under `<out_dir>/sweep/`.
pub fn dispatch(cfg: &RunConfig) -> Result<Report, CliError> {
    let root = cfg.out_dir.join(cfg.experiment.as_str());
    match &cfg.sweep {
        None => {
            let (dir, lines) = run_and_write(cfg, root.join(&cfg.label))?;
            let mut report = Report::default();
            report
                .lines
                .push(format!("{} [{}]", cfg.experiment, cfg.label));
            report.lines.extend(lines);
            report.lines.push(format!("artifacts: {}", dir.display()));
            report.dirs.push(dir);
            Ok(report)
        }
        Some(sweep) => {
            let points: Vec<RunConfig> = sweep
                .deltas
                .iter()
                .map(|&d| cfg.at_delta(sweep.experiment, d))
                .collect();
            for p in &points {
                p.params.require_oscillatory().map_err(runner)?;
            }
            let results: Vec<Result<(PathBuf, Vec<String>), CliError>> = points
                .par_iter()
                .map(|p| run_and_write(p, root.join(&p.label)))
                .collect();
            let mut report = Report::default();
            let mut first_err = None;
            for (p, r) in points.iter().zip(results) {
                match r {
                    Ok((dir, lines)) => {
                        report.lines.push(format!("{} [{}]", p.experiment, p.label));
                        report
                            .lines
                            .extend(lines.into_iter().map(|l| format!("  {l}")));
                        report.dirs.push(dir);
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                for d in &report.dirs {
                    let _ = fs::remove_dir_all(d);
                }
                return Err(e);
            }
            report.lines.push(format!(
                "artifacts: {} directories under {}",
                report.dirs.len(),
                root.display()
            ));
            Ok(report)
        }
    }
}
