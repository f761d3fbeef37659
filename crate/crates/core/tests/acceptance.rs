//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use exfree_core::analytic::{
    heisenberg_coeffs, mean_photon_numbers, sweet_point_detuning, tau_st, SymmetricChain,
};
use exfree_core::dynamics::{evolve_chain, evolve_trotter, EvolutionSpec, Propagator, State};
use exfree_core::experiments::{
    compare_tms_vs_bs, device_budget_items, error_budget_report, fit_stark_detuning,
    fit_tms_strength, generate_tmsv_trace, oscillation_period, run_binomial_transfer, run_hom,
    run_purified_qst, run_single_photon_qst, simulate_tmsv_vacuum, stark_trace, tmsv_vacuum_model,
    BinomialOptions, BudgetItem, FitOptions, Purification, QubitExcitation,
};
use exfree_core::metrics::depolarizing_budget;
use exfree_core::model::{angular_to_khz, build_h_full, device_cavity_coherence};
use exfree_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const G_KHZ: f64 = 80.0;

fn chain(delta_khz: f64, dims: [usize; 3]) -> SystemParams {
    SystemParams::from_khz(G_KHZ, delta_khz)
        .unwrap()
        .with_dims(ModeDims::new(dims.to_vec()).unwrap())
        .unwrap()
}

fn sweet_chain(k: u32, dims: [usize; 3]) -> SystemParams {
    let g = khz_to_angular(G_KHZ);
    let delta = sweet_point_detuning(g, k).unwrap();
    SystemParams::new(g, g, delta, ModeDims::new(dims.to_vec()).unwrap()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn ac1() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for dk in [475.0, 675.0, 775.0] {
        let p = chain(dk, [6, 5, 6]);
        let start = Instant::now();
        let tau = tau_st(&p).map_err(err)?;
        let spec = EvolutionSpec::exact(2.0 * tau).with_uniform_samples(400);
        let psi = fock_state(&p.dims, &[1, 0, 0]).map_err(err)?;
        let states = evolve_chain(&p, &State::Pure(psi), &spec).map_err(err)?;
        let mut worst = 0.0f64;
        for (t, s) in spec.times().iter().zip(&states) {
            let (a1, a2, a3) = mean_photon_numbers(&p, *t, 1).map_err(err)?;
            let n = s.mean_occupations();
            worst = worst
                .max((n[0] - a1).abs())
                .max((n[1] - a2).abs())
                .max((n[2] - a3).abs());
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= worst <= 1e-4 && secs < 10.0;
        parts.push(format!("{dk} kHz max|dn|={worst:.2e} ({secs:.2}s)"));
    }
    check(ok, format!("{} [tol 1e-4, 10 s]", parts.join(", ")))
}

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = khz_to_angular(rng.random_range(10.0..200.0));
        let delta = 2.0 * 2f64.sqrt() * g * rng.random_range(1.01..20.0);
        let t = rng.random_range(0.0..100.0);
        let p =
            SystemParams::new(g, g, delta, ModeDims::new(vec![2, 2, 2]).unwrap()).map_err(err)?;
        let c = heisenberg_coeffs(&p, t).map_err(err)?;
        worst = worst
            .max(c.norm_defect().abs())
            .max(c.cross_defect().norm());
    }
    check(
        worst <= 1e-10,
        format!("100 random triples, worst defect {worst:.2e} [tol 1e-10]"),
    )
}

fn ac3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (dk, expect, tol) in [(475.0, 17.4, 0.01), (775.0, 30.0, 0.02)] {
        let p = chain(dk, [6, 5, 6]);
        let tau = tau_st(&p).map_err(err)?;
        let r = run_single_photon_qst(
            &p,
            &EvolutionSpec::exact(3.0 * tau).with_uniform_samples(3000),
        )
        .map_err(err)?;
        let extracted = oscillation_period(&r).map_err(err)? / 2.0;
        let rel_quoted = (tau / expect - 1.0).abs();
        let rel_traj = (extracted / tau - 1.0).abs();
        ok &= rel_quoted <= tol && rel_traj <= 5e-3;
        parts.push(format!(
            "{dk} kHz tau={tau:.3} us (vs {expect}: {:.2}%), trajectory {extracted:.3} us ({:.3}%)",
            100.0 * rel_quoted,
            100.0 * rel_traj
        ));
    }
    check(ok, parts.join("; "))
}

fn ac4() -> Outcome {
    let g = khz_to_angular(G_KHZ);
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, quoted) in [(4u32, 373.0), (7, 463.0)] {
        let closed = sweet_point_detuning(g, k).map_err(err)?;
        let ratio = |d: f64| {
            let c = SymmetricChain::new(g, d).unwrap();
            c.tau_st() / c.tau_s2() - k as f64
        };
        let threshold = 2.0 * 2f64.sqrt() * g;
        let (mut lo, mut hi) = (threshold * (1.0 + 1e-12), threshold * 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let root = 0.5 * (lo + hi);
        let rel = (root / closed - 1.0).abs();
        let khz = angular_to_khz(root);
        let off = (khz / quoted - 1.0).abs();
        ok &= rel <= 1e-9 && off <= 0.02;
        parts.push(format!(
            "k={k} {khz:.1} kHz (vs {quoted}: {:.2}%, closed form rel {rel:.1e})",
            100.0 * off
        ));
    }
    check(ok, parts.join("; "))
}

fn ac5() -> Outcome {
    let p = chain(475.0, [6, 5, 6]);
    let tau = tau_st(&p).map_err(err)?;
    let psi = fock_state(&p.dims, &[1, 0, 0]).map_err(err)?;
    let exact = Propagator::new(&build_h_full(&p).map_err(err)?)
        .map_err(err)?
        .propagate(&psi, tau)
        .map_err(err)?;
    let mut errors = Vec::new();
    for div in [250.0, 500.0, 1000.0, 2000.0, 4000.0] {
        let s = evolve_trotter(&p, &psi, tau, tau / div).map_err(err)?;
        errors.push((s.amplitudes() - exact.amplitudes()).norm());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = ratios.iter().all(|r| (1.5..=3.0).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    check(
        ok,
        format!(
            "dt tau/250..tau/4000 error ratios [{}] [range 1.5..3]",
            shown.join(", ")
        ),
    )
}

fn ac6() -> Outcome {
    let p = chain(775.0, [6, 5, 6]);
    let tau = tau_st(&p).map_err(err)?;
    let r = run_hom(
        &p,
        &EvolutionSpec::exact(2.0 * tau).with_uniform_samples(200),
    )
    .map_err(err)?;
    let s = |k: &str| r.scalar(k).unwrap_or(f64::NAN);
    let (p11, p02, bell, neg) = (
        s("p11_half_swap"),
        s("p02_plus_p20_half_swap"),
        s("bell_fidelity"),
        s("negativity"),
    );
    check(
        p11 <= 0.02 && p02 >= 0.96 && bell >= 0.98 && (neg - 0.5).abs() <= 0.01,
        format!("P11={p11:.2e} P02+P20={p02:.4} bell fidelity={bell:.4} negativity={neg:.4}"),
    )
}

fn ac7() -> Outcome {
    let table = depolarizing_budget(&[0.073, 0.06, 0.042, 0.089, 0.037]).map_err(err)?;
    let p = chain(373.0, [6, 5, 6]);
    let tau = tau_st(&p).map_err(err)?;
    let items: Vec<BudgetItem> = device_budget_items()
        .into_iter()
        .filter(|i| matches!(i, BudgetItem::Simulated { .. }))
        .collect();
    let report = error_budget_report(&p, tau, &items, 1e-8).map_err(err)?;
    let cavity = report.rows[0].infidelity;

    let q = QubitExcitation::default();
    let spec = EvolutionSpec::exact(tau).with_uniform_samples(20);
    let f = |pur| -> std::result::Result<f64, String> {
        run_purified_qst(&p, &spec, pur, &q)
            .map_err(err)?
            .scalar("process_fidelity")
            .ok_or_else(|| "missing process fidelity".to_string())
    };
    let (unpurified, purified) = (f(Purification::None)?, f(Purification::QubitCavity)?);
    check(
        (table - 0.799).abs() <= 0.005 && (cavity - 0.042).abs() <= 0.015 && purified > unpurified,
        format!(
            "combined F={table:.4}, cavity ablation {:.2}%, purified F={purified:.4} > unpurified {unpurified:.4}",
            100.0 * cavity
        ),
    )
}

fn ac8() -> Outcome {
    let p = sweet_chain(7, [12, 10, 12]);
    let tau = tau_st(&p).map_err(err)?;
    let spec = EvolutionSpec::exact(tau);
    let opts = |inject_loss| BinomialOptions {
        inject_loss,
        wigner_grid: None,
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for label in [CodeLabel::ZeroL, CodeLabel::PlusIL] {
        let ideal = run_binomial_transfer(&p, &spec, label, &opts(false)).map_err(err)?;
        let lost = run_binomial_transfer(&p, &spec, label, &opts(true)).map_err(err)?;
        let f = ideal.scalar("fidelity_unconditioned").unwrap_or(f64::NAN);
        let e = lost.scalar("fidelity_odd_error").unwrap_or(f64::NAN);
        ok &= f >= 0.99 && e >= 0.99;
        parts.push(format!("{label} F={f:.4} error branch F={e:.4}"));
    }

    let open = sweet_chain(7, [7, 4, 7])
        .with_coherence(device_cavity_coherence().to_vec())
        .map_err(err)?;
    let r = run_binomial_transfer(
        &open,
        &EvolutionSpec::lindblad(tau),
        CodeLabel::ZeroL,
        &opts(false),
    )
    .map_err(err)?;
    let even = r.scalar("fidelity_even").unwrap_or(f64::NAN);
    let all = r.scalar("fidelity_unconditioned").unwrap_or(f64::NAN);
    ok &= even > all;
    parts.push(format!(
        "open even-parity F={even:.4} > unconditioned {all:.4}"
    ));
    check(ok, parts.join("; "))
}

fn ac9() -> Outcome {
    let g = khz_to_angular(G_KHZ);
    let grid: Vec<f64> = (0..101).map(|i| 2.0 / g * i as f64 / 100.0).collect();
    let trace = generate_tmsv_trace(g, &grid, None).map_err(err)?;
    let fit = fit_tms_strength(&trace, &FitOptions::default()).map_err(err)?;
    let g_rel = (fit.get("g").unwrap_or(f64::NAN) / g - 1.0).abs();

    let d0 = khz_to_angular(275.0);
    let dd: Vec<f64> = [0.0, 25.0, 50.0, 100.0, 150.0, 200.0]
        .iter()
        .map(|&k| khz_to_angular(k))
        .collect();
    let pts = stark_trace(&dd, d0, g).map_err(err)?;
    let stark = fit_stark_detuning(&pts, g, &FitOptions::default()).map_err(err)?;
    let d0_rel = (stark.get("delta_0").unwrap_or(f64::NAN) / d0 - 1.0).abs();

    let short: Vec<f64> = (0..21).map(|i| i as f64 / 20.0 / g).collect();
    let sim = simulate_tmsv_vacuum(g, &short, 15).map_err(err)?;
    let worst = sim
        .iter()
        .map(|&(t, v)| (v - tmsv_vacuum_model(1.0, 0.0, g, t)).abs())
        .fold(0.0, f64::max);
    check(
        g_rel <= 1e-3 && d0_rel <= 0.02 && worst <= 1e-3,
        format!(
            "g rel err {g_rel:.1e}, delta_0 rel err {d0_rel:.1e}, TMSV sim max err {worst:.1e} (gt <= 1)"
        ),
    )
}

fn ac10() -> Outcome {
    let g = khz_to_angular(G_KHZ);
    let grid: Vec<f64> = [
        250.0, 300.0, 373.0, 463.0, 475.0, 675.0, 775.0, 1000.0, 2000.0,
    ]
    .iter()
    .map(|&k| khz_to_angular(k))
    .collect();
    let rows = compare_tms_vs_bs(g, &grid).map_err(err)?;
    let ordered = rows.iter().all(|r| {
        matches!((r.tms_tau_st, r.tms_n2_amplitude), (Some(t), Some(a)) if t < r.bs_tau_st && a > r.bs_n2_amplitude)
    });
    let far = &compare_tms_vs_bs(g, &[50.0 * g]).map_err(err)?[0];
    let t_ratio = far.tms_tau_st.unwrap_or(f64::NAN) / far.bs_tau_st;
    let a_ratio = far.tms_n2_amplitude.unwrap_or(f64::NAN) / far.bs_n2_amplitude;
    check(
        ordered && (t_ratio - 1.0).abs() <= 0.01 && (a_ratio - 1.0).abs() <= 0.01,
        format!(
            "{} grid points ordered: {ordered}; at delta/g=50 timing ratio {t_ratio:.4}, amplitude ratio {a_ratio:.4}",
            rows.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
        ("AC8", ac8),
        ("AC9", ac9),
        ("AC10", ac10),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("{name} PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{name} FAIL: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
