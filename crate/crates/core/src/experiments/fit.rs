//! Levenberg-Marquardt least squares and the calibration fits built on it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::Propagator;
use crate::error::{Error, Result};
use crate::fock::{fock_state, ModeDims};
use crate::model::tms_pair_hamiltonian;

/// Settings shared by all fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop when the relative step length falls below this.
    pub xtol: f64,
    /// A fit only counts as converged if the RMS residual is at most this.
    pub max_rms: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            ftol: 1e-14,
            xtol: 1e-12,
            max_rms: f64::INFINITY,
        }
    }
}

impl FitOptions {
    pub fn with_max_rms(mut self, max_rms: f64) -> Self {
        self.max_rms = max_rms;
        self
    }
}

/// Estimates with one-sigma uncertainties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// `NaN` marks a parameter the data do not determine.
    pub sigmas: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Names of parameters that ran off to an unphysical bound.
    pub unbounded: Vec<String>,
    pub notes: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.sigmas[i])
    }
}

struct LmOutcome {
    x: Vec<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
    residuals: Vec<f64>,
    jacobian: DMatrix<f64>,
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let m = r0.len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-7 * x[j].abs().max(1e-4);
        xp[j] = x[j] + h;
        let rp = f(&xp);
        xp[j] = x[j] - h;
        let rm = f(&xp);
        xp[j] = x[j];
        match (rp, rm) {
            (Some(rp), Some(rm)) => {
                for i in 0..m {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            (Some(rp), None) => {
                for i in 0..m {
                    jac[(i, j)] = (rp[i] - r0[i]) / h;
                }
            }
            (None, Some(rm)) => {
                for i in 0..m {
                    jac[(i, j)] = (r0[i] - rm[i]) / h;
                }
            }
            (None, None) => return None,
        }
    }
    Some(jac)
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Minimizes `0.5 |r(x)|^2` from `x0`. `residuals` returns `None` outside
/// the model's domain.
fn levenberg_marquardt<F>(residuals: &F, x0: &[f64], opts: &FitOptions) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = residuals(&x)?;
    let mut cost = cost_of(&r);
    let mut jac = jacobian(residuals, &x, &r)?;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let p = x.len();

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        if g.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match residuals(&trial) {
                Some(rt) if cost_of(&rt) < cost => {
                    let new_cost = cost_of(&rt);
                    let rel_drop = (cost - new_cost) / cost.max(1e-300);
                    let step_norm = step.norm();
                    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    x = trial;
                    r = rt;
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if rel_drop < opts.ftol || step_norm < opts.xtol * (x_norm + opts.xtol) {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 4.0,
            }
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted {
            // no downhill direction left: a (possibly flat) minimum
            converged = true;
            break;
        }
        jac = jacobian(residuals, &x, &r)?;
        if converged {
            break;
        }
    }
    Some(LmOutcome {
        x,
        cost,
        iterations,
        converged,
        residuals: r,
        jacobian: jac,
    })
}

/// Runs [`levenberg_marquardt`] from each start and keeps the lowest cost.
fn multi_start<F>(residuals: &F, starts: &[Vec<f64>], opts: &FitOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    let outcomes: Vec<Option<LmOutcome>> = starts
        .par_iter()
        .map(|x0| levenberg_marquardt(residuals, x0, opts))
        .collect();
    let mut best: Option<LmOutcome> = None;
    for o in outcomes.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| o.cost < b.cost) {
            best = Some(o);
        }
    }
    best.ok_or_else(|| {
        Error::NonConvergence("no start point lies inside the model's domain".into())
    })
}

/// Standard errors from `s^2 (J^T J)^{-1}`; `NaN` where the normal matrix
/// is singular.
fn sigmas(out: &LmOutcome) -> Vec<f64> {
    let m = out.residuals.len();
    let p = out.x.len();
    let jtj = out.jacobian.transpose() * &out.jacobian;
    let dof = m.saturating_sub(p).max(1) as f64;
    let s2 = 2.0 * out.cost / dof;
    let scale = jtj.diagonal().amax();
    let cond_ok = scale > 0.0 && jtj.clone().symmetric_eigenvalues().amin() > 1e-13 * scale;
    match jtj.try_inverse() {
        Some(inv) if cond_ok => (0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
        _ => vec![f64::NAN; p],
    }
}

fn finish(
    names: &[&str],
    estimates: Vec<f64>,
    sigmas: Vec<f64>,
    out: &LmOutcome,
    opts: &FitOptions,
) -> FitResult {
    let norm = (2.0 * out.cost).sqrt();
    let rms = norm / (out.residuals.len().max(1) as f64).sqrt();
    let mut notes = Vec::new();
    if !out.converged {
        notes.push(format!(
            "no convergence within {} iterations",
            opts.max_iterations
        ));
    }
    if rms > opts.max_rms {
        notes.push(format!(
            "rms residual {rms:.3e} above threshold {:.3e}",
            opts.max_rms
        ));
    }
    FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        estimates,
        sigmas,
        residual_norm: norm,
        rms,
        iterations: out.iterations,
        converged: out.converged && rms <= opts.max_rms,
        unbounded: Vec::new(),
        notes,
    }
}

/// Vacuum probability of a two-mode squeezed vacuum, `a / cosh^2(g t) + b`.
pub fn tmsv_vacuum_model(a: f64, b: f64, g: f64, t: f64) -> f64 {
    let c = (g * t).cosh();
    a / (c * c) + b
}

/// Synthetic `P0(t)` samples from an ideal squeezer of strength `g`, with
/// optional additive Gaussian noise `(sigma, seed)`.
pub fn generate_tmsv_trace(
    g: f64,
    t_grid: &[f64],
    noise: Option<(f64, u64)>,
) -> Result<Vec<(f64, f64)>> {
    if !(g > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "squeezing strength must be positive, got {g}"
        )));
    }
    let mut rng = noise.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
    let normal = match noise {
        Some((sigma, _)) => Some(
            Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidParameter(format!("noise level: {e}")))?,
        ),
        None => None,
    };
    Ok(t_grid
        .iter()
        .map(|&t| {
            let mut p = tmsv_vacuum_model(1.0, 0.0, g, t);
            if let (Some(rng), Some(n)) = (rng.as_mut(), normal.as_ref()) {
                p += n.sample(rng);
            }
            (t, p)
        })
        .collect())
}

/// `P0(t)` from exact evolution of `|00>` under `g (a^dag b^dag + a b)` with
/// `levels` Fock levels per mode.
pub fn simulate_tmsv_vacuum(g: f64, t_grid: &[f64], levels: usize) -> Result<Vec<(f64, f64)>> {
    let dims = ModeDims::new(vec![levels, levels])?;
    let h = tms_pair_hamiltonian(g, &dims)?;
    let prop = Propagator::new(&h)?;
    let vac = fock_state(&dims, &[0, 0])?;
    t_grid
        .iter()
        .map(|&t| {
            let psi = if t == 0.0 {
                vac.clone()
            } else {
                prop.propagate(&vac, t)?
            };
            Ok((t, psi.mode_populations(0)?[0]))
        })
        .collect()
}

/// Fits `P0 = a / cosh^2(g t) + b` for `(a, b, g)`.
pub fn fit_tms_strength(samples: &[(f64, f64)], opts: &FitOptions) -> Result<FitResult> {
    if samples.len() < 8 {
        return Err(Error::UnderDetermined(format!(
            "squeezing fit needs at least 8 samples, got {}",
            samples.len()
        )));
    }
    let names = ["a", "b", "g"];
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| {
            (l.min(s.1), h.max(s.1))
        });
    let t_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if hi - lo < 1e-9 || t_max <= 0.0 {
        return Ok(FitResult {
            names: names.iter().map(|s| s.to_string()).collect(),
            estimates: vec![hi - lo, lo, 0.0],
            sigmas: vec![f64::NAN; 3],
            residual_norm: 0.0,
            rms: 0.0,
            iterations: 0,
            converged: false,
            unbounded: vec!["g".into()],
            notes: vec!["samples carry no decay; the strength is not identifiable".into()],
        });
    }
    // half-contrast crossing gives g t ~ acosh(sqrt 2)
    let mid = 0.5 * (lo + hi);
    let t_half = samples
        .iter()
        .min_by(|x, y| (x.1 - mid).abs().total_cmp(&(y.1 - mid).abs()))
        .map(|s| s.0)
        .filter(|&t| t > 0.0)
        .unwrap_or(0.5 * t_max);
    let g0 = 2f64.sqrt().acosh() / t_half;
    let starts: Vec<Vec<f64>> = [1.0, 0.5, 2.0, 0.25, 4.0]
        .iter()
        .map(|k| vec![hi - lo, lo, g0 * k])
        .collect();
    let resid = |x: &[f64]| -> Option<Vec<f64>> {
        Some(
            samples
                .iter()
                .map(|&(t, p)| tmsv_vacuum_model(x[0], x[1], x[2], t) - p)
                .collect(),
        )
    };
    let out = multi_start(&resid, &starts, opts)?;
    let mut est = out.x.clone();
    est[2] = est[2].abs();
    let sig = sigmas(&out);
    let mut res = finish(&names, est, sig, &out, opts);
    if res.sigmas[2].is_nan() {
        res.unbounded.push("g".into());
        res.converged = false;
    }
    Ok(res)
}

/// `tau_S2 = 2 pi / sqrt((delta_d + delta_0)^2 - 8 g^2)`.
pub fn tau_s2_model(delta_d: f64, delta_0: f64, g: f64) -> Option<f64> {
    let d = delta_d + delta_0;
    let arg = d * d - 8.0 * g * g;
    (arg > 0.0 && d > 0.0).then(|| 2.0 * PI / arg.sqrt())
}

/// Fits the Stark-shift offset `delta_0` from `(delta_d, tau_S2)` pairs.
pub fn fit_stark_detuning(points: &[(f64, f64)], g: f64, opts: &FitOptions) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::UnderDetermined(format!(
            "Stark-shift fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(_, tau)| !(tau > 0.0)) {
        return Err(Error::InvalidParameter(
            "bus periods must be positive".into(),
        ));
    }
    // each point alone inverts to delta_0 = sqrt((2 pi / tau)^2 + 8 g^2) - delta_d
    let mut inverted: Vec<f64> = points
        .iter()
        .map(|&(dd, tau)| ((2.0 * PI / tau).powi(2) + 8.0 * g * g).sqrt() - dd)
        .collect();
    inverted.sort_by(f64::total_cmp);
    let d0 = inverted[inverted.len() / 2];
    let spread = (inverted[inverted.len() - 1] - inverted[0])
        .abs()
        .max(1e-3 * d0.abs().max(1e-3));
    let starts: Vec<Vec<f64>> = [0.0, 0.5, -0.5, 1.0, -1.0]
        .iter()
        .map(|k| vec![d0 + k * spread])
        .collect();
    let resid = |x: &[f64]| -> Option<Vec<f64>> {
        points
            .iter()
            .map(|&(dd, tau)| tau_s2_model(dd, x[0], g).map(|m| m - tau))
            .collect()
    };
    let out = multi_start(&resid, &starts, opts)?;
    let sig = sigmas(&out);
    Ok(finish(&["delta_0"], out.x.clone(), sig, &out, opts))
}

/// `A e^{-t/tau1} [1 + e^{-t/tau_phi} cos(omega t)] + c`.
pub fn damped_oscillation_model(
    t: f64,
    tau1: f64,
    tau_phi: f64,
    omega: f64,
    amplitude: f64,
    offset: f64,
) -> f64 {
    let k1 = if tau1.is_finite() { 1.0 / tau1 } else { 0.0 };
    let kp = if tau_phi.is_finite() {
        1.0 / tau_phi
    } else {
        0.0
    };
    amplitude * (-k1 * t).exp() * (1.0 + (-kp * t).exp() * (omega * t).cos()) + offset
}

/// Angular frequency of the strongest Fourier component of `values`.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 4 {
        return Err(Error::UnderDetermined("need at least 4 samples".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::InvalidParameter(
            "samples must span a positive time".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let dt_min = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .max(1e-12);
    let w_lo = PI / span;
    let w_hi = PI / dt_min;
    let power = |w: f64| -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for (&t, &v) in times.iter().zip(values) {
            c += (v - mean) * (w * t).cos();
            s += (v - mean) * (w * t).sin();
        }
        c * c + s * s
    };
    let n = (8.0 * (w_hi - w_lo) / w_lo).ceil().clamp(64.0, 200_000.0) as usize;
    let step = (w_hi - w_lo) / n as f64;
    let mut best = (w_lo, power(w_lo));
    for i in 1..=n {
        let w = w_lo + i as f64 * step;
        let p = power(w);
        if p > best.1 {
            best = (w, p);
        }
    }
    // parabolic refinement on the grid
    let (w0, p0) = best;
    let (pm, pp) = (power(w0 - step), power(w0 + step));
    let denom = pm - 2.0 * p0 + pp;
    let shift = if denom < 0.0 {
        0.5 * (pm - pp) / denom
    } else {
        0.0
    };
    Ok(w0 + shift.clamp(-1.0, 1.0) * step)
}

/// Fits [`damped_oscillation_model`]. Decay rates are fitted as squares of
/// the free parameters so they stay nonnegative; a rate that collapses to
/// zero is reported through `unbounded`.
pub fn fit_damped_oscillation(
    times: &[f64],
    values: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let w0 = dominant_frequency(times, values)?;
    let span = times[times.len() - 1] - times[0];
    if w0 * span < 4.0 * PI * 0.95 {
        return Err(Error::UnderDetermined(
            "trace must cover at least two oscillation periods".into(),
        ));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(*v), h.max(*v))
        });
    let amp0 = 0.5 * (hi - lo);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let off0 = mean - amp0;
    let resid = |x: &[f64]| -> Option<Vec<f64>> {
        let (k1, kp) = (x[0] * x[0], x[1] * x[1]);
        Some(
            times
                .iter()
                .zip(values)
                .map(|(&t, &v)| {
                    x[3] * (-k1 * t).exp() * (1.0 + (-kp * t).exp() * (x[2] * t).cos()) + x[4] - v
                })
                .collect(),
        )
    };
    let r = (1.0 / span).sqrt();
    let starts: Vec<Vec<f64>> = [
        (0.3, 0.3, 1.0),
        (0.1, 1.0, 1.0),
        (1.0, 0.1, 1.0),
        (0.3, 0.3, 0.995),
        (0.3, 0.3, 1.005),
    ]
    .iter()
    .map(|&(a, b, f)| vec![a * r, b * r, w0 * f, amp0, off0])
    .collect();
    let out = multi_start(&resid, &starts, opts)?;
    let sig = sigmas(&out);
    let (x1, xp) = (out.x[0], out.x[1]);
    let (k1, kp) = (x1 * x1, xp * xp);
    // d tau / d x = -2 / x^3 for tau = 1 / x^2
    let tau_sigma = |x: f64, s: f64| 2.0 * s / x.abs().powi(3);
    let floor = 1e-3 / span;
    let mut unbounded = Vec::new();
    let tau1 = if k1 > floor {
        1.0 / k1
    } else {
        unbounded.push("tau1".to_string());
        1.0 / floor
    };
    let tau_phi = if kp > floor {
        1.0 / kp
    } else {
        unbounded.push("tau_phi".to_string());
        1.0 / floor
    };
    let est = vec![tau1, tau_phi, out.x[2].abs(), out.x[3], out.x[4]];
    let sg = vec![
        tau_sigma(x1, sig[0]),
        tau_sigma(xp, sig[1]),
        sig[2],
        sig[3],
        sig[4],
    ];
    let mut res = finish(
        &["tau1", "tau_phi", "omega", "amplitude", "offset"],
        est,
        sg,
        &out,
        opts,
    );
    if !unbounded.is_empty() {
        res.notes.push(format!(
            "decay rate below {floor:.3e} /us; time constant pinned at the bound"
        ));
    }
    res.unbounded = unbounded;
    Ok(res)
}

/// Fits `A cos(omega t + phi) + c` and returns `omega`.
pub fn fit_sinusoid_frequency(times: &[f64], values: &[f64]) -> Result<FitResult> {
    let w0 = dominant_frequency(times, values)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(*v), h.max(*v))
        });
    let amp = 0.5 * (hi - lo);
    let resid = |x: &[f64]| -> Option<Vec<f64>> {
        Some(
            times
                .iter()
                .zip(values)
                .map(|(&t, &v)| x[0] * (x[1] * t + x[2]).cos() + x[3] - v)
                .collect(),
        )
    };
    let starts: Vec<Vec<f64>> = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0, 0.0]
        .iter()
        .enumerate()
        .map(|(i, &phi)| vec![amp, w0 * if i == 4 { 1.002 } else { 1.0 }, phi, mean])
        .collect();
    let opts = FitOptions::default();
    let out = multi_start(&resid, &starts, &opts)?;
    let sig = sigmas(&out);
    let mut est = out.x.clone();
    est[1] = est[1].abs();
    Ok(finish(
        &["amplitude", "omega", "phase", "offset"],
        est,
        sig,
        &out,
        &opts,
    ))
}

/// Mean spacing of successive maxima of a sampled trace, each refined by a
/// parabola through its neighbours.
pub fn peak_period(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::UnderDetermined("need at least 3 samples".into()));
    }
    let mut peaks = Vec::new();
    for i in 1..values.len() - 1 {
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let h = times[i + 1] - times[i];
            let shift = if denom != 0.0 {
                0.5 * (y0 - y2) / denom
            } else {
                0.0
            };
            peaks.push(times[i] + shift * h);
        }
    }
    if peaks.len() < 2 {
        return Err(Error::UnderDetermined(format!(
            "found {} maxima; need two to measure a period",
            peaks.len()
        )));
    }
    Ok((peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}

/// Swap time from a simulated trajectory: the population contrast
/// `n3 - n1` contains no bus term, so its slow frequency `omega` gives
/// `tau_ST = pi / omega`.
pub fn swap_time_from_trajectory(times: &[f64], n1: &[f64], n3: &[f64]) -> Result<f64> {
    let contrast: Vec<f64> = n3.iter().zip(n1).map(|(a, b)| a - b).collect();
    let fit = fit_sinusoid_frequency(times, &contrast)?;
    let w = fit.get("omega").unwrap_or(f64::NAN);
    if !(w > 0.0) {
        return Err(Error::NonConvergence(
            "no oscillation found in the population contrast".into(),
        ));
    }
    Ok(PI / w)
}
