//! Closed-form Heisenberg-picture solution of the symmetric chain
//! (`g1 = g2 = g`) and the timescales derived from it.
//!
//! With `Omega = sqrt(delta^2/8 - g^2)` and `w = sqrt2 * Omega`:
//!
//! ```text
//! u(t)        = e^{i delta t/2} (cos wt - i delta/(sqrt8 Omega) sin wt)
//! c11 = c33   = (1 + u)/2
//! c13 = c31   = (u - 1)/2
//! c12 = c32 = c21 = c23 = -i g/(sqrt2 Omega) e^{i delta t/2} sin wt
//! c22         = e^{i delta t/2} (cos wt + i delta/(sqrt8 Omega) sin wt)
//! ```
//!
//! Rows 1 and 3 express `a1(t)`, `a3(t)` in `a1(0)`, `a2^dag(0)`, `a3(0)`.
//! Row 2 is kept in the same printed form; only its moduli enter observables.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::I;
use crate::model::{effective_coupling, SystemParams};

type C64 = Complex64;

/// Relative tolerance for treating `g1` and `g2` as equal.
const SYMMETRY_TOL: f64 = 1e-12;

/// Equal-coupling chain in the oscillatory regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricChain {
    pub g: f64,
    pub delta: f64,
}

impl SymmetricChain {
    /// Fails with a regime error unless `delta > 2 sqrt2 g`.
    pub fn new(g: f64, delta: f64) -> Result<Self> {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling must be nonnegative, got {g}"
            )));
        }
        let threshold = 2.0 * SQRT_2 * g;
        if !(delta > threshold) {
            return Err(Error::Regime { delta, threshold });
        }
        Ok(SymmetricChain { g, delta })
    }

    pub fn from_params(params: &SystemParams) -> Result<Self> {
        let scale = params.g1.abs().max(params.g2.abs());
        if (params.g1 - params.g2).abs() > SYMMETRY_TOL * scale {
            return Err(Error::UnsupportedAsymmetry {
                g1: params.g1,
                g2: params.g2,
            });
        }
        Self::new(params.g1, params.delta)
    }

    /// `Omega = sqrt(delta^2/8 - g^2)`.
    pub fn omega(&self) -> f64 {
        (self.delta * self.delta / 8.0 - self.g * self.g).sqrt()
    }

    /// Swap time `pi / (delta/2 - sqrt2 Omega)`.
    pub fn tau_st(&self) -> f64 {
        // delta/2 - sqrt2 Omega = 2 g^2 / (delta/2 + sqrt2 Omega), stable for large delta
        let slow = 2.0 * self.g * self.g / (self.delta / 2.0 + SQRT_2 * self.omega());
        PI / slow
    }

    /// Bus oscillation period `pi / (sqrt2 Omega)`.
    pub fn tau_s2(&self) -> f64 {
        PI / (SQRT_2 * self.omega())
    }

    pub fn timing(&self) -> TimingInfo {
        let tau_st = self.tau_st();
        let tau_s2 = self.tau_s2();
        TimingInfo {
            omega: self.omega(),
            tau_st,
            tau_s2,
            ratio: tau_st / tau_s2,
        }
    }

    pub fn coeffs(&self, t: f64) -> CoeffSet {
        let omega = self.omega();
        let w = SQRT_2 * omega;
        let beta = self.delta / (8f64.sqrt() * omega);
        let phase = C64::from_polar(1.0, self.delta * t / 2.0);
        let (s, c) = (w * t).sin_cos();
        let u = phase * (C64::from(c) - I * beta * s);
        let c11 = (C64::from(1.0) + u) / 2.0;
        let c13 = (u - C64::from(1.0)) / 2.0;
        let c12 = -I * (self.g / w) * phase * s;
        let c22 = phase * (C64::from(c) + I * beta * s);
        CoeffSet {
            t,
            c11,
            c12,
            c13,
            c21: c12,
            c22,
            c23: c12,
            c31: c13,
            c32: c12,
            c33: c11,
        }
    }

    /// `(n1, n2, n3)` at time `t` for `n1_0` photons initially in S1 and
    /// vacuum elsewhere.
    pub fn mean_photon_numbers(&self, t: f64, n1_0: f64) -> (f64, f64, f64) {
        let k = self.coeffs(t);
        let leak = k.c21.norm_sqr();
        (
            n1_0 * k.c11.norm_sqr() + leak,
            (2.0 + n1_0) * leak,
            n1_0 * k.c31.norm_sqr() + leak,
        )
    }

    /// Amplitude `A` of the bus ripple `|c21|^2 = A (1 - cos 2 sqrt2 Omega t)`.
    pub fn leakage_amplitude(&self) -> f64 {
        let r = self.g / (2.0 * self.omega());
        r * r
    }
}

/// Heisenberg coefficients at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffSet {
    pub t: f64,
    pub c11: C64,
    pub c12: C64,
    pub c13: C64,
    pub c21: C64,
    pub c22: C64,
    pub c23: C64,
    pub c31: C64,
    pub c32: C64,
    pub c33: C64,
}

impl CoeffSet {
    /// `|c11|^2 + |c13|^2 - |c12|^2 - 1`, zero for a valid Bogoliubov map.
    pub fn norm_defect(&self) -> f64 {
        self.c11.norm_sqr() + self.c13.norm_sqr() - self.c12.norm_sqr() - 1.0
    }

    /// `c11 conj(c31) + c13 conj(c33) - c12 conj(c32)`, zero for a valid map.
    pub fn cross_defect(&self) -> C64 {
        self.c11 * self.c31.conj() + self.c13 * self.c33.conj() - self.c12 * self.c32.conj()
    }
}

/// Derived timescales of the symmetric chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingInfo {
    pub omega: f64,
    pub tau_st: f64,
    pub tau_s2: f64,
    pub ratio: f64,
}

pub fn omega(params: &SystemParams) -> Result<f64> {
    Ok(SymmetricChain::from_params(params)?.omega())
}

pub fn heisenberg_coeffs(params: &SystemParams, t: f64) -> Result<CoeffSet> {
    Ok(SymmetricChain::from_params(params)?.coeffs(t))
}

pub fn mean_photon_numbers(params: &SystemParams, t: f64, n1_0: u32) -> Result<(f64, f64, f64)> {
    Ok(SymmetricChain::from_params(params)?.mean_photon_numbers(t, n1_0 as f64))
}

pub fn tau_st(params: &SystemParams) -> Result<f64> {
    Ok(SymmetricChain::from_params(params)?.tau_st())
}

pub fn tau_s2(params: &SystemParams) -> Result<f64> {
    Ok(SymmetricChain::from_params(params)?.tau_s2())
}

pub fn timing(params: &SystemParams) -> Result<TimingInfo> {
    Ok(SymmetricChain::from_params(params)?.timing())
}

pub fn g_eff(params: &SystemParams) -> Result<f64> {
    effective_coupling(params.g1, params.g2, params.delta)
}

/// Detuning where `tau_st = k tau_s2`: `delta = g sqrt(8 (1+k)^2 / (1+2k))`.
pub fn sweet_point_detuning(g: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "sweet-point index must be >= 1".into(),
        ));
    }
    let k = k as f64;
    Ok(g * (8.0 * (1.0 + k) * (1.0 + k) / (1.0 + 2.0 * k)).sqrt())
}

/// Joint population `P(n, n) = tanh^{2n}(r) / cosh^2(r)` of a two-mode
/// squeezed vacuum with squeezing `r`.
pub fn tmsv_joint_population(r: f64, n: u32) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "squeezing must be nonnegative, got {r}"
        )));
    }
    let c = r.cosh();
    Ok(r.tanh().powi(2 * n as i32) / (c * c))
}

/// Swap time and bus ripple amplitude for the beam-splitter bus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsTiming {
    pub omega2: f64,
    pub tau_st: f64,
    /// `A` in `|c21|^2 = A (1 - cos 2 sqrt2 Omega2 t)`.
    pub n2_amplitude: f64,
}

/// Beam-splitter comparison chain, `Omega2 = sqrt(delta^2/8 + g^2)`.
pub fn bs_reference_timing(g: f64, delta: f64) -> Result<BsTiming> {
    if !(g > 0.0) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beam-splitter timing needs g > 0 and delta >= 0 (g = {g}, delta = {delta})"
        )));
    }
    let omega2 = (delta * delta / 8.0 + g * g).sqrt();
    let w = SQRT_2 * omega2;
    let slow = 2.0 * g * g / (w + delta / 2.0);
    let r = g / (2.0 * omega2);
    Ok(BsTiming {
        omega2,
        tau_st: PI / slow,
        n2_amplitude: r * r,
    })
}

/// One row of [`swap_time_vs_g_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapTimePoint {
    pub g: f64,
    pub tau_st: f64,
}

/// Swap time against coupling with `delta / g` held fixed.
pub fn swap_time_vs_g_sweep(delta_over_g: f64, g_values: &[f64]) -> Result<Vec<SwapTimePoint>> {
    if !(delta_over_g > 2.0 * SQRT_2) {
        return Err(Error::Regime {
            delta: delta_over_g,
            threshold: 2.0 * SQRT_2,
        });
    }
    g_values
        .iter()
        .map(|&g| {
            let chain = SymmetricChain::new(g, g * delta_over_g)?;
            Ok(SwapTimePoint {
                g,
                tau_st: chain.tau_st(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::khz_to_angular;

    fn chain(g_khz: f64, delta_khz: f64) -> SymmetricChain {
        SymmetricChain::new(khz_to_angular(g_khz), khz_to_angular(delta_khz)).unwrap()
    }

    #[test]
    fn omega_values() {
        let c = chain(80.0, 475.0);
        // sqrt(475^2/8 - 80^2) kHz
        let expected = khz_to_angular((475.0f64 * 475.0 / 8.0 - 6400.0).sqrt());
        assert!((c.omega() - expected).abs() < 1e-12);
        assert!((crate::model::angular_to_khz(c.omega()) - 147.7).abs() < 0.05);

        let g = khz_to_angular(80.0);
        let near = SymmetricChain::new(g, 2.0 * SQRT_2 * g * (1.0 + 1e-12)).unwrap();
        assert!(near.omega() < 1e-5);

        let free = SymmetricChain::new(0.0, 3.0).unwrap();
        assert!((free.omega() - 3.0 / (2.0 * SQRT_2)).abs() < 1e-15);
    }

    #[test]
    fn regime_and_symmetry_errors() {
        let g = khz_to_angular(80.0);
        assert!(matches!(
            SymmetricChain::new(g, 2.0 * SQRT_2 * g),
            Err(Error::Regime { .. })
        ));
        let mut p = SystemParams::from_khz(80.0, 475.0).unwrap();
        p.g2 *= 1.01;
        assert!(matches!(omega(&p), Err(Error::UnsupportedAsymmetry { .. })));
    }

    #[test]
    fn coefficients_at_zero() {
        let k = chain(80.0, 475.0).coeffs(0.0);
        for (z, expected) in [
            (k.c11, 1.0),
            (k.c22, 1.0),
            (k.c33, 1.0),
            (k.c12, 0.0),
            (k.c13, 0.0),
            (k.c21, 0.0),
            (k.c23, 0.0),
            (k.c31, 0.0),
            (k.c32, 0.0),
        ] {
            assert!((z - C64::from(expected)).norm() < 1e-15);
        }
    }

    #[test]
    fn full_transfer_at_sweet_point() {
        let g = khz_to_angular(80.0);
        for k in 1..10 {
            let c = SymmetricChain::new(g, sweet_point_detuning(g, k).unwrap()).unwrap();
            let co = c.coeffs(c.tau_st());
            assert!((co.c31.norm() - 1.0).abs() < 1e-9, "k = {k}");
            assert!(co.c21.norm() < 1e-9, "k = {k}");
        }
    }

    #[test]
    fn photon_numbers() {
        let c = chain(80.0, 475.0);
        assert_eq!(c.mean_photon_numbers(0.0, 1.0), (1.0, 0.0, 0.0));
        // main-text form n2 = (2 + n1 + n3)(g/2 Omega)^2 (1 - cos 2 sqrt2 Omega t) with n3(0) = 0
        for i in 0..50 {
            let t = i as f64 * 0.37;
            let (_, n2, _) = c.mean_photon_numbers(t, 1.0);
            let r = c.g / (2.0 * c.omega());
            let main = 3.0 * r * r * (1.0 - (2.0 * SQRT_2 * c.omega() * t).cos());
            assert!((n2 - main).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_time_values() {
        assert!((chain(80.0, 475.0).tau_st() - 17.43).abs() < 0.01);
        let far = chain(80.0, 775.0);
        assert!((far.tau_st() - 29.6).abs() < 0.05);
        assert!((far.tau_st() / 2.0 - 15.0).abs() < 0.3);
        assert!((chain(80.0, 475.0).tau_s2() - 2.394).abs() < 1e-3);
    }

    #[test]
    fn swap_time_large_detuning_limit() {
        let g = 1.0;
        for delta in [1e3, 1e4, 1e5] {
            let c = SymmetricChain::new(g, delta).unwrap();
            let limit = PI * delta / (2.0 * g * g);
            assert!((c.tau_st() / limit - 1.0).abs() < 10.0 / (delta * delta));
            assert!((c.tau_s2() / (2.0 * PI / delta) - 1.0).abs() < 10.0 / (delta * delta));
        }
    }

    #[test]
    fn sweet_point_values() {
        let g = khz_to_angular(80.0);
        let d4 = crate::model::angular_to_khz(sweet_point_detuning(g, 4).unwrap());
        let d7 = crate::model::angular_to_khz(sweet_point_detuning(g, 7).unwrap());
        assert!((d4 - 377.1).abs() < 0.1);
        assert!((d7 - 467.4).abs() < 0.1);
        assert!(sweet_point_detuning(g, 0).is_err());
        let mut last = 0.0;
        for k in 1..200 {
            let d = sweet_point_detuning(g, k).unwrap();
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn tmsv_population() {
        assert_eq!(tmsv_joint_population(0.0, 0).unwrap(), 1.0);
        for r in [0.1, 0.5, 1.3] {
            let p0 = tmsv_joint_population(r, 0).unwrap();
            assert!((p0 - 1.0 / r.cosh().powi(2)).abs() < 1e-15);
        }
        let total: f64 = (0..=30)
            .map(|n| tmsv_joint_population(0.5, n).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(tmsv_joint_population(-0.1, 0).is_err());
    }

    #[test]
    fn beam_splitter_reference() {
        let g = khz_to_angular(80.0);
        let at_zero = bs_reference_timing(g, 0.0).unwrap();
        assert!((at_zero.tau_st - PI / (SQRT_2 * g)).abs() < 1e-12);

        for delta_khz in [250.0, 373.0, 475.0, 775.0, 1500.0] {
            let tms = chain(80.0, delta_khz);
            let bs = bs_reference_timing(g, khz_to_angular(delta_khz)).unwrap();
            assert!(tms.tau_st() < bs.tau_st);
            assert!(tms.leakage_amplitude() > bs.n2_amplitude);
        }
        let tms = SymmetricChain::new(g, 50.0 * g).unwrap();
        let bs = bs_reference_timing(g, 50.0 * g).unwrap();
        assert!((tms.tau_st() / bs.tau_st - 1.0).abs() < 0.01);
        assert!((tms.leakage_amplitude() / bs.n2_amplitude - 1.0).abs() < 0.01);
    }

    #[test]
    fn swap_time_sweep() {
        let g80 = khz_to_angular(80.0);
        let rows = swap_time_vs_g_sweep(4.66, &[g80, 2.0 * g80]).unwrap();
        // 13.07 us at exactly 4.66; the k = 4 sweet point (ratio 4.71) gives 13.26 us
        assert!((rows[0].tau_st / 13.3 - 1.0).abs() < 0.02);
        assert!((rows[0].tau_st / rows[1].tau_st - 2.0).abs() < 1e-12);
        let fast = swap_time_vs_g_sweep(4.66, &[khz_to_angular(1100.0)]).unwrap();
        assert!(fast[0].tau_st < 1.0);
        let slow = swap_time_vs_g_sweep(4.66, &[khz_to_angular(1000.0)]).unwrap();
        assert!(slow[0].tau_st > 1.0);
        assert!(matches!(
            swap_time_vs_g_sweep(2.8, &[g80]),
            Err(Error::Regime { .. })
        ));
    }
}
