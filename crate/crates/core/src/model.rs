//! Hamiltonians and dissipators of the three-cavity chain.
//!
//! Internal units: angular frequency in rad/us, time in us. Frequencies quoted
//! as `f/2pi` in kHz convert with [`khz_to_angular`].

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{mode_annihilation, mode_number, CMatrix, ModeDims, OperatorMatrix, C64};

pub const S1: usize = 0;
pub const S2: usize = 1;
pub const S3: usize = 2;

/// `f/2pi` in kHz to angular frequency in rad/us.
pub fn khz_to_angular(f_khz: f64) -> f64 {
    2.0 * PI * 1e-3 * f_khz
}

/// Angular frequency in rad/us to `f/2pi` in kHz.
pub fn angular_to_khz(w: f64) -> f64 {
    w / (2.0 * PI * 1e-3)
}

/// Lindblad inputs for one mode. Absent times mean no such channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeCoherence {
    /// Energy relaxation time (us).
    pub t1: Option<f64>,
    /// Pure dephasing time (us).
    pub tphi: Option<f64>,
    /// Thermal population.
    #[serde(default)]
    pub n_th: f64,
}

impl ModeCoherence {
    pub fn with_t1(t1: f64) -> Self {
        ModeCoherence {
            t1: Some(t1),
            ..Default::default()
        }
    }

    fn validate(&self, mode: usize) -> Result<()> {
        for (name, v) in [("T1", self.t1), ("Tphi", self.tphi)] {
            if let Some(t) = v {
                if !(t > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} of mode {mode} must be positive, got {t}"
                    )));
                }
            }
        }
        if !(self.n_th >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "thermal population of mode {mode} must be nonnegative, got {}",
                self.n_th
            )));
        }
        Ok(())
    }
}

/// Measured cavity coherence of the device, `(S1, S2, S3)`: T1 of 265, 300
/// and 314 us with thermal populations of 3 %, 2 % and 2.5 %.
pub fn device_cavity_coherence() -> [ModeCoherence; 3] {
    [
        ModeCoherence {
            t1: Some(265.0),
            tphi: None,
            n_th: 0.03,
        },
        ModeCoherence {
            t1: Some(300.0),
            tphi: None,
            n_th: 0.02,
        },
        ModeCoherence {
            t1: Some(314.0),
            tphi: None,
            n_th: 0.025,
        },
    ]
}

/// Physical parameters of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// S1-S2 squeezing strength (rad/us).
    pub g1: f64,
    /// S3-S2 squeezing strength (rad/us).
    pub g2: f64,
    /// Common pump detuning (rad/us).
    pub delta: f64,
    pub dims: ModeDims,
    /// One entry per mode; missing entries mean a closed mode.
    #[serde(default)]
    pub coherence: Vec<ModeCoherence>,
}

impl SystemParams {
    pub fn new(g1: f64, g2: f64, delta: f64, dims: ModeDims) -> Result<Self> {
        let p = SystemParams {
            g1,
            g2,
            delta,
            dims,
            coherence: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Equal couplings, given as `f/2pi` in kHz, at the default truncation.
    pub fn from_khz(g_khz: f64, delta_khz: f64) -> Result<Self> {
        Self::new(
            khz_to_angular(g_khz),
            khz_to_angular(g_khz),
            khz_to_angular(delta_khz),
            ModeDims::three_mode_default(),
        )
    }

    pub fn with_dims(mut self, dims: ModeDims) -> Result<Self> {
        self.dims = dims;
        self.validate()?;
        Ok(self)
    }

    pub fn with_coherence(mut self, coherence: Vec<ModeCoherence>) -> Result<Self> {
        self.coherence = coherence;
        self.validate()?;
        Ok(self)
    }

    pub fn closed(&self) -> SystemParams {
        SystemParams {
            coherence: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_delta(&self, delta: f64) -> SystemParams {
        SystemParams {
            delta,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g1 > 0.0) || !(self.g2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "couplings must be positive (g1 = {}, g2 = {})",
                self.g1, self.g2
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("detuning must be finite".into()));
        }
        if self.dims.modes() != 3 {
            return Err(Error::InvalidDimension(format!(
                "the chain has three modes, got {}",
                self.dims.modes()
            )));
        }
        if self.coherence.len() > 3 {
            return Err(Error::InvalidParameter(
                "coherence has more entries than modes".into(),
            ));
        }
        for (mode, c) in self.coherence.iter().enumerate() {
            c.validate(mode)?;
        }
        Ok(())
    }

    /// The larger coupling, used for the regime threshold.
    pub fn g_max(&self) -> f64 {
        self.g1.max(self.g2)
    }

    pub fn regime(&self) -> RegimeFlag {
        RegimeFlag::of(self)
    }

    /// Fails with a regime error unless `delta > 2 sqrt2 g`.
    pub fn require_oscillatory(&self) -> Result<()> {
        let r = self.regime();
        if r.oscillatory {
            Ok(())
        } else {
            Err(Error::Regime {
                delta: self.delta,
                threshold: r.threshold,
            })
        }
    }
}

/// Whether the detuning puts the chain in the oscillatory regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeFlag {
    pub oscillatory: bool,
    /// `2 sqrt2 * max(g1, g2)` in rad/us.
    pub threshold: f64,
}

impl RegimeFlag {
    pub fn of(params: &SystemParams) -> Self {
        let threshold = 2.0 * SQRT_2 * params.g_max();
        RegimeFlag {
            oscillatory: params.delta > threshold,
            threshold,
        }
    }
}

/// Which end cavity a squeezing term couples to the bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pair {
    S1S2,
    S3S2,
}

/// `g (a_x^dag a_2^dag + a_x a_2)` for one end mode.
pub fn build_h_tms(params: &SystemParams, pair: Pair) -> Result<OperatorMatrix> {
    let (mode, g) = match pair {
        Pair::S1S2 => (S1, params.g1),
        Pair::S3S2 => (S3, params.g2),
    };
    squeezing_term(&params.dims, mode, S2, g)
}

/// `g (a_x^dag a_y^dag + a_x a_y)` between any two modes.
pub fn squeezing_term(dims: &ModeDims, x: usize, y: usize, g: f64) -> Result<OperatorMatrix> {
    // a_x a_y |.., n_x, .., n_y, ..> = sqrt(n_x n_y) |.., n_x - 1, .., n_y - 1, ..>
    two_mode_term(dims, x, y, g, 1)
}

/// `g (a_x^dag a_y + a_x a_y^dag)`.
pub fn exchange_term(dims: &ModeDims, x: usize, y: usize, g: f64) -> Result<OperatorMatrix> {
    two_mode_term(dims, x, y, g, -1)
}

/// `g (A + A^dag)` where `A` lowers mode `x` and moves mode `y` by `-sy`
/// (`sy = 1`: `a_x a_y`, `sy = -1`: `a_x a_y^dag`).
fn two_mode_term(dims: &ModeDims, x: usize, y: usize, g: f64, sy: isize) -> Result<OperatorMatrix> {
    dims.levels_of(x)?;
    let ly = dims.levels_of(y)?;
    if x == y {
        return Err(Error::InvalidParameter(format!(
            "two-mode term needs distinct modes, got {x} twice"
        )));
    }
    let n = dims.total();
    let (stx, sty) = (dims.stride(x) as isize, dims.stride(y) as isize);
    let mut m = CMatrix::zeros(n, n);
    for col in 0..n {
        let nx = dims.occupation_of(col, x);
        let ny = dims.occupation_of(col, y) as isize;
        let ny_new = ny - sy;
        if nx == 0 || ny_new < 0 || ny_new >= ly as isize {
            continue;
        }
        let amp_y = if sy == 1 { ny as f64 } else { ny_new as f64 };
        let v = g * (nx as f64 * amp_y).sqrt();
        let row = (col as isize - stx - sy * sty) as usize;
        m[(row, col)] += C64::from(v);
        m[(col, row)] += C64::from(v);
    }
    OperatorMatrix::new(m, dims.clone())
}

/// `delta a_2^dag a_2`.
pub fn build_h_detune(params: &SystemParams) -> Result<OperatorMatrix> {
    Ok(mode_number(&params.dims, S2)?.scaled(params.delta))
}

/// Both squeezing terms plus the bus detuning.
pub fn build_h_full(params: &SystemParams) -> Result<OperatorMatrix> {
    let h1 = build_h_tms(params, Pair::S1S2)?;
    let h2 = build_h_tms(params, Pair::S3S2)?;
    let hd = build_h_detune(params)?;
    Ok(&(&h1 + &h2) + &hd)
}

/// Adiabatically eliminated bus: `g_eff (a1^dag a3 + a1 a3^dag)`, `g_eff = g1 g2 / delta`.
pub fn build_h_eff(params: &SystemParams) -> Result<OperatorMatrix> {
    let g_eff = effective_coupling(params.g1, params.g2, params.delta)?;
    exchange_term(&params.dims, S1, S3, g_eff)
}

pub(crate) fn effective_coupling(g1: f64, g2: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::DivisionByZero("effective coupling needs delta != 0"));
    }
    Ok(g1 * g2 / delta)
}

/// Beam-splitter bus for comparison: `g1 (a1^dag a2 + h.c.) + g2 (a3^dag a2 + h.c.) + delta n2`.
pub fn build_h_bs_reference(params: &SystemParams) -> Result<OperatorMatrix> {
    let h1 = exchange_term(&params.dims, S1, S2, params.g1)?;
    let h2 = exchange_term(&params.dims, S3, S2, params.g2)?;
    let hd = build_h_detune(params)?;
    Ok(&(&h1 + &h2) + &hd)
}

/// Two-mode squeezer on its own two-mode space (mode 0 and mode 1).
pub fn tms_pair_hamiltonian(g: f64, dims: &ModeDims) -> Result<OperatorMatrix> {
    if dims.modes() != 2 {
        return Err(Error::InvalidDimension(format!(
            "pair Hamiltonian acts on two modes, got {}",
            dims.modes()
        )));
    }
    squeezing_term(dims, 0, 1, g)
}

/// Total photon number `n1 + n2 + n3`.
pub fn total_number(dims: &ModeDims) -> OperatorMatrix {
    OperatorMatrix::diagonal(dims, |o| o.iter().sum::<usize>() as f64)
}

/// Lindblad operators from per-mode coherence.
///
/// For a mode with T1: `sqrt((1 + n_th)/T1) a` and, when `n_th > 0`,
/// `sqrt(n_th/T1) a^dag`. For a mode with Tphi: `sqrt(2/Tphi) a^dag a`.
pub fn collapse_operators(params: &SystemParams) -> Result<Vec<OperatorMatrix>> {
    params.validate()?;
    let mut ops = Vec::new();
    for (mode, c) in params.coherence.iter().enumerate() {
        if let Some(t1) = c.t1 {
            let a = mode_annihilation(&params.dims, mode)?;
            ops.push(a.scaled(((1.0 + c.n_th) / t1).sqrt()));
            if c.n_th > 0.0 {
                ops.push(a.dagger().scaled((c.n_th / t1).sqrt()));
            }
        }
        if let Some(tphi) = c.tphi {
            ops.push(mode_number(&params.dims, mode)?.scaled((2.0 / tphi).sqrt()));
        }
    }
    Ok(ops)
}
