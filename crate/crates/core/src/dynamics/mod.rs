//! Time evolution (exact, Trotterized, open-system), projective
//! post-selection and single-photon jumps.

mod lindblad;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    mode_annihilation, CMatrix, CVector, DensityMatrix, ModeDims, OperatorMatrix, StateVector, C64,
    I,
};
use crate::model::{build_h_detune, build_h_full, build_h_tms, Pair, SystemParams};

pub use lindblad::LindbladSolver;

/// Default relative tolerance of the master-equation integrator.
pub const DEFAULT_RTOL: f64 = 1e-8;

/// Pass threshold of [`truncation_convergence_check`].
pub const TRUNCATION_TOL: f64 = 1e-6;

/// Hermiticity tolerance applied to Hamiltonians before exponentiation.
const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Exact,
    Trotter,
    Lindblad,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Trotter => "trotter",
            Method::Lindblad => "lindblad",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "exact-unitary" | "unitary" => Ok(Method::Exact),
            "trotter" => Ok(Method::Trotter),
            "lindblad" => Ok(Method::Lindblad),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Factor order inside one Trotter step. `Standard` is
/// `e^{-i H_tms1 dt} e^{-i H_tms2 dt} e^{-i H_detune dt}`, so the detuning
/// factor acts on the state first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrotterOrder {
    #[default]
    Standard,
    /// `e^{-i H_detune dt} e^{-i H_tms2 dt} e^{-i H_tms1 dt}`
    Reversed,
}

/// What to evolve for and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    /// us
    pub total_time: f64,
    pub method: Method,
    /// Trotter step (us); required for [`Method::Trotter`].
    #[serde(default)]
    pub trotter_dt: Option<f64>,
    #[serde(default)]
    pub trotter_order: TrotterOrder,
    /// Relative tolerance of the master-equation integrator.
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    /// Output times, sorted, within `[0, total_time]`. Empty means only
    /// `total_time`.
    #[serde(default)]
    pub sample_times: Vec<f64>,
}

fn default_rtol() -> f64 {
    DEFAULT_RTOL
}

impl EvolutionSpec {
    pub fn exact(total_time: f64) -> Self {
        EvolutionSpec {
            total_time,
            method: Method::Exact,
            trotter_dt: None,
            trotter_order: TrotterOrder::Standard,
            rtol: DEFAULT_RTOL,
            sample_times: Vec::new(),
        }
    }

    pub fn trotter(total_time: f64, dt: f64) -> Self {
        EvolutionSpec {
            method: Method::Trotter,
            trotter_dt: Some(dt),
            ..Self::exact(total_time)
        }
    }

    pub fn lindblad(total_time: f64) -> Self {
        EvolutionSpec {
            method: Method::Lindblad,
            ..Self::exact(total_time)
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_samples(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    /// `n + 1` evenly spaced samples from 0 to `total_time`.
    pub fn with_uniform_samples(mut self, n: usize) -> Self {
        let n = n.max(1);
        self.sample_times = (0..=n)
            .map(|i| self.total_time * i as f64 / n as f64)
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time >= 0.0) || !self.total_time.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "total time must be finite and nonnegative, got {}",
                self.total_time
            )));
        }
        if self.method == Method::Trotter {
            match self.trotter_dt {
                Some(dt) if dt > 0.0 && dt.is_finite() => {}
                Some(dt) => {
                    return Err(Error::InvalidParameter(format!(
                        "Trotter step must be positive, got {dt}"
                    )))
                }
                None => {
                    return Err(Error::InvalidParameter(
                        "Trotter evolution needs trotter_dt".into(),
                    ))
                }
            }
        }
        if self.method == Method::Lindblad && !(self.rtol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "integrator tolerance must be positive, got {}",
                self.rtol
            )));
        }
        let mut last = 0.0;
        for &t in &self.sample_times {
            if !(t >= last) || t > self.total_time * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "sample times must be sorted within [0, {}]",
                    self.total_time
                )));
            }
            last = t;
        }
        Ok(())
    }

    /// Sample times, defaulting to `[total_time]`.
    pub fn times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            vec![self.total_time]
        } else {
            self.sample_times.clone()
        }
    }
}

/// Pure or mixed state.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl State {
    pub fn dims(&self) -> &ModeDims {
        match self {
            State::Pure(p) => p.dims(),
            State::Mixed(r) => r.dims(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            State::Pure(p) => p.to_density(),
            State::Mixed(r) => r.clone(),
        }
    }

    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        match self {
            State::Pure(p) => p.mode_populations(mode),
            State::Mixed(r) => r.mode_populations(mode),
        }
    }

    pub fn mean_occupations(&self) -> Vec<f64> {
        match self {
            State::Pure(p) => p.mean_occupations(),
            State::Mixed(r) => r.mean_occupations(),
        }
    }
}

impl From<StateVector> for State {
    fn from(p: StateVector) -> Self {
        State::Pure(p)
    }
}

impl From<DensityMatrix> for State {
    fn from(r: DensityMatrix) -> Self {
        State::Mixed(r)
    }
}

/// Spectral decomposition of a Hermitian Hamiltonian, reusable for any
/// number of evolution times.
///
/// Basis states that `H` never connects are split into separate blocks
/// (connected components of its nonzero pattern) and each block is
/// diagonalized on its own.
#[derive(Clone, Debug)]
pub struct Propagator {
    blocks: Vec<SpectralBlock>,
    energies: Vec<f64>,
    dims: ModeDims,
}

#[derive(Clone, Debug)]
struct SpectralBlock {
    indices: Vec<usize>,
    vectors: CMatrix,
    energies: Vec<f64>,
}

/// Connected components of the nonzero pattern of a square matrix.
fn coupled_blocks(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != C64::new(0.0, 0.0) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

impl Propagator {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        use rayon::prelude::*;
        let err = h.hermiticity_error();
        if err > HERMITIAN_TOL {
            return Err(Error::InvalidOperator(format!(
                "Hamiltonian is not Hermitian (deviation {err:.3e})"
            )));
        }
        let m = h.matrix();
        let blocks: Vec<SpectralBlock> = coupled_blocks(m)
            .into_par_iter()
            .map(|indices| {
                let sub = CMatrix::from_fn(indices.len(), indices.len(), |r, c| {
                    m[(indices[r], indices[c])]
                });
                let eig = nalgebra::SymmetricEigen::new(sub);
                SpectralBlock {
                    indices,
                    vectors: eig.eigenvectors,
                    energies: eig.eigenvalues.iter().copied().collect(),
                }
            })
            .collect();
        let mut energies: Vec<f64> = blocks
            .iter()
            .flat_map(|b| b.energies.iter().copied())
            .collect();
        energies.sort_by(f64::total_cmp);
        Ok(Propagator {
            blocks,
            energies,
            dims: h.dims().clone(),
        })
    }

    /// Eigenvalues in ascending order.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `exp(-i H t)` as a dense matrix.
    pub fn unitary(&self, t: f64) -> CMatrix {
        let n = self.dims.total();
        let mut u = CMatrix::zeros(n, n);
        for b in &self.blocks {
            let mut scaled = b.vectors.clone();
            for (k, &e) in b.energies.iter().enumerate() {
                let ph = C64::from_polar(1.0, -e * t);
                for z in scaled.column_mut(k).iter_mut() {
                    *z *= ph;
                }
            }
            let ub = scaled * b.vectors.adjoint();
            for (r, &i) in b.indices.iter().enumerate() {
                for (c, &j) in b.indices.iter().enumerate() {
                    u[(i, j)] = ub[(r, c)];
                }
            }
        }
        u
    }

    pub fn propagate(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        self.dims.check_same(psi.dims())?;
        let amps = psi.amplitudes();
        let mut out = CVector::zeros(amps.len());
        for b in &self.blocks {
            let local = CVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| amps[i]));
            if local.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let mut c = b.vectors.adjoint() * local;
            for (z, &e) in c.iter_mut().zip(&b.energies) {
                *z *= C64::from_polar(1.0, -e * t);
            }
            let back = &b.vectors * c;
            for (r, &i) in b.indices.iter().enumerate() {
                out[i] = back[r];
            }
        }
        Ok(StateVector::from_raw(out, self.dims.clone()))
    }
}

/// `exp(-i H t) psi`.
pub fn evolve_unitary(h: &OperatorMatrix, psi: &StateVector, t: f64) -> Result<StateVector> {
    h.dims().check_same(psi.dims())?;
    if t == 0.0 {
        Propagator::new(h)?;
        return Ok(psi.clone());
    }
    Propagator::new(h)?.propagate(psi, t)
}

/// Number of Trotter steps for total time `t` and nominal step `dt`; the
/// actual step is `t / n`.
pub fn trotter_steps(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Trotter step must be positive, got {dt}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "evolution time must be nonnegative, got {t}"
        )));
    }
    Ok((t / dt - 1e-9).ceil().max(0.0) as usize)
}

/// One Trotter step `U(dt)` as a dense matrix.
pub fn trotter_step_unitary(
    params: &SystemParams,
    dt: f64,
    order: TrotterOrder,
) -> Result<CMatrix> {
    let u1 = Propagator::new(&build_h_tms(params, Pair::S1S2)?)?.unitary(dt);
    let u2 = Propagator::new(&build_h_tms(params, Pair::S3S2)?)?.unitary(dt);
    let hd = build_h_detune(params)?;
    let ud = CMatrix::from_diagonal(&hd.matrix().diagonal().map(|e| (-I * e * dt).exp()));
    Ok(match order {
        TrotterOrder::Standard => u1 * u2 * ud,
        TrotterOrder::Reversed => ud * u2 * u1,
    })
}

/// First-order Trotterized evolution under the full chain Hamiltonian.
pub fn evolve_trotter(
    params: &SystemParams,
    psi: &StateVector,
    t: f64,
    dt: f64,
) -> Result<StateVector> {
    evolve_trotter_ordered(params, psi, t, dt, TrotterOrder::Standard)
}

pub fn evolve_trotter_ordered(
    params: &SystemParams,
    psi: &StateVector,
    t: f64,
    dt: f64,
    order: TrotterOrder,
) -> Result<StateVector> {
    params.dims.check_same(psi.dims())?;
    let n = trotter_steps(t, dt)?;
    if n == 0 {
        return Ok(psi.clone());
    }
    let step = trotter_step_unitary(params, t / n as f64, order)?;
    let mut v: CVector = psi.amplitudes().clone();
    for _ in 0..n {
        v = &step * v;
    }
    Ok(StateVector::from_raw(v, psi.dims().clone()))
}

/// Reusable master-equation evolution; see [`evolve_lindblad`].
pub fn evolve_lindblad(
    h: &OperatorMatrix,
    collapse_ops: &[OperatorMatrix],
    rho: &DensityMatrix,
    spec: &EvolutionSpec,
) -> Result<Vec<DensityMatrix>> {
    LindbladSolver::new(h, collapse_ops)?.evolve(rho, spec)
}

/// States at each sample time of `spec` for a closed or open chain.
///
/// Exact and Trotter methods ignore collapse operators; Lindblad uses
/// [`crate::model::collapse_operators`].
pub fn evolve_chain(
    params: &SystemParams,
    initial: &State,
    spec: &EvolutionSpec,
) -> Result<Vec<State>> {
    spec.validate()?;
    let times = spec.times();
    match spec.method {
        Method::Exact => {
            let prop = Propagator::new(&build_h_full(params)?)?;
            match initial {
                State::Pure(psi) => times
                    .iter()
                    .map(|&t| prop.propagate(psi, t).map(State::Pure))
                    .collect(),
                State::Mixed(rho) => times
                    .iter()
                    .map(|&t| {
                        let u = prop.unitary(t);
                        Ok(State::Mixed(rho.transformed(&u)))
                    })
                    .collect(),
            }
        }
        Method::Trotter => {
            let dt = spec.trotter_dt.unwrap_or(f64::NAN);
            match initial {
                State::Pure(psi) => times
                    .iter()
                    .map(|&t| {
                        evolve_trotter_ordered(params, psi, t, dt, spec.trotter_order)
                            .map(State::Pure)
                    })
                    .collect(),
                State::Mixed(rho) => times
                    .iter()
                    .map(|&t| {
                        let n = trotter_steps(t, dt)?;
                        if n == 0 {
                            return Ok(State::Mixed(rho.clone()));
                        }
                        let step = trotter_step_unitary(params, t / n as f64, spec.trotter_order)?;
                        let mut u = CMatrix::identity(step.nrows(), step.ncols());
                        for _ in 0..n {
                            u = &step * u;
                        }
                        Ok(State::Mixed(rho.transformed(&u)))
                    })
                    .collect(),
            }
        }
        Method::Lindblad => {
            let h = build_h_full(params)?;
            let ops = crate::model::collapse_operators(params)?;
            let solver = LindbladSolver::new(&h, &ops)?;
            Ok(solver
                .evolve(&initial.to_density(), spec)?
                .into_iter()
                .map(State::Mixed)
                .collect())
        }
    }
}

/// Outcome of a projective measurement kept only on one result.
#[derive(Clone, Debug, PartialEq)]
pub struct PostSelection {
    pub probability: f64,
    /// `P rho P / p`; `None` when the outcome has probability below 1e-12.
    pub state: Option<DensityMatrix>,
}

impl PostSelection {
    /// The conditioned state, or an impossible-outcome error.
    pub fn require(self) -> Result<DensityMatrix> {
        self.state.ok_or_else(|| {
            Error::ImpossibleOutcome(format!(
                "post-selection probability {:.3e} is zero",
                self.probability
            ))
        })
    }
}

/// Keeps the branch selected by `projector`.
pub fn post_select(rho: &DensityMatrix, projector: &OperatorMatrix) -> Result<PostSelection> {
    rho.dims().check_same(projector.dims())?;
    if !projector.is_projector(1e-10) {
        return Err(Error::InvalidOperator(
            "post-selection needs a Hermitian idempotent projector".into(),
        ));
    }
    let kept = match projector.diagonal_mask(1e-12) {
        Some(mask) => {
            let m = rho.matrix();
            CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                if mask[i] && mask[j] {
                    m[(i, j)]
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        }
        None => {
            let p = projector.matrix();
            p * rho.matrix() * p
        }
    };
    let probability = kept.trace().re.clamp(0.0, 1.0);
    let state = (probability > 1e-12)
        .then(|| DensityMatrix::from_raw(kept / C64::from(probability), rho.dims().clone()));
    Ok(PostSelection { probability, state })
}

/// Applies the lowering operator of `mode` and renormalizes. Returns the
/// new state together with its weight before normalization, `<a^dag a>`.
pub fn apply_jump(state: &State, mode: usize) -> Result<(State, f64)> {
    let a = mode_annihilation(state.dims(), mode)?;
    match state {
        State::Pure(psi) => {
            let v = a.apply(psi)?;
            let weight = v.norm_squared();
            if weight < 1e-12 {
                return Err(Error::ImpossibleOutcome(format!(
                    "no photons in mode {mode} to lose"
                )));
            }
            Ok((
                State::Pure(StateVector::normalized(v, psi.dims().clone())?),
                weight,
            ))
        }
        State::Mixed(rho) => {
            let m = a.matrix() * rho.matrix() * a.matrix().adjoint();
            let weight = m.trace().re;
            if weight < 1e-12 {
                return Err(Error::ImpossibleOutcome(format!(
                    "no photons in mode {mode} to lose"
                )));
            }
            Ok((
                State::Mixed(DensityMatrix::from_raw(
                    m / C64::from(weight),
                    rho.dims().clone(),
                )),
                weight,
            ))
        }
    }
}

/// Result of comparing one evolution at two truncations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub dims: ModeDims,
    pub extended: ModeDims,
    /// Largest difference of any single-mode level population; levels
    /// present only in the larger space count against their full weight.
    pub max_population_difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs `evolve` at `dims` and at `dims` plus two levels per mode and
/// compares single-mode populations.
pub fn truncation_convergence_check<F>(dims: &ModeDims, evolve: F) -> Result<TruncationReport>
where
    F: Fn(&ModeDims) -> Result<State>,
{
    let extended = dims.extended(2);
    let small = evolve(dims)?;
    let large = evolve(&extended)?;
    let mut worst: f64 = 0.0;
    for mode in 0..dims.modes() {
        let ps = small.mode_populations(mode)?;
        let pl = large.mode_populations(mode)?;
        for (n, &p) in pl.iter().enumerate() {
            let d = (p - ps.get(n).copied().unwrap_or(0.0)).abs();
            worst = worst.max(d);
        }
    }
    Ok(TruncationReport {
        dims: dims.clone(),
        extended,
        max_population_difference: worst,
        tolerance: TRUNCATION_TOL,
        passed: worst < TRUNCATION_TOL,
    })
}

/// Truncation check for exact evolution of a Fock state under the full chain.
pub fn truncation_check_chain(
    params: &SystemParams,
    occupations: &[usize],
    t: f64,
) -> Result<TruncationReport> {
    truncation_convergence_check(&params.dims, |dims| {
        let p = params.clone().with_dims(dims.clone())?;
        let psi = crate::fock::fock_state(dims, occupations)?;
        evolve_unitary(&build_h_full(&p)?, &psi, t).map(State::Pure)
    })
}

#[cfg(test)]
mod tests;
