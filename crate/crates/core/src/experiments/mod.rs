//! Protocol runners, calibration fits and the error budget.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use std::str::FromStr;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::analytic::{bs_reference_timing, SymmetricChain};
use crate::dynamics::{apply_jump, evolve_chain, EvolutionSpec, Method, State};
use crate::error::{Error, Result};
use crate::fock::{
    binomial_code_state, embed_density, embed_state, fock_state, level_projector, CMatrix,
    CodeLabel, DensityMatrix, ModeDims, StateVector, C64,
};
use crate::metrics::{
    depolarizing_budget, negativity, parity_split, pauli_table_02, phase_optimized_fidelity,
    process_fidelity_qubit_subspace, square_grid, two_qubit_02, wigner, PauliTable,
    ProcessFidelity, ProcessMatrix, WignerMap,
};
use crate::model::{ModeCoherence, SystemParams, S1, S2, S3};

pub mod fit;

pub use fit::{
    damped_oscillation_model, dominant_frequency, fit_damped_oscillation, fit_sinusoid_frequency,
    fit_stark_detuning, fit_tms_strength, generate_tmsv_trace, peak_period, simulate_tmsv_vacuum,
    swap_time_from_trajectory, tau_s2_model, tmsv_vacuum_model, FitOptions, FitResult,
};


/// Pump detunings. The dynamics see `delta = delta_d + delta_0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Intentional detuning (rad/us).
    pub delta_d: f64,
    /// Stark-shift detuning (rad/us).
    pub delta_0: f64,
    /// Single-pump Stark shift (rad/us).
    #[serde(default)]
    pub delta_ac: Option<f64>,
}

impl CalibrationParams {
    pub fn new(delta_d: f64, delta_0: f64) -> Self {
        CalibrationParams {
            delta_d,
            delta_0,
            delta_ac: None,
        }
    }

    pub fn total_delta(&self) -> f64 {
        self.delta_d + self.delta_0
    }

    /// `params` with the total detuning, checked against the threshold.
    pub fn apply(&self, params: &SystemParams) -> Result<SystemParams> {
        let p = params.with_delta(self.total_delta());
        p.require_oscillatory()?;
        Ok(p)
    }
}

/// Joint S1/S3 Fock populations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointPopulations {
    pub p11: Vec<f64>,
    pub p02: Vec<f64>,
    pub p20: Vec<f64>,
    /// Everything else, `1 - p11 - p02 - p20`.
    pub rest: Vec<f64>,
}

/// Success probability of one purification stage at each sample time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSeries {
    pub name: String,
    pub success: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliSnapshot {
    pub time: f64,
    pub table: PauliTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativitySample {
    pub time: f64,
    pub negativity: f64,
    /// Weight of the `{0, 2}` subspace before renormalization.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedWigner {
    pub name: String,
    pub map: WignerMap,
}

/// Everything a runner produces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub experiment: String,
    pub times: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub n3: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointPopulations>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageSeries>,
    /// Product of all stage success probabilities; empty without stages.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retention: Vec<f64>,
    pub scalars: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pauli: Vec<PauliSnapshot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negativity: Vec<NegativitySample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wigner: Vec<NamedWigner>,
}

impl ProtocolResult {
    fn new(experiment: &str) -> Self {
        ProtocolResult {
            experiment: experiment.to_string(),
            ..Default::default()
        }
    }

    fn record_photons(&mut self, times: &[f64], states: &[State]) {
        self.times = times.to_vec();
        for s in states {
            let n = s.mean_occupations();
            self.n1.push(n[S1]);
            self.n2.push(n[S2]);
            self.n3.push(n[S3]);
        }
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    /// Every probability-valued output, with a name for error messages.
    pub fn probabilities(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |name: &str, v: &[f64]| {
            out.extend(v.iter().map(|&x| (name.to_string(), x)));
        };
        if let Some(j) = &self.joint {
            push("P11", &j.p11);
            push("P02", &j.p02);
            push("P20", &j.p20);
            push("P_rest", &j.rest);
        }
        if let Some(f) = &self.fidelity {
            push("fidelity", f);
        }
        for s in &self.stages {
            push(&s.name, &s.success);
        }
        push("retention", &self.retention);
        out
    }

    /// Writes `t_us, n1, n2, n3` and whichever optional series are present.
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_us".to_string(), "n1".into(), "n2".into(), "n3".into()];
        if self.joint.is_some() {
            header.extend(["P11", "P02", "P20", "P_rest"].map(String::from));
        }
        if self.fidelity.is_some() {
            header.push("fidelity".into());
        }
        for s in &self.stages {
            header.push(format!("success_{}", s.name));
        }
        if !self.retention.is_empty() {
            header.push("retention".into());
        }
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![*t, self.n1[i], self.n2[i], self.n3[i]];
            if let Some(j) = &self.joint {
                row.extend([j.p11[i], j.p02[i], j.p20[i], j.rest[i]]);
            }
            if let Some(f) = &self.fidelity {
                row.push(f[i]);
            }
            for s in &self.stages {
                row.push(s.success[i]);
            }
            if !self.retention.is_empty() {
                row.push(self.retention[i]);
            }
            w.write_record(row.iter().map(|v| format!("{v:.12e}")))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn analytic_timing(params: &SystemParams, out: &mut ProtocolResult) {
    if let Ok(chain) = SymmetricChain::from_params(params) {
        let t = chain.timing();
        out.scalars.insert("tau_st_us".into(), t.tau_st);
        out.scalars.insert("tau_s2_us".into(), t.tau_s2);
        out.scalars
            .insert("leakage_amplitude".into(), chain.leakage_amplitude());
    }
}

/// `rho` of one mode restricted to `{|0>, |1>}`, mixed with the maximally
/// mixed qubit with probability `p`.
fn depolarize_qubit_block(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if p == 0.0 {
        return Ok(rho.clone());
    }
    let mut m = rho.matrix().scale(1.0 - p);
    m[(0, 0)] += C64::from(0.5 * p);
    m[(1, 1)] += C64::from(0.5 * p);
    DensityMatrix::new(m, rho.dims().clone())
}

/// Auxiliary-qubit purification stage.
///
/// The pump leaves an auxiliary qubit excited with probability
/// `1 - exp(-rate t)`. Without purification those runs scramble the
/// transferred qubit; with it they are discarded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitExcitation {
    /// Excitation rate (1/us).
    pub rate: f64,
}

impl Default for QubitExcitation {
    /// 7.3 % failure over a 13.3 us pump.
    fn default() -> Self {
        QubitExcitation {
            rate: -(1.0f64 - 0.073).ln() / 13.3,
        }
    }
}

impl QubitExcitation {
    pub fn failure(&self, t: f64) -> f64 {
        1.0 - (-self.rate * t).exp()
    }
}

/// Which purification stages run at readout. Stages run in the order
/// qubit, then cavity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purification {
    None,
    Qubit,
    QubitCavity,
}

impl Purification {
    pub fn qubit(self) -> bool {
        !matches!(self, Purification::None)
    }

    pub fn cavity(self) -> bool {
        matches!(self, Purification::QubitCavity)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Purification::None => "none",
            Purification::Qubit => "qubit",
            Purification::QubitCavity => "qubit-cavity",
        }
    }
}

impl FromStr for Purification {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Purification::None),
            "qubit" => Ok(Purification::Qubit),
            "qubit-cavity" | "qubit+cavity" | "both" => Ok(Purification::QubitCavity),
            other => Err(Error::InvalidParameter(format!(
                "unknown purification {other:?}; expected none, qubit or qubit-cavity"
            ))),
        }
    }
}

/// Single-photon transfer from `|100>`, without purification.
pub fn run_single_photon_qst(
    params: &SystemParams,
    spec: &EvolutionSpec,
) -> Result<ProtocolResult> {
    let mut out = run_purified_qst(
        params,
        spec,
        Purification::None,
        &QubitExcitation { rate: 0.0 },
    )?;
    out.experiment = "qst".into();
    Ok(out)
}

/// Single-photon transfer from `|100>` with the chosen purification. The
/// `fidelity` series is the S3 single-photon population after the active
/// stages; the qubit transfer process at `spec.total_time` is reconstructed
/// from four probe runs.
pub fn run_purified_qst(
    params: &SystemParams,
    spec: &EvolutionSpec,
    purification: Purification,
    qubit: &QubitExcitation,
) -> Result<ProtocolResult> {
    params.require_oscillatory()?;
    spec.validate()?;
    if !(qubit.rate >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "qubit excitation rate must be nonnegative, got {}",
            qubit.rate
        )));
    }
    let dims = &params.dims;
    let psi0 = fock_state(dims, &[1, 0, 0])?;
    let times = spec.times();
    let states = evolve_chain(params, &State::Pure(psi0), spec)?;

    let mut out = ProtocolResult::new("purified-qst");
    out.record_photons(&times, &states);
    analytic_timing(params, &mut out);

    let vac2 = level_projector(dims, S2, 0)?;
    let mut qubit_success = Vec::with_capacity(times.len());
    let mut cavity_success = Vec::with_capacity(times.len());
    let mut fidelity = Vec::with_capacity(times.len());
    for (&t, s) in times.iter().zip(&states) {
        let rho = s.to_density();
        let sq = 1.0 - qubit.failure(t);
        let (rho, sc) = if purification.cavity() {
            let sel = crate::dynamics::post_select(&rho, &vac2)?;
            let p = sel.probability;
            (sel.state.unwrap_or(rho), p)
        } else {
            (rho, 1.0)
        };
        let rho3 = rho.partial_trace(&[S3])?;
        let rho3 = if purification.qubit() {
            rho3
        } else {
            depolarize_qubit_block(&rho3, 1.0 - sq)?
        };
        fidelity.push(rho3.mode_populations(0)?[1].clamp(0.0, 1.0));
        qubit_success.push(sq);
        cavity_success.push(sc);
    }
    if purification.qubit() {
        out.stages.push(StageSeries {
            name: "qubit".into(),
            success: qubit_success.clone(),
        });
    }
    if purification.cavity() {
        out.stages.push(StageSeries {
            name: "cavity".into(),
            success: cavity_success.clone(),
        });
    }
    if !out.stages.is_empty() {
        out.retention = (0..times.len())
            .map(|i| out.stages.iter().map(|s| s.success[i]).product())
            .collect();
    }
    out.fidelity = Some(fidelity);

    let t_end = spec.total_time;
    let last = times.len() - 1;
    out.scalars
        .insert("qubit_failure".into(), qubit.failure(t_end));
    out.scalars
        .insert("cavity_failure".into(), 1.0 - cavity_success[last]);
    if let Some(r) = out.retention.last() {
        out.scalars.insert("overall_failure".into(), 1.0 - r);
    }

    let process = transfer_process(params, spec.method, t_end, purification.cavity(), spec.rtol)?;
    let process = if purification.qubit() {
        process
    } else {
        let p = qubit.failure(t_end);
        let depol = process.process.depolarized(p);
        let po = depol.phase_optimized();
        ProcessFidelity {
            fidelity: po.fidelity,
            phase: po.phase,
            process: depol,
        }
    };
    out.scalars
        .insert("process_fidelity".into(), process.fidelity);
    out.scalars.insert("process_phase".into(), process.phase);
    out.process = Some(process.process);
    Ok(out)
}

/// Phase-optimized process fidelity of the S1 -> S3 transfer of a qubit
/// encoded in `{|0>, |1>}`, evaluated at time `t`. With `cavity_vacuum`,
/// each output is conditioned on S2 in vacuum.
pub fn transfer_process(
    params: &SystemParams,
    method: Method,
    t: f64,
    cavity_vacuum: bool,
    rtol: f64,
) -> Result<ProcessFidelity> {
    let dims = params.dims.clone();
    let spec = EvolutionSpec {
        method,
        rtol,
        ..EvolutionSpec::exact(t)
    };
    let spec = if method == Method::Trotter {
        let tau = SymmetricChain::from_params(params)
            .map(|c| c.tau_st())
            .unwrap_or(t);
        EvolutionSpec::trotter(t, tau / 4000.0)
    } else {
        spec
    };
    let vac2 = level_projector(&dims, S2, 0)?;
    let single1 = ModeDims::single(dims.levels_of(S1)?)?;
    let condition = |rho: DensityMatrix| -> Result<CMatrix> {
        let rho = if cavity_vacuum {
            // unnormalized branch; the process normalizes each output
            let sel = crate::dynamics::post_select(&rho, &vac2)?;
            match sel.state {
                Some(s) => {
                    DensityMatrix::from_raw(s.matrix() * C64::from(sel.probability), dims.clone())
                }
                None => DensityMatrix::from_raw(
                    CMatrix::zeros(dims.total(), dims.total()),
                    dims.clone(),
                ),
            }
        } else {
            rho
        };
        Ok(rho.partial_trace(&[S3])?.matrix().clone())
    };
    let final_state = |initial: State| -> Result<DensityMatrix> {
        Ok(evolve_chain(params, &initial, &spec)?
            .pop()
            .ok_or_else(|| Error::NonConvergence("evolution returned no states".into()))?
            .to_density())
    };
    let channel = |probe: &Matrix2<C64>| -> Result<CMatrix> {
        if method == Method::Lindblad {
            let mut m = CMatrix::zeros(single1.total(), single1.total());
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] = probe[(i, j)];
                }
            }
            let input = embed_density(&DensityMatrix::new(m, single1.clone())?, S1, &dims)?;
            return condition(final_state(State::Mixed(input))?);
        }
        // unitary methods: evolve each eigenvector of the probe
        let eig = nalgebra::SymmetricEigen::new(*probe);
        let mut acc: Option<CMatrix> = None;
        for k in 0..2 {
            let w = eig.eigenvalues[k];
            if w < 1e-14 {
                continue;
            }
            let mut amps = crate::fock::CVector::zeros(single1.total());
            amps[0] = eig.eigenvectors[(0, k)];
            amps[1] = eig.eigenvectors[(1, k)];
            let psi = embed_state(&StateVector::normalized(amps, single1.clone())?, S1, &dims)?;
            let out = condition(final_state(State::Pure(psi))?)? * C64::from(w);
            acc = Some(match acc {
                Some(a) => a + out,
                None => out,
            });
        }
        acc.ok_or_else(|| Error::InvalidParameter("probe state has zero trace".into()))
    };
    process_fidelity_qubit_subspace(channel, true, cavity_vacuum)
}

/// Balanced-splitter times `(2m + 1) tau_ST / 2` up to `t_max`. Even
/// multiples of `tau_ST / 2` are full swaps and carry no bunching.
pub fn hom_snapshot_times(tau_st: f64, t_max: f64) -> Vec<f64> {
    (0..)
        .map(|m| (2 * m + 1) as f64 * tau_st / 2.0)
        .take_while(|&t| t <= t_max * (1.0 + 1e-12))
        .collect()
}

/// `(|02> + i|20>)/sqrt2` on S1 (x) S3.
fn hom_target(dims: &ModeDims) -> Result<StateVector> {
    let a = fock_state(dims, &[0, 2])?;
    let b = fock_state(dims, &[2, 0])?;
    let amps = a.amplitudes().map(|x| x * FRAC_1_SQRT_2)
        + b.amplitudes().map(|x| x * C64::new(0.0, FRAC_1_SQRT_2));
    StateVector::new(amps, dims.clone())
}

/// Two-photon interference from `|1,0,1>`. Snapshots at odd multiples of
/// `tau_ST / 2` give the Pauli table, the negativity and the phase-optimized fidelity
/// to `(|02> + i|20>)/sqrt2` of the S1/S3 state.
pub fn run_hom(params: &SystemParams, spec: &EvolutionSpec) -> Result<ProtocolResult> {
    params.require_oscillatory()?;
    spec.validate()?;
    let dims = &params.dims;
    for mode in [S1, S3] {
        if dims.levels_of(mode)? < 3 {
            return Err(Error::OutOfTruncation {
                mode,
                occupation: 2,
                levels: dims.levels_of(mode)?,
            });
        }
    }
    let psi0 = State::Pure(fock_state(dims, &[1, 0, 1])?);
    let times = spec.times();
    let states = evolve_chain(params, &psi0, spec)?;
    let mut out = ProtocolResult::new("hom");
    out.record_photons(&times, &states);
    analytic_timing(params, &mut out);

    let mut joint = JointPopulations::default();
    for s in &states {
        let rho13 = s.to_density().partial_trace(&[S1, S3])?;
        let d = rho13.dims();
        let pop = |a: usize, b: usize| -> Result<f64> {
            Ok(rho13.matrix()[(d.index_of(&[a, b])?, d.index_of(&[a, b])?)]
                .re
                .clamp(0.0, 1.0))
        };
        let (p11, p02, p20) = (pop(1, 1)?, pop(0, 2)?, pop(2, 0)?);
        joint.p11.push(p11);
        joint.p02.push(p02);
        joint.p20.push(p20);
        joint.rest.push((1.0 - p11 - p02 - p20).clamp(0.0, 1.0));
    }
    out.joint = Some(joint);

    let tau = SymmetricChain::from_params(params)?.tau_st();
    let snaps = hom_snapshot_times(tau, spec.total_time);
    if !snaps.is_empty() {
        let snap_spec = spec.clone().with_samples(snaps.clone());
        let snap_states = evolve_chain(params, &psi0, &snap_spec)?;
        for (k, (&t, s)) in snaps.iter().zip(&snap_states).enumerate() {
            let rho13 = s.to_density().partial_trace(&[S1, S3])?;
            let pair = two_qubit_02(&rho13)?;
            let neg = negativity(&pair.to_density(), 1)?;
            out.negativity.push(NegativitySample {
                time: t,
                negativity: neg,
                weight: pair.weight,
            });
            out.pauli.push(PauliSnapshot {
                time: t,
                table: pauli_table_02(&rho13)?,
            });
            let f = phase_optimized_fidelity(&hom_target(rho13.dims())?, &rho13, 1)?;
            out.scalars.insert(format!("bell_fidelity_{k}"), f.fidelity);
            if k == 0 {
                out.scalars.insert("bell_fidelity".into(), f.fidelity);
                out.scalars.insert("bell_phase".into(), f.phase);
                out.scalars.insert("negativity".into(), neg);
                let d = rho13.dims();
                let pop = |a: usize, b: usize| -> Result<f64> {
                    let i = d.index_of(&[a, b])?;
                    Ok(rho13.matrix()[(i, i)].re)
                };
                out.scalars.insert("p11_half_swap".into(), pop(1, 1)?);
                out.scalars
                    .insert("p02_plus_p20_half_swap".into(), pop(0, 2)? + pop(2, 0)?);
            }
        }
    }
    Ok(out)
}

/// Options for [`run_binomial_transfer`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialOptions {
    /// Apply one photon loss to S3 after the transfer.
    pub inject_loss: bool,
    /// Wigner grid half-width and points per axis; `None` skips the maps.
    pub wigner_grid: Option<(f64, usize)>,
}

impl Default for BinomialOptions {
    fn default() -> Self {
        BinomialOptions {
            inject_loss: false,
            wigner_grid: Some((3.0, 41)),
        }
    }
}

/// Transfers a binomial-code state from S1 to S3 and measures the S3
/// parity. The even branch is compared with `label`, the odd branch with
/// its single-loss partner.
pub fn run_binomial_transfer(
    params: &SystemParams,
    spec: &EvolutionSpec,
    label: CodeLabel,
    options: &BinomialOptions,
) -> Result<ProtocolResult> {
    params.require_oscillatory()?;
    spec.validate()?;
    let dims = &params.dims;
    for mode in [S1, S3] {
        let levels = dims.levels_of(mode)?;
        if levels < 6 {
            return Err(Error::OutOfTruncation {
                mode,
                occupation: 5,
                levels,
            });
        }
    }
    let n1 = dims.levels_of(S1)?;
    let n3 = dims.levels_of(S3)?;
    let prepared = binomial_code_state(label, n1)?;
    let psi0 = State::Pure(embed_state(&prepared, S1, dims)?);
    let times = spec.times();
    let states = evolve_chain(params, &psi0, spec)?;
    let mut out = ProtocolResult::new("binomial");
    out.record_photons(&times, &states);
    analytic_timing(params, &mut out);

    let target = binomial_code_state(label, n3)?;
    let mut fid = Vec::with_capacity(states.len());
    for s in &states {
        let rho3 = s.to_density().partial_trace(&[S3])?;
        fid.push(phase_optimized_fidelity(&target, &rho3, 0)?.fidelity);
    }
    out.fidelity = Some(fid);

    let last = states
        .last()
        .ok_or_else(|| Error::NonConvergence("evolution returned no states".into()))?;
    let mut rho3 = last.to_density().partial_trace(&[S3])?;
    if options.inject_loss {
        let (lost, weight) = apply_jump(&State::Mixed(rho3), 0)?;
        out.scalars.insert("loss_weight".into(), weight);
        rho3 = lost.to_density();
    }
    let unconditioned = phase_optimized_fidelity(&target, &rho3, 0)?;
    out.scalars
        .insert("fidelity_unconditioned".into(), unconditioned.fidelity);

    let split = parity_split(&rho3, 0)?;
    out.scalars.insert("p_even".into(), split.p_even);
    out.scalars.insert("p_odd".into(), split.p_odd);
    if let Some(even) = &split.even {
        let f = phase_optimized_fidelity(&target, even, 0)?;
        out.scalars.insert("fidelity_even".into(), f.fidelity);
        out.scalars.insert("phase_even".into(), f.phase);
    }
    let error_target = match label.error_partner() {
        Some(e) => Some(binomial_code_state(e, n3)?),
        None => None,
    };
    if let (Some(odd), Some(et)) = (&split.odd, &error_target) {
        let f = phase_optimized_fidelity(et, odd, 0)?;
        out.scalars.insert("fidelity_odd_error".into(), f.fidelity);
        out.scalars.insert("phase_odd".into(), f.phase);
    }

    if let Some((extent, n)) = options.wigner_grid {
        let grid = square_grid(extent, n);
        out.wigner.push(NamedWigner {
            name: "prepared".into(),
            map: wigner(&prepared.to_density(), &grid)?,
        });
        out.wigner.push(NamedWigner {
            name: "received".into(),
            map: wigner(&rho3, &grid)?,
        });
        if let Some(odd) = &split.odd {
            out.wigner.push(NamedWigner {
                name: "error".into(),
                map: wigner(odd, &grid)?,
            });
        }
    }
    Ok(out)
}

/// One line of an error budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BudgetItem {
    /// Infidelity from comparing the closed chain with a Lindblad run
    /// using `coherence`.
    Simulated {
        name: String,
        coherence: Vec<ModeCoherence>,
    },
    /// A measured or externally estimated infidelity.
    Fixed { name: String, infidelity: f64 },
}

impl BudgetItem {
    pub fn name(&self) -> &str {
        match self {
            BudgetItem::Simulated { name, .. } | BudgetItem::Fixed { name, .. } => name,
        }
    }
}

/// The device's error budget at `delta/2pi = 373 kHz`: cavity decoherence
/// simulated from the measured cavity coherence, the rest fixed.
pub fn device_budget_items() -> Vec<BudgetItem> {
    vec![
        BudgetItem::Fixed {
            name: "auxiliary qubit excitation".into(),
            infidelity: 0.073,
        },
        BudgetItem::Fixed {
            name: "residual photons in S2".into(),
            infidelity: 0.06,
        },
        BudgetItem::Simulated {
            name: "cavity decoherence".into(),
            coherence: crate::model::device_cavity_coherence().to_vec(),
        },
        BudgetItem::Fixed {
            name: "state preparation and tomography".into(),
            infidelity: 0.089,
        },
        BudgetItem::Fixed {
            name: "others".into(),
            infidelity: 0.037,
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub name: String,
    /// `1 - P_i`.
    pub infidelity: f64,
    /// Process fidelity with and without the error, for simulated rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_with: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_without: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub rows: Vec<BudgetRow>,
    /// `1/4 + (3/4) prod_i P_i`.
    pub combined_fidelity: f64,
}

/// `1 - (F_with - 1/4) / (F_without - 1/4)`.
pub fn ablation_infidelity(f_with: f64, f_without: f64) -> Result<f64> {
    for (name, f) in [("with", f_with), ("without", f_without)] {
        if !(f > 0.25) {
            return Err(Error::BudgetUndefined(format!(
                "process fidelity {name} the error is {f:.4}, not above 1/4"
            )));
        }
    }
    Ok(1.0 - (f_with - 0.25) / (f_without - 0.25))
}

/// Builds the budget for a transfer of duration `t`. Simulated items run
/// the closed chain exactly and the open chain with the Lindblad solver.
pub fn error_budget_report(
    params: &SystemParams,
    t: f64,
    items: &[BudgetItem],
    rtol: f64,
) -> Result<BudgetReport> {
    let mut rows = Vec::with_capacity(items.len());
    let mut closed_fidelity = None;
    for item in items {
        match item {
            BudgetItem::Fixed { name, infidelity } => {
                if !(0.0..=1.0).contains(infidelity) {
                    return Err(Error::InvalidParameter(format!(
                        "infidelity of {name:?} must lie in [0, 1], got {infidelity}"
                    )));
                }
                rows.push(BudgetRow {
                    name: name.clone(),
                    infidelity: *infidelity,
                    fidelity_with: None,
                    fidelity_without: None,
                });
            }
            BudgetItem::Simulated { name, coherence } => {
                params.require_oscillatory()?;
                let fb = match closed_fidelity {
                    Some(f) => f,
                    None => {
                        let f = transfer_process(&params.closed(), Method::Exact, t, false, rtol)?
                            .fidelity;
                        closed_fidelity = Some(f);
                        f
                    }
                };
                let open = params.clone().with_coherence(coherence.clone())?;
                let fa = transfer_process(&open, Method::Lindblad, t, false, rtol)?.fidelity;
                rows.push(BudgetRow {
                    name: name.clone(),
                    infidelity: ablation_infidelity(fa, fb)?,
                    fidelity_with: Some(fa),
                    fidelity_without: Some(fb),
                });
            }
        }
    }
    let infid: Vec<f64> = rows.iter().map(|r| r.infidelity).collect();
    Ok(BudgetReport {
        combined_fidelity: depolarizing_budget(&infid)?,
        rows,
    })
}

/// One detuning of the squeezing-vs-exchange comparison. TMS fields are
/// `None` below the oscillation threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmsBsRow {
    pub delta: f64,
    pub tms_tau_st: Option<f64>,
    pub bs_tau_st: f64,
    pub tms_n2_amplitude: Option<f64>,
    pub bs_n2_amplitude: f64,
    pub tms_in_regime: bool,
}

pub fn compare_tms_vs_bs(g: f64, delta_grid: &[f64]) -> Result<Vec<TmsBsRow>> {
    delta_grid
        .iter()
        .map(|&delta| {
            let bs = bs_reference_timing(g, delta)?;
            let tms = SymmetricChain::new(g, delta).ok();
            Ok(TmsBsRow {
                delta,
                tms_tau_st: tms.map(|c| c.tau_st()),
                bs_tau_st: bs.tau_st,
                tms_n2_amplitude: tms.map(|c| c.leakage_amplitude()),
                bs_n2_amplitude: bs.n2_amplitude,
                tms_in_regime: tms.is_some(),
            })
        })
        .collect()
}

/// Bus periods `(delta_d, tau_S2)` for a given Stark offset, for fit
/// round-trips.
pub fn stark_trace(delta_d: &[f64], delta_0: f64, g: f64) -> Result<Vec<(f64, f64)>> {
    delta_d
        .iter()
        .map(|&d| {
            tau_s2_model(d, delta_0, g)
                .map(|t| (d, t))
                .ok_or(Error::Regime {
                    delta: d + delta_0,
                    threshold: 2.0 * 2f64.sqrt() * g,
                })
        })
        .collect()
}

/// Full S1/S3 oscillation period of a trajectory, twice the fitted swap time.
pub fn oscillation_period(result: &ProtocolResult) -> Result<f64> {
    swap_time_from_trajectory(&result.times, &result.n1, &result.n3).map(|tau| 2.0 * tau)
}
