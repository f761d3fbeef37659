//! Figures of merit: fidelities, process reconstruction, negativity,
//! Wigner functions, parity and two-qubit Pauli tomography.

use std::f64::consts::{FRAC_2_PI, PI};
use std::io::Write;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::fock::{
    annihilation_op, hermitian_eigenvalues, parity_projector, CMatrix, DensityMatrix, ModeDims,
    StateVector, C64, I,
};

/// Below this in-subspace weight a projection is considered empty.
pub const MIN_SUBSPACE_WEIGHT: f64 = 1e-6;

/// Extra Fock levels used when building displacement operators.
pub const WIGNER_GUARD_LEVELS: usize = 4;

/// Fidelity between two states: `|<a|b>|^2`, `<psi|rho|psi>` or the
/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn state_fidelity(a: &State, b: &State) -> Result<f64> {
    a.dims().check_same(b.dims())?;
    let f = match (a, b) {
        (State::Pure(x), State::Pure(y)) => x.inner(y)?.norm_sqr(),
        (State::Pure(x), State::Mixed(r)) | (State::Mixed(r), State::Pure(x)) => r.expect_state(x),
        (State::Mixed(r), State::Mixed(s)) => uhlmann(r.matrix(), s.matrix()),
    };
    Ok(f.clamp(0.0, 1.0))
}

/// `<psi| rho |psi>` without validating that `rho` is normalized.
pub fn overlap(psi: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    psi.dims().check_same(rho.dims())?;
    Ok(rho.expect_state(psi))
}

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(m.clone());
    let mut v = eig.eigenvectors.clone();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        for z in v.column_mut(k).iter_mut() {
            *z *= s;
        }
    }
    v * eig.eigenvectors.adjoint()
}

fn uhlmann(r: &CMatrix, s: &CMatrix) -> f64 {
    let sr = psd_sqrt(r);
    let inner = &sr * s * &sr;
    let inner = (&inner + inner.adjoint()) * C64::from(0.5);
    let tr: f64 = hermitian_eigenvalues(&inner)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    tr * tr
}

/// Best overlap with `target` after rotating one mode of `rho` by
/// `exp(i phase n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOptimized {
    pub fidelity: f64,
    /// Rotation applied to the state, radians in `[0, 2 pi)`.
    pub phase: f64,
}

/// Maximizes `<target| R rho R^dag |target>` over `R = exp(i phase n_mode)`.
pub fn phase_optimized_fidelity(
    target: &StateVector,
    rho: &DensityMatrix,
    mode: usize,
) -> Result<PhaseOptimized> {
    target.dims().check_same(rho.dims())?;
    let dims = rho.dims();
    dims.levels_of(mode)?;
    // F(phase) = sum_k c_k e^{i k phase}, k = n_mode(row) - n_mode(col)
    let levels = dims.levels_of(mode)?;
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * levels - 1];
    let psi = target.amplitudes();
    let m = rho.matrix();
    let n = dims.total();
    for i in 0..n {
        if psi[i] == C64::new(0.0, 0.0) {
            continue;
        }
        let ni = dims.occupation_of(i, mode) as isize;
        for j in 0..n {
            if psi[j] == C64::new(0.0, 0.0) {
                continue;
            }
            let nj = dims.occupation_of(j, mode) as isize;
            let k = (ni - nj + levels as isize - 1) as usize;
            coeffs[k] += psi[i].conj() * m[(i, j)] * psi[j];
        }
    }
    let eval = |phase: f64| -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let d = k as f64 - (levels as f64 - 1.0);
                (c * C64::from_polar(1.0, d * phase)).re
            })
            .sum()
    };
    Ok(maximize_periodic(eval))
}

/// Global maximum of a smooth 2 pi-periodic function: coarse grid, then
/// golden-section refinement around the best node.
fn maximize_periodic(f: impl Fn(f64) -> f64) -> PhaseOptimized {
    const GRID: usize = 720;
    let h = 2.0 * PI / GRID as f64;
    let (mut best_x, mut best_f) = (0.0, f(0.0));
    for i in 1..GRID {
        let x = i as f64 * h;
        let v = f(x);
        if v > best_f {
            best_x = x;
            best_f = v;
        }
    }
    let (mut a, mut b) = (best_x - h, best_x + h);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    let (x, v) = if v >= best_f {
        (x, v)
    } else {
        (best_x, best_f)
    };
    PhaseOptimized {
        fidelity: v.clamp(0.0, 1.0),
        phase: x.rem_euclid(2.0 * PI),
    }
}

/// Normalized Choi matrix of a channel on span{|0>, |1>}:
/// `chi = (1/2) sum_ij |i><j| (x) E(|i><j|)`, indexed `2 i + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    pub choi: nalgebra::Matrix4<C64>,
}

impl Serialize for ProcessMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| [self.choi[(i, j)].re, self.choi[(i, j)].im])
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProcessMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
            return Err(serde::de::Error::custom("process matrix must be 4x4"));
        }
        let choi = nalgebra::Matrix4::from_fn(|i, j| C64::new(rows[i][j][0], rows[i][j][1]));
        Ok(ProcessMatrix { choi })
    }
}

impl ProcessMatrix {
    /// From the images `e[i][j] = E(|i><j|)`, each restricted to the
    /// output qubit block.
    pub fn from_images(e: [[nalgebra::Matrix2<C64>; 2]; 2]) -> Self {
        let mut choi = nalgebra::Matrix4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        choi[(2 * i + k, 2 * j + l)] = e[i][j][(k, l)] * 0.5;
                    }
                }
            }
        }
        ProcessMatrix { choi }
    }

    /// From the outputs for inputs `|0>`, `|1>`, `|+>`, `|+i>`, using
    /// `|0><1| = rho_+ + i rho_+i - (1 + i)(rho_0 + rho_1)/2`.
    pub fn from_probe_outputs(
        out0: &nalgebra::Matrix2<C64>,
        out1: &nalgebra::Matrix2<C64>,
        out_plus: &nalgebra::Matrix2<C64>,
        out_plus_i: &nalgebra::Matrix2<C64>,
    ) -> Self {
        let e01 = out_plus + out_plus_i * I - (out0 + out1) * (C64::new(1.0, 1.0) * 0.5);
        let e10 = e01.adjoint();
        Self::from_images([[*out0, e01], [e10, *out1]])
    }

    pub fn identity() -> Self {
        let id = nalgebra::Matrix2::identity();
        let (mut e01, mut e10) = (nalgebra::Matrix2::zeros(), nalgebra::Matrix2::zeros());
        e01[(0, 1)] = C64::new(1.0, 0.0);
        e10[(1, 0)] = C64::new(1.0, 0.0);
        let mut e00 = nalgebra::Matrix2::zeros();
        e00[(0, 0)] = C64::new(1.0, 0.0);
        let e11 = id - e00;
        Self::from_images([[e00, e01], [e10, e11]])
    }

    /// Image of `|i><j|`.
    pub fn image(&self, i: usize, j: usize) -> nalgebra::Matrix2<C64> {
        nalgebra::Matrix2::from_fn(|k, l| self.choi[(2 * i + k, 2 * j + l)] * 2.0)
    }

    pub fn trace(&self) -> f64 {
        self.choi.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = CMatrix::from_fn(4, 4, |i, j| self.choi[(i, j)]);
        hermitian_eigenvalues(&m)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Tr(chi_ideal chi)` against the identity channel.
    pub fn fidelity(&self) -> f64 {
        let c = &self.choi;
        0.5 * (c[(0, 0)] + c[(3, 3)] + c[(0, 3)] + c[(3, 0)]).re
    }

    /// Fidelity after the best output rotation `diag(1, e^{i phase})`.
    pub fn phase_optimized(&self) -> PhaseOptimized {
        let c = &self.choi;
        let coherence = c[(3, 0)];
        PhaseOptimized {
            fidelity: 0.5 * (c[(0, 0)] + c[(3, 3)]).re + coherence.norm(),
            phase: (-coherence.arg()).rem_euclid(2.0 * PI),
        }
    }

    /// Composition with a qubit depolarizing channel of strength `p`.
    pub fn depolarized(&self, p: f64) -> Self {
        let mut out = self.clone();
        for i in 0..2 {
            for j in 0..2 {
                let img = self.image(i, j);
                let tr = img.trace();
                let mixed = nalgebra::Matrix2::identity() * (tr * 0.5);
                let new = img * C64::from(1.0 - p) + mixed * C64::from(p);
                for k in 0..2 {
                    for l in 0..2 {
                        out.choi[(2 * i + k, 2 * j + l)] = new[(k, l)] * 0.5;
                    }
                }
            }
        }
        out
    }
}

/// Process fidelity of a channel on the qubit subspace and the
/// reconstructed process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessFidelity {
    pub fidelity: f64,
    /// Output rotation used, zero when not optimized.
    pub phase: f64,
    pub process: ProcessMatrix,
}

/// Qubit input probes `|0>`, `|1>`, `|+>`, `|+i>`, as 2x2 density matrices.
pub fn qubit_probes() -> [nalgebra::Matrix2<C64>; 4] {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let half = C64::new(0.5, 0.0);
    [
        nalgebra::Matrix2::new(one, zero, zero, zero),
        nalgebra::Matrix2::new(zero, zero, zero, one),
        nalgebra::Matrix2::new(half, half, half, half),
        nalgebra::Matrix2::new(half, -I * 0.5, I * 0.5, half),
    ]
}

/// Reconstructs the channel from `channel`'s action on the four probes.
///
/// `channel` returns a single-mode output state of any truncation; only its
/// `{|0>, |1>}` block enters the process. Unless `post_selected` is set, each
/// output must have unit trace within 1e-6.
pub fn process_fidelity_qubit_subspace<F>(
    channel: F,
    optimize_phase: bool,
    post_selected: bool,
) -> Result<ProcessFidelity>
where
    F: Fn(&nalgebra::Matrix2<C64>) -> Result<CMatrix>,
{
    let mut blocks = Vec::with_capacity(4);
    for probe in qubit_probes() {
        let out = channel(&probe)?;
        if out.nrows() < 2 || out.nrows() != out.ncols() {
            return Err(Error::InvalidDimension(format!(
                "channel output must be a square matrix with at least two levels, got {}x{}",
                out.nrows(),
                out.ncols()
            )));
        }
        let tr = out.trace().re;
        let mut out = out;
        if post_selected {
            if tr <= 1e-12 {
                return Err(Error::ImpossibleOutcome(
                    "post-selected output has zero weight".into(),
                ));
            }
            out /= C64::from(tr);
        } else if (tr - 1.0).abs() > 1e-6 {
            return Err(Error::NotTracePreserving {
                deviation: (tr - 1.0).abs(),
            });
        }
        blocks.push(nalgebra::Matrix2::from_fn(|i, j| out[(i, j)]));
    }
    let process = ProcessMatrix::from_probe_outputs(&blocks[0], &blocks[1], &blocks[2], &blocks[3]);
    let (fidelity, phase) = if optimize_phase {
        let p = process.phase_optimized();
        (p.fidelity, p.phase)
    } else {
        (process.fidelity(), 0.0)
    };
    Ok(ProcessFidelity {
        fidelity,
        phase,
        process,
    })
}

/// `F = 1/4 + (3/4) prod_i P_i` from per-error infidelities `1 - P_i`.
pub fn depolarizing_budget(infidelities: &[f64]) -> Result<f64> {
    let mut prod = 1.0;
    for &e in infidelities {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParameter(format!(
                "infidelity must lie in [0, 1], got {e}"
            )));
        }
        prod *= 1.0 - e;
    }
    Ok(0.25 + 0.75 * prod)
}

/// Sum of the magnitudes of the negative eigenvalues of the partial
/// transpose over the last `dims.modes() - left_modes` modes.
pub fn negativity(rho: &DensityMatrix, left_modes: usize) -> Result<f64> {
    let levels = rho.dims().levels();
    if left_modes == 0 || left_modes >= levels.len() {
        return Err(Error::InvalidDimension(format!(
            "bipartition after {left_modes} of {} modes is empty",
            levels.len()
        )));
    }
    let da: usize = levels[..left_modes].iter().product();
    let db: usize = levels[left_modes..].iter().product();
    let m = rho.matrix();
    let pt = CMatrix::from_fn(da * db, da * db, |r, c| {
        let (a, b) = (r / db, r % db);
        let (a2, b2) = (c / db, c % db);
        m[(a * db + b2, a2 * db + b)]
    });
    Ok(hermitian_eigenvalues(&pt)
        .into_iter()
        .filter(|&l| l < 0.0)
        .fold(0.0, |acc, l| acc - l))
}

/// Wigner function values at a set of phase-space points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerMap {
    pub points: Vec<C64>,
    pub values: Vec<f64>,
}

impl WignerMap {
    /// CSV with header `re_alpha,im_alpha,W`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["re_alpha", "im_alpha", "W"]).map_err(io)?;
        for (a, v) in self.points.iter().zip(&self.values) {
            w.write_record([format!("{}", a.re), format!("{}", a.im), format!("{v}")])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n x n` square grid covering `[-extent, extent]` on both axes, real part
/// varying fastest.
pub fn square_grid(extent: f64, n: usize) -> Vec<C64> {
    let n = n.max(2);
    let step = 2.0 * extent / (n - 1) as f64;
    (0..n)
        .flat_map(|j| {
            (0..n).map(move |i| C64::new(-extent + i as f64 * step, -extent + j as f64 * step))
        })
        .collect()
}

/// Levels used to displace a state of `levels` levels by up to `radius`:
/// the displaced support reaches about `(radius + sqrt(levels))^2` plus a
/// few standard deviations.
fn displacement_levels(levels: usize, radius: f64) -> usize {
    let reach = radius + (levels as f64).sqrt() + 4.0;
    levels.max((reach * reach).ceil() as usize) + WIGNER_GUARD_LEVELS
}

/// `W(alpha) = (2/pi) Tr[D(-alpha) rho D(-alpha)^dag P]` with parity `P`.
///
/// Displacements come from exponentiating `alpha a^dag - alpha* a` in an
/// enlarged space whose guard band grows with the largest `|alpha|`.
pub fn wigner(rho: &DensityMatrix, points: &[C64]) -> Result<WignerMap> {
    if rho.dims().modes() != 1 {
        return Err(Error::InvalidDimension(format!(
            "Wigner function needs a single mode, got {}",
            rho.dims().modes()
        )));
    }
    if points
        .iter()
        .any(|a| !a.re.is_finite() || !a.im.is_finite())
    {
        return Err(Error::InvalidParameter(
            "phase-space points must be finite".into(),
        ));
    }
    let n = rho.dims().total();
    let radius = points.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let m = displacement_levels(n, radius);
    // D(r) = exp(r (a^dag - a)) = exp(-i r K) with Hermitian K = i (a^dag - a)
    let a = annihilation_op(m)?.into_matrix();
    let k = (a.adjoint() - &a) * I;
    let eig = SymmetricEigen::new(k);
    let vecs = eig.eigenvectors;
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    // only the first n columns of D matter
    let vecs_top = vecs.rows(0, n).into_owned();
    let rho_m = rho.matrix();

    let values = points
        .par_iter()
        .map(|alpha| {
            let r = alpha.norm();
            let phi = alpha.arg();
            // D(alpha) = R(phi) D(r) R(phi)^dag, R(phi) = exp(i phi n)
            // rho' = D(alpha)^dag rho D(alpha); parity is rotation invariant, so
            // W = (2/pi) sum_k (-1)^k [D(r)^dag R^dag rho R D(r)]_kk
            let rot = CMatrix::from_fn(n, n, |i, j| {
                rho_m[(i, j)] * C64::from_polar(1.0, phi * (j as f64 - i as f64))
            });
            // columns of D(r) restricted to rows < n: X = V_top diag(e^{-i r l}) V^dag
            let mut scaled = vecs_top.clone();
            for (c, &l) in vals.iter().enumerate() {
                let ph = C64::from_polar(1.0, -r * l);
                for z in scaled.column_mut(c).iter_mut() {
                    *z *= ph;
                }
            }
            let d_top = scaled * vecs.adjoint(); // n x m block of D(r)
            let tmp = &rot * &d_top; // n x m
            let mut w = 0.0;
            for kk in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for i in 0..n {
                    s += d_top[(i, kk)].conj() * tmp[(i, kk)];
                }
                w += if kk % 2 == 0 { s.re } else { -s.re };
            }
            FRAC_2_PI * w
        })
        .collect();
    Ok(WignerMap {
        points: points.to_vec(),
        values,
    })
}

/// Laguerre closed form of the Wigner function, exact for any truncation:
/// `<m| D(alpha) P D(alpha)^dag |n>` in terms of associated Laguerre
/// polynomials.
pub fn wigner_laguerre(rho: &DensityMatrix, alpha: C64) -> Result<f64> {
    if rho.dims().modes() != 1 {
        return Err(Error::InvalidDimension(
            "Wigner function needs a single mode".into(),
        ));
    }
    let n = rho.dims().total();
    let x = 4.0 * alpha.norm_sqr();
    let m = rho.matrix();
    let mut w = 0.0;
    for mm in 0..n {
        w += m[(mm, mm)].re * parity_sign(mm) * laguerre(mm, 0, x);
        for nn in (mm + 1)..n {
            // <m|D P D^dag|n> = (-1)^m sqrt(m!/n!) (2 alpha*)^(n-m) e^{-2|a|^2} L_m^(n-m)(4|a|^2)
            let mut ratio = 1.0;
            for k in (mm + 1)..=nn {
                ratio /= k as f64;
            }
            let elem = (2.0 * alpha.conj()).powu((nn - mm) as u32)
                * (parity_sign(mm) * ratio.sqrt() * laguerre(mm, nn - mm, x));
            // Tr(rho O) = sum rho_nm O_mn; pair (m, n) with its conjugate
            w += 2.0 * (m[(nn, mm)] * elem).re;
        }
    }
    Ok(FRAC_2_PI * (-x / 2.0).exp() * w)
}

fn parity_sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Associated Laguerre polynomial `L_n^(k)(x)` by upward recurrence.
fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let (mut l0, mut l1) = (1.0, 1.0 + k - x);
    if n == 0 {
        return l0;
    }
    for j in 1..n {
        let j = j as f64;
        let l2 = ((2.0 * j + 1.0 + k - x) * l1 - (j + k) * l0) / (j + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Outcome of a photon-number parity measurement on one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ParitySplit {
    pub p_even: f64,
    pub p_odd: f64,
    /// Normalized even branch; `None` if its probability is below 1e-12.
    pub even: Option<DensityMatrix>,
    pub odd: Option<DensityMatrix>,
}

pub fn parity_split(rho: &DensityMatrix, mode: usize) -> Result<ParitySplit> {
    let even = parity_projector(rho.dims(), mode, true)?;
    let odd = parity_projector(rho.dims(), mode, false)?;
    let e = crate::dynamics::post_select(rho, &even)?;
    let o = crate::dynamics::post_select(rho, &odd)?;
    Ok(ParitySplit {
        p_even: e.probability,
        p_odd: o.probability,
        even: e.state,
        odd: o.state,
    })
}

/// Single-qubit Pauli labels in table order.
pub const PAULI_LABELS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Two-qubit Pauli expectations in the `{|0>, |2>}` subspace of each mode.
///
/// Convention: Fock `|0>` is the `+Z` eigenstate and Fock `|2>` the `-Z`
/// eigenstate; `X` and `Y` are the usual matrices in that basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTable {
    /// `values[i][j] = <sigma_i (x) sigma_j>`, indices over `I, X, Y, Z`.
    pub values: [[f64; 4]; 4],
    /// Population of the subspace before renormalization.
    pub weight: f64,
}

impl PauliTable {
    pub fn get(&self, label: &str) -> Option<f64> {
        let chars: Vec<char> = label.chars().collect();
        let [x, y] = chars[..] else { return None };
        let a = PAULI_LABELS.iter().position(|&c| c == x)?;
        let b = PAULI_LABELS.iter().position(|&c| c == y)?;
        Some(self.values[a][b])
    }

    /// The 15 non-identity entries with their labels.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::with_capacity(15);
        for (i, a) in PAULI_LABELS.iter().enumerate() {
            for (j, b) in PAULI_LABELS.iter().enumerate() {
                if i + j > 0 {
                    out.push((format!("{a}{b}"), self.values[i][j]));
                }
            }
        }
        out
    }
}

fn pauli(i: usize) -> nalgebra::Matrix2<C64> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    match i {
        0 => nalgebra::Matrix2::identity(),
        1 => nalgebra::Matrix2::new(zero, one, one, zero),
        2 => nalgebra::Matrix2::new(zero, -I, I, zero),
        _ => nalgebra::Matrix2::new(one, zero, zero, -one),
    }
}

/// Pauli table of a two-mode state projected onto `{|0>, |2>}^2`.
pub fn pauli_table_02(rho: &DensityMatrix) -> Result<PauliTable> {
    let q = two_qubit_02(rho)?;
    let mut values = [[0.0; 4]; 4];
    for (i, row) in values.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let op = pauli(i).kronecker(&pauli(j));
            *v = (q.matrix * op).trace().re.clamp(-1.0, 1.0);
        }
    }
    Ok(PauliTable {
        values,
        weight: q.weight,
    })
}

/// Two-mode state projected onto `{|0>, |2>}^2` and renormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitPair {
    pub matrix: nalgebra::Matrix4<C64>,
    pub weight: f64,
}

impl QubitPair {
    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_raw(
            CMatrix::from_fn(4, 4, |i, j| self.matrix[(i, j)]),
            ModeDims::new(vec![2, 2]).expect("static dims"),
        )
    }
}

pub fn two_qubit_02(rho: &DensityMatrix) -> Result<QubitPair> {
    let dims = rho.dims();
    if dims.modes() != 2 {
        return Err(Error::InvalidDimension(format!(
            "two-mode state expected, got {} modes",
            dims.modes()
        )));
    }
    for mode in 0..2 {
        if dims.levels_of(mode)? < 3 {
            return Err(Error::OutOfTruncation {
                mode,
                occupation: 2,
                levels: dims.levels_of(mode)?,
            });
        }
    }
    let idx = |q: usize| -> usize {
        let (a, b) = (q / 2, q % 2);
        dims.index_of(&[2 * a, 2 * b]).expect("checked above")
    };
    let m = rho.matrix();
    let mut q = nalgebra::Matrix4::from_fn(|i, j| m[(idx(i), idx(j))]);
    let weight = q.trace().re;
    if weight < MIN_SUBSPACE_WEIGHT {
        return Err(Error::DegenerateProjection { weight });
    }
    q /= C64::from(weight);
    Ok(QubitPair { matrix: q, weight })
}
