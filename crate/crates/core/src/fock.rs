//! Truncated multi-mode Fock space.
//!
//! Modes are ordered `(S1, S2, S3)` and flattened row-major with the last
//! mode fastest, so `|n1 n2 n3>` sits at `(n1 * N2 + n2) * N3 + n3`.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance on Hermiticity and unit trace for validated states.
pub const STATE_TOL: f64 = 1e-9;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Per-mode truncation sizes (number of Fock levels).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ModeDims(Vec<usize>);

impl ModeDims {
    pub fn new(levels: impl Into<Vec<usize>>) -> Result<Self> {
        let levels = levels.into();
        if levels.is_empty() {
            return Err(Error::InvalidDimension(
                "at least one mode is required".into(),
            ));
        }
        if let Some((mode, &n)) = levels.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(Error::InvalidDimension(format!(
                "mode {mode} has {n} levels; at least 2 are required"
            )));
        }
        Ok(ModeDims(levels))
    }

    pub fn single(levels: usize) -> Result<Self> {
        Self::new(vec![levels])
    }

    /// The default three-mode truncation `(6, 5, 6)`.
    pub fn three_mode_default() -> Self {
        ModeDims(vec![6, 5, 6])
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn levels_of(&self, mode: usize) -> Result<usize> {
        self.0.get(mode).copied().ok_or(Error::ModeOutOfRange {
            mode,
            modes: self.modes(),
        })
    }

    /// Distance in the flattened index between neighbouring levels of `mode`.
    pub fn stride(&self, mode: usize) -> usize {
        self.0[mode + 1..].iter().product()
    }

    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes() {
            return Err(Error::DimensionMismatch {
                expected: self.modes(),
                found: occupations.len(),
            });
        }
        let mut index = 0;
        for (mode, (&occ, &levels)) in occupations.iter().zip(&self.0).enumerate() {
            if occ >= levels {
                return Err(Error::OutOfTruncation {
                    mode,
                    occupation: occ,
                    levels,
                });
            }
            index = index * levels + occ;
        }
        Ok(index)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes()];
        for (slot, &levels) in occ.iter_mut().zip(&self.0).rev() {
            *slot = index % levels;
            index /= levels;
        }
        occ
    }

    /// Occupation of a single mode for a flattened basis index.
    pub fn occupation_of(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % self.0[mode]
    }

    /// Same modes with `extra` more levels each.
    pub fn extended(&self, extra: usize) -> ModeDims {
        ModeDims(self.0.iter().map(|n| n + extra).collect())
    }

    /// Dims of the subsystem made of `modes`, in the given order.
    pub fn select(&self, modes: &[usize]) -> Result<ModeDims> {
        let levels = modes
            .iter()
            .map(|&m| self.levels_of(m))
            .collect::<Result<Vec<_>>>()?;
        ModeDims::new(levels)
    }

    pub(crate) fn check_same(&self, other: &ModeDims) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: self.total(),
                found: other.total(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for ModeDims {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        ModeDims::new(v)
    }
}

impl From<ModeDims> for Vec<usize> {
    fn from(d: ModeDims) -> Vec<usize> {
        d.0
    }
}

impl fmt::Display for ModeDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Complex square matrix acting on a [`ModeDims`] basis.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    elems: CMatrix,
    dims: ModeDims,
}

impl OperatorMatrix {
    pub fn new(elems: CMatrix, dims: ModeDims) -> Result<Self> {
        let n = dims.total();
        if elems.nrows() != n || elems.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: elems.nrows().max(elems.ncols()),
            });
        }
        Ok(OperatorMatrix { elems, dims })
    }

    pub(crate) fn from_raw(elems: CMatrix, dims: ModeDims) -> Self {
        debug_assert_eq!(elems.nrows(), dims.total());
        OperatorMatrix { elems, dims }
    }

    pub fn identity(dims: &ModeDims) -> Self {
        let n = dims.total();
        OperatorMatrix::from_raw(CMatrix::identity(n, n), dims.clone())
    }

    pub fn zeros(dims: &ModeDims) -> Self {
        let n = dims.total();
        OperatorMatrix::from_raw(CMatrix::zeros(n, n), dims.clone())
    }

    /// Diagonal operator with entries given per basis index.
    pub fn diagonal(dims: &ModeDims, f: impl Fn(&[usize]) -> f64) -> Self {
        let n = dims.total();
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::from(f(&dims.occupations(i)));
        }
        OperatorMatrix::from_raw(m, dims.clone())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elems
    }

    pub fn into_matrix(self) -> CMatrix {
        self.elems
    }

    pub fn dims(&self) -> &ModeDims {
        &self.dims
    }

    pub fn dagger(&self) -> Self {
        OperatorMatrix::from_raw(self.elems.adjoint(), self.dims.clone())
    }

    /// Largest entry of `|A - A^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.elems, &self.elems.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn scaled(&self, c: impl Into<C64>) -> Self {
        OperatorMatrix::from_raw(&self.elems * c.into(), self.dims.clone())
    }

    pub fn commutator(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.dims.check_same(&other.dims)?;
        Ok(OperatorMatrix::from_raw(
            &self.elems * &other.elems - &other.elems * &self.elems,
            self.dims.clone(),
        ))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.elems.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Matrix element `<row| A |col>` addressed by occupations.
    pub fn element(&self, row: &[usize], col: &[usize]) -> Result<C64> {
        Ok(self.elems[(self.dims.index_of(row)?, self.dims.index_of(col)?)])
    }

    pub fn apply(&self, psi: &StateVector) -> Result<CVector> {
        self.dims.check_same(&psi.dims)?;
        Ok(&self.elems * &psi.amps)
    }

    /// `A^2 == A` and Hermitian.
    pub fn is_projector(&self, tol: f64) -> bool {
        if let Some(mask) = self.diagonal_mask(tol) {
            return mask.len() == self.elems.nrows();
        }
        self.is_hermitian(tol) && max_abs_diff(&(&self.elems * &self.elems), &self.elems) <= tol
    }

    /// For a diagonal operator with entries in {0, 1}, which entries are 1.
    pub(crate) fn diagonal_mask(&self, tol: f64) -> Option<Vec<bool>> {
        let n = self.elems.nrows();
        let mut mask = Vec::with_capacity(n);
        for j in 0..n {
            for i in 0..n {
                let v = self.elems[(i, j)];
                if i == j {
                    if (v - C64::new(1.0, 0.0)).norm() <= tol {
                        mask.push(true);
                    } else if v.norm() <= tol {
                        mask.push(false);
                    } else {
                        return None;
                    }
                } else if v.norm() > tol {
                    return None;
                }
            }
        }
        Some(mask)
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        OperatorMatrix::from_raw(&self.elems + &rhs.elems, self.dims.clone())
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        OperatorMatrix::from_raw(&self.elems - &rhs.elems, self.dims.clone())
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        OperatorMatrix::from_raw(&self.elems * &rhs.elems, self.dims.clone())
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: CVector,
    dims: ModeDims,
}

impl StateVector {
    /// Accepts amplitudes that are already normalized to within 1e-9.
    pub fn new(amps: CVector, dims: ModeDims) -> Result<Self> {
        if amps.len() != dims.total() {
            return Err(Error::DimensionMismatch {
                expected: dims.total(),
                found: amps.len(),
            });
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "state norm {norm} differs from 1"
            )));
        }
        Ok(StateVector { amps, dims })
    }

    /// Normalizes `amps`; fails on a zero vector.
    pub fn normalized(amps: CVector, dims: ModeDims) -> Result<Self> {
        if amps.len() != dims.total() {
            return Err(Error::DimensionMismatch {
                expected: dims.total(),
                found: amps.len(),
            });
        }
        let norm = amps.norm();
        if norm < 1e-300 {
            return Err(Error::ImpossibleOutcome("zero-norm state".into()));
        }
        Ok(StateVector {
            amps: amps / C64::from(norm),
            dims,
        })
    }

    pub(crate) fn from_raw(amps: CVector, dims: ModeDims) -> Self {
        StateVector { amps, dims }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn amplitude(&self, occupations: &[usize]) -> Result<C64> {
        Ok(self.amps[self.dims.index_of(occupations)?])
    }

    pub fn dims(&self) -> &ModeDims {
        &self.dims
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.dims.check_same(&other.dims)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn expect(&self, op: &OperatorMatrix) -> Result<C64> {
        self.dims.check_same(&op.dims)?;
        Ok(self.amps.dotc(&(&op.elems * &self.amps)))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    /// Probability distribution over the Fock levels of one mode.
    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        let levels = self.dims.levels_of(mode)?;
        let mut pops = vec![0.0; levels];
        for (i, a) in self.amps.iter().enumerate() {
            pops[self.dims.occupation_of(i, mode)] += a.norm_sqr();
        }
        Ok(pops)
    }

    /// Mean photon number of every mode.
    pub fn mean_occupations(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dims.modes()];
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (m, slot) in means.iter_mut().enumerate() {
                *slot += p * self.dims.occupation_of(i, m) as f64;
            }
        }
        means
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut levels = self.dims.levels().to_vec();
        levels.extend_from_slice(other.dims.levels());
        let amps = self.amps.kronecker(&other.amps);
        StateVector::from_raw(amps, ModeDims(levels))
    }
}

/// Validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    elems: CMatrix,
    dims: ModeDims,
}

impl DensityMatrix {
    /// Checks size, Hermiticity and unit trace (within 1e-9). Positivity is
    /// checked separately by [`DensityMatrix::min_eigenvalue`].
    pub fn new(elems: CMatrix, dims: ModeDims) -> Result<Self> {
        let n = dims.total();
        if elems.nrows() != n || elems.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: elems.nrows().max(elems.ncols()),
            });
        }
        let rho = DensityMatrix { elems, dims };
        let herm = rho.hermiticity_error();
        if herm > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix is not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        Ok(rho)
    }

    pub(crate) fn from_raw(elems: CMatrix, dims: ModeDims) -> Self {
        DensityMatrix { elems, dims }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let m = &psi.amps * psi.amps.adjoint();
        DensityMatrix::from_raw(m, psi.dims.clone())
    }

    pub fn maximally_mixed(dims: &ModeDims) -> Self {
        let n = dims.total();
        DensityMatrix::from_raw(CMatrix::identity(n, n) / C64::from(n as f64), dims.clone())
    }

    /// Weighted sum of density matrices; weights must sum to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?
            .1;
        let n = first.dims.total();
        let mut m = CMatrix::zeros(n, n);
        for (w, rho) in parts {
            first.dims.check_same(&rho.dims)?;
            m += &rho.elems * C64::from(*w);
        }
        DensityMatrix::new(m, first.dims.clone())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elems
    }

    pub fn dims(&self) -> &ModeDims {
        &self.dims
    }

    pub fn trace(&self) -> f64 {
        self.elems.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.elems, &self.elems.adjoint())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.elems)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// `<psi| rho |psi>`.
    pub fn expect_state(&self, psi: &StateVector) -> f64 {
        let v = psi.amplitudes();
        (v.adjoint() * &self.elems * v)[(0, 0)].re
    }

    pub fn purity(&self) -> f64 {
        (&self.elems * &self.elems).trace().re
    }

    pub fn expect(&self, op: &OperatorMatrix) -> Result<C64> {
        self.dims.check_same(&op.dims)?;
        // Tr(rho A) = sum_ij rho_ij A_ji
        let mut acc = C64::new(0.0, 0.0);
        let n = self.dims.total();
        for j in 0..n {
            for i in 0..n {
                acc += self.elems[(i, j)] * op.elems[(j, i)];
            }
        }
        Ok(acc)
    }

    /// Populations of the flattened basis.
    pub fn diagonal(&self) -> Vec<f64> {
        self.elems.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        let levels = self.dims.levels_of(mode)?;
        let mut pops = vec![0.0; levels];
        for i in 0..self.dims.total() {
            pops[self.dims.occupation_of(i, mode)] += self.elems[(i, i)].re;
        }
        Ok(pops)
    }

    pub fn mean_occupations(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dims.modes()];
        for i in 0..self.dims.total() {
            let p = self.elems[(i, i)].re;
            for (m, slot) in means.iter_mut().enumerate() {
                *slot += p * self.dims.occupation_of(i, m) as f64;
            }
        }
        means
    }

    /// Reduced state on `keep` (in that order), tracing out every other mode.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let kept = self.dims.select(keep)?;
        let traced: Vec<usize> = (0..self.dims.modes())
            .filter(|m| !keep.contains(m))
            .collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&m| self.dims.0[m]).collect();
        let n_traced: usize = traced_dims.iter().product();
        let nk = kept.total();
        let mut out = CMatrix::zeros(nk, nk);

        // full index = sum over kept and traced parts of occupation * stride
        let strides: Vec<usize> = (0..self.dims.modes())
            .map(|m| self.dims.stride(m))
            .collect();
        let kept_offsets: Vec<usize> = (0..nk)
            .map(|k| {
                kept.occupations(k)
                    .iter()
                    .zip(keep)
                    .map(|(&o, &m)| o * strides[m])
                    .sum()
            })
            .collect();
        let traced_offsets: Vec<usize> = (0..n_traced)
            .map(|t| {
                let mut rem = t;
                let mut off = 0;
                for (idx, &levels) in traced_dims.iter().enumerate().rev() {
                    off += (rem % levels) * strides[traced[idx]];
                    rem /= levels;
                }
                off
            })
            .collect();
        for a in 0..nk {
            for b in 0..nk {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &traced_offsets {
                    acc += self.elems[(kept_offsets[a] + t, kept_offsets[b] + t)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(DensityMatrix::from_raw(out, kept))
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut levels = self.dims.levels().to_vec();
        levels.extend_from_slice(other.dims.levels());
        DensityMatrix::from_raw(self.elems.kronecker(&other.elems), ModeDims(levels))
    }

    /// `U rho U^dagger` for a unitary on the same basis.
    pub fn transformed(&self, u: &CMatrix) -> DensityMatrix {
        DensityMatrix::from_raw(u * &self.elems * u.adjoint(), self.dims.clone())
    }
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a Hermitian matrix (the lower triangle is used).
pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

/// Single-mode lowering operator on `n_levels` Fock states.
pub fn annihilation_op(n_levels: usize) -> Result<OperatorMatrix> {
    let dims = ModeDims::single(n_levels)?;
    let mut m = CMatrix::zeros(n_levels, n_levels);
    for n in 1..n_levels {
        m[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    Ok(OperatorMatrix::from_raw(m, dims))
}

pub fn creation_op(n_levels: usize) -> Result<OperatorMatrix> {
    Ok(annihilation_op(n_levels)?.dagger())
}

pub fn number_op(n_levels: usize) -> Result<OperatorMatrix> {
    let dims = ModeDims::single(n_levels)?;
    Ok(OperatorMatrix::diagonal(&dims, |o| o[0] as f64))
}

/// Photon-number parity `(-1)^n`.
pub fn parity_op(n_levels: usize) -> Result<OperatorMatrix> {
    let dims = ModeDims::single(n_levels)?;
    Ok(OperatorMatrix::diagonal(&dims, |o| {
        if o[0] % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// Embeds a single-mode operator on `mode`, identity elsewhere.
pub fn embed_op(op: &OperatorMatrix, mode: usize, dims: &ModeDims) -> Result<OperatorMatrix> {
    let levels = dims.levels_of(mode)?;
    if op.dims.modes() != 1 || op.dims.total() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            found: op.dims.total(),
        });
    }
    let n = dims.total();
    let stride = dims.stride(mode);
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        let occ = dims.occupation_of(i, mode);
        let base = i - occ * stride;
        for k in 0..levels {
            let v = op.elems[(occ, k)];
            if v != C64::new(0.0, 0.0) {
                m[(i, base + k * stride)] = v;
            }
        }
    }
    Ok(OperatorMatrix::from_raw(m, dims.clone()))
}

/// Lowering operator of `mode` in the full space.
pub fn mode_annihilation(dims: &ModeDims, mode: usize) -> Result<OperatorMatrix> {
    embed_op(&annihilation_op(dims.levels_of(mode)?)?, mode, dims)
}

pub fn mode_number(dims: &ModeDims, mode: usize) -> Result<OperatorMatrix> {
    dims.levels_of(mode)?;
    Ok(OperatorMatrix::diagonal(dims, |o| o[mode] as f64))
}

/// Projector onto Fock level `n` of `mode`.
pub fn level_projector(dims: &ModeDims, mode: usize, n: usize) -> Result<OperatorMatrix> {
    let levels = dims.levels_of(mode)?;
    if n >= levels {
        return Err(Error::OutOfTruncation {
            mode,
            occupation: n,
            levels,
        });
    }
    Ok(OperatorMatrix::diagonal(dims, |o| {
        (o[mode] == n) as u8 as f64
    }))
}

/// Projector onto even (`even = true`) or odd photon number of `mode`.
pub fn parity_projector(dims: &ModeDims, mode: usize, even: bool) -> Result<OperatorMatrix> {
    dims.levels_of(mode)?;
    Ok(OperatorMatrix::diagonal(dims, |o| {
        ((o[mode] % 2 == 0) == even) as u8 as f64
    }))
}

/// Tensor-product Fock state `|n1 n2 ...>`.
pub fn fock_state(dims: &ModeDims, occupations: &[usize]) -> Result<StateVector> {
    let idx = dims.index_of(occupations)?;
    let mut amps = CVector::zeros(dims.total());
    amps[idx] = C64::new(1.0, 0.0);
    Ok(StateVector::from_raw(amps, dims.clone()))
}

/// Binomial-code logical and single-loss error states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeLabel {
    #[serde(rename = "0L")]
    ZeroL,
    #[serde(rename = "1L")]
    OneL,
    #[serde(rename = "+iL")]
    PlusIL,
    #[serde(rename = "0E")]
    ZeroE,
    #[serde(rename = "+iE")]
    PlusIE,
}

impl CodeLabel {
    pub const ALL: [CodeLabel; 5] = [
        CodeLabel::ZeroL,
        CodeLabel::OneL,
        CodeLabel::PlusIL,
        CodeLabel::ZeroE,
        CodeLabel::PlusIE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CodeLabel::ZeroL => "0L",
            CodeLabel::OneL => "1L",
            CodeLabel::PlusIL => "+iL",
            CodeLabel::ZeroE => "0E",
            CodeLabel::PlusIE => "+iE",
        }
    }

    /// State reached from this logical state after one photon loss, when it
    /// has a named error-space counterpart.
    pub fn error_partner(self) -> Option<CodeLabel> {
        match self {
            CodeLabel::ZeroL => Some(CodeLabel::ZeroE),
            CodeLabel::PlusIL => Some(CodeLabel::PlusIE),
            _ => None,
        }
    }

    pub fn is_logical(self) -> bool {
        matches!(self, CodeLabel::ZeroL | CodeLabel::OneL | CodeLabel::PlusIL)
    }

    /// Amplitudes over Fock levels 0..=4.
    fn amplitudes(self) -> [C64; 5] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            CodeLabel::ZeroL => [r(h), z, z, z, r(h)],
            CodeLabel::OneL => [z, z, r(1.0), z, z],
            // (|0_L> + i|1_L>)/sqrt2
            CodeLabel::PlusIL => [r(0.5), z, I * h, z, r(0.5)],
            CodeLabel::ZeroE => [z, z, z, r(1.0), z],
            CodeLabel::PlusIE => [z, r(h), z, I * h, z],
        }
    }
}

impl fmt::Display for CodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CodeLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown code label {s:?}")))
    }
}

/// Single-mode binomial-code state on `n_levels >= 5` levels.
pub fn binomial_code_state(label: CodeLabel, n_levels: usize) -> Result<StateVector> {
    if n_levels < 5 {
        return Err(Error::InvalidDimension(format!(
            "binomial code needs at least 5 levels, got {n_levels}"
        )));
    }
    let mut amps = CVector::zeros(n_levels);
    for (n, a) in label.amplitudes().into_iter().enumerate() {
        amps[n] = a;
    }
    StateVector::normalized(amps, ModeDims::single(n_levels)?)
}

/// Embeds a single-mode state in `mode` with every other mode in vacuum.
pub fn embed_state(single: &StateVector, mode: usize, dims: &ModeDims) -> Result<StateVector> {
    let levels = dims.levels_of(mode)?;
    if single.dims.modes() != 1 || single.dims.total() > levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            found: single.dims.total(),
        });
    }
    let mut amps = CVector::zeros(dims.total());
    let stride = dims.stride(mode);
    for (n, a) in single.amps.iter().enumerate() {
        amps[n * stride] = *a;
    }
    Ok(StateVector::from_raw(amps, dims.clone()))
}

/// Embeds a single-mode density matrix in `mode` with every other mode in vacuum.
pub fn embed_density(
    single: &DensityMatrix,
    mode: usize,
    dims: &ModeDims,
) -> Result<DensityMatrix> {
    let levels = dims.levels_of(mode)?;
    if single.dims.modes() != 1 || single.dims.total() > levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            found: single.dims.total(),
        });
    }
    let n = dims.total();
    let stride = dims.stride(mode);
    let mut m = CMatrix::zeros(n, n);
    let k = single.dims.total();
    for a in 0..k {
        for b in 0..k {
            m[(a * stride, b * stride)] = single.elems[(a, b)];
        }
    }
    Ok(DensityMatrix::from_raw(m, dims.clone()))
}
