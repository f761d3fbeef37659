//! Master-equation integration with an adaptive Dormand-Prince 5(4) scheme.
//!
//! The operators are dense on the outside, but the Hamiltonians and jump
//! operators here have only a handful of nonzeros per row, so the
//! right-hand side works on row lists of nonzeros.

use crate::error::{Error, Result};
use crate::fock::{CMatrix, DensityMatrix, OperatorMatrix, C64, I};

use super::EvolutionSpec;

const MAX_STEPS: usize = 5_000_000;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Open-system evolution for a fixed Hamiltonian and set of jump operators.
pub struct LindbladSolver {
    liouv: Liouvillian,
    dims: crate::fock::ModeDims,
}

impl LindbladSolver {
    pub fn new(h: &OperatorMatrix, collapse_ops: &[OperatorMatrix]) -> Result<Self> {
        let err = h.hermiticity_error();
        if err > 1e-10 {
            return Err(Error::InvalidOperator(format!(
                "Hamiltonian is not Hermitian (deviation {err:.3e})"
            )));
        }
        for l in collapse_ops {
            h.dims().check_same(l.dims())?;
        }
        Ok(LindbladSolver {
            liouv: Liouvillian::new(h, collapse_ops),
            dims: h.dims().clone(),
        })
    }

    /// States at the sample times of `spec` (or at `total_time` only).
    pub fn evolve(&self, rho: &DensityMatrix, spec: &EvolutionSpec) -> Result<Vec<DensityMatrix>> {
        self.dims.check_same(rho.dims())?;
        let mut spec = spec.clone();
        spec.method = super::Method::Lindblad;
        spec.validate()?;
        integrate(&self.liouv, rho, &spec.times(), spec.rtol)
    }
}

/// Row-wise nonzeros of a square matrix.
#[derive(Clone, Debug)]
pub(crate) struct SparseOp {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseOp {
    pub(crate) fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|k| {
                        let v = m[(i, k)];
                        (v != C64::new(0.0, 0.0)).then_some((k, v))
                    })
                    .collect()
            })
            .collect();
        SparseOp { n, rows }
    }

    fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `out = scale * self * x` for a column-major square `x`.
    fn mul_into(&self, x: &[C64], scale: C64, out: &mut [C64]) {
        let n = self.n;
        for j in 0..n {
            let col = &x[j * n..(j + 1) * n];
            let dst = &mut out[j * n..(j + 1) * n];
            for (i, row) in self.rows.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &(k, v) in row {
                    acc += v * col[k];
                }
                dst[i] = scale * acc;
            }
        }
    }
}

/// `d rho/dt = -i [H, rho] + sum_k (L rho L^dag - {L^dag L, rho}/2)`.
pub(crate) struct Liouvillian {
    n: usize,
    /// `H - (i/2) sum L^dag L`
    h_eff: SparseOp,
    jumps: Vec<SparseOp>,
}

impl Liouvillian {
    pub(crate) fn new(h: &OperatorMatrix, collapse: &[OperatorMatrix]) -> Self {
        let mut h_eff = h.matrix().clone();
        for l in collapse {
            let ll = l.matrix().adjoint() * l.matrix();
            h_eff -= ll * (I * 0.5);
        }
        Liouvillian {
            n: h.dims().total(),
            h_eff: SparseOp::from_dense(&h_eff),
            jumps: collapse
                .iter()
                .map(|l| SparseOp::from_dense(l.matrix()))
                .collect(),
        }
    }

    fn rate_scale(&self) -> f64 {
        self.h_eff.max_row_sum().max(1e-12)
    }

    /// Writes the derivative of Hermitian `rho` into `out`.
    fn apply(&self, rho: &[C64], out: &mut [C64], work: &mut Scratch) {
        let Scratch(work, tmp) = work;
        let n = self.n;
        // B = -i H_eff rho, drho = B + B^dag
        self.h_eff.mul_into(rho, -I, work);
        for j in 0..n {
            for i in 0..n {
                out[i + j * n] = work[i + j * n] + work[j + i * n].conj();
            }
        }
        for l in &self.jumps {
            // L rho L^dag = L (L rho)^dag
            l.mul_into(rho, C64::new(1.0, 0.0), tmp);
            adjoint_in_place(tmp, n);
            l.mul_into(tmp, C64::new(1.0, 0.0), work);
            for (o, w) in out.iter_mut().zip(work.iter()) {
                *o += w;
            }
        }
    }
}

struct Scratch(Vec<C64>, Vec<C64>);

fn adjoint_in_place(m: &mut [C64], n: usize) {
    for j in 0..n {
        m[j + j * n] = m[j + j * n].conj();
        for i in (j + 1)..n {
            let a = m[i + j * n];
            m[i + j * n] = m[j + i * n].conj();
            m[j + i * n] = a.conj();
        }
    }
}

// Dormand-Prince tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(y: &[C64], h: f64, terms: &[(f64, &[C64])], out: &mut [C64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

/// Integrates from `rho0` at time 0 and returns the state at each of the
/// sorted `times`.
pub(crate) fn integrate(
    liouv: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    rtol: f64,
) -> Result<Vec<DensityMatrix>> {
    let n = liouv.n;
    let len = n * n;
    let atol = rtol;
    let zero = vec![C64::new(0.0, 0.0); len];
    let mut y: Vec<C64> = rho0.matrix().as_slice().to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (zero.clone(), zero.clone(), zero.clone(), zero.clone());
    let (mut k5, mut k6, mut k7) = (zero.clone(), zero.clone(), zero.clone());
    let mut stage = zero.clone();
    let mut y_new = zero.clone();
    let mut work = Scratch(zero.clone(), zero);

    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut h = 0.01 / liouv.rate_scale();
    let mut steps = 0usize;
    liouv.apply(&y, &mut k1, &mut work);

    for &target in times {
        while target - t > 1e-12 * target.max(1.0) {
            let last = h >= target - t;
            let hs = if last { target - t } else { h };
            combine(&y, hs, &[(A21, &k1)], &mut stage);
            liouv.apply(&stage, &mut k2, &mut work);
            combine(&y, hs, &[(A31, &k1), (A32, &k2)], &mut stage);
            liouv.apply(&stage, &mut k3, &mut work);
            combine(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut stage);
            liouv.apply(&stage, &mut k4, &mut work);
            combine(
                &y,
                hs,
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
                &mut stage,
            );
            liouv.apply(&stage, &mut k5, &mut work);
            combine(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                &mut stage,
            );
            liouv.apply(&stage, &mut k6, &mut work);
            combine(
                &y,
                hs,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
                &mut y_new,
            );
            liouv.apply(&y_new, &mut k7, &mut work);

            let mut acc = 0.0;
            for i in 0..len {
                let e =
                    (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                        * hs;
                let scale = atol + rtol * y[i].norm().max(y_new[i].norm());
                acc = f64::max(acc, e.norm() / scale);
            }
            let err = acc;
            if !err.is_finite() {
                return Err(Error::NonConvergence(format!(
                    "master-equation step produced non-finite values at t = {t:.6} us"
                )));
            }
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::NonConvergence(format!(
                    "master-equation integrator exceeded {MAX_STEPS} steps at t = {t:.6} us"
                )));
            }
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                // a step shortened to land on a sample says nothing about h
                if !last || factor < 1.0 {
                    h = hs * factor;
                }
            } else {
                h = hs * factor.min(1.0);
            }
            if h < 1e-14 * target.max(1.0) {
                return Err(Error::NonConvergence(format!(
                    "master-equation step size underflow at t = {t:.6} us"
                )));
            }
        }
        out.push(DensityMatrix::from_raw(
            CMatrix::from_column_slice(n, n, &y),
            rho0.dims().clone(),
        ));
    }
    Ok(out)
}
