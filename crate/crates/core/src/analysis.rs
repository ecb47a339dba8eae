//! Recovery diagnostics for small dense instances.
//!
//! Everything here works on a materialized `L x kN` matrix `A` whose block
//! `T_j` is columns `j*k .. (j+1)*k`. The quantities are those of the block
//! sufficient condition: isometry defect `delta` on the support, cross
//! coherence `beta` against off-support blocks, and the exact dual
//! certificate `V = A_S (A_S* A_S)^{-1} sgn(X0)` with `Y = A* V`.
//!
//! The operator as built has `E[A* A] = I / N` (each column of `Phi` has
//! squared norm `1/N` on average), so on it `delta` sits just below 1 and
//! `delta < 1` only says that `A_S` is injective. [`normalized_dense`]
//! rescales by `sqrt(N)` so that `delta` measures distance from an isometry.
//! `theta` and the verdict's `rho` (with `eta = 0`) do not depend on the scale.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::liftops::{LiftedMatrix, LiftedOperator, DENSE_LIMIT};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incoherence {
    /// `sqrt(L) max |B_ij|`
    pub mu_b_sqrt_l: f64,
    /// `sqrt(N) max |B_ij|`, which equals 1 for columns of the unitary DFT.
    pub mu_b_sqrt_n: f64,
    /// `sqrt(N) max |Psi_ij|`
    pub mu_psi: f64,
}

pub fn incoherence_constants(b: &DMatrix<Complex64>, psi: &DMatrix<Complex64>, l: usize) -> Incoherence {
    let bmax = linalg::max_abs(b.as_slice());
    let n = b.nrows() as f64;
    Incoherence {
        mu_b_sqrt_l: (l as f64).sqrt() * bmax,
        mu_b_sqrt_n: n.sqrt() * bmax,
        mu_psi: (psi.nrows() as f64).sqrt() * linalg::max_abs(psi.as_slice()),
    }
}

/// `sqrt(N) A` for the operator, built from closed-form entries.
pub fn normalized_dense(op: &LiftedOperator) -> Result<DMatrix<Complex64>> {
    let a = op.materialize_dense()?;
    Ok(a * Complex64::new((op.grid_len() as f64).sqrt(), 0.0))
}

fn num_blocks(a: &DMatrix<Complex64>, k: usize) -> Result<usize> {
    if k == 0 || a.ncols() % k != 0 {
        return Err(Error::InvalidArgument(format!("{} columns do not split into blocks of {k}", a.ncols())));
    }
    if a.ncols() > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            columns: a.ncols(),
            limit: DENSE_LIMIT,
        });
    }
    Ok(a.ncols() / k)
}

fn check_support(support: &[usize], n: usize) -> Result<()> {
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("support must be sorted and distinct".into()));
    }
    if let Some(&j) = support.last() {
        if j >= n {
            return Err(Error::InvalidArgument(format!("support index {j} out of range for N = {n}")));
        }
    }
    Ok(())
}

/// `A_S`: the `L x k|S|` submatrix of support blocks, in support order.
fn support_columns(a: &DMatrix<Complex64>, k: usize, support: &[usize]) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(a.nrows(), k * support.len());
    for (pos, &j) in support.iter().enumerate() {
        out.columns_mut(pos * k, k).copy_from(&a.columns(j * k, k));
    }
    out
}

fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn defect_of(a_s: &DMatrix<Complex64>) -> f64 {
    if a_s.ncols() == 0 {
        return 0.0;
    }
    let mut g = a_s.adjoint() * a_s;
    for i in 0..g.nrows() {
        g[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    g.symmetric_eigen().eigenvalues.amax()
}

/// `||A_S* A_S - I||_2`, from a dense Hermitian eigensolve. Zero for an empty support.
pub fn isometry_defect(a: &DMatrix<Complex64>, k: usize, support: &[usize]) -> Result<f64> {
    let n = num_blocks(a, k)?;
    check_support(support, n)?;
    Ok(defect_of(&support_columns(a, k, support)))
}

fn cross_of(a: &DMatrix<Complex64>, a_s: &DMatrix<Complex64>, k: usize, n: usize, support: &[usize]) -> f64 {
    if a_s.ncols() == 0 {
        return 0.0;
    }
    let mut on = vec![false; n];
    support.iter().for_each(|&j| on[j] = true);
    let a_sh = a_s.adjoint();
    (0..n)
        .filter(|&j| !on[j])
        .map(|j| spectral_norm(&(&a_sh * a.columns(j * k, k))))
        .fold(0.0, f64::max)
}

/// `max_{j not in S} ||A_S* A_{T_j}||_2`. Zero when `S` is empty or covers every block.
pub fn block_cross_coherence(a: &DMatrix<Complex64>, k: usize, support: &[usize]) -> Result<f64> {
    let n = num_blocks(a, k)?;
    check_support(support, n)?;
    Ok(cross_of(a, &support_columns(a, k, support), k, n, support))
}

/// Cross-coherence bound `sqrt((1 + delta) / L) mu_psi` for a normalized `A`.
pub fn cross_coherence_bound(delta: f64, l: usize, mu_psi: f64) -> f64 {
    ((1.0 + delta) / l as f64).sqrt() * mu_psi
}

/// Certificate norm bound `sqrt(1 + delta) / (1 - delta) sqrt(n)`; infinite once `delta >= 1`.
pub fn certificate_norm_bound(delta: f64, n: usize) -> f64 {
    if delta >= 1.0 {
        return f64::INFINITY;
    }
    (1.0 + delta).sqrt() / (1.0 - delta) * (n as f64).sqrt()
}

/// Each block `T_j x [C]` scaled to unit Frobenius norm; zero blocks stay zero.
pub fn block_sign(x: &LiftedMatrix) -> LiftedMatrix {
    let (k, n) = (x.k(), x.num_blocks());
    let rows = k * n;
    let mut out = x.clone();
    let c = x.ncols();
    let data = out.matrix_mut().as_mut_slice();
    for j in 0..n {
        let nrm = x.block_norm(j);
        for col in 0..c {
            for v in &mut data[col * rows + j * k..col * rows + (j + 1) * k] {
                *v = if nrm == 0.0 { Complex64::new(0.0, 0.0) } else { *v / nrm };
            }
        }
    }
    out
}

/// Indices of the nonzero blocks of `x`.
pub fn block_support(x: &LiftedMatrix) -> Vec<usize> {
    (0..x.num_blocks()).filter(|&j| x.block_norm(j) > 0.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateReport {
    pub delta: f64,
    pub beta: f64,
    /// `||P_S Y - sgn(X0)||_F`; rounding-level for the exact certificate.
    pub eta: f64,
    pub theta: f64,
    pub tau_times_sqrt_s: f64,
    pub rho: f64,
    pub verdict: bool,
    pub support_size: usize,
    /// [`certificate_norm_bound`] at the measured `delta`.
    pub norm_bound: f64,
}

impl CertificateReport {
    fn new(delta: f64, beta: f64, eta: f64, theta: f64, tau_times_sqrt_s: f64, support_size: usize) -> Self {
        let rho = if delta < 1.0 { theta + eta * beta / (1.0 - delta) } else { f64::INFINITY };
        let mut r = CertificateReport {
            delta,
            beta,
            eta,
            theta,
            tau_times_sqrt_s,
            rho,
            verdict: false,
            support_size,
            norm_bound: certificate_norm_bound(delta, support_size),
        };
        r.verdict = recovery_verdict(&r);
        r
    }

    /// Whether `||V||_F` respects [`certificate_norm_bound`].
    pub fn norm_bound_holds(&self) -> bool {
        self.tau_times_sqrt_s <= self.norm_bound
    }
}

impl fmt::Display for CertificateReport {
    /// One `key=value` line per field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "support_size={}", self.support_size)?;
        writeln!(f, "delta={:e}", self.delta)?;
        writeln!(f, "beta={:e}", self.beta)?;
        writeln!(f, "eta={:e}", self.eta)?;
        writeln!(f, "theta={:e}", self.theta)?;
        writeln!(f, "tau_times_sqrt_s={:e}", self.tau_times_sqrt_s)?;
        writeln!(f, "rho={:e}", self.rho)?;
        writeln!(f, "norm_bound={:e}", self.norm_bound)?;
        writeln!(f, "norm_bound_holds={}", self.norm_bound_holds())?;
        writeln!(f, "verdict={}", self.verdict)
    }
}

/// True iff `delta < 1` and `rho = theta + eta beta / (1 - delta) < 1`.
pub fn recovery_verdict(r: &CertificateReport) -> bool {
    if !(r.delta < 1.0) {
        return false;
    }
    r.theta + r.eta * r.beta / (1.0 - r.delta) < 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `L x C`
    pub v: DMatrix<Complex64>,
    /// `A* V`, `kN x C`
    pub y: LiftedMatrix,
    pub report: CertificateReport,
}

/// Exact dual certificate for support `S` and sign pattern `sgn` (only its
/// blocks on `S` are used).
pub fn exact_dual_certificate(
    a: &DMatrix<Complex64>,
    k: usize,
    support: &[usize],
    sgn: &LiftedMatrix,
) -> Result<Certificate> {
    let n = num_blocks(a, k)?;
    check_support(support, n)?;
    if sgn.k() != k || sgn.num_blocks() != n {
        return Err(Error::shape(
            "exact_dual_certificate (sgn)",
            format!("k={k}, N={n}"),
            format!("k={}, N={}", sgn.k(), sgn.num_blocks()),
        ));
    }
    if k * support.len() > a.nrows() {
        return Err(Error::InvalidArgument(format!(
            "support of {} blocks needs {} columns but A has only {} rows",
            support.len(),
            k * support.len(),
            a.nrows()
        )));
    }
    let c = sgn.ncols();
    let a_s = support_columns(a, k, support);
    let mut sgn_s = DMatrix::zeros(k * support.len(), c);
    for (pos, &j) in support.iter().enumerate() {
        sgn_s.rows_mut(pos * k, k).copy_from(&sgn.matrix().rows(j * k, k));
    }

    let gram = a_s.adjoint() * &a_s;
    let w = if support.is_empty() {
        sgn_s.clone()
    } else {
        let ch = gram
            .cholesky()
            .ok_or_else(|| Error::Singular("A_S* A_S is not positive definite".into()))?;
        ch.solve(&sgn_s)
    };
    let v = &a_s * w;
    let y = LiftedMatrix::from_matrix(k, n, a.adjoint() * &v)?;

    let mut on = vec![false; n];
    support.iter().for_each(|&j| on[j] = true);
    let mut eta2 = 0.0;
    for (pos, &j) in support.iter().enumerate() {
        for col in 0..c {
            for l in 0..k {
                eta2 += (y.matrix()[(j * k + l, col)] - sgn_s[(pos * k + l, col)]).norm_sqr();
            }
        }
    }
    let theta = (0..n).filter(|&j| !on[j]).map(|j| y.block_norm(j)).fold(0.0, f64::max);
    let delta = defect_of(&a_s);
    let beta = cross_of(a, &a_s, k, n, support);
    let report = CertificateReport::new(delta, beta, eta2.sqrt(), theta, v.norm(), support.len());
    Ok(Certificate { v, y, report })
}
