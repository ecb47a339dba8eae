//! The lifted measurement operator `A = F_Omega Phi` acting on `kN x C`
//! matrices, its adjoint, and dense materialization for small instances.
//!
//! Column `c` of a lifted matrix holds `vec(h_c z^T)` in column-major order,
//! so entry `j*k + l` is `h_c[l] z[j]` and rows `j*k .. (j+1)*k` form block `T_j`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::transforms::{GridShape, PartialFourier, Sparsifier, TransformScratch};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest `kN` accepted by the dense materializations.
pub const DENSE_LIMIT: usize = 4096;

/// Tolerance on `B*B = I_k` accepted by [`SubspaceBasis::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// An `N x k` matrix with orthonormal columns spanning the sensitivity subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    b: DMatrix<Complex64>,
}

impl SubspaceBasis {
    pub fn new(b: DMatrix<Complex64>) -> Result<Self> {
        let (n, k) = b.shape();
        if k == 0 {
            return Err(Error::InvalidArgument("subspace dimension k must be at least 1".into()));
        }
        if k >= n && !(n == 1 && k == 1) {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension k = {k} must be smaller than N = {n}"
            )));
        }
        let gram = b.adjoint() * &b;
        let defect = linalg::max_abs((gram - DMatrix::<Complex64>::identity(k, k)).as_slice());
        if !defect.is_finite() || defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "basis columns are not orthonormal (max |B*B - I| = {defect:.3e})"
            )));
        }
        Ok(SubspaceBasis { b })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.b
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn grid_len(&self) -> usize {
        self.b.nrows()
    }

    /// Column `l` of `B` as a contiguous slice.
    pub fn column(&self, l: usize) -> &[Complex64] {
        let n = self.b.nrows();
        &self.b.as_slice()[l * n..(l + 1) * n]
    }

    /// Sensitivity profile `s = B h`.
    pub fn sensitivity(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        if h.len() != self.k() {
            return Err(Error::shape("SubspaceBasis::sensitivity", self.k(), h.len()));
        }
        let mut s = vec![ZERO; self.grid_len()];
        for (l, &hl) in h.iter().enumerate() {
            for (o, &b) in s.iter_mut().zip(self.column(l)) {
                *o += b * hl;
            }
        }
        Ok(s)
    }
}

/// A `kN x C` matrix partitioned into `N` row blocks of `k` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix {
    k: usize,
    n: usize,
    data: DMatrix<Complex64>,
}

impl LiftedMatrix {
    pub fn zeros(k: usize, n: usize, c: usize) -> Self {
        LiftedMatrix {
            k,
            n,
            data: DMatrix::zeros(k * n, c),
        }
    }

    pub fn from_matrix(k: usize, n: usize, data: DMatrix<Complex64>) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::InvalidArgument("k and N must be positive".into()));
        }
        if data.nrows() != k * n {
            return Err(Error::shape("LiftedMatrix::from_matrix", k * n, data.nrows()));
        }
        Ok(LiftedMatrix { k, n, data })
    }

    /// `X = z (x) H`: column `c` is `vec(h_c z^T)`.
    pub fn lift(z: &[Complex64], h: &DMatrix<Complex64>) -> Self {
        let (k, c) = h.shape();
        let n = z.len();
        let data = DMatrix::from_fn(k * n, c, |row, col| z[row / k] * h[(row % k, col)]);
        LiftedMatrix { k, n, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of blocks `N`.
    pub fn num_blocks(&self) -> usize {
        self.n
    }

    /// Number of columns `C`.
    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn column(&self, c: usize) -> &[Complex64] {
        let rows = self.k * self.n;
        &self.data.as_slice()[c * rows..(c + 1) * rows]
    }

    /// Column `c` reshaped column-major into a `k x N` matrix.
    pub fn reshape_column(&self, c: usize) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(self.k, self.n, self.column(c))
    }

    /// Frobenius norm of block `T_j` across all columns.
    pub fn block_norm(&self, j: usize) -> f64 {
        let rows = self.k * self.n;
        let s = self.data.as_slice();
        // Same summation order as the solver's prox, so both see the same norm.
        let mut acc = 0.0;
        for c in 0..self.ncols() {
            acc += linalg::norm_sqr(&s[c * rows + j * self.k..c * rows + (j + 1) * self.k]);
        }
        acc.sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::norm(self.data.as_slice())
    }

    /// `||self - other||_F / ||other||_F`.
    pub fn rel_err(&self, other: &LiftedMatrix) -> f64 {
        linalg::rel_err(self.data.as_slice(), other.data.as_slice())
    }
}

/// Per-thread work buffers for [`LiftedOperator`].
#[derive(Debug, Default, Clone)]
pub struct LiftScratch {
    transform: TransformScratch,
    grid: Vec<Complex64>,
}

impl LiftScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, n: usize) {
        if self.grid.len() != n {
            self.grid.resize(n, ZERO);
        }
    }
}

/// `A = F_Omega Phi : C^{kN x C} -> C^{L x C}`, applied implicitly.
#[derive(Debug, Clone)]
pub struct LiftedOperator {
    basis: SubspaceBasis,
    psi: Sparsifier,
    fourier: PartialFourier,
}

impl LiftedOperator {
    pub fn new(basis: SubspaceBasis, psi: Sparsifier, fourier: PartialFourier) -> Result<Self> {
        let n = psi.shape().len();
        if fourier.shape() != psi.shape() {
            return Err(Error::shape("LiftedOperator::new", psi.shape(), fourier.shape()));
        }
        if basis.grid_len() != n {
            return Err(Error::shape("LiftedOperator::new", n, basis.grid_len()));
        }
        Ok(LiftedOperator { basis, psi, fourier })
    }

    pub fn basis(&self) -> &SubspaceBasis {
        &self.basis
    }

    pub fn sparsifier(&self) -> &Sparsifier {
        &self.psi
    }

    pub fn fourier(&self) -> &PartialFourier {
        &self.fourier
    }

    pub fn shape(&self) -> GridShape {
        self.psi.shape()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn grid_len(&self) -> usize {
        self.psi.shape().len()
    }

    pub fn num_samples(&self) -> usize {
        self.fourier.num_samples()
    }

    /// Length of a lifted column, `kN`.
    pub fn lifted_len(&self) -> usize {
        self.k() * self.grid_len()
    }

    /// `out = Phi xcol`, computed as `sum_l B(:,l) . (Psi* m_l)` where `m_l`
    /// gathers entry `l` of every block.
    pub fn phi_apply_into(&self, xcol: &[Complex64], out: &mut [Complex64], scratch: &mut LiftScratch) {
        let (k, n) = (self.k(), self.grid_len());
        debug_assert_eq!(xcol.len(), k * n);
        debug_assert_eq!(out.len(), n);
        out.fill(ZERO);
        for l in 0..k {
            let b = self.basis.column(l);
            self.psi
                .inverse_map(|j| xcol[j * k + l], |m, v| out[m] += b[m] * v, &mut scratch.transform);
        }
    }

    pub fn phi_apply(&self, xcol: &[Complex64]) -> Result<Vec<Complex64>> {
        if xcol.len() != self.lifted_len() {
            return Err(Error::shape("phi_apply", self.lifted_len(), xcol.len()));
        }
        let mut out = vec![ZERO; self.grid_len()];
        self.phi_apply_into(xcol, &mut out, &mut LiftScratch::new());
        Ok(out)
    }

    /// `out = A xcol` for one lifted column.
    pub fn forward_column(&self, xcol: &[Complex64], out: &mut [Complex64], scratch: &mut LiftScratch) {
        scratch.ensure(self.grid_len());
        let mut grid = std::mem::take(&mut scratch.grid);
        self.phi_apply_into(xcol, &mut grid, scratch);
        self.fourier.apply_in_place(&mut grid, out, &mut scratch.transform);
        scratch.grid = grid;
    }

    /// `out = A* ycol` for one measurement column.
    pub fn adjoint_column(&self, ycol: &[Complex64], out: &mut [Complex64], scratch: &mut LiftScratch) {
        let (k, n) = (self.k(), self.grid_len());
        debug_assert_eq!(out.len(), k * n);
        scratch.ensure(n);
        self.fourier.adjoint_into(ycol, &mut scratch.grid, &mut scratch.transform);
        let u = &scratch.grid;
        for l in 0..k {
            let b = self.basis.column(l);
            self.psi
                .forward_map(|m| b[m].conj() * u[m], |j, v| out[j * k + l] = v, &mut scratch.transform);
        }
    }

    /// `Y = A X` into a preallocated `L x C` matrix. Columns are processed in order.
    pub fn forward_into(&self, x: &DMatrix<Complex64>, y: &mut DMatrix<Complex64>, scratch: &mut LiftScratch) {
        let (rows, l) = (self.lifted_len(), self.num_samples());
        debug_assert_eq!(x.nrows(), rows);
        debug_assert_eq!(y.shape(), (l, x.ncols()));
        let xs = x.as_slice();
        let ys = y.as_mut_slice();
        for c in 0..x.ncols() {
            self.forward_column(&xs[c * rows..(c + 1) * rows], &mut ys[c * l..(c + 1) * l], scratch);
        }
    }

    /// `X = A* Y` into a preallocated `kN x C` matrix.
    pub fn adjoint_into(&self, y: &DMatrix<Complex64>, x: &mut DMatrix<Complex64>, scratch: &mut LiftScratch) {
        let (rows, l) = (self.lifted_len(), self.num_samples());
        debug_assert_eq!(y.nrows(), l);
        debug_assert_eq!(x.shape(), (rows, y.ncols()));
        let ys = y.as_slice();
        let xs = x.as_mut_slice();
        for c in 0..y.ncols() {
            self.adjoint_column(&ys[c * l..(c + 1) * l], &mut xs[c * rows..(c + 1) * rows], scratch);
        }
    }

    pub fn forward(&self, x: &LiftedMatrix) -> Result<DMatrix<Complex64>> {
        if x.k != self.k() || x.n != self.grid_len() {
            return Err(Error::shape(
                "lifted_forward",
                format!("k={}, N={}", self.k(), self.grid_len()),
                format!("k={}, N={}", x.k, x.n),
            ));
        }
        let mut y = DMatrix::zeros(self.num_samples(), x.ncols());
        self.forward_into(&x.data, &mut y, &mut LiftScratch::new());
        Ok(y)
    }

    pub fn adjoint(&self, y: &DMatrix<Complex64>) -> Result<LiftedMatrix> {
        if y.nrows() != self.num_samples() {
            return Err(Error::shape("lifted_adjoint", self.num_samples(), y.nrows()));
        }
        let mut x = DMatrix::zeros(self.lifted_len(), y.ncols());
        self.adjoint_into(y, &mut x, &mut LiftScratch::new());
        Ok(LiftedMatrix {
            k: self.k(),
            n: self.grid_len(),
            data: x,
        })
    }

    fn guard(&self) -> Result<()> {
        let cols = self.lifted_len();
        if cols > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                columns: cols,
                limit: DENSE_LIMIT,
            });
        }
        Ok(())
    }

    /// Dense `N x kN` matrix of `Phi` with entries `Phi[m, j*k+l] = Psi*[m,j] B[m,l]`.
    pub fn phi_dense(&self) -> Result<DMatrix<Complex64>> {
        self.guard()?;
        let psi_adj = self.psi.dense_matrix().adjoint();
        let b = self.basis.matrix();
        let k = self.k();
        Ok(DMatrix::from_fn(self.grid_len(), self.lifted_len(), |m, col| {
            psi_adj[(m, col / k)] * b[(m, col % k)]
        }))
    }

    /// Dense `L x kN` matrix of `A`, built from the closed-form entries of
    /// `F_Omega` and `Phi` rather than from the fast operators.
    pub fn materialize_dense(&self) -> Result<DMatrix<Complex64>> {
        let phi = self.phi_dense()?;
        Ok(self.fourier.dense_matrix() * phi)
    }
}

/// Power iteration on `A*A` using the Rayleigh quotient `||Av||^2 / ||v||^2`.
/// Returns the raw estimate of `||A||^2` and the number of iterations used.
pub fn power_iteration_norm_sq(op: &LiftedOperator, iters: usize, tol: f64, seed: u64) -> Result<(f64, usize)> {
    if iters == 0 {
        return Err(Error::InvalidArgument("power iteration needs at least one iteration".into()));
    }
    let rows = op.lifted_len();
    let mut r = rng::seeded(seed);
    let mut v = rng::complex_normal_vec(&mut r, rows);
    let nv = linalg::norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut av = vec![ZERO; op.num_samples()];
    let mut w = vec![ZERO; rows];
    let mut scratch = LiftScratch::new();
    let mut est = 0.0;
    for it in 1..=iters {
        op.forward_column(&v, &mut av, &mut scratch);
        let next = linalg::norm_sqr(&av);
        op.adjoint_column(&av, &mut w, &mut scratch);
        let nw = linalg::norm(&w);
        if !next.is_finite() || !nw.is_finite() {
            return Err(Error::StepEstimate("non-finite iterate".into()));
        }
        let converged = it > 1 && (next - est).abs() <= tol * next;
        est = next;
        if nw == 0.0 {
            return Ok((est, it));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if converged {
            return Ok((est, it));
        }
    }
    Ok((est, iters))
}

/// Safety factor applied to the power-iteration estimate.
pub const STEP_SAFETY: f64 = 1.05;

/// `1.05 * ||A||^2` estimated by power iteration, for use as a FISTA step constant.
pub fn operator_norm_estimate(op: &LiftedOperator, iters: usize, tol: f64, seed: u64) -> Result<f64> {
    let (est, _) = power_iteration_norm_sq(op, iters, tol, seed)?;
    if est <= 0.0 {
        return Err(Error::StepEstimate("operator appears to be zero".into()));
    }
    Ok(est * STEP_SAFETY)
}
