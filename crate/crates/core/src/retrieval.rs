//! Getting `z` back out of a lifted estimate.
//!
//! A lifted solution `X = z (x) H` has columns `vec(h_c z^T)`. Averaging the
//! columns and reshaping gives `mean(h) z^T`, whose leading right singular
//! vector is `z` up to a complex scalar.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::liftops::LiftedMatrix;
use crate::linalg;
use crate::transforms::{ComplexGrid, Sparsifier, TransformScratch};

const POWER_ITERS: usize = 200;
const POWER_TOL: f64 = 1e-14;
/// The column average counts as cancelled when its norm drops below this
/// fraction of the mean column norm.
const CANCEL_TOL: f64 = 1e-8;

/// `M ~ sigma u v^T` (transpose, not conjugate transpose, so that `v` is
/// proportional to `z` itself).
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFactors {
    pub sigma: f64,
    pub u: DVector<Complex64>,
    pub v: DVector<Complex64>,
}

impl RankOneFactors {
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        &self.u * self.v.transpose() * Complex64::new(self.sigma, 0.0)
    }
}

/// Mean of the columns of `X`, reshaped column-major to `k x N`.
pub fn average_reshape(x: &LiftedMatrix) -> DMatrix<Complex64> {
    let (k, n, c) = (x.k(), x.num_blocks(), x.ncols());
    let mut m = DMatrix::zeros(k, n);
    for col in 0..c {
        for (acc, v) in m.as_mut_slice().iter_mut().zip(x.column(col)) {
            *acc += v;
        }
    }
    m / Complex64::new(c as f64, 0.0)
}

/// Leading singular triple of `M`.
///
/// Runs power iteration on the small Gram matrix `M M*`, started from its
/// dense eigenvector so that an unlucky start orthogonal to the top direction
/// cannot stall it. With a repeated top singular value any vector of that
/// eigenspace is a valid answer; which one comes back is not specified.
///
/// `M = 0` yields `sigma = 0`, `u = e_0`, `v = e_0`.
pub fn best_rank_one(m: &DMatrix<Complex64>) -> Result<RankOneFactors> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("best_rank_one needs a nonempty matrix".into()));
    }
    if !linalg::all_finite(m.as_slice()) {
        return Err(Error::NonFinite("rank-one input"));
    }
    let unit = |len: usize| {
        let mut e = DVector::zeros(len);
        e[0] = Complex64::new(1.0, 0.0);
        e
    };
    if m.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Ok(RankOneFactors { sigma: 0.0, u: unit(rows), v: unit(cols) });
    }

    let gram = m * m.adjoint();
    let eig = gram.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut u: DVector<Complex64> = eig.eigenvectors.column(top).into_owned();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let w = &gram * &u;
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        let next = w / Complex64::new(nw, 0.0);
        let change = (&next - &u).norm();
        u = next;
        let prev = lambda;
        lambda = nw;
        if change <= POWER_TOL || (lambda - prev).abs() <= POWER_TOL * lambda {
            break;
        }
    }

    // v = M^T conj(u) / sigma = conj(M* u) / sigma
    let mhu = m.adjoint() * &u;
    let sigma = mhu.norm();
    if sigma == 0.0 {
        return Ok(RankOneFactors { sigma: 0.0, u: unit(rows), v: unit(cols) });
    }
    let v = mhu.map(|c| c.conj() / sigma);
    Ok(RankOneFactors { sigma, u, v })
}

/// Output of [`recover_signal`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSignal {
    /// Unit-norm estimate of `z`; its largest entry is real and positive.
    pub z_hat: Vec<Complex64>,
    /// `Psi* z_hat` on the image grid.
    pub x_hat: ComplexGrid,
    pub factors: RankOneFactors,
    /// Set when the coil average cancelled and the per-coil blocks were
    /// stacked vertically instead (a `kC x N` rank-one matrix `[h_1; ..; h_C] z^T`).
    pub used_fallback: bool,
}

/// Estimate `z` and the image `x = Psi* z` from a lifted solution.
pub fn recover_signal(x_hat: &LiftedMatrix, psi: &Sparsifier) -> Result<RecoveredSignal> {
    let (k, n, c) = (x_hat.k(), x_hat.num_blocks(), x_hat.ncols());
    if psi.shape().len() != n {
        return Err(Error::shape("recover_signal (Psi)", n, psi.shape().len()));
    }
    if c == 0 {
        return Err(Error::InvalidArgument("lifted matrix has no columns".into()));
    }
    if x_hat.frobenius_norm() == 0.0 {
        return Err(Error::ZeroInput("cannot retrieve a signal from a zero lifted matrix"));
    }

    let avg = average_reshape(x_hat);
    let mean_col = (0..c).map(|col| linalg::norm(x_hat.column(col))).sum::<f64>() / c as f64;
    let used_fallback = avg.norm() <= CANCEL_TOL * mean_col;
    let target = if used_fallback {
        let mut stacked = DMatrix::zeros(k * c, n);
        for col in 0..c {
            stacked.view_mut((col * k, 0), (k, n)).copy_from(&x_hat.reshape_column(col));
        }
        stacked
    } else {
        avg
    };
    let mut factors = best_rank_one(&target)?;

    let mut lead = 0;
    for (j, v) in factors.v.iter().enumerate() {
        if v.norm() > factors.v[lead].norm() {
            lead = j;
        }
    }
    let mag = factors.v[lead].norm();
    let phase = factors.v[lead] / mag;
    factors.v.iter_mut().for_each(|v| *v /= phase);
    factors.v[lead] = Complex64::new(mag, 0.0);
    factors.u.iter_mut().for_each(|u| *u *= phase);

    let z_hat: Vec<Complex64> = factors.v.iter().copied().collect();
    let mut img = z_hat.clone();
    psi.inverse_in_place(&mut img, &mut TransformScratch::new());
    let x_img = ComplexGrid::new(psi.shape(), img)?;
    Ok(RecoveredSignal { z_hat, x_hat: x_img, factors, used_fallback })
}

/// `min_alpha ||b - alpha a|| / ||b||`, attained at `alpha = <a, b> / ||a||^2`.
pub fn aligned_relative_error(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("aligned_relative_error", b.len(), a.len()));
    }
    let nb = linalg::norm(b);
    if nb == 0.0 {
        return Err(Error::ZeroInput("aligned error needs a nonzero reference"));
    }
    let na2 = linalg::norm_sqr(a);
    let alpha = if na2 == 0.0 { Complex64::new(0.0, 0.0) } else { linalg::inner(a, b) / na2 };
    let r: f64 = a.iter().zip(b).map(|(x, y)| (y - alpha * x).norm_sqr()).sum();
    Ok(r.sqrt() / nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelgen::*;
    use crate::rng;
    use crate::transforms::{GridShape, SparsifierKind};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<Complex64> {
        let mut r = rng::seeded(seed);
        DMatrix::from_vec(rows, cols, rng::complex_normal_vec(&mut r, rows * cols))
    }

    fn unit_vec(len: usize, seed: u64) -> DVector<Complex64> {
        let mut r = rng::seeded(seed);
        let v = DVector::from_vec(rng::complex_normal_vec(&mut r, len));
        let n = v.norm();
        v / c(n, 0.0)
    }

    /// Frobenius residual of the SVD truncated to its top term.
    fn svd_truncation_residual(m: &DMatrix<Complex64>) -> f64 {
        let s = m.clone().svd(false, false).singular_values;
        s.iter().skip(1).map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn average_of_lifted_matrix_is_mean_coil_times_z() {
        let z: Vec<_> = (0..6).map(|j| c(j as f64 - 2.0, 0.5 * j as f64)).collect();
        let h = random_matrix(3, 4, 1);
        let x = LiftedMatrix::lift(&z, &h);
        let avg = average_reshape(&x);
        let mean_h = h.column_mean();
        let want = &mean_h * DMatrix::from_row_slice(1, 6, &z);
        assert!((avg - want).norm() < 1e-14);
    }

    #[test]
    fn single_column_average_is_reshape() {
        let data = random_matrix(12, 1, 2);
        let x = LiftedMatrix::from_matrix(3, 4, data).unwrap();
        assert_eq!(average_reshape(&x), x.reshape_column(0));
    }

    #[test]
    fn average_matches_loop_oracle() {
        let data = random_matrix(10, 3, 3);
        let x = LiftedMatrix::from_matrix(2, 5, data.clone()).unwrap();
        let avg = average_reshape(&x);
        for l in 0..2 {
            for j in 0..5 {
                let mut s = c(0.0, 0.0);
                for col in 0..3 {
                    s += data[(j * 2 + l, col)];
                }
                assert!((avg[(l, j)] - s / 3.0).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_rank_one_is_recovered() {
        let a = unit_vec(4, 10);
        let b = unit_vec(9, 11);
        let m = &a * b.transpose() * c(3.0, 0.0);
        let f = best_rank_one(&m).unwrap();
        assert!((f.sigma - 3.0).abs() < 1e-12);
        let phase = linalg::inner(a.as_slice(), f.u.as_slice());
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!((&f.u - &a * phase).norm() < 1e-12);
        assert!((&f.v - &b * phase.conj()).norm() < 1e-12);
        assert!((f.u.norm() - 1.0).abs() < 1e-12 && (f.v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_matrix_matches_svd_truncation() {
        for seed in 0..20 {
            let m = random_matrix(4, 16, 100 + seed);
            let f = best_rank_one(&m).unwrap();
            let s = m.clone().svd(false, false).singular_values;
            assert!((f.sigma - s.max()).abs() < 1e-10 * s.max());
            let res = (&m - f.to_matrix()).norm();
            assert!((res - svd_truncation_residual(&m)).abs() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn tied_singular_values_return_one_of_them() {
        // diag(2, 2, 1) padded with zero columns
        let mut m = DMatrix::zeros(3, 5);
        m[(0, 0)] = c(2.0, 0.0);
        m[(1, 3)] = c(0.0, 2.0);
        m[(2, 1)] = c(1.0, 0.0);
        let f = best_rank_one(&m).unwrap();
        assert!((f.sigma - 2.0).abs() < 1e-12);
        let res = (&m - f.to_matrix()).norm();
        assert!((res - svd_truncation_residual(&m)).abs() < 1e-10);
        assert!((res - 5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn start_orthogonal_to_top_direction_is_handled() {
        // largest column is e_2 but the top singular direction is e_1
        let m = DMatrix::from_row_slice(2, 3, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.2, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let f = best_rank_one(&m).unwrap();
        assert!((f.sigma - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero_sigma() {
        let f = best_rank_one(&DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(f.sigma, 0.0);
        assert_eq!(f.u[0], c(1.0, 0.0));
        assert_eq!(f.v[0], c(1.0, 0.0));
    }

    #[test]
    fn beats_random_rank_one_probes() {
        let m = random_matrix(3, 12, 7);
        let f = best_rank_one(&m).unwrap();
        let best = (&m - f.to_matrix()).norm();
        let mut r = rng::seeded(8);
        for _ in 0..1000 {
            let u = DVector::from_vec(rng::complex_normal_vec(&mut r, 3));
            let v = DVector::from_vec(rng::complex_normal_vec(&mut r, 12));
            // optimal scale for this probe direction
            let p = &u * v.transpose();
            let alpha = linalg::inner(p.as_slice(), m.as_slice()) / linalg::norm_sqr(p.as_slice());
            let res = (&m - p * alpha).norm();
            assert!(best <= res + 1e-12);
        }
    }

    fn exact_instance(c_count: usize, seed: u64) -> (LiftedMatrix, SparseSignal, Sparsifier) {
        let shape = GridShape::new(4, 8).unwrap();
        let psi = Sparsifier::new(SparsifierKind::Dct2, shape);
        let z = gen_sparse_signal(32, 5, seed, ValueModel::Gaussian).unwrap();
        let h = gen_coil_coeffs(CoilModel::ComplexSphere, 3, c_count, seed + 1).unwrap().h;
        (LiftedMatrix::lift(&z.z, &h), z, psi)
    }

    #[test]
    fn recovers_z_from_exact_lift() {
        for seed in 0..10 {
            let (x, z, psi) = exact_instance(4, 40 + seed);
            let rec = recover_signal(&x, &psi).unwrap();
            assert!(!rec.used_fallback);
            assert!(aligned_relative_error(&rec.z_hat, &z.z).unwrap() <= 1e-10);
            assert!((linalg::norm(&rec.z_hat) - 1.0).abs() < 1e-12);
            let lead = rec.z_hat.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let top = rec.z_hat.iter().find(|v| v.norm() == lead).unwrap();
            assert!(top.im == 0.0 && top.re > 0.0);
            let mut img = z.z.clone();
            psi.inverse_in_place(&mut img, &mut TransformScratch::new());
            assert!(aligned_relative_error(rec.x_hat.as_slice(), &img).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn identical_coils_match_single_coil() {
        let (one, _, psi) = exact_instance(1, 60);
        let col = one.matrix().column(0).into_owned();
        let many = DMatrix::from_fn(col.len(), 5, |r, _| col[r]);
        let many = LiftedMatrix::from_matrix(one.k(), one.num_blocks(), many).unwrap();
        let a = recover_signal(&one, &psi).unwrap();
        let b = recover_signal(&many, &psi).unwrap();
        assert!(linalg::dist(&a.z_hat, &b.z_hat) < 1e-13);
    }

    #[test]
    fn cancelling_coils_use_the_stacked_fallback() {
        let shape = GridShape::line(16).unwrap();
        let psi = Sparsifier::new(SparsifierKind::Dct2, shape);
        let z = gen_sparse_signal(16, 3, 5, ValueModel::Gaussian).unwrap();
        let h1 = unit_vec(2, 6);
        let h = DMatrix::from_columns(&[h1.clone(), -h1]);
        let x = LiftedMatrix::lift(&z.z, &h);
        let rec = recover_signal(&x, &psi).unwrap();
        assert!(rec.used_fallback);
        assert!(aligned_relative_error(&rec.z_hat, &z.z).unwrap() <= 1e-10);
    }

    #[test]
    fn zero_lift_is_an_error() {
        let psi = Sparsifier::new(SparsifierKind::Identity, GridShape::line(4).unwrap());
        assert!(recover_signal(&LiftedMatrix::zeros(2, 4, 2), &psi).is_err());
        assert!(recover_signal(&LiftedMatrix::zeros(2, 5, 2), &psi).is_err());
    }

    #[test]
    fn aligned_error_examples() {
        let b: Vec<_> = (0..5).map(|j| c(j as f64 + 1.0, -(j as f64))).collect();
        assert_eq!(aligned_relative_error(&b, &b).unwrap(), 0.0);
        let ib: Vec<_> = b.iter().map(|v| v * c(0.0, 1.0)).collect();
        assert!(aligned_relative_error(&ib, &b).unwrap() < 1e-15);
        let e0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let e1 = [c(0.0, 0.0), c(2.0, 0.0)];
        assert_eq!(aligned_relative_error(&e0, &e1).unwrap(), 1.0);
        assert_eq!(aligned_relative_error(&[c(0.0, 0.0); 2], &e1).unwrap(), 1.0);
        assert!(aligned_relative_error(&e0, &[c(0.0, 0.0); 2]).is_err());
    }
}
