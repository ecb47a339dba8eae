//! Random instance generation: sensitivity subspace `B`, coil coefficients
//! `H`, sparse coefficients `z`, sampling patterns, noise, and direct
//! (non-lifted) synthesis of multi-coil measurements.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::liftops::SubspaceBasis;
use crate::linalg;
use crate::rng;
use crate::transforms::{GridShape, PartialFourier, SamplingPattern, Sparsifier, TransformScratch};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// First `k` columns of a Haar-random real orthogonal matrix.
    Haar,
    /// First `k` columns of a Haar-random unitary matrix.
    HaarComplex,
    /// Orthonormalized low-degree polynomials on `[-1, 1]` (tensor degrees in 2D).
    Poly,
    /// The `k` lowest-frequency 2D DFT atoms.
    Sin2d,
}

impl BasisKind {
    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Haar => "haar",
            BasisKind::HaarComplex => "haar_complex",
            BasisKind::Poly => "poly",
            BasisKind::Sin2d => "sin2d",
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(BasisKind::Haar),
            "haar_complex" => Ok(BasisKind::HaarComplex),
            "poly" => Ok(BasisKind::Poly),
            "sin2d" => Ok(BasisKind::Sin2d),
            other => Err(Error::InvalidArgument(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// Orthonormalize the columns of `m` by Householder QR, fixing signs so the
/// diagonal of `R` is real and positive. The result is unique for full-rank `m`.
fn orthonormalize(m: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let k = m.ncols();
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        let d = r[(j, j)];
        if d.norm() < 1e-13 {
            return Err(Error::Singular("basis generator produced dependent columns".into()));
        }
        let phase = d / d.norm();
        for v in q.column_mut(j).iter_mut() {
            *v *= phase;
        }
    }
    Ok(q.columns(0, k).into_owned())
}

fn unit_interval_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

/// Signed DFT frequencies in `(-n/2, n/2]`.
fn signed_freqs(n: usize) -> Vec<i64> {
    let n = n as i64;
    (0..n).map(|f| if 2 * f > n { f - n } else { f }).collect()
}

/// `(row, col)` frequency pairs of the `k` lowest-frequency 2D atoms, ordered
/// by normalized radius `(f1/n1)^2 + (f2/n2)^2`, then `|f2|`, `|f1|`, `f2`, `f1`.
pub fn low_frequency_set(shape: GridShape, k: usize) -> Vec<(i64, i64)> {
    let mut all: Vec<(i64, i64)> = Vec::with_capacity(shape.len());
    for f2 in signed_freqs(shape.n2()) {
        for f1 in signed_freqs(shape.n1()) {
            all.push((f1, f2));
        }
    }
    let (n1, n2) = (shape.n1() as f64, shape.n2() as f64);
    let radius = |&(f1, f2): &(i64, i64)| (f1 as f64 / n1).powi(2) + (f2 as f64 / n2).powi(2);
    all.sort_by(|a, b| {
        radius(a)
            .total_cmp(&radius(b))
            .then(a.1.abs().cmp(&b.1.abs()))
            .then(a.0.abs().cmp(&b.0.abs()))
            .then(a.1.cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });
    all.truncate(k);
    all
}

/// Tensor polynomial degrees `(p, q)` ordered by total degree, then by `p`.
fn poly_degrees(shape: GridShape, k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k);
    let mut total = 0;
    while out.len() < k {
        for p in 0..=total {
            let q = total - p;
            if p < shape.n1() && q < shape.n2() {
                out.push((p, q));
                if out.len() == k {
                    break;
                }
            }
        }
        total += 1;
    }
    out
}

pub fn gen_subspace_basis(kind: BasisKind, shape: GridShape, k: usize, seed: u64) -> Result<SubspaceBasis> {
    let n = shape.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension k = {k} must satisfy 1 <= k < N = {n}"
        )));
    }
    let b = match kind {
        BasisKind::Haar => {
            let mut r = rng::seeded(seed);
            let g = DMatrix::from_fn(n, k, |_, _| Complex64::new(r.sample(StandardNormal), 0.0));
            orthonormalize(g)?
        }
        BasisKind::HaarComplex => {
            let mut r = rng::seeded(seed);
            orthonormalize(DMatrix::from_fn(n, k, |_, _| rng::complex_normal(&mut r)))?
        }
        BasisKind::Poly => {
            let t1 = unit_interval_grid(shape.n1());
            let t2 = unit_interval_grid(shape.n2());
            let degrees = poly_degrees(shape, k);
            let v = DMatrix::from_fn(n, k, |idx, col| {
                let (r, c) = shape.coords(idx);
                let (p, q) = degrees[col];
                Complex64::new(t1[r].powi(p as i32) * t2[c].powi(q as i32), 0.0)
            });
            orthonormalize(v)?
        }
        BasisKind::Sin2d => {
            let freqs = low_frequency_set(shape, k);
            let scale = 1.0 / (n as f64).sqrt();
            let (n1, n2) = (shape.n1() as f64, shape.n2() as f64);
            DMatrix::from_fn(n, k, |idx, col| {
                let (r, c) = shape.coords(idx);
                let (f1, f2) = freqs[col];
                let phase = 2.0 * PI * (f1 as f64 * r as f64 / n1 + f2 as f64 * c as f64 / n2);
                Complex64::from_polar(scale, phase)
            })
        }
    };
    SubspaceBasis::new(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoilBasis {
    /// Unitary `k`-point DFT.
    Dft,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoilModel {
    /// Each column drawn uniformly, with replacement, from the columns of an
    /// orthonormal `k x k` matrix `W`.
    BasisColumns(CoilBasis),
    /// Standard complex Gaussian vectors normalized to unit length.
    ComplexSphere,
}

impl std::str::FromStr for CoilModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex_sphere" | "sphere" => Ok(CoilModel::ComplexSphere),
            "basis_columns" | "basis_columns_dft" => Ok(CoilModel::BasisColumns(CoilBasis::Dft)),
            "basis_columns_identity" => Ok(CoilModel::BasisColumns(CoilBasis::Identity)),
            other => Err(Error::InvalidArgument(format!("unknown coil model '{other}'"))),
        }
    }
}

/// `k x C` coil coefficients with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilCoefficients {
    pub h: DMatrix<Complex64>,
    pub model: CoilModel,
}

pub fn gen_coil_coeffs(model: CoilModel, k: usize, c: usize, seed: u64) -> Result<CoilCoefficients> {
    if k == 0 || c == 0 {
        return Err(Error::InvalidArgument("k and C must be at least 1".into()));
    }
    let mut r = rng::seeded(seed);
    let mut h = DMatrix::zeros(k, c);
    match model {
        CoilModel::ComplexSphere => {
            for col in 0..c {
                let v = rng::complex_normal_vec(&mut r, k);
                let nv = linalg::norm(&v);
                for (i, x) in v.into_iter().enumerate() {
                    h[(i, col)] = x / nv;
                }
            }
        }
        CoilModel::BasisColumns(w) => {
            let scale = 1.0 / (k as f64).sqrt();
            for col in 0..c {
                let pick = r.random_range(0..k);
                for i in 0..k {
                    h[(i, col)] = match w {
                        CoilBasis::Identity => {
                            if i == pick {
                                Complex64::new(1.0, 0.0)
                            } else {
                                ZERO
                            }
                        }
                        CoilBasis::Dft => Complex64::from_polar(
                            scale,
                            -2.0 * PI * ((i * pick) % k) as f64 / k as f64,
                        ),
                    };
                }
            }
        }
    }
    Ok(CoilCoefficients { h, model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueModel {
    /// Standard complex normal entries.
    Gaussian,
    /// Unit-modulus entries with uniform random phase.
    Unit,
}

impl std::str::FromStr for ValueModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ValueModel::Gaussian),
            "unit" => Ok(ValueModel::Unit),
            other => Err(Error::InvalidArgument(format!("unknown signal model '{other}'"))),
        }
    }
}

/// A coefficient vector `z` that vanishes off its (sorted) support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub z: Vec<Complex64>,
    pub support: Vec<usize>,
}

impl SparseSignal {
    /// Build from a dense vector, taking the support to be its nonzero entries.
    pub fn from_dense(z: Vec<Complex64>) -> Self {
        let support = z
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != ZERO)
            .map(|(i, _)| i)
            .collect();
        SparseSignal { z, support }
    }
}

pub fn gen_sparse_signal(n_grid: usize, n: usize, seed: u64, model: ValueModel) -> Result<SparseSignal> {
    if n == 0 || n > n_grid {
        return Err(Error::InvalidArgument(format!(
            "sparsity n = {n} must satisfy 1 <= n <= N = {n_grid}"
        )));
    }
    let mut r = rng::seeded(seed);
    let mut support = rng::random_subset(&mut r, n_grid, n);
    support.sort_unstable();
    let mut z = vec![ZERO; n_grid];
    for &j in &support {
        z[j] = match model {
            ValueModel::Gaussian => loop {
                // an exact zero would shrink the support
                let v = rng::complex_normal(&mut r);
                if v != ZERO {
                    break v;
                }
            },
            ValueModel::Unit => Complex64::from_polar(1.0, r.random::<f64>() * 2.0 * PI),
        };
    }
    Ok(SparseSignal { z, support })
}

pub fn gen_sampling_pattern(n_grid: usize, l: usize, seed: u64) -> Result<SamplingPattern> {
    if l == 0 || l > n_grid {
        return Err(Error::InvalidArgument(format!(
            "sample count L = {l} must satisfy 1 <= L <= N = {n_grid}"
        )));
    }
    let mut r = rng::seeded(seed);
    let mut idx = rng::random_subset(&mut r, n_grid, l);
    idx.sort_unstable();
    SamplingPattern::new(idx, n_grid)
}

/// Multi-coil measurements `Y` (`L x C`) with the sampling pattern and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub y: DMatrix<Complex64>,
    pub pattern: SamplingPattern,
    pub shape: GridShape,
    /// Realized `||noise||_F / sqrt(C)`; zero for clean data.
    pub noise_sigma: f64,
}

/// `y_i = F_Omega((B h_i) . (Psi* z))`, evaluated directly without the lifted operator.
pub fn synthesize_measurements(
    basis: &SubspaceBasis,
    h: &DMatrix<Complex64>,
    z: &[Complex64],
    psi: &Sparsifier,
    fourier: &PartialFourier,
) -> Result<MeasurementSet> {
    let shape = psi.shape();
    let n = shape.len();
    if z.len() != n {
        return Err(Error::shape("synthesize_measurements (z)", n, z.len()));
    }
    if basis.grid_len() != n {
        return Err(Error::shape("synthesize_measurements (B)", n, basis.grid_len()));
    }
    if h.nrows() != basis.k() {
        return Err(Error::shape("synthesize_measurements (H)", basis.k(), h.nrows()));
    }
    if fourier.shape() != shape {
        return Err(Error::shape("synthesize_measurements (Omega)", shape, fourier.shape()));
    }
    let mut scratch = TransformScratch::new();
    let mut x = z.to_vec();
    psi.inverse_in_place(&mut x, &mut scratch);
    let l = fourier.num_samples();
    let mut y = DMatrix::zeros(l, h.ncols());
    let mut work = vec![ZERO; n];
    let mut out = vec![ZERO; l];
    for c in 0..h.ncols() {
        let hc: Vec<Complex64> = h.column(c).iter().copied().collect();
        let s = basis.sensitivity(&hc)?;
        for ((w, si), xi) in work.iter_mut().zip(&s).zip(&x) {
            *w = si * xi;
        }
        fourier.apply_in_place(&mut work, &mut out, &mut scratch);
        y.column_mut(c).copy_from_slice(&out);
    }
    Ok(MeasurementSet {
        y,
        pattern: fourier.pattern().clone(),
        shape,
        noise_sigma: 0.0,
    })
}

/// Relative noise level `||noise||_F / ||Y||_F` and the seed for its draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// Add complex Gaussian noise rescaled so that `||noise||_F = ratio ||Y||_F` exactly.
pub fn add_noise(m: &MeasurementSet, spec: NoiseSpec) -> Result<MeasurementSet> {
    if !(spec.ratio >= 0.0) || !spec.ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("noise ratio must be >= 0, got {}", spec.ratio)));
    }
    let mut out = m.clone();
    if spec.ratio == 0.0 {
        return Ok(out);
    }
    let ny = linalg::norm(m.y.as_slice());
    if ny == 0.0 {
        return Err(Error::ZeroInput("noise ratio needs nonzero measurements as a scale reference"));
    }
    let mut r = rng::seeded(spec.seed);
    let mut noise = rng::complex_normal_vec(&mut r, m.y.len());
    let nn = linalg::norm(&noise);
    let target = spec.ratio * ny;
    for v in noise.iter_mut() {
        *v *= target / nn;
    }
    for (y, e) in out.y.as_mut_slice().iter_mut().zip(&noise) {
        *y += e;
    }
    out.noise_sigma = linalg::norm(&noise) / (m.y.ncols() as f64).sqrt();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::SparsifierKind;

    fn gram_defect(b: &SubspaceBasis) -> f64 {
        let m = b.matrix();
        let g = m.adjoint() * m - DMatrix::<Complex64>::identity(m.ncols(), m.ncols());
        linalg::max_abs(g.as_slice())
    }

    #[test]
    fn poly_k1_is_constant() {
        let shape = GridShape::new(4, 4).unwrap();
        let b = gen_subspace_basis(BasisKind::Poly, shape, 1, 0).unwrap();
        for v in b.column(0) {
            assert!((v - Complex64::new(0.25, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn every_kind_is_orthonormal() {
        for kind in [BasisKind::Haar, BasisKind::HaarComplex, BasisKind::Poly, BasisKind::Sin2d] {
            for (shape, k) in [
                (GridShape::line(64).unwrap(), 5),
                (GridShape::new(16, 16).unwrap(), 15),
                (GridShape::new(23, 23).unwrap(), 6),
                (GridShape::line(256).unwrap(), 8),
            ] {
                let b = gen_subspace_basis(kind, shape, k, 9).unwrap();
                assert!(gram_defect(&b) < 1e-10, "{kind:?} {shape} k={k}");
            }
        }
    }

    #[test]
    fn haar_is_real_and_seeded() {
        let shape = GridShape::line(32).unwrap();
        let a = gen_subspace_basis(BasisKind::Haar, shape, 3, 5).unwrap();
        let b = gen_subspace_basis(BasisKind::Haar, shape, 3, 5).unwrap();
        let c = gen_subspace_basis(BasisKind::Haar, shape, 3, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.matrix().iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn basis_rejects_large_k() {
        let shape = GridShape::line(8).unwrap();
        assert!(gen_subspace_basis(BasisKind::Haar, shape, 8, 0).is_err());
        assert!(gen_subspace_basis(BasisKind::Poly, shape, 0, 0).is_err());
    }

    #[test]
    fn sin2d_starts_at_dc_and_stays_low() {
        let shape = GridShape::new(23, 23).unwrap();
        let f = low_frequency_set(shape, 6);
        assert_eq!(f[0], (0, 0));
        assert!(f.iter().all(|&(a, b)| a.abs() <= 1 && b.abs() <= 1));
        let b = gen_subspace_basis(BasisKind::Sin2d, shape, 6, 0).unwrap();
        let dc = 1.0 / 23.0;
        assert!(b.column(0).iter().all(|v| (v - Complex64::new(dc, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn sphere_columns_are_unit() {
        let h = gen_coil_coeffs(CoilModel::ComplexSphere, 4, 7, 3).unwrap().h;
        for c in 0..7 {
            assert!((h.column(c).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_basis_columns_are_standard_vectors() {
        let h = gen_coil_coeffs(CoilModel::BasisColumns(CoilBasis::Identity), 5, 9, 4).unwrap().h;
        for c in 0..9 {
            let ones = h.column(c).iter().filter(|v| **v == Complex64::new(1.0, 0.0)).count();
            let zeros = h.column(c).iter().filter(|v| **v == ZERO).count();
            assert_eq!((ones, zeros), (1, 4));
        }
        let hd = gen_coil_coeffs(CoilModel::BasisColumns(CoilBasis::Dft), 5, 9, 4).unwrap().h;
        for c in 0..9 {
            assert!((hd.column(c).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_draws_are_isotropic() {
        let k = 3;
        let draws = 100_000;
        let h = gen_coil_coeffs(CoilModel::ComplexSphere, k, draws, 17).unwrap().h;
        let cov = (&h * h.adjoint()) / Complex64::new(draws as f64, 0.0);
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 / k as f64 } else { 0.0 };
                assert!((cov[(i, j)] - Complex64::new(target, 0.0)).norm() <= 5e-2);
            }
        }
    }

    #[test]
    fn sparse_signal_support() {
        let s = gen_sparse_signal(16, 5, 1, ValueModel::Gaussian).unwrap();
        assert_eq!(s.support.len(), 5);
        assert_eq!(s.z.iter().filter(|v| **v != ZERO).count(), 5);
        let full = gen_sparse_signal(16, 16, 1, ValueModel::Unit).unwrap();
        assert_eq!(full.support, (0..16).collect::<Vec<_>>());
        assert!(full.z.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert!(gen_sparse_signal(16, 17, 1, ValueModel::Unit).is_err());
        assert!(gen_sparse_signal(16, 0, 1, ValueModel::Unit).is_err());
    }

    #[test]
    fn support_is_uniform() {
        let (n_grid, n, draws) = (16usize, 3usize, 10_000usize);
        let mut counts = vec![0usize; n_grid];
        for t in 0..draws {
            for j in gen_sparse_signal(n_grid, n, rng::derive_seed(5, &[t as u64]), ValueModel::Unit)
                .unwrap()
                .support
            {
                counts[j] += 1;
            }
        }
        let p = n as f64 / n_grid as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c} vs {mean} +- {sd}");
        }
    }

    #[test]
    fn sampling_patterns() {
        assert_eq!(gen_sampling_pattern(10, 10, 3).unwrap().indices(), (0..10).collect::<Vec<_>>());
        let one = gen_sampling_pattern(10, 1, 3).unwrap();
        assert!(one.indices()[0] < 10);
        assert!(gen_sampling_pattern(10, 11, 3).is_err());
        let mut counts = vec![0usize; 8];
        let draws = 8000;
        for t in 0..draws {
            for &i in gen_sampling_pattern(8, 2, t).unwrap().indices() {
                counts[i] += 1;
            }
        }
        // chi-square with 7 degrees of freedom; 24.3 is the 0.999 quantile
        let e = draws as f64 * 2.0 / 8.0;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi < 24.3, "chi-square {chi}");
    }

    fn small_setup() -> (SubspaceBasis, Sparsifier, PartialFourier) {
        let shape = GridShape::new(4, 4).unwrap();
        let b = gen_subspace_basis(BasisKind::Haar, shape, 2, 1).unwrap();
        let psi = Sparsifier::new(SparsifierKind::Dct2, shape);
        let f = PartialFourier::new(shape, gen_sampling_pattern(16, 9, 2).unwrap()).unwrap();
        (b, psi, f)
    }

    #[test]
    fn zero_signal_gives_zero_measurements() {
        let (b, psi, f) = small_setup();
        let h = gen_coil_coeffs(CoilModel::ComplexSphere, 2, 3, 1).unwrap().h;
        let m = synthesize_measurements(&b, &h, &vec![ZERO; 16], &psi, &f).unwrap();
        assert!(m.y.iter().all(|v| *v == ZERO));
        assert!(add_noise(&m, NoiseSpec { ratio: 0.1, seed: 1 }).is_err());
        assert_eq!(add_noise(&m, NoiseSpec { ratio: 0.0, seed: 1 }).unwrap(), m);
    }

    #[test]
    fn noise_ratio_is_exact() {
        let (b, psi, f) = small_setup();
        let h = gen_coil_coeffs(CoilModel::ComplexSphere, 2, 3, 1).unwrap().h;
        let z = gen_sparse_signal(16, 3, 4, ValueModel::Gaussian).unwrap().z;
        let m = synthesize_measurements(&b, &h, &z, &psi, &f).unwrap();
        let noisy = add_noise(&m, NoiseSpec { ratio: 0.01, seed: 9 }).unwrap();
        let d = linalg::dist(noisy.y.as_slice(), m.y.as_slice());
        let ratio = d / linalg::norm(m.y.as_slice());
        assert!((ratio - 0.01).abs() < 1e-12);
        assert!((noisy.noise_sigma - d / 3f64.sqrt()).abs() < 1e-14);
        assert!(add_noise(&m, NoiseSpec { ratio: -1.0, seed: 0 }).is_err());
    }

    #[test]
    fn noise_is_isotropic() {
        let m = MeasurementSet {
            y: DMatrix::from_element(20_000, 1, Complex64::new(1.0, 0.0)),
            pattern: SamplingPattern::full(1).unwrap(),
            shape: GridShape::line(1).unwrap(),
            noise_sigma: 0.0,
        };
        let noisy = add_noise(&m, NoiseSpec { ratio: 1.0, seed: 4 }).unwrap();
        let e: Vec<_> = noisy.y.iter().map(|v| v - Complex64::new(1.0, 0.0)).collect();
        let vr: f64 = e.iter().map(|v| v.re * v.re).sum();
        let vi: f64 = e.iter().map(|v| v.im * v.im).sum();
        assert!((vr / (vr + vi) - 0.5).abs() < 0.02);
        let mr: f64 = e.iter().map(|v| v.re).sum::<f64>() / e.len() as f64;
        assert!(mr.abs() < 0.03);
    }
}
