use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::modelgen::SparseSignal;
use crate::transforms::{PartialFourier, Sparsifier, TransformScratch};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub signal: SparseSignal,
    /// Atoms in the order they were selected.
    pub selection_order: Vec<usize>,
    /// `||Y - E z||_F` after the final least-squares fit.
    pub residual: f64,
    /// Set when the normal equations needed a ridge to factor.
    pub ridge_used: bool,
}

/// Greedy recovery of `z` with known sensitivities `s_i`, sharing one support
/// across coils.
///
/// Each of the `n` iterations picks the atom `j` maximizing
/// `sum_i |<r_i, F_Omega(s_i . Psi* e_j)>|^2 / ||E e_j||^2`, then refits all
/// selected coefficients by joint least squares over every coil. The atom
/// norms vary with Omega and the coils, so the correlations are normalized.
pub fn omp_known_calibration(
    sensitivities: &[Vec<Complex64>],
    psi: &Sparsifier,
    fourier: &PartialFourier,
    y: &DMatrix<Complex64>,
    n: usize,
) -> Result<OmpResult> {
    let grid = psi.shape().len();
    let l = fourier.num_samples();
    let coils = sensitivities.len();
    if coils == 0 {
        return Err(Error::InvalidArgument("at least one sensitivity is required".into()));
    }
    if y.shape() != (l, coils) {
        return Err(Error::shape("omp (Y)", format!("{l}x{coils}"), format!("{}x{}", y.nrows(), y.ncols())));
    }
    if let Some(bad) = sensitivities.iter().find(|s| s.len() != grid) {
        return Err(Error::shape("omp (sensitivity)", grid, bad.len()));
    }
    if fourier.shape() != psi.shape() {
        return Err(Error::shape("omp (Omega)", psi.shape(), fourier.shape()));
    }
    if n == 0 || n > grid || n > l * coils {
        return Err(Error::InvalidArgument(format!("sparsity n = {n} out of range")));
    }
    if !linalg::all_finite(y.as_slice()) {
        return Err(Error::NonFinite("measurements"));
    }

    let mut scratch = TransformScratch::new();
    let mut work = vec![ZERO; grid];
    let mut score = vec![0.0; grid];
    let stacked_y = DVector::from_column_slice(y.as_slice());
    let mut residual = stacked_y.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(n);
    let mut chosen = vec![false; grid];
    // Stacked atoms, one column of length L*C per selected index.
    let mut atoms = DMatrix::<Complex64>::zeros(l * coils, 0);
    let mut coef = DVector::<Complex64>::zeros(0);
    let mut ridge_used = false;
    let atom_norms = atom_norms_sqr(sensitivities, psi, fourier, &mut scratch);

    for _ in 0..n {
        score.iter_mut().for_each(|v| *v = 0.0);
        for (i, s) in sensitivities.iter().enumerate() {
            fourier.adjoint_into(&residual.as_slice()[i * l..(i + 1) * l], &mut work, &mut scratch);
            for (w, si) in work.iter_mut().zip(s) {
                *w *= si.conj();
            }
            psi.forward_in_place(&mut work, &mut scratch);
            for (sc, w) in score.iter_mut().zip(&work) {
                *sc += w.norm_sqr();
            }
        }
        let mut best: Option<usize> = None;
        for j in 0..grid {
            if chosen[j] {
                continue;
            }
            if atom_norms[j] == 0.0 {
                continue;
            }
            if best.is_none_or(|b| score[j] * atom_norms[b] > score[b] * atom_norms[j]) {
                best = Some(j);
            }
        }
        let Some(j) = best else {
            // Every remaining atom is invisible to the measurements.
            break;
        };
        chosen[j] = true;
        selected.push(j);

        // E e_j stacked over coils.
        let mut atom_psi = vec![ZERO; grid];
        atom_psi[j] = Complex64::new(1.0, 0.0);
        psi.inverse_in_place(&mut atom_psi, &mut scratch);
        let mut column = vec![ZERO; l * coils];
        let mut out = vec![ZERO; l];
        for (i, s) in sensitivities.iter().enumerate() {
            for ((w, a), si) in work.iter_mut().zip(&atom_psi).zip(s) {
                *w = a * si;
            }
            fourier.apply_in_place(&mut work, &mut out, &mut scratch);
            column[i * l..(i + 1) * l].copy_from_slice(&out);
        }
        let m = atoms.ncols();
        atoms = atoms.insert_column(m, ZERO);
        atoms.column_mut(m).copy_from_slice(&column);

        let (c, ridged) = least_squares(&atoms, &stacked_y)?;
        ridge_used |= ridged;
        coef = c;
        residual = &stacked_y - &atoms * &coef;
    }

    let mut z = vec![ZERO; grid];
    for (&j, v) in selected.iter().zip(coef.iter()) {
        z[j] = *v;
    }
    let mut support = selected.clone();
    support.sort_unstable();
    Ok(OmpResult {
        signal: SparseSignal { z, support },
        selection_order: selected,
        residual: residual.norm(),
        ridge_used,
    })
}

/// `||E e_j||^2 = sum_i ||F_Omega(s_i . Psi* e_j)||^2` for every atom `j`.
fn atom_norms_sqr(
    sensitivities: &[Vec<Complex64>],
    psi: &Sparsifier,
    fourier: &PartialFourier,
    scratch: &mut TransformScratch,
) -> Vec<f64> {
    let grid = psi.shape().len();
    let mut atom = vec![ZERO; grid];
    let mut work = vec![ZERO; grid];
    let mut out = vec![ZERO; fourier.num_samples()];
    let mut norms = vec![0.0; grid];
    for (j, norm) in norms.iter_mut().enumerate() {
        atom.fill(ZERO);
        atom[j] = Complex64::new(1.0, 0.0);
        psi.inverse_in_place(&mut atom, scratch);
        for s in sensitivities {
            for ((w, a), si) in work.iter_mut().zip(&atom).zip(s) {
                *w = a * si;
            }
            fourier.apply_in_place(&mut work, &mut out, scratch);
            *norm += linalg::norm_sqr(&out);
        }
    }
    norms
}

/// Solve `min ||b - A c||` through the normal equations. Falls back to a
/// ridge of `1e-12` times the mean diagonal when the Gram matrix does not factor.
fn least_squares(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<(DVector<Complex64>, bool)> {
    let gram = a.adjoint() * a;
    let rhs = a.adjoint() * b;
    if let Some(ch) = gram.clone().cholesky() {
        let c = ch.solve(&rhs);
        if linalg::all_finite(c.as_slice()) {
            return Ok((c, false));
        }
    }
    let m = gram.nrows();
    let scale = (0..m).map(|i| gram[(i, i)].re).sum::<f64>() / m as f64;
    let ridge = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut g = gram;
    for i in 0..m {
        g[(i, i)] += ridge;
    }
    let ch = g
        .cholesky()
        .ok_or_else(|| Error::Singular("least-squares system is rank deficient even with a ridge".into()))?;
    Ok((ch.solve(&rhs), true))
}
