//! Small slice-level helpers over complex vectors. Reductions run in index
//! order so results are reproducible bit for bit.

use num_complex::Complex64;

/// `sum_i conj(a_i) b_i`
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `||a - b||_2`
pub fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// `||a - b|| / ||b||`, with `0/0 = 0`.
pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d = dist(a, b);
    let nb = norm(b);
    if nb == 0.0 {
        if d == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        d / nb
    }
}

pub fn all_finite(a: &[Complex64]) -> bool {
    a.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Largest entry modulus, `0` for an empty slice.
pub fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
