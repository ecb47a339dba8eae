//! Orthonormal sparsifying transforms and the normalized partial Fourier
//! sampling operator, in 1D and separable 2D.
//!
//! Grids are flattened column-major: entry `(r, c)` of an `n1 x n2` grid lives
//! at index `r + c * n1`. Separable transforms act along axis 0 (contiguous
//! columns of length `n1`) and then along axis 1 (strided rows of length `n2`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    n1: usize,
    n2: usize,
}

impl GridShape {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {n1}x{n2}"
            )));
        }
        Ok(GridShape { n1, n2 })
    }

    /// A 1D grid of length `n` (stored as `n x 1`).
    pub fn line(n: usize) -> Result<Self> {
        Self::new(n, 1)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Total number of grid points `N = n1 * n2`.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_1d(&self) -> bool {
        self.n2 == 1
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n1 && col < self.n2);
        row + col * self.n1
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.n1, index / self.n1)
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n1, self.n2)
    }
}

/// A complex image or signal on a [`GridShape`], flattened column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    shape: GridShape,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(shape: GridShape, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape("ComplexGrid::new", shape.len(), data.len()));
        }
        Ok(ComplexGrid { shape, data })
    }

    pub fn zeros(shape: GridShape) -> Self {
        ComplexGrid {
            shape,
            data: vec![ZERO; shape.len()],
        }
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.n2 {
            for r in 0..shape.n1 {
                data.push(f(r, c));
            }
        }
        ComplexGrid { shape, data }
    }

    /// Unflatten into an `n1 x n2` matrix.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(self.shape.n1, self.shape.n2, &self.data)
    }

    /// Flatten an `n1 x n2` matrix column-major.
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        let shape = GridShape {
            n1: m.nrows().max(1),
            n2: m.ncols().max(1),
        };
        ComplexGrid {
            shape,
            data: m.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[self.shape.index(row, col)]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }
}

/// Reusable buffers for the FFT-backed transforms. One per thread of work.
#[derive(Debug, Default, Clone)]
pub struct TransformScratch {
    line: Vec<Complex64>,
    perm: Vec<Complex64>,
    fft: Vec<Complex64>,
    map: Vec<Complex64>,
}

impl TransformScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, line: usize, fft: usize) {
        if self.line.len() < line {
            self.line.resize(line, ZERO);
        }
        if self.perm.len() < line {
            self.perm.resize(line, ZERO);
        }
        if self.fft.len() < fft {
            self.fft.resize(fft, ZERO);
        }
    }
}

/// 1D line transforms used by the separable sparsifiers.
#[derive(Clone)]
struct FftPair {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        FftPair {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }
}

/// Orthonormal DCT-II of complex data through one complex FFT of the same
/// length (even/odd reordering followed by a quarter-sample twiddle).
///
/// Each direction is split into a load phase (reading the input into the FFT
/// buffer), the FFT, and a store phase, so callers can fuse gathers and
/// scatters into the first and last passes.
#[derive(Clone)]
struct ComplexDct {
    fft: FftPair,
    /// Forward store weights on `V_k` and `V_{n-k}`, orthonormal scaling included.
    fwd_a: Vec<Complex64>,
    fwd_b: Vec<Complex64>,
    /// Inverse load weights on `X_k` and `X_{n-k}`.
    inv_a: Vec<Complex64>,
    inv_b: Vec<Complex64>,
}

impl ComplexDct {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        let s0 = (1.0 / n as f64).sqrt();
        let sk = (2.0 / n as f64).sqrt();
        let w: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        let mut fwd_a: Vec<Complex64> = w.iter().map(|w| w * (0.5 * sk)).collect();
        let mut fwd_b: Vec<Complex64> = w.iter().map(|w| w.conj() * (0.5 * sk)).collect();
        fwd_a[0] = Complex64::new(s0, 0.0);
        fwd_b[0] = ZERO;
        // V_k = conj(w_k) (X_k - i X_{n-k}) on unnormalized coefficients X = c / s.
        let mut inv_a: Vec<Complex64> = w.iter().map(|w| w.conj() / sk).collect();
        let mut inv_b: Vec<Complex64> = w.iter().map(|w| w.conj() * Complex64::new(0.0, -1.0) / sk).collect();
        // The inverse FFT is unnormalized; fold the 1/n in here.
        let inv_n = 1.0 / n as f64;
        inv_a.iter_mut().for_each(|v| *v *= inv_n);
        inv_b.iter_mut().for_each(|v| *v *= inv_n);
        inv_a[0] = Complex64::new(inv_n / s0, 0.0);
        inv_b[0] = ZERO;
        ComplexDct {
            fft: FftPair::new(planner, n),
            fwd_a,
            fwd_b,
            inv_a,
            inv_b,
        }
    }

    #[inline]
    fn forward_load(&self, v: &mut [Complex64], read: impl Fn(usize) -> Complex64) {
        let n = self.fft.n;
        for j in 0..n.div_ceil(2) {
            v[j] = read(2 * j);
        }
        for j in 0..n / 2 {
            v[n - 1 - j] = read(2 * j + 1);
        }
    }

    #[inline]
    fn forward_store(&self, v: &[Complex64], mut write: impl FnMut(usize, Complex64)) {
        let n = self.fft.n;
        write(0, v[0] * self.fwd_a[0]);
        for k in 1..n {
            write(k, self.fwd_a[k] * v[k] + self.fwd_b[k] * v[n - k]);
        }
    }

    #[inline]
    fn inverse_load(&self, v: &mut [Complex64], read: impl Fn(usize) -> Complex64) {
        let n = self.fft.n;
        v[0] = read(0) * self.inv_a[0];
        for k in 1..n {
            v[k] = self.inv_a[k] * read(k) + self.inv_b[k] * read(n - k);
        }
    }

    #[inline]
    fn inverse_store(&self, v: &[Complex64], mut write: impl FnMut(usize, Complex64)) {
        let n = self.fft.n;
        for j in 0..n.div_ceil(2) {
            write(2 * j, v[j]);
        }
        for j in 0..n / 2 {
            write(2 * j + 1, v[n - 1 - j]);
        }
    }

    fn forward(&self, data: &mut [Complex64], perm: &mut [Complex64], fft_scratch: &mut [Complex64]) {
        let n = self.fft.n;
        if n == 1 {
            return;
        }
        let v = &mut perm[..n];
        self.forward_load(v, |j| data[j]);
        self.fft.forward.process_with_scratch(v, fft_scratch);
        self.forward_store(v, |k, x| data[k] = x);
    }

    fn inverse(&self, data: &mut [Complex64], perm: &mut [Complex64], fft_scratch: &mut [Complex64]) {
        let n = self.fft.n;
        if n == 1 {
            return;
        }
        let v = &mut perm[..n];
        self.inverse_load(v, |k| data[k]);
        self.fft.inverse.process_with_scratch(v, fft_scratch);
        self.inverse_store(v, |j, x| data[j] = x);
    }
}

#[derive(Clone)]
enum LineTransform {
    Identity,
    Dct(ComplexDct),
    /// Unitary DFT.
    Dft(FftPair, f64),
}

impl LineTransform {
    fn scratch_len(&self) -> usize {
        match self {
            LineTransform::Identity => 0,
            LineTransform::Dct(d) => d.fft.scratch_len(),
            LineTransform::Dft(f, _) => f.scratch_len(),
        }
    }

    fn apply(&self, line: &mut [Complex64], perm: &mut [Complex64], fft: &mut [Complex64], inverse: bool) {
        match self {
            LineTransform::Identity => {}
            LineTransform::Dct(d) => {
                if inverse {
                    d.inverse(line, perm, fft)
                } else {
                    d.forward(line, perm, fft)
                }
            }
            LineTransform::Dft(f, scale) => {
                if inverse {
                    f.inverse.process_with_scratch(line, fft);
                } else {
                    f.forward.process_with_scratch(line, fft);
                }
                for v in line.iter_mut() {
                    *v *= *scale;
                }
            }
        }
    }
}

/// Run a line transform along both axes of a column-major grid.
fn apply_separable(
    shape: GridShape,
    axis0: &LineTransform,
    axis1: &LineTransform,
    data: &mut [Complex64],
    scratch: &mut TransformScratch,
    inverse: bool,
) {
    let (n1, n2) = (shape.n1, shape.n2);
    let longest = n1.max(n2);
    scratch.ensure(longest, axis0.scratch_len().max(axis1.scratch_len()));
    let TransformScratch { line, perm, fft, .. } = scratch;
    if n1 > 1 {
        for col in data.chunks_exact_mut(n1) {
            axis0.apply(col, perm, fft, inverse);
        }
    }
    if n2 > 1 {
        let line = &mut line[..n2];
        for r in 0..n1 {
            for (c, slot) in line.iter_mut().enumerate() {
                *slot = data[r + c * n1];
            }
            axis1.apply(line, perm, fft, inverse);
            for (c, v) in line.iter().enumerate() {
                data[r + c * n1] = *v;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SparsifierKind {
    Identity,
    /// Orthonormal DCT-II, separable in 2D.
    Dct2,
    /// Unitary DFT, separable in 2D.
    Dft,
}

impl SparsifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            SparsifierKind::Identity => "identity",
            SparsifierKind::Dct2 => "dct2",
            SparsifierKind::Dft => "dft",
        }
    }
}

impl std::str::FromStr for SparsifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(SparsifierKind::Identity),
            "dct2" | "dct" => Ok(SparsifierKind::Dct2),
            "dft" => Ok(SparsifierKind::Dft),
            other => Err(Error::InvalidArgument(format!("unknown sparsifier '{other}'"))),
        }
    }
}

/// An orthonormal sparsifying basis `Psi`; `forward` computes `z = Psi x`
/// and `inverse` computes `x = Psi* z`.
#[derive(Clone)]
pub struct Sparsifier {
    kind: SparsifierKind,
    shape: GridShape,
    axis0: LineTransform,
    axis1: LineTransform,
}

impl fmt::Debug for Sparsifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sparsifier")
            .field("kind", &self.kind)
            .field("shape", &self.shape)
            .finish()
    }
}

impl Sparsifier {
    pub fn new(kind: SparsifierKind, shape: GridShape) -> Self {
        let mut planner = FftPlanner::new();
        let mut make = |n: usize| match kind {
            SparsifierKind::Identity => LineTransform::Identity,
            SparsifierKind::Dct2 => LineTransform::Dct(ComplexDct::new(&mut planner, n)),
            SparsifierKind::Dft => {
                LineTransform::Dft(FftPair::new(&mut planner, n), 1.0 / (n as f64).sqrt())
            }
        };
        let axis0 = make(shape.n1);
        let axis1 = if shape.n2 > 1 { make(shape.n2) } else { LineTransform::Identity };
        Sparsifier {
            kind,
            shape,
            axis0,
            axis1,
        }
    }

    pub fn kind(&self) -> SparsifierKind {
        self.kind
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// In-place `Psi x` on a flattened grid.
    pub fn forward_in_place(&self, data: &mut [Complex64], scratch: &mut TransformScratch) {
        debug_assert_eq!(data.len(), self.shape.len());
        apply_separable(self.shape, &self.axis0, &self.axis1, data, scratch, false);
    }

    /// In-place `Psi* z` on a flattened grid.
    pub fn inverse_in_place(&self, data: &mut [Complex64], scratch: &mut TransformScratch) {
        debug_assert_eq!(data.len(), self.shape.len());
        apply_separable(self.shape, &self.axis0, &self.axis1, data, scratch, true);
    }

    /// `Psi` applied to the vector with entries `read(0..N)`, delivering each
    /// output entry through `write`. One-dimensional transforms fuse the read
    /// and write into their first and last passes.
    pub fn forward_map(
        &self,
        read: impl Fn(usize) -> Complex64,
        write: impl FnMut(usize, Complex64),
        scratch: &mut TransformScratch,
    ) {
        self.map(read, write, scratch, false)
    }

    /// `Psi*` counterpart of [`Sparsifier::forward_map`].
    pub fn inverse_map(
        &self,
        read: impl Fn(usize) -> Complex64,
        write: impl FnMut(usize, Complex64),
        scratch: &mut TransformScratch,
    ) {
        self.map(read, write, scratch, true)
    }

    #[inline]
    fn map(
        &self,
        read: impl Fn(usize) -> Complex64,
        mut write: impl FnMut(usize, Complex64),
        scratch: &mut TransformScratch,
        inverse: bool,
    ) {
        let n = self.shape.len();
        if self.shape.n2 == 1 && n > 1 {
            scratch.ensure(n, self.axis0.scratch_len());
            let v = &mut scratch.perm[..n];
            match &self.axis0 {
                LineTransform::Identity => (0..n).for_each(|j| write(j, read(j))),
                LineTransform::Dct(d) => {
                    if inverse {
                        d.inverse_load(v, read);
                        d.fft.inverse.process_with_scratch(v, &mut scratch.fft);
                        d.inverse_store(v, write);
                    } else {
                        d.forward_load(v, read);
                        d.fft.forward.process_with_scratch(v, &mut scratch.fft);
                        d.forward_store(v, write);
                    }
                }
                LineTransform::Dft(f, scale) => {
                    v.iter_mut().enumerate().for_each(|(j, x)| *x = read(j));
                    if inverse {
                        f.inverse.process_with_scratch(v, &mut scratch.fft);
                    } else {
                        f.forward.process_with_scratch(v, &mut scratch.fft);
                    }
                    v.iter().enumerate().for_each(|(j, x)| write(j, x * *scale));
                }
            }
            return;
        }
        let mut buf = std::mem::take(&mut scratch.map);
        buf.clear();
        buf.extend((0..n).map(&read));
        apply_separable(self.shape, &self.axis0, &self.axis1, &mut buf, scratch, inverse);
        buf.iter().enumerate().for_each(|(j, x)| write(j, *x));
        scratch.map = buf;
    }

    fn check(&self, grid: &ComplexGrid) -> Result<()> {
        if grid.shape != self.shape {
            return Err(Error::shape("Sparsifier", self.shape, grid.shape));
        }
        Ok(())
    }

    /// `z = Psi x`.
    pub fn sparsify(&self, x: &ComplexGrid) -> Result<ComplexGrid> {
        self.check(x)?;
        let mut out = x.clone();
        self.forward_in_place(&mut out.data, &mut TransformScratch::new());
        Ok(out)
    }

    /// `x = Psi* z`.
    pub fn unsparsify(&self, z: &ComplexGrid) -> Result<ComplexGrid> {
        self.check(z)?;
        let mut out = z.clone();
        self.inverse_in_place(&mut out.data, &mut TransformScratch::new());
        Ok(out)
    }

    /// Dense `N x N` matrix of `Psi`, evaluated entry by entry from the
    /// closed-form basis definition (not through the fast path).
    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        let line = |n: usize| -> DMatrix<Complex64> {
            match self.kind {
                SparsifierKind::Identity => DMatrix::identity(n, n),
                SparsifierKind::Dct2 => DMatrix::from_fn(n, n, |k, j| {
                    let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                    let arg = PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n as f64);
                    Complex64::new(s * arg.cos(), 0.0)
                }),
                SparsifierKind::Dft => DMatrix::from_fn(n, n, |k, j| {
                    let arg = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    Complex64::from_polar(1.0 / (n as f64).sqrt(), arg)
                }),
            }
        };
        let a = line(self.shape.n1);
        let b = line(self.shape.n2);
        b.kronecker(&a)
    }
}

/// The sampled set `Omega`: sorted, distinct indices into a grid of `N` points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    indices: Vec<usize>,
    grid_len: usize,
}

impl SamplingPattern {
    pub fn new(indices: Vec<usize>, grid_len: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("sampling pattern is empty".into()));
        }
        if indices.len() > grid_len {
            return Err(Error::InvalidArgument(format!(
                "sampling pattern has {} indices for a grid of {grid_len}",
                indices.len()
            )));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidArgument(
                    "sampling indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= grid_len {
                return Err(Error::InvalidArgument(format!(
                    "sampling index {last} out of range for a grid of {grid_len}"
                )));
            }
        }
        Ok(SamplingPattern { indices, grid_len })
    }

    /// Every grid index.
    pub fn full(grid_len: usize) -> Result<Self> {
        Self::new((0..grid_len).collect(), grid_len)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of samples `L`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }
}

/// `F_Omega = sqrt(N/L) * (unitary DFT restricted to Omega)`, so that
/// `F_Omega F_Omega* = (N/L) I_L` and `E[F_Omega* F_Omega] = I_N`.
#[derive(Clone)]
pub struct PartialFourier {
    shape: GridShape,
    pattern: SamplingPattern,
    axis0: FftPair,
    axis1: Option<FftPair>,
    scale: f64,
}

impl fmt::Debug for PartialFourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialFourier")
            .field("shape", &self.shape)
            .field("samples", &self.pattern.len())
            .finish()
    }
}

impl PartialFourier {
    pub fn new(shape: GridShape, pattern: SamplingPattern) -> Result<Self> {
        if pattern.grid_len() != shape.len() {
            return Err(Error::shape("PartialFourier::new", shape.len(), pattern.grid_len()));
        }
        if pattern.is_empty() {
            return Err(Error::InvalidArgument("sampling pattern is empty".into()));
        }
        let mut planner = FftPlanner::new();
        let axis0 = FftPair::new(&mut planner, shape.n1);
        let axis1 = (shape.n2 > 1).then(|| FftPair::new(&mut planner, shape.n2));
        let scale = 1.0 / (pattern.len() as f64).sqrt();
        Ok(PartialFourier {
            shape,
            pattern,
            axis0,
            axis1,
            scale,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    /// Number of samples `L`.
    pub fn num_samples(&self) -> usize {
        self.pattern.len()
    }

    fn fft2(&self, data: &mut [Complex64], scratch: &mut TransformScratch, inverse: bool) {
        let n1 = self.shape.n1;
        let n2 = self.shape.n2;
        let need = self
            .axis0
            .scratch_len()
            .max(self.axis1.as_ref().map_or(0, |a| a.scratch_len()));
        scratch.ensure(n1.max(n2), need);
        let pick = |p: &FftPair| if inverse { p.inverse.clone() } else { p.forward.clone() };
        if n1 > 1 {
            let plan = pick(&self.axis0);
            for col in data.chunks_exact_mut(n1) {
                plan.process_with_scratch(col, &mut scratch.fft);
            }
        }
        if let Some(axis1) = &self.axis1 {
            let plan = pick(axis1);
            let line = &mut scratch.line[..n2];
            for r in 0..n1 {
                for (c, slot) in line.iter_mut().enumerate() {
                    *slot = data[r + c * n1];
                }
                plan.process_with_scratch(line, &mut scratch.fft);
                for (c, v) in line.iter().enumerate() {
                    data[r + c * n1] = *v;
                }
            }
        }
    }

    /// `out = F_Omega x`; `x` is a flattened grid of length `N`, `out` has length `L`.
    /// `x` is used as workspace and holds the full spectrum on return.
    pub fn apply_in_place(&self, x: &mut [Complex64], out: &mut [Complex64], scratch: &mut TransformScratch) {
        debug_assert_eq!(x.len(), self.shape.len());
        debug_assert_eq!(out.len(), self.pattern.len());
        self.fft2(x, scratch, false);
        for (o, &idx) in out.iter_mut().zip(&self.pattern.indices) {
            *o = x[idx] * self.scale;
        }
    }

    /// `out = F_Omega* y`; `y` has length `L`, `out` length `N`.
    pub fn adjoint_into(&self, y: &[Complex64], out: &mut [Complex64], scratch: &mut TransformScratch) {
        debug_assert_eq!(y.len(), self.pattern.len());
        debug_assert_eq!(out.len(), self.shape.len());
        out.fill(ZERO);
        for (&v, &idx) in y.iter().zip(&self.pattern.indices) {
            out[idx] = v * self.scale;
        }
        self.fft2(out, scratch, true);
    }

    pub fn apply(&self, x: &ComplexGrid) -> Result<Vec<Complex64>> {
        if x.shape != self.shape {
            return Err(Error::shape("PartialFourier::apply", self.shape, x.shape));
        }
        let mut work = x.data.clone();
        let mut out = vec![ZERO; self.pattern.len()];
        self.apply_in_place(&mut work, &mut out, &mut TransformScratch::new());
        Ok(out)
    }

    pub fn adjoint(&self, y: &[Complex64]) -> Result<ComplexGrid> {
        if y.len() != self.pattern.len() {
            return Err(Error::shape("PartialFourier::adjoint", self.pattern.len(), y.len()));
        }
        let mut out = vec![ZERO; self.shape.len()];
        self.adjoint_into(y, &mut out, &mut TransformScratch::new());
        Ok(ComplexGrid {
            shape: self.shape,
            data: out,
        })
    }

    /// Dense `L x N` matrix from the DFT formula.
    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        let (n1, n2) = (self.shape.n1, self.shape.n2);
        let n = self.shape.len();
        DMatrix::from_fn(self.pattern.len(), n, |row, col| {
            let (p1, p2) = self.shape.coords(self.pattern.indices[row]);
            let (q1, q2) = self.shape.coords(col);
            let phase = ((p1 * q1) % n1) as f64 / n1 as f64 + ((p2 * q2) % n2) as f64 / n2 as f64;
            Complex64::from_polar(self.scale, -2.0 * PI * phase)
        })
    }
}
