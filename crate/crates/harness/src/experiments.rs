//! Monte Carlo drivers for the experiments.
//!
//! Every trial draws its own basis, sampling pattern, signal and coil
//! coefficients from a seed derived from `(master, k, n, C, L, trial)`, so any
//! single trial can be rerun in isolation. Jobs run on the current rayon
//! pool and results are collected in job order, which keeps outputs
//! independent of scheduling.

use std::time::{Duration, Instant};

use accs_core::analysis::{block_sign, exact_dual_certificate, CertificateReport};
use accs_core::liftops::{LiftedMatrix, LiftedOperator, SubspaceBasis};
use accs_core::modelgen::{
    add_noise, gen_coil_coeffs, gen_sampling_pattern, gen_sparse_signal, gen_subspace_basis, synthesize_measurements,
    NoiseSpec, SparseSignal,
};
use accs_core::retrieval::{aligned_relative_error, recover_signal};
use accs_core::rng::derive_seed;
use accs_core::solver::{omp_known_calibration, solve_with_continuation, SolverResult};
use accs_core::transforms::{ComplexGrid, GridShape, PartialFourier, SamplingPattern, Sparsifier};
use accs_core::Complex64;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{CoilMode, ExperimentConfig, ExperimentKind, LambdaSelection, SweepVar};
use crate::error::{HarnessError, Result};
use crate::io::{read_kspace, read_pgm, KSPACE_MAGIC};

// Tags mixed into a trial seed for each random component.
const TAG_BASIS: u64 = 1;
const TAG_OMEGA: u64 = 2;
const TAG_SIGNAL: u64 = 3;
const TAG_COILS: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_SOLVER: u64 = 6;

pub fn trial_seed(master: u64, k: usize, n: usize, c: usize, l: usize, trial: usize) -> u64 {
    derive_seed(master, &[k as u64, n as u64, c as u64, l as u64, trial as u64])
}

/// One synthetic problem: operator, ground truth and (possibly noisy) data.
#[derive(Debug, Clone)]
pub struct Instance {
    pub op: LiftedOperator,
    pub signal: SparseSignal,
    pub h: DMatrix<Complex64>,
    pub x0: LiftedMatrix,
    pub y: DMatrix<Complex64>,
    pub seed: u64,
}

/// Draw the instance for `seed`. Measurements come from the direct
/// per-coil model, not from the lifted operator.
pub fn build_instance(
    cfg: &ExperimentConfig,
    shape: GridShape,
    k: usize,
    n: usize,
    c: usize,
    l: usize,
    seed: u64,
    noise_ratio: f64,
) -> accs_core::Result<Instance> {
    let big_n = shape.len();
    let basis = gen_subspace_basis(cfg.basis, shape, k, derive_seed(seed, &[TAG_BASIS]))?;
    let pattern = if l == big_n {
        SamplingPattern::full(big_n)?
    } else {
        gen_sampling_pattern(big_n, l, derive_seed(seed, &[TAG_OMEGA]))?
    };
    let signal = gen_sparse_signal(big_n, n, derive_seed(seed, &[TAG_SIGNAL]), cfg.value_model)?;
    let h = gen_coil_coeffs(cfg.coil_model, k, c, derive_seed(seed, &[TAG_COILS]))?.h;
    let psi = Sparsifier::new(cfg.sparsifier, shape);
    let fourier = PartialFourier::new(shape, pattern)?;
    let mut meas = synthesize_measurements(&basis, &h, &signal.z, &psi, &fourier)?;
    if noise_ratio > 0.0 {
        meas = add_noise(&meas, NoiseSpec { ratio: noise_ratio, seed: derive_seed(seed, &[TAG_NOISE]) })?;
    }
    let op = LiftedOperator::new(basis, psi, fourier)?;
    let x0 = LiftedMatrix::lift(&signal.z, &h);
    Ok(Instance { op, signal, h, x0, y: meas.y, seed })
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub result: SolverResult,
    /// The `lambda_min_factor` the kept solution was computed with.
    pub lambda_factor: f64,
    /// `||X - X0||_F / ||X0||_F`, when the truth is known.
    pub lifted_relerr: Option<f64>,
}

/// Solve per the configured lambda selection. The oracle grid needs `x0`.
pub fn solve_lifted(
    cfg: &ExperimentConfig,
    op: &LiftedOperator,
    y: &DMatrix<Complex64>,
    x0: Option<&LiftedMatrix>,
    seed: u64,
) -> Result<SolveOutcome> {
    let mut solver = cfg.solver.clone();
    solver.seed = derive_seed(seed, &[TAG_SOLVER]);
    match &cfg.lambda_selection {
        LambdaSelection::Continuation => {
            let result = solve_with_continuation(op, y, &solver)?;
            let lifted_relerr = x0.map(|x0| result.x.rel_err(x0));
            Ok(SolveOutcome { result, lambda_factor: solver.lambda_min_factor, lifted_relerr })
        }
        LambdaSelection::OracleGrid(grid) => {
            let x0 = x0.ok_or_else(|| HarnessError::config("lambda_selection = oracle_grid needs a known ground truth"))?;
            let mut best: Option<SolveOutcome> = None;
            for &factor in grid {
                solver.lambda_min_factor = factor;
                let result = solve_with_continuation(op, y, &solver)?;
                let err = result.x.rel_err(x0);
                if best.as_ref().is_none_or(|b| err < b.lifted_relerr.expect("set")) {
                    best = Some(SolveOutcome { result, lambda_factor: factor, lifted_relerr: Some(err) });
                }
            }
            Ok(best.expect("grid is non-empty"))
        }
    }
}

/// Aligned error of the retrieved `z`; a zero estimate counts as error 1.
pub fn signal_error(x: &LiftedMatrix, psi: &Sparsifier, z: &[Complex64]) -> f64 {
    match recover_signal(x, psi) {
        Ok(rec) => aligned_relative_error(&rec.z_hat, z).unwrap_or(1.0),
        Err(_) => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub k: usize,
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub big_n: usize,
    pub trial: usize,
    pub seed: u64,
    pub noise_ratio: f64,
    pub lambda_factor: f64,
    pub lifted_relerr: f64,
    pub signal_relerr: f64,
    pub success: bool,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Success rule: noiseless trials need `threshold`; noisy trials
/// `noisy_success_factor` times the noise ratio.
pub fn is_success(cfg: &ExperimentConfig, noise_ratio: f64, lifted_relerr: f64) -> bool {
    if noise_ratio > 0.0 {
        lifted_relerr <= cfg.noisy_success_factor * noise_ratio
    } else {
        lifted_relerr <= cfg.success_threshold
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_lifted_trial(
    cfg: &ExperimentConfig,
    k: usize,
    n: usize,
    c: usize,
    l: usize,
    trial: usize,
    noise_ratio: f64,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = trial_seed(cfg.seed, k, n, c, l, trial);
    let inst = build_instance(cfg, cfg.shape, k, n, c, l, seed, noise_ratio)?;
    let out = solve_lifted(cfg, &inst.op, &inst.y, Some(&inst.x0), seed)?;
    let lifted = out.lifted_relerr.expect("truth known");
    let signal = signal_error(&out.result.x, inst.op.sparsifier(), &inst.signal.z);
    Ok(TrialRecord {
        k,
        n,
        c,
        l,
        big_n: cfg.shape.len(),
        trial,
        seed,
        noise_ratio,
        lambda_factor: out.lambda_factor,
        lifted_relerr: lifted,
        signal_relerr: signal,
        success: is_success(cfg, noise_ratio, lifted),
        iterations: out.result.iterations,
        wall_time: start.elapsed(),
    })
}

/// Why a `(k, n, C, L)` cell cannot be run on this grid, if it cannot.
pub fn infeasibility(shape: GridShape, k: usize, n: usize, l: usize) -> Option<String> {
    let big_n = shape.len();
    if k >= big_n {
        Some(format!("k = {k} must be below N = {big_n}"))
    } else if n > big_n {
        Some(format!("n = {n} exceeds N = {big_n}"))
    } else if l > big_n {
        Some(format!("L = {l} exceeds N = {big_n}"))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub k: usize,
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub big_n: usize,
    pub trials: usize,
    pub successes: usize,
    pub noise_ratio: f64,
    pub success_rate: Option<f64>,
    pub mean_lifted_relerr: Option<f64>,
    pub mean_signal_relerr: Option<f64>,
    pub infeasible: Option<String>,
}

impl CellSummary {
    fn from_trials(key: CellKey, big_n: usize, trials: usize, outcome: std::result::Result<&[TrialRecord], String>) -> Self {
        let mut s = CellSummary {
            k: key.k,
            n: key.n,
            c: key.c,
            l: key.l,
            big_n,
            trials,
            successes: 0,
            noise_ratio: key.noise,
            success_rate: None,
            mean_lifted_relerr: None,
            mean_signal_relerr: None,
            infeasible: None,
        };
        match outcome {
            Ok(recs) => {
                let m = recs.len() as f64;
                s.successes = recs.iter().filter(|r| r.success).count();
                s.success_rate = Some(s.successes as f64 / m);
                s.mean_lifted_relerr = Some(recs.iter().map(|r| r.lifted_relerr).sum::<f64>() / m);
                s.mean_signal_relerr = Some(recs.iter().map(|r| r.signal_relerr).sum::<f64>() / m);
            }
            Err(msg) => s.infeasible = Some(msg),
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CellKey {
    k: usize,
    n: usize,
    c: usize,
    l: usize,
    noise: f64,
}

/// Run every trial of each cell in parallel; a cell with any failing trial is
/// reported as infeasible with the first error.
fn run_cells(cfg: &ExperimentConfig, cells: &[CellKey]) -> (Vec<CellSummary>, Vec<TrialRecord>) {
    let big_n = cfg.shape.len();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, key)| infeasibility(cfg.shape, key.k, key.n, key.l).is_none())
        .flat_map(|(i, _)| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let results: Vec<Result<TrialRecord>> = jobs
        .par_iter()
        .map(|&(i, t)| {
            let key = cells[i];
            run_lifted_trial(cfg, key.k, key.n, key.c, key.l, t, key.noise)
        })
        .collect();

    let mut summaries = Vec::with_capacity(cells.len());
    let mut trials = Vec::with_capacity(results.len());
    let mut cursor = 0;
    for (i, key) in cells.iter().enumerate() {
        if let Some(why) = infeasibility(cfg.shape, key.k, key.n, key.l) {
            summaries.push(CellSummary::from_trials(*key, big_n, cfg.trials, Err(why)));
            continue;
        }
        let chunk = &results[cursor..cursor + cfg.trials];
        debug_assert!(jobs[cursor].0 == i);
        cursor += cfg.trials;
        match chunk.iter().find_map(|r| r.as_ref().err()) {
            Some(e) => summaries.push(CellSummary::from_trials(*key, big_n, cfg.trials, Err(e.to_string()))),
            None => {
                let recs: Vec<TrialRecord> = chunk.iter().map(|r| r.as_ref().expect("checked").clone()).collect();
                summaries.push(CellSummary::from_trials(*key, big_n, cfg.trials, Ok(&recs)));
                trials.extend(recs);
            }
        }
    }
    (summaries, trials)
}

/// Run a cell's trials in order, stopping once `target_rate` is out of reach.
/// A stopped cell reports the trials actually run.
fn run_cell_until_decided(cfg: &ExperimentConfig, key: CellKey) -> (CellSummary, Vec<TrialRecord>) {
    let big_n = cfg.shape.len();
    if let Some(why) = infeasibility(cfg.shape, key.k, key.n, key.l) {
        return (CellSummary::from_trials(key, big_n, cfg.trials, Err(why)), Vec::new());
    }
    let needed = (cfg.target_rate * cfg.trials as f64 - 1e-9).ceil() as usize;
    let allowed_failures = cfg.trials - needed.min(cfg.trials);
    let mut recs = Vec::new();
    let mut failures = 0;
    for t in 0..cfg.trials {
        match run_lifted_trial(cfg, key.k, key.n, key.c, key.l, t, key.noise) {
            Ok(r) => {
                failures += usize::from(!r.success);
                recs.push(r);
            }
            Err(e) => return (CellSummary::from_trials(key, big_n, cfg.trials, Err(e.to_string())), Vec::new()),
        }
        if failures > allowed_failures {
            break;
        }
    }
    (CellSummary::from_trials(key, big_n, recs.len(), Ok(&recs)), recs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
}

impl GridRun {
    pub fn cell(&self, k: usize, n: usize, c: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|s| s.k == k && s.n == n && s.c == c)
    }
}

/// Success rates over every `(C, k, n, L)` combination of the config.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<GridRun> {
    let noise = cfg.noise_ratios[0];
    let mut cells = Vec::new();
    for &c in &cfg.coils {
        for &k in &cfg.k {
            for &n in &cfg.n {
                for &l in &cfg.measurements {
                    cells.push(CellKey { k, n, c, l, noise });
                }
            }
        }
    }
    let (cells, trials) = run_cells(cfg, &cells);
    Ok(GridRun { cells, trials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalL {
    pub sweep_var: SweepVar,
    pub sweep_value: usize,
    pub c: usize,
    pub k: usize,
    pub n: usize,
    /// Smallest swept L whose success rate reaches the target.
    pub minimal_l: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LSweepRun {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
    pub minimal: Vec<MinimalL>,
}

/// Success rate against L for each coil count and each value of the swept
/// dimension. With `stop_at_target` each curve ends at its first L reaching
/// `target_rate`, which is also the reported minimal L, and each cell stops
/// as soon as the target is out of reach.
pub fn run_l_sweep(cfg: &ExperimentConfig) -> Result<LSweepRun> {
    let noise = cfg.noise_ratios[0];
    let mut ls = cfg.measurements.clone();
    ls.sort_unstable();
    ls.dedup();
    let values = match cfg.sweep {
        SweepVar::K => &cfg.k,
        SweepVar::N => &cfg.n,
    };
    let curves: Vec<(usize, usize, usize, usize)> = cfg
        .coils
        .iter()
        .flat_map(|&c| {
            values.iter().map(move |&v| match cfg.sweep {
                SweepVar::K => (c, v, v, cfg.n[0]),
                SweepVar::N => (c, v, cfg.k[0], v),
            })
        })
        .collect();

    let per_curve: Vec<(Vec<CellSummary>, Vec<TrialRecord>, MinimalL)> = curves
        .par_iter()
        .map(|&(c, value, k, n)| {
            let mut cells = Vec::new();
            let mut trials = Vec::new();
            let mut minimal = None;
            if cfg.stop_at_target {
                for &l in &ls {
                    let (s, t) = run_cell_until_decided(cfg, CellKey { k, n, c, l, noise });
                    let reached = s.success_rate.is_some_and(|r| r >= cfg.target_rate);
                    cells.push(s);
                    trials.extend(t);
                    if reached {
                        minimal = Some(l);
                        break;
                    }
                }
            } else {
                let keys: Vec<CellKey> = ls.iter().map(|&l| CellKey { k, n, c, l, noise }).collect();
                let (s, t) = run_cells(cfg, &keys);
                minimal = s.iter().find(|s| s.success_rate.is_some_and(|r| r >= cfg.target_rate)).map(|s| s.l);
                cells = s;
                trials = t;
            }
            let m = MinimalL { sweep_var: cfg.sweep, sweep_value: value, c, k, n, minimal_l: minimal };
            (cells, trials, m)
        })
        .collect();

    let mut run = LSweepRun { cells: Vec::new(), trials: Vec::new(), minimal: Vec::new() };
    for (cells, trials, m) in per_curve {
        run.cells.extend(cells);
        run.trials.extend(trials);
        run.minimal.push(m);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoilTrial {
    pub c: usize,
    pub l: usize,
    pub noise_ratio: f64,
    pub realization: usize,
    pub relerr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoilRow {
    pub c: usize,
    pub l: usize,
    pub noise_ratio: f64,
    pub mean_relerr: Option<f64>,
    /// Standard error of the mean over realizations.
    pub stderr: Option<f64>,
    pub infeasible: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoilSweepRun {
    pub rows: Vec<CoilRow>,
    pub trials: Vec<CoilTrial>,
}

impl CoilSweepRun {
    /// Rows for one coil count and noise level, in increasing L.
    pub fn curve(&self, c: usize, noise_ratio: f64) -> Vec<&CoilRow> {
        let mut rows: Vec<&CoilRow> = self.rows.iter().filter(|r| r.c == c && r.noise_ratio == noise_ratio).collect();
        rows.sort_by_key(|r| r.l);
        rows
    }
}

/// Mean aligned error of `z` against L for each coil count. The image `z`
/// and each coil count's coefficients are drawn once; the sampling pattern
/// and noise are redrawn per realization.
pub fn run_coil_sweep(cfg: &ExperimentConfig) -> Result<CoilSweepRun> {
    let shape = cfg.shape;
    let big_n = shape.len();
    let (k, n) = (cfg.k[0], cfg.n[0]);
    if n > big_n || k >= big_n {
        return Err(HarnessError::config(format!("k = {k}, n = {n} do not fit a grid of {big_n}")));
    }
    let basis = gen_subspace_basis(cfg.basis, shape, k, derive_seed(cfg.seed, &[TAG_BASIS]))?;
    let signal = gen_sparse_signal(big_n, n, derive_seed(cfg.seed, &[TAG_SIGNAL]), cfg.value_model)?;
    let psi = Sparsifier::new(cfg.sparsifier, shape);

    let mut keys = Vec::new();
    for (ni, &noise) in cfg.noise_ratios.iter().enumerate() {
        for &c in &cfg.coils {
            for &l in &cfg.measurements {
                keys.push((ni, noise, c, l));
            }
        }
    }
    let why = |c: usize, l: usize| -> Option<String> {
        if l > big_n {
            Some(format!("L = {l} exceeds N = {big_n}"))
        } else if cfg.coil_mode == CoilMode::Omp && n > l * c {
            Some(format!("n = {n} exceeds L*C = {}", l * c))
        } else {
            None
        }
    };
    let jobs: Vec<(usize, usize)> = keys
        .iter()
        .enumerate()
        .filter(|(_, &(_, _, c, l))| why(c, l).is_none())
        .flat_map(|(i, _)| (0..cfg.trials).map(move |r| (i, r)))
        .collect();

    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(i, r)| -> Result<f64> {
            let (ni, noise, c, l) = keys[i];
            let h = gen_coil_coeffs(cfg.coil_model, k, c, derive_seed(cfg.seed, &[TAG_COILS, c as u64]))?.h;
            let seed = derive_seed(cfg.seed, &[c as u64, l as u64, r as u64]);
            let pattern = if l == big_n {
                SamplingPattern::full(big_n)?
            } else {
                gen_sampling_pattern(big_n, l, derive_seed(seed, &[TAG_OMEGA]))?
            };
            let fourier = PartialFourier::new(shape, pattern)?;
            let mut meas = synthesize_measurements(&basis, &h, &signal.z, &psi, &fourier)?;
            if noise > 0.0 {
                let spec = NoiseSpec { ratio: noise, seed: derive_seed(seed, &[TAG_NOISE, ni as u64]) };
                meas = add_noise(&meas, spec)?;
            }
            match cfg.coil_mode {
                CoilMode::Omp => {
                    let sens: Vec<Vec<Complex64>> = (0..c)
                        .map(|col| basis.sensitivity(&h.column(col).iter().copied().collect::<Vec<_>>()))
                        .collect::<accs_core::Result<_>>()?;
                    let res = omp_known_calibration(&sens, &psi, &fourier, &meas.y, n)?;
                    Ok(aligned_relative_error(&res.signal.z, &signal.z)?)
                }
                CoilMode::Blind => {
                    let op = LiftedOperator::new(basis.clone(), psi.clone(), fourier)?;
                    let x0 = LiftedMatrix::lift(&signal.z, &h);
                    let out = solve_lifted(cfg, &op, &meas.y, Some(&x0), seed)?;
                    Ok(signal_error(&out.result.x, &psi, &signal.z))
                }
            }
        })
        .collect();

    let mut run = CoilSweepRun { rows: Vec::new(), trials: Vec::new() };
    let mut cursor = 0;
    for &(_, noise, c, l) in &keys {
        let mut row = CoilRow { c, l, noise_ratio: noise, mean_relerr: None, stderr: None, infeasible: why(c, l) };
        if row.infeasible.is_none() {
            let chunk = &results[cursor..cursor + cfg.trials];
            cursor += cfg.trials;
            if let Some(e) = chunk.iter().find_map(|r| r.as_ref().err()) {
                row.infeasible = Some(e.to_string());
            } else {
                let errs: Vec<f64> = chunk.iter().map(|r| *r.as_ref().expect("checked")).collect();
                let (mean, se) = mean_stderr(&errs);
                row.mean_relerr = Some(mean);
                row.stderr = Some(se);
                for (realization, &relerr) in errs.iter().enumerate() {
                    run.trials.push(CoilTrial { c, l, noise_ratio: noise, realization, relerr });
                }
            }
        }
        run.rows.push(row);
    }
    Ok(run)
}

/// Sample mean and standard error (zero for a single value).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOutput {
    pub shape: GridShape,
    /// Estimated image, scaled to the truth when one is known.
    pub image: ComplexGrid,
    /// Aligned relative error of the image against the truth.
    pub relative_error: Option<f64>,
    pub metrics: Vec<(String, String)>,
}

/// Reconstruct an image from a k-space file, or from a grayscale PGM that is
/// first measured synthetically with the configured coils and sampling.
pub fn run_reconstruct(cfg: &ExperimentConfig) -> Result<ReconstructOutput> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| HarnessError::config("reconstruct needs an 'input' path"))?;
    let head = {
        use std::io::Read;
        let mut buf = [0u8; 4];
        let mut f = std::fs::File::open(input).map_err(|e| crate::error::io_err(input, e))?;
        let got = f.read(&mut buf).map_err(|e| crate::error::io_err(input, e))?;
        buf[..got].to_vec()
    };
    if head.as_slice() == KSPACE_MAGIC {
        reconstruct_kspace(cfg, input)
    } else if head.starts_with(b"P5") || head.starts_with(b"P2") {
        reconstruct_image(cfg, input)
    } else {
        Err(HarnessError::io(format!(
            "{}: unrecognized input (expected ACSK k-space or a P5/P2 PGM)",
            input.display()
        )))
    }
}

fn finish_reconstruct(
    cfg: &ExperimentConfig,
    op: &LiftedOperator,
    out: &SolveOutcome,
    truth: Option<&[Complex64]>,
    mut metrics: Vec<(String, String)>,
    c: usize,
) -> Result<ReconstructOutput> {
    let rec = recover_signal(&out.result.x, op.sparsifier())?;
    let mut image = rec.x_hat.as_slice().to_vec();
    let mut relative_error = None;
    if let Some(t) = truth {
        let err = aligned_relative_error(&image, t)?;
        let alpha = accs_core::linalg::inner(&image, t) / accs_core::linalg::norm_sqr(&image);
        image.iter_mut().for_each(|v| *v *= alpha);
        relative_error = Some(err);
        metrics.insert(0, ("relative_error".into(), format!("{err:.6e}")));
    }
    let lambda = out.result.lambdas.last().copied().unwrap_or(0.0);
    metrics.extend([
        ("residual".to_string(), format!("{:.6e}", out.result.residual)),
        ("lambda".to_string(), format!("{lambda:.6e}")),
        ("lambda_factor".to_string(), format!("{:e}", out.lambda_factor)),
        ("iterations".to_string(), out.result.iterations.to_string()),
        ("converged".to_string(), out.result.converged.to_string()),
        ("restarts".to_string(), out.result.restarts.to_string()),
        ("grid".to_string(), op.shape().to_string()),
        ("N".to_string(), op.grid_len().to_string()),
        ("L".to_string(), op.num_samples().to_string()),
        ("C".to_string(), c.to_string()),
        ("k".to_string(), op.k().to_string()),
        ("regularizer".to_string(), format!("{:?}", cfg.solver.regularizer)),
        ("used_fallback".to_string(), rec.used_fallback.to_string()),
    ]);
    let image = ComplexGrid::new(op.shape(), image)?;
    Ok(ReconstructOutput { shape: op.shape(), image, relative_error, metrics })
}

fn reconstruct_image(cfg: &ExperimentConfig, input: &std::path::Path) -> Result<ReconstructOutput> {
    let (shape, pixels) = read_pgm(input)?;
    let big_n = shape.len();
    let (k, c, noise) = (cfg.k[0], cfg.coils[0], cfg.noise_ratios[0]);
    let l = match (cfg.measurements.first(), cfg.reduction) {
        (Some(&l), _) => l,
        (None, Some(r)) => ((big_n as f64 / r).round() as usize).max(1),
        (None, None) => big_n,
    };
    if l > big_n || k >= big_n {
        return Err(HarnessError::config(format!("L = {l}, k = {k} do not fit the {shape} image")));
    }
    let truth: Vec<Complex64> = pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    if truth.iter().all(|v| v.re == 0.0) {
        return Err(HarnessError::io(format!("{}: image is all zero", input.display())));
    }
    let seed = derive_seed(cfg.seed, &[k as u64, c as u64, l as u64]);
    let basis = gen_subspace_basis(cfg.basis, shape, k, derive_seed(seed, &[TAG_BASIS]))?;
    let pattern = if l == big_n {
        SamplingPattern::full(big_n)?
    } else {
        gen_sampling_pattern(big_n, l, derive_seed(seed, &[TAG_OMEGA]))?
    };
    let h = gen_coil_coeffs(cfg.coil_model, k, c, derive_seed(seed, &[TAG_COILS]))?.h;
    let psi = Sparsifier::new(cfg.sparsifier, shape);
    let fourier = PartialFourier::new(shape, pattern)?;
    let z = psi.sparsify(&ComplexGrid::new(shape, truth.clone())?)?.into_vec();
    let mut meas = synthesize_measurements(&basis, &h, &z, &psi, &fourier)?;
    if noise > 0.0 {
        meas = add_noise(&meas, NoiseSpec { ratio: noise, seed: derive_seed(seed, &[TAG_NOISE]) })?;
    }
    let op = LiftedOperator::new(basis, psi, fourier)?;
    let x0 = LiftedMatrix::lift(&z, &h);
    let out = solve_lifted(cfg, &op, &meas.y, Some(&x0), seed)?;
    let metrics = vec![
        ("input_kind".to_string(), "image".to_string()),
        ("noise_ratio".to_string(), format!("{noise}")),
        ("lifted_relerr".to_string(), format!("{:.6e}", out.lifted_relerr.expect("truth known"))),
    ];
    finish_reconstruct(cfg, &op, &out, Some(&truth), metrics, c)
}

fn reconstruct_kspace(cfg: &ExperimentConfig, input: &std::path::Path) -> Result<ReconstructOutput> {
    if matches!(cfg.lambda_selection, LambdaSelection::OracleGrid(_)) {
        return Err(HarnessError::config("oracle lambda selection needs ground truth; k-space input has none"));
    }
    let data = read_kspace(input)?;
    let basis = match data.basis {
        Some(b) => SubspaceBasis::new(b).map_err(|e| HarnessError::io(format!("{}: stored B: {e}", input.display())))?,
        None => gen_subspace_basis(cfg.basis, data.shape, data.k, derive_seed(cfg.seed, &[TAG_BASIS]))?,
    };
    let c = data.y.ncols();
    let op = LiftedOperator::new(basis, Sparsifier::new(cfg.sparsifier, data.shape), PartialFourier::new(data.shape, data.pattern)?)?;
    let out = solve_lifted(cfg, &op, &data.y, None, cfg.seed)?;
    let metrics = vec![("input_kind".to_string(), "kspace".to_string())];
    finish_reconstruct(cfg, &op, &out, None, metrics, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyRow {
    pub trial: usize,
    pub seed: u64,
    pub report: CertificateReport,
    /// Lifted error after solving, for certified instances when solving is on.
    pub lifted_relerr: Option<f64>,
    pub lambda_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyRun {
    pub k: usize,
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub big_n: usize,
    pub noise_ratio: f64,
    pub rows: Vec<CertifyRow>,
}

impl CertifyRun {
    /// Per-instance certificate reports as `key=value` blocks.
    pub fn log(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!("[instance {}]\nseed={}\n", r.trial, r.seed));
            s.push_str(&r.report.to_string());
            if let Some(e) = r.lifted_relerr {
                s.push_str(&format!("lifted_relerr={e:.6e}\n"));
            }
            s.push('\n');
        }
        s
    }
}

/// Exact dual certificates for `trials` random instances (the same instances
/// a phase-transition run with this seed would draw), optionally solving the
/// certified ones.
pub fn run_certify(cfg: &ExperimentConfig) -> Result<CertifyRun> {
    let (k, n, c, l) = (cfg.k[0], cfg.n[0], cfg.coils[0], cfg.measurements[0]);
    let noise = cfg.noise_ratios[0];
    if let Some(why) = infeasibility(cfg.shape, k, n, l) {
        return Err(HarnessError::config(why));
    }
    let rows: Vec<Result<CertifyRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<CertifyRow> {
            let seed = trial_seed(cfg.seed, k, n, c, l, trial);
            let inst = build_instance(cfg, cfg.shape, k, n, c, l, seed, noise)?;
            let a = inst.op.materialize_dense()?;
            let cert = exact_dual_certificate(&a, k, &inst.signal.support, &block_sign(&inst.x0))?;
            let mut row = CertifyRow { trial, seed, report: cert.report, lifted_relerr: None, lambda_factor: None };
            if cfg.certify_solve && cert.report.verdict {
                let out = solve_lifted(cfg, &inst.op, &inst.y, Some(&inst.x0), seed)?;
                row.lifted_relerr = out.lifted_relerr;
                row.lambda_factor = Some(out.lambda_factor);
            }
            Ok(row)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CertifyRun { k, n, c, l, big_n: cfg.shape.len(), noise_ratio: noise, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    PhaseTransition(GridRun),
    LSweep(LSweepRun),
    CoilSweep(CoilSweepRun),
    Reconstruct(ReconstructOutput),
    Certify(CertifyRun),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    Ok(match cfg.kind {
        ExperimentKind::PhaseTransition => RunOutput::PhaseTransition(run_phase_transition(cfg)?),
        ExperimentKind::LSweep => RunOutput::LSweep(run_l_sweep(cfg)?),
        ExperimentKind::CoilSweep => RunOutput::CoilSweep(run_coil_sweep(cfg)?),
        ExperimentKind::Reconstruct => RunOutput::Reconstruct(run_reconstruct(cfg)?),
        ExperimentKind::Certify => RunOutput::Certify(run_certify(cfg)?),
    })
}
