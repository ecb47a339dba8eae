use accs::config::{CoilMode, ExperimentConfig, ExperimentKind, SweepVar};
use accs::experiments::{
    build_instance, mean_stderr, run_certify, run_coil_sweep, run_l_sweep, run_lifted_trial, run_phase_transition,
    run_reconstruct, trial_seed,
};
use accs::io::{write_kspace, write_pgm, KspaceData};
use accs_core::retrieval::aligned_relative_error;
use accs_core::transforms::{ComplexGrid, GridShape, Sparsifier, SparsifierKind};
use accs_core::Complex64;

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.shape = GridShape::line(32).unwrap();
    cfg.solver.stages = 6;
    cfg.solver.max_iters = 300;
    cfg
}

/// A 16x16 image with a DC term and three DCT coefficients away from the
/// coil band, shifted and scaled into 16-bit range. Low DCT frequencies are
/// avoided because a smooth coil times the DC term nearly equals them.
fn dct_sparse_image() -> (GridShape, Vec<f64>) {
    let shape = GridShape::new(16, 16).unwrap();
    let psi = Sparsifier::new(SparsifierKind::Dct2, shape);
    let mut z = ComplexGrid::zeros(shape);
    for (idx, v) in [(0, 40.0), (shape.index(5, 3), 9.0), (shape.index(9, 12), -6.0), (shape.index(2, 11), 4.0)] {
        z.as_mut_slice()[idx] = Complex64::new(v, 0.0);
    }
    let x = psi.unsparsify(&z).unwrap();
    let lo = x.as_slice().iter().map(|v| v.re).fold(0.0, f64::min);
    let hi = x.as_slice().iter().map(|v| v.re).fold(f64::MIN, f64::max);
    (shape, x.as_slice().iter().map(|v| ((v.re - lo) / (hi - lo) * 65535.0).round()).collect())
}

#[test]
fn reconstruct_from_fully_sampled_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let (shape, pixels) = dct_sparse_image();
    let path = dir.path().join("truth.pgm");
    write_pgm(&path, shape, &pixels).unwrap();

    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Reconstruct);
    cfg.input = Some(path);
    cfg.k = vec![4];
    cfg.coils = vec![4];
    cfg.measurements = vec![shape.len()];
    let out = run_reconstruct(&cfg).unwrap();
    let err = out.relative_error.unwrap();
    assert!(err <= 1e-3, "aligned error {err}: {:?}", out.metrics);
    assert!(out.metrics.iter().any(|(k, v)| k == "input_kind" && v == "image"));

    // The returned image is already aligned to the truth.
    let truth: Vec<Complex64> = pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let direct = accs_core::linalg::rel_err(out.image.as_slice(), &truth);
    assert!((direct - err).abs() < 1e-9, "{direct} vs {err}");
}

#[test]
fn reconstruct_from_kspace_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::PhaseTransition);
    let inst = build_instance(&cfg, cfg.shape, 2, 2, 3, 28, 11, 0.0).unwrap();
    let data = KspaceData {
        shape: cfg.shape,
        k: 2,
        pattern: inst.op.fourier().pattern().clone(),
        y: inst.y.clone(),
        basis: Some(inst.op.basis().matrix().clone()),
    };
    let path = dir.path().join("y.acsk");
    write_kspace(&path, &data).unwrap();

    cfg.kind = ExperimentKind::Reconstruct;
    cfg.input = Some(path);
    let out = run_reconstruct(&cfg).unwrap();
    assert!(out.relative_error.is_none());
    let psi = inst.op.sparsifier();
    let truth = psi.unsparsify(&ComplexGrid::new(cfg.shape, inst.signal.z.clone()).unwrap()).unwrap();
    let err = aligned_relative_error(out.image.as_slice(), truth.as_slice()).unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn reconstruct_rejects_oracle_lambda_on_kspace() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::PhaseTransition);
    let inst = build_instance(&cfg, cfg.shape, 1, 1, 1, 8, 1, 0.0).unwrap();
    let data = KspaceData { shape: cfg.shape, k: 1, pattern: inst.op.fourier().pattern().clone(), y: inst.y, basis: None };
    let path = dir.path().join("y.acsk");
    write_kspace(&path, &data).unwrap();
    cfg.kind = ExperimentKind::Reconstruct;
    cfg.input = Some(path);
    cfg.lambda_selection = accs::config::LambdaSelection::OracleGrid(vec![0.1]);
    assert_eq!(run_reconstruct(&cfg).unwrap_err().exit_code(), 2);
}

#[test]
fn phase_transition_cells_and_infeasible_marking() {
    let mut cfg = small(ExperimentKind::PhaseTransition);
    cfg.k = vec![1, 40];
    cfg.n = vec![1];
    cfg.coils = vec![2];
    cfg.measurements = vec![24];
    cfg.trials = 3;
    let run = run_phase_transition(&cfg).unwrap();
    assert_eq!(run.cells.len(), 2);
    let easy = run.cell(1, 1, 2).unwrap();
    assert_eq!(easy.success_rate, Some(1.0));
    assert_eq!(easy.successes, 3);
    let bad = run.cell(40, 1, 2).unwrap();
    assert!(bad.success_rate.is_none() && bad.infeasible.is_some());
    assert_eq!(run.trials.len(), 3);

    // Any single trial reruns in isolation with the same outcome.
    let t = &run.trials[1];
    assert_eq!(t.seed, trial_seed(cfg.seed, 1, 1, 2, 24, 1));
    let again = run_lifted_trial(&cfg, 1, 1, 2, 24, 1, 0.0).unwrap();
    assert_eq!(again.lifted_relerr, t.lifted_relerr);
    assert_eq!(again.iterations, t.iterations);
}

#[test]
fn noisy_trials_use_relative_rule() {
    let mut cfg = small(ExperimentKind::PhaseTransition);
    cfg.noise_ratios = vec![0.05];
    let rec = run_lifted_trial(&cfg, 1, 2, 2, 28, 0, 0.05).unwrap();
    assert_eq!(rec.success, rec.lifted_relerr <= 0.1);
    assert!(rec.lifted_relerr < 0.5, "{}", rec.lifted_relerr);
}

#[test]
fn l_sweep_stops_at_target() {
    let mut cfg = small(ExperimentKind::LSweep);
    cfg.sweep = SweepVar::N;
    cfg.k = vec![1];
    cfg.n = vec![1, 2];
    cfg.coils = vec![2];
    cfg.measurements = (4..=32).step_by(4).collect();
    cfg.trials = 3;
    cfg.stop_at_target = true;
    let run = run_l_sweep(&cfg).unwrap();
    assert_eq!(run.minimal.len(), 2);
    for m in &run.minimal {
        let l = m.minimal_l.expect("easy curves reach the target");
        let curve: Vec<_> = run.cells.iter().filter(|c| c.n == m.n).collect();
        assert_eq!(curve.last().unwrap().l, l);
        assert!(curve[..curve.len() - 1].iter().all(|c| c.success_rate.unwrap() < cfg.target_rate));
        assert_eq!(curve.last().unwrap().trials, cfg.trials);
    }

    // Without early stopping every L is run and the minimum agrees.
    cfg.stop_at_target = false;
    let full = run_l_sweep(&cfg).unwrap();
    assert_eq!(full.cells.len(), 2 * cfg.measurements.len());
    for (a, b) in run.minimal.iter().zip(&full.minimal) {
        assert_eq!(a.minimal_l, b.minimal_l);
    }
}

#[test]
fn coil_sweep_omp_error_falls_with_l() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::CoilSweep);
    cfg.shape = GridShape::new(12, 12).unwrap();
    cfg.k = vec![4];
    cfg.n = vec![10];
    cfg.coils = vec![1, 4];
    cfg.measurements = vec![4, 20, 80];
    cfg.trials = 4;
    cfg.coil_mode = CoilMode::Omp;
    let run = run_coil_sweep(&cfg).unwrap();
    assert_eq!(run.rows.len(), 6);
    let c1 = run.curve(1, 0.0);
    assert!(c1[0].infeasible.is_some(), "n > L*C must be flagged");
    let c4 = run.curve(4, 0.0);
    let errs: Vec<f64> = c4.iter().map(|r| r.mean_relerr.unwrap()).collect();
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[2] < 1e-6, "{errs:?}");
    assert_eq!(run.trials.len(), 5 * 4);
}

#[test]
fn mean_and_standard_error() {
    let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    // sample std sqrt(5/3), over sqrt(4)
    assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
}

#[test]
fn certify_is_deterministic_and_consistent() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Certify);
    cfg.trials = 4;
    cfg.certify_solve = false;
    let a = run_certify(&cfg).unwrap();
    let b = run_certify(&cfg).unwrap();
    assert_eq!(a, b);
    for r in &a.rows {
        assert_eq!(r.report.support_size, 3);
        assert!(r.report.delta < 1.0);
        assert_eq!(r.report.verdict, r.report.rho < 1.0);
    }
    assert_eq!(a.log().matches("[instance").count(), 4);
}

#[test]
fn noisy_reduced_reconstruct_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (shape, pixels) = dct_sparse_image();
    let path = dir.path().join("truth.pgm");
    write_pgm(&path, shape, &pixels).unwrap();
    let text = format!("input = {}\nnoise_ratio = 0.05\nreduction = 2\n", path.display());
    let cfg = ExperimentConfig::parse(&text, ExperimentKind::Reconstruct).unwrap();
    let out = run_reconstruct(&cfg).unwrap();
    assert!(out.relative_error.unwrap().is_finite());
    let l = out.metrics.iter().find(|(k, _)| k == "L").unwrap();
    assert_eq!(l.1, "128");
    for key in ["relative_error", "residual", "lambda", "iterations"] {
        assert!(out.metrics.iter().any(|(k, _)| k == key), "{key}");
    }
}
