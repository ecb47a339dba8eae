//! Result files. CSVs hold only deterministic quantities; timings go to
//! `run.meta`, so two runs with the same seed give byte-identical CSVs.

use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::config::{ExperimentConfig, SweepVar};
use crate::error::{io_err, Result};
use crate::experiments::{CellSummary, CertifyRun, CoilSweepRun, LSweepRun, ReconstructOutput, RunOutput, TrialRecord};
use crate::io::{key_values, write_pgm, write_text, CsvTable};

pub const CSV_VERSION: u32 = 1;

fn na(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "NA".to_string())
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn rate(v: f64) -> String {
    format!("{v:.4}")
}

fn cell_row(s: &CellSummary) -> Vec<String> {
    vec![
        s.k.to_string(),
        s.n.to_string(),
        s.c.to_string(),
        s.l.to_string(),
        s.big_n.to_string(),
        s.trials.to_string(),
        s.successes.to_string(),
        na(s.success_rate, rate),
        na(s.mean_lifted_relerr, sci),
        na(s.mean_signal_relerr, sci),
    ]
}

const CELL_COLUMNS: [&str; 10] = [
    "k",
    "n",
    "C",
    "L",
    "N",
    "trials",
    "successes",
    "success_rate",
    "mean_lifted_relerr",
    "mean_signal_relerr",
];

fn cell_table(cells: &[CellSummary]) -> CsvTable {
    let mut t = CsvTable::new(&CELL_COLUMNS);
    for s in cells {
        t.push(cell_row(s));
    }
    t
}

fn l_sweep_table(cells: &[CellSummary], sweep: SweepVar) -> CsvTable {
    let mut header = vec!["sweep_var", "sweep_value"];
    header.extend(CELL_COLUMNS);
    let mut t = CsvTable::new(&header);
    for s in cells {
        let value = match sweep {
            SweepVar::K => s.k,
            SweepVar::N => s.n,
        };
        let mut row = vec![sweep.name().to_string(), value.to_string()];
        row.extend(cell_row(s));
        t.push(row);
    }
    t
}

fn trial_table(trials: &[TrialRecord]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "k",
        "n",
        "C",
        "L",
        "N",
        "trial",
        "seed",
        "noise_ratio",
        "lambda_factor",
        "lifted_relerr",
        "signal_relerr",
        "success",
        "iterations",
    ]);
    for r in trials {
        t.push(vec![
            r.k.to_string(),
            r.n.to_string(),
            r.c.to_string(),
            r.l.to_string(),
            r.big_n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.noise_ratio.to_string(),
            format!("{:e}", r.lambda_factor),
            sci(r.lifted_relerr),
            sci(r.signal_relerr),
            r.success.to_string(),
            r.iterations.to_string(),
        ]);
    }
    t
}

fn minimal_table(run: &LSweepRun, target: f64) -> CsvTable {
    let mut t = CsvTable::new(&["sweep_var", "sweep_value", "C", "k", "n", "target_rate", "minimal_L"]);
    for m in &run.minimal {
        t.push(vec![
            m.sweep_var.name().to_string(),
            m.sweep_value.to_string(),
            m.c.to_string(),
            m.k.to_string(),
            m.n.to_string(),
            rate(target),
            m.minimal_l.map(|l| l.to_string()).unwrap_or_else(|| "NA".into()),
        ]);
    }
    t
}

fn coil_tables(run: &CoilSweepRun) -> (CsvTable, CsvTable) {
    let mut rows = CsvTable::new(&["C", "L", "noise_ratio", "mean_relerr", "stderr"]);
    for r in &run.rows {
        rows.push(vec![
            r.c.to_string(),
            r.l.to_string(),
            r.noise_ratio.to_string(),
            na(r.mean_relerr, sci),
            na(r.stderr, sci),
        ]);
    }
    let mut trials = CsvTable::new(&["C", "L", "noise_ratio", "realization", "relerr"]);
    for t in &run.trials {
        trials.push(vec![
            t.c.to_string(),
            t.l.to_string(),
            t.noise_ratio.to_string(),
            t.realization.to_string(),
            sci(t.relerr),
        ]);
    }
    (rows, trials)
}

fn certify_table(run: &CertifyRun) -> CsvTable {
    let mut t = CsvTable::new(&[
        "trial",
        "seed",
        "k",
        "n",
        "C",
        "L",
        "N",
        "support_size",
        "delta",
        "beta",
        "eta",
        "theta",
        "tau_times_sqrt_s",
        "rho",
        "norm_bound",
        "verdict",
        "lifted_relerr",
    ]);
    for r in &run.rows {
        let p = &r.report;
        t.push(vec![
            r.trial.to_string(),
            r.seed.to_string(),
            run.k.to_string(),
            run.n.to_string(),
            run.c.to_string(),
            run.l.to_string(),
            run.big_n.to_string(),
            p.support_size.to_string(),
            sci(p.delta),
            sci(p.beta),
            sci(p.eta),
            sci(p.theta),
            sci(p.tau_times_sqrt_s),
            sci(p.rho),
            sci(p.norm_bound),
            p.verdict.to_string(),
            na(r.lifted_relerr, sci),
        ]);
    }
    t
}

fn write_image(dir: &Path, cfg: &ExperimentConfig, out: &ReconstructOutput) -> Result<()> {
    let mags: Vec<f64> = out.image.as_slice().iter().map(|v| v.norm()).collect();
    write_pgm(&dir.join(&cfg.output_image), out.shape, &mags)?;
    write_text(&dir.join("metrics.txt"), &key_values(&out.metrics))
}

/// Timing and provenance written alongside the results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub threads: usize,
    pub wall_time: Duration,
}

/// Write every result file of `run` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, run: &RunOutput, meta: &RunMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut lines: Vec<(String, String)> = vec![
        ("csv_version".into(), CSV_VERSION.to_string()),
        ("accs_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("experiment".into(), cfg.kind.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("grid".into(), cfg.shape.to_string()),
        ("threads".into(), meta.threads.to_string()),
        ("wall_time_s".into(), format!("{:.3}", meta.wall_time.as_secs_f64())),
    ];
    let mut timing = |trials: &[TrialRecord]| {
        if !trials.is_empty() {
            let secs: Vec<f64> = trials.iter().map(|t| t.wall_time.as_secs_f64()).collect();
            let max = secs.iter().cloned().fold(0.0, f64::max);
            lines.push(("trials_run".into(), trials.len().to_string()));
            lines.push(("mean_trial_time_s".into(), format!("{:.4}", secs.iter().sum::<f64>() / secs.len() as f64)));
            lines.push(("max_trial_time_s".into(), format!("{max:.4}")));
        }
    };
    let infeasible = |cells: &[CellSummary]| -> Vec<(String, String)> {
        cells
            .iter()
            .filter_map(|s| {
                s.infeasible
                    .as_ref()
                    .map(|why| (format!("infeasible.k{}_n{}_C{}_L{}", s.k, s.n, s.c, s.l), why.clone()))
            })
            .collect()
    };
    match run {
        RunOutput::PhaseTransition(g) => {
            cell_table(&g.cells).write(&dir.join("phase_transition.csv"))?;
            trial_table(&g.trials).write(&dir.join("trials.csv"))?;
            timing(&g.trials);
            lines.extend(infeasible(&g.cells));
        }
        RunOutput::LSweep(s) => {
            l_sweep_table(&s.cells, cfg.sweep).write(&dir.join("l_sweep.csv"))?;
            minimal_table(s, cfg.target_rate).write(&dir.join("l_sweep_minimal.csv"))?;
            trial_table(&s.trials).write(&dir.join("trials.csv"))?;
            timing(&s.trials);
            lines.extend(infeasible(&s.cells));
        }
        RunOutput::CoilSweep(c) => {
            let (rows, trials) = coil_tables(c);
            rows.write(&dir.join("coil_sweep.csv"))?;
            trials.write(&dir.join("trials.csv"))?;
            for r in &c.rows {
                if let Some(why) = &r.infeasible {
                    lines.push((format!("infeasible.C{}_L{}_noise{}", r.c, r.l, r.noise_ratio), why.clone()));
                }
            }
        }
        RunOutput::Reconstruct(r) => write_image(dir, cfg, r)?,
        RunOutput::Certify(c) => {
            certify_table(c).write(&dir.join("certify.csv"))?;
            write_text(&dir.join("certify.log"), &c.log())?;
        }
    }
    write_text(&dir.join("run.meta"), &key_values(&lines))
}
