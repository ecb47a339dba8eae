//! Experiment configuration files.
//!
//! Line-based UTF-8, one `key = value` per line, `#` starts a comment. List
//! values are comma separated; integer items may also be inclusive ranges
//! `a..b` or stepped ranges `a..b:step`. Unknown and repeated keys are errors.
//!
//! ```text
//! experiment = phase_transition
//! grid = 256          # or 16x16
//! k = 1..15
//! n = 1..15
//! coils = 1, 2, 4, 8
//! measurements = 128
//! trials = 10
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use accs_core::modelgen::{BasisKind, CoilModel, ValueModel};
use accs_core::solver::{SolverConfig, StepMode};
use accs_core::transforms::{GridShape, SparsifierKind};

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    PhaseTransition,
    LSweep,
    CoilSweep,
    Reconstruct,
    Certify,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::PhaseTransition => "phase_transition",
            ExperimentKind::LSweep => "l_sweep",
            ExperimentKind::CoilSweep => "coil_sweep",
            ExperimentKind::Reconstruct => "reconstruct",
            ExperimentKind::Certify => "certify",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "phase_transition" => ExperimentKind::PhaseTransition,
            "l_sweep" => ExperimentKind::LSweep,
            "coil_sweep" => ExperimentKind::CoilSweep,
            "reconstruct" => ExperimentKind::Reconstruct,
            "certify" => ExperimentKind::Certify,
            other => return Err(format!("unknown experiment '{other}'")),
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which dimension an L sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    K,
    N,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::K => "k",
            SweepVar::N => "n",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoilMode {
    /// Greedy recovery with the true sensitivities.
    Omp,
    /// Lifted block-sparse recovery without calibration.
    Blind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSelection {
    /// Run the configured continuation down to `lambda_min_factor`.
    Continuation,
    /// Try each final factor in the list and keep the one with the smallest
    /// error against the ground truth.
    OracleGrid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub shape: GridShape,
    pub sparsifier: SparsifierKind,
    pub basis: BasisKind,
    pub coil_model: CoilModel,
    pub value_model: ValueModel,
    pub k: Vec<usize>,
    pub n: Vec<usize>,
    pub coils: Vec<usize>,
    pub measurements: Vec<usize>,
    /// Reconstruct only: `L = round(N / R)` once the grid is known.
    pub reduction: Option<f64>,
    /// Trials per cell (realizations for the coil sweep, instances for certify).
    pub trials: usize,
    pub noise_ratios: Vec<f64>,
    /// Noiseless success: lifted relative error at most this.
    pub success_threshold: f64,
    /// Noisy success: lifted relative error at most this times the noise ratio.
    pub noisy_success_factor: f64,
    pub lambda_selection: LambdaSelection,
    pub solver: SolverConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub sweep: SweepVar,
    pub target_rate: f64,
    /// Stop an L sweep curve at the first L reaching `target_rate`.
    pub stop_at_target: bool,
    pub coil_mode: CoilMode,
    pub input: Option<PathBuf>,
    pub output_image: String,
    /// Solve each certify instance after computing its certificate.
    pub certify_solve: bool,
}

impl ExperimentConfig {
    /// Defaults for each experiment, before any file keys are applied.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let line256 = GridShape::line(256).expect("valid");
        let base = ExperimentConfig {
            kind,
            shape: line256,
            sparsifier: SparsifierKind::Dct2,
            basis: BasisKind::Haar,
            coil_model: CoilModel::ComplexSphere,
            value_model: ValueModel::Gaussian,
            k: (1..=15).collect(),
            n: (1..=15).collect(),
            coils: vec![1, 2, 4, 8],
            measurements: vec![128],
            reduction: None,
            trials: 10,
            noise_ratios: vec![0.0],
            success_threshold: 1e-4,
            noisy_success_factor: 2.0,
            lambda_selection: LambdaSelection::Continuation,
            solver: SolverConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            sweep: SweepVar::K,
            target_rate: 0.9,
            stop_at_target: false,
            coil_mode: CoilMode::Omp,
            input: None,
            output_image: "reconstruction.pgm".into(),
            certify_solve: true,
        };
        match kind {
            ExperimentKind::PhaseTransition => base,
            ExperimentKind::LSweep => ExperimentConfig {
                n: vec![5],
                coils: vec![1, 4],
                measurements: (10..=200).step_by(10).collect(),
                ..base
            },
            ExperimentKind::CoilSweep => ExperimentConfig {
                shape: GridShape::new(23, 23).expect("valid"),
                basis: BasisKind::Sin2d,
                k: vec![6],
                n: vec![32],
                coils: vec![2, 4, 6, 8, 12, 16, 24, 36],
                measurements: (32..=192).step_by(8).collect(),
                ..base
            },
            ExperimentKind::Reconstruct => ExperimentConfig {
                basis: BasisKind::Sin2d,
                k: vec![4],
                n: vec![1],
                coils: vec![4],
                measurements: vec![],
                trials: 1,
                ..base
            },
            ExperimentKind::Certify => ExperimentConfig {
                shape: GridShape::line(64).expect("valid"),
                k: vec![2],
                n: vec![3],
                coils: vec![4],
                measurements: vec![48],
                trials: 50,
                ..base
            },
        }
    }

    pub fn from_file(path: &Path, fallback: ExperimentKind) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text, fallback).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parse config text. `fallback` is the experiment used when the file has
    /// no `experiment` key.
    pub fn parse(text: &str, fallback: ExperimentKind) -> Result<Self> {
        let entries = parse_entries(text)?;
        let kind = match entries.get("experiment") {
            Some((line, v)) => v.parse().map_err(|e| at(*line, e))?,
            None => fallback,
        };
        let mut cfg = Self::defaults(kind);
        let mut reduction: Option<(usize, f64)> = None;
        for (key, (line, value)) in &entries {
            let line = *line;
            let v = value.as_str();
            match key.as_str() {
                "experiment" => {}
                "grid" => cfg.shape = parse_grid(v).map_err(|e| at(line, e))?,
                "sparsifier" => cfg.sparsifier = v.parse().map_err(|e: accs_core::Error| at(line, e))?,
                "basis" => cfg.basis = v.parse().map_err(|e: accs_core::Error| at(line, e))?,
                "coil_model" => cfg.coil_model = v.parse().map_err(|e: accs_core::Error| at(line, e))?,
                "value_model" => cfg.value_model = v.parse().map_err(|e: accs_core::Error| at(line, e))?,
                "k" => cfg.k = parse_usize_list(v).map_err(|e| at(line, e))?,
                "n" => cfg.n = parse_usize_list(v).map_err(|e| at(line, e))?,
                "coils" => cfg.coils = parse_usize_list(v).map_err(|e| at(line, e))?,
                "measurements" => cfg.measurements = parse_usize_list(v).map_err(|e| at(line, e))?,
                "reduction" => reduction = Some((line, parse_num::<f64>(v).map_err(|e| at(line, e))?)),
                "trials" => cfg.trials = parse_num(v).map_err(|e| at(line, e))?,
                "noise_ratio" => cfg.noise_ratios = parse_f64_list(v).map_err(|e| at(line, e))?,
                "success_threshold" => cfg.success_threshold = parse_num(v).map_err(|e| at(line, e))?,
                "noisy_success_factor" => cfg.noisy_success_factor = parse_num(v).map_err(|e| at(line, e))?,
                "lambda_selection" => match v {
                    "continuation" => cfg.lambda_selection = LambdaSelection::Continuation,
                    "oracle_grid" => {
                        if !matches!(cfg.lambda_selection, LambdaSelection::OracleGrid(_)) {
                            cfg.lambda_selection = LambdaSelection::OracleGrid(default_lambda_grid());
                        }
                    }
                    other => return Err(at(line, format!("unknown lambda_selection '{other}'"))),
                },
                "lambda_grid" => {
                    let grid = parse_f64_list(v).map_err(|e| at(line, e))?;
                    if !grid.iter().all(|g| *g > 0.0 && *g <= 1.0) {
                        return Err(at(line, "lambda_grid factors must lie in (0, 1]"));
                    }
                    cfg.lambda_selection = LambdaSelection::OracleGrid(grid);
                }
                "solver.regularizer" => cfg.solver.regularizer = v.parse().map_err(|e: accs_core::Error| at(line, e))?,
                "solver.lambda_max_factor" => cfg.solver.lambda_max_factor = parse_num(v).map_err(|e| at(line, e))?,
                "solver.lambda_min_factor" => cfg.solver.lambda_min_factor = parse_num(v).map_err(|e| at(line, e))?,
                "solver.stages" => cfg.solver.stages = parse_num(v).map_err(|e| at(line, e))?,
                "solver.max_iters" => cfg.solver.max_iters = parse_num(v).map_err(|e| at(line, e))?,
                "solver.rel_change_tol" => cfg.solver.rel_change_tol = parse_num(v).map_err(|e| at(line, e))?,
                "solver.power_iters" => cfg.solver.power_iters = parse_num(v).map_err(|e| at(line, e))?,
                "solver.power_tol" => cfg.solver.power_tol = parse_num(v).map_err(|e| at(line, e))?,
                "solver.step" => {
                    cfg.solver.step_mode = if v == "power" {
                        StepMode::PowerIteration
                    } else {
                        StepMode::Fixed(parse_num(v).map_err(|e| at(line, e))?)
                    }
                }
                "seed" => cfg.seed = parse_num(v).map_err(|e| at(line, e))?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "sweep" => {
                    cfg.sweep = match v {
                        "k" => SweepVar::K,
                        "n" => SweepVar::N,
                        other => return Err(at(line, format!("sweep must be k or n, got '{other}'"))),
                    }
                }
                "target_rate" => cfg.target_rate = parse_num(v).map_err(|e| at(line, e))?,
                "stop_at_target" => cfg.stop_at_target = parse_bool(v).map_err(|e| at(line, e))?,
                "coil_mode" => {
                    cfg.coil_mode = match v {
                        "omp" => CoilMode::Omp,
                        "blind" => CoilMode::Blind,
                        other => return Err(at(line, format!("coil_mode must be omp or blind, got '{other}'"))),
                    }
                }
                "input" => cfg.input = Some(PathBuf::from(v)),
                "output_image" => cfg.output_image = v.to_string(),
                "certify_solve" => cfg.certify_solve = parse_bool(v).map_err(|e| at(line, e))?,
                other => return Err(at(line, format!("unknown key '{other}'"))),
            }
        }
        if let Some((line, r)) = reduction {
            if !(r >= 1.0) || !r.is_finite() {
                return Err(at(line, "reduction must be >= 1"));
            }
            if entries.contains_key("measurements") {
                return Err(at(line, "give either measurements or reduction, not both"));
            }
            cfg.reduction = Some(r);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check ranges and cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        for (name, list) in [("k", &self.k), ("n", &self.n), ("coils", &self.coils)] {
            if list.is_empty() {
                return bad(format!("{name} must not be empty"));
            }
            if list.contains(&0) {
                return bad(format!("{name} values must be positive"));
            }
        }
        if self.kind != ExperimentKind::Reconstruct && self.measurements.is_empty() {
            return bad("measurements must not be empty".into());
        }
        if self.measurements.contains(&0) {
            return bad("measurements must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.noise_ratios.is_empty() || self.noise_ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("noise_ratio values must be finite and >= 0".into());
        }
        if !(self.success_threshold > 0.0) || !(self.noisy_success_factor > 0.0) {
            return bad("success thresholds must be positive".into());
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return bad("target_rate must lie in (0, 1]".into());
        }
        if let LambdaSelection::OracleGrid(g) = &self.lambda_selection {
            if g.is_empty() {
                return bad("lambda_grid must not be empty".into());
            }
        }
        self.solver.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match self.kind {
            ExperimentKind::LSweep => {
                let other = match self.sweep {
                    SweepVar::K => &self.n,
                    SweepVar::N => &self.k,
                };
                if other.len() != 1 {
                    return bad(format!(
                        "an L sweep over {} needs a single fixed value for the other dimension",
                        self.sweep.name()
                    ));
                }
            }
            ExperimentKind::CoilSweep => {
                if self.k.len() != 1 || self.n.len() != 1 {
                    return bad("coil_sweep takes a single k and n".into());
                }
            }
            ExperimentKind::Certify => {
                if self.k.len() != 1 || self.n.len() != 1 || self.coils.len() != 1 || self.measurements.len() != 1 {
                    return bad("certify takes a single k, n, coils and measurements".into());
                }
            }
            ExperimentKind::Reconstruct => {
                if self.k.len() != 1 || self.coils.len() != 1 || self.measurements.len() > 1 || self.noise_ratios.len() != 1 {
                    return bad("reconstruct takes a single k, coils, measurements and noise_ratio".into());
                }
            }
            ExperimentKind::PhaseTransition => {}
        }
        if self.kind != ExperimentKind::CoilSweep && self.noise_ratios.len() != 1 {
            return bad(format!("{} takes a single noise_ratio", self.kind));
        }
        Ok(())
    }
}

/// Final lambda factors tried by `lambda_selection = oracle_grid` when no grid is given.
pub fn default_lambda_grid() -> Vec<f64> {
    vec![3e-1, 1e-1, 3e-2, 1e-2, 3e-3]
}

fn at(line: usize, msg: impl fmt::Display) -> HarnessError {
    HarnessError::Config(format!("line {line}: {msg}"))
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{body}'")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(at(line, "empty key"));
        }
        if value.is_empty() {
            return Err(at(line, format!("empty value for '{key}'")));
        }
        if let Some((first, _)) = out.get(&key) {
            return Err(at(line, format!("duplicate key '{key}' (first set on line {first})")));
        }
        out.insert(key, (line, value));
    }
    Ok(out)
}

fn parse_num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse '{}' as a number", s.trim()))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

/// `256` (1D) or `16x16`.
pub fn parse_grid(s: &str) -> std::result::Result<GridShape, String> {
    let shape = match s.split_once('x') {
        Some((a, b)) => GridShape::new(parse_num(a)?, parse_num(b)?),
        None => GridShape::line(parse_num(s)?),
    };
    shape.map_err(|e| e.to_string())
}

pub fn parse_usize_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err("empty list item".into());
        }
        match item.split_once("..") {
            Some((lo, rest)) => {
                let (hi, step) = match rest.split_once(':') {
                    Some((hi, step)) => (hi, parse_num::<usize>(step)?),
                    None => (rest, 1),
                };
                let (lo, hi): (usize, usize) = (parse_num(lo)?, parse_num(hi)?);
                if step == 0 {
                    return Err(format!("zero step in range '{item}'"));
                }
                if lo > hi {
                    return Err(format!("empty range '{item}'"));
                }
                out.extend((lo..=hi).step_by(step));
            }
            None => out.push(parse_num(item)?),
        }
    }
    Ok(out)
}

pub fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|item| parse_num::<f64>(item)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use accs_core::solver::Regularizer;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_usize_list("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_usize_list("10..40:10, 55").unwrap(), vec![10, 20, 30, 40, 55]);
        assert!(parse_usize_list("5..4").is_err());
        assert!(parse_usize_list("1,,2").is_err());
        assert!(parse_usize_list("1..3:0").is_err());
        assert_eq!(parse_f64_list("0, 0.01").unwrap(), vec![0.0, 0.01]);
    }

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("256").unwrap(), GridShape::line(256).unwrap());
        assert_eq!(parse_grid("16x8").unwrap(), GridShape::new(16, 8).unwrap());
        assert!(parse_grid("0x4").is_err());
    }

    #[test]
    fn phase_transition_defaults() {
        let cfg = ExperimentConfig::parse("", ExperimentKind::PhaseTransition).unwrap();
        assert_eq!(cfg.shape.len(), 256);
        assert_eq!(cfg.k, (1..=15).collect::<Vec<_>>());
        assert_eq!(cfg.coils, vec![1, 2, 4, 8]);
        assert_eq!(cfg.measurements, vec![128]);
        assert_eq!(cfg.trials, 10);
    }

    #[test]
    fn keys_comments_and_solver_fields() {
        let text = "\
# a comment
experiment = l_sweep   # trailing
sweep = n
k = 5
n = 1..15
measurements = 10..200:10
solver.max_iters = 50
solver.regularizer = column_l2
lambda_grid = 0.1, 0.01
";
        let cfg = ExperimentConfig::parse(text, ExperimentKind::PhaseTransition).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::LSweep);
        assert_eq!(cfg.sweep, SweepVar::N);
        assert_eq!(cfg.measurements.len(), 20);
        assert_eq!(cfg.solver.max_iters, 50);
        assert_eq!(cfg.solver.regularizer, Regularizer::ColumnL2);
        assert_eq!(cfg.lambda_selection, LambdaSelection::OracleGrid(vec![0.1, 0.01]));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::parse("k = 1\nbogus = 3\n", ExperimentKind::PhaseTransition).unwrap_err();
        assert!(matches!(&err, HarnessError::Config(m) if m.contains("line 2") && m.contains("bogus")));
        let err = ExperimentConfig::parse("k = 1\nk = 2\n", ExperimentKind::PhaseTransition).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        assert!(ExperimentConfig::parse("trials = 0", ExperimentKind::PhaseTransition).is_err());
        assert!(ExperimentConfig::parse("measurements = 20..10", ExperimentKind::LSweep).is_err());
        assert!(ExperimentConfig::parse("no equals sign", ExperimentKind::PhaseTransition).is_err());
        assert!(ExperimentConfig::parse("experiment = nope", ExperimentKind::PhaseTransition).is_err());
    }

    #[test]
    fn l_sweep_needs_one_fixed_value() {
        let err = ExperimentConfig::parse("experiment = l_sweep\nk = 1..3\nn = 1..3", ExperimentKind::LSweep);
        assert!(err.is_err());
    }
}
