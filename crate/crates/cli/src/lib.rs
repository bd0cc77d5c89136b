//! Experiment harness behind the `coarea` binary.
//!
//! Every command renders its CSV files in memory first ([`Output`]) and only
//! then writes them, so tests can compare bytes without touching the disk.

use std::fmt::Write as _;
use std::path::Path;

use coarea_core::coarea::{build_grid, naive_grid};
use coarea_core::oracle::{compare, monte_carlo, Comparison, McEstimate, RNG_ALGORITHM, SAMPLING};
use coarea_core::pipeline::{build_kernel, reconstruct};
use thiserror::Error;

pub mod config;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(#[from] coarea_core::Error),
    #[error("{count} unsatisfied targets at kappa={kappa}, L={sources} (allowed {allowed})")]
    Unsatisfied {
        kappa: f64,
        sources: usize,
        count: usize,
        allowed: usize,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid { .. } => 2,
            CliError::Io(_) => 1,
            CliError::Numerical(_) | CliError::Unsatisfied { .. } => 3,
        }
    }
}

/// One CSV file, name relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub name: String,
    pub contents: String,
}

impl Output {
    fn new(cfg: &ExperimentConfig, name: &str, extra: &[(&str, String)], body: &str) -> Self {
        let mut contents = format!("# config_sha256={}\n", cfg.hash());
        for (k, v) in extra {
            let _ = writeln!(contents, "# {k}={v}");
        }
        contents.push_str(body);
        Self {
            name: name.into(),
            contents,
        }
    }
}

pub fn write_outputs(dir: &Path, outputs: &[Output]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for o in outputs {
        std::fs::write(dir.join(&o.name), &o.contents)?;
    }
    Ok(())
}

/// Coarea grid in both views plus the naive tensor grid.
pub fn cmd_grid(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let shape = cfg.shape()?;
    let grid = build_grid(&shape, cfg.grid_spec())?;
    let [nm, nn] = cfg.grid.naive;
    let naive = naive_grid(&shape, nm, nn)?;
    Ok(vec![
        Output::new(cfg, "coarea_spatial.csv", &[("nodes", grid.node_count().to_string())], &grid.spatial_csv()),
        Output::new(cfg, "coarea_parametric.csv", &[("points", grid.len().to_string())], &grid.to_csv()),
        Output::new(cfg, "naive_grid.csv", &[], &naive.to_csv()),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    pub sources: usize,
    pub frobenius_err: f64,
    /// Largest single-target residual `‖g_m - ĝ_m‖`.
    pub max_row_err: f64,
    pub n_unsatisfied: usize,
    pub max_abs_coefficient: f64,
    /// Satisfied rows within `ε_ev‖g_m‖` and all coefficients inside the box.
    pub contract_ok: bool,
}

/// Kernels for every `(κ, L)` pair, κ outermost.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let shape = cfg.shape()?;
    let grid = build_grid(&shape, cfg.grid_spec())?;
    let mut rows = Vec::new();
    for kappa in cfg.kappas(&shape) {
        for &sources in &cfg.sweep.sources {
            let kernel = build_kernel(&shape, &grid, &cfg.setup(kappa, sources))?;
            let n_unsatisfied = kernel.n_unsatisfied();
            if let Some(allowed) = cfg.kernel.max_unsatisfied {
                if n_unsatisfied > allowed {
                    return Err(CliError::Unsatisfied {
                        kappa,
                        sources,
                        count: n_unsatisfied,
                        allowed,
                    });
                }
            }
            let max_abs_coefficient = (0..kernel.n_targets())
                .map(|t| kernel.max_abs_coefficient(t))
                .fold(0.0, f64::max);
            let contract_ok = max_abs_coefficient <= kernel.bound * (1.0 + 1e-12)
                && (0..kernel.n_targets())
                    .filter(|&t| kernel.satisfied[t])
                    .all(|t| kernel.residual_norms[t] <= kernel.eps_ev * kernel.target_norms[t]);
            rows.push(SweepRow {
                kappa,
                sources,
                frobenius_err: kernel.frobenius_error(),
                max_row_err: kernel.residual_norms.iter().copied().fold(0.0, f64::max),
                n_unsatisfied,
                max_abs_coefficient,
                contract_ok,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_reconstruct(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let rows = sweep(cfg)?;
    let mut body = String::from("kappa,L,frobenius_err,max_row_err,n_unsatisfied\n");
    for r in &rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{}",
            r.kappa, r.sources, r.frobenius_err, r.max_row_err, r.n_unsatisfied
        );
    }
    Ok(vec![Output::new(cfg, "reconstruction_errors.csv", &[], &body)])
}

/// The single `(κ, L)` point used by `gpc` and `validate`.
fn single_point(cfg: &ExperimentConfig) -> Result<(f64, usize), CliError> {
    let shape = cfg.shape()?;
    let kappas = cfg.kappas(&shape);
    match (kappas.as_slice(), cfg.sweep.sources.as_slice()) {
        ([k], [l]) => Ok((*k, *l)),
        _ => Err(CliError::Invalid {
            field: "sweep".into(),
            message: "this command needs exactly one wavenumber and one source count".into(),
        }),
    }
}

pub fn cmd_gpc(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let (kappa, sources) = single_point(cfg)?;
    let shape = cfg.shape()?;
    let rec = reconstruct(&shape, &cfg.setup(kappa, sources))?;
    check_table(cfg, kappa, sources, rec.table.n_unsatisfied())?;
    Ok(vec![Output::new(cfg, "gpc_table.csv", &[], &rec.table.to_csv())])
}

fn check_table(cfg: &ExperimentConfig, kappa: f64, sources: usize, count: usize) -> Result<(), CliError> {
    match cfg.kernel.max_unsatisfied {
        Some(allowed) if count > allowed => Err(CliError::Unsatisfied {
            kappa,
            sources,
            count,
            allowed,
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct Validation {
    pub estimate: McEstimate,
    pub comparison: Comparison,
    /// `max_error` met and every mode inside its interval.
    pub passed: bool,
}

/// Monte Carlo reference against the reconstructed expectations.
pub fn validation(cfg: &ExperimentConfig) -> Result<Validation, CliError> {
    let (kappa, sources) = single_point(cfg)?;
    let shape = cfg.shape()?;
    let rec = reconstruct(&shape, &cfg.setup(kappa, sources))?;
    check_table(cfg, kappa, sources, rec.table.n_unsatisfied())?;
    let estimate = monte_carlo(&shape, &cfg.oracle_setup(kappa), cfg.oracle.n_samples, cfg.oracle.seed)?;
    let comparison = compare(&estimate, &rec.table, cfg.oracle.tolerance);
    let passed = comparison.max_error() <= cfg.oracle.max_error && comparison.within_interval();
    Ok(Validation {
        estimate,
        comparison,
        passed,
    })
}

pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let v = validation(cfg)?;
    let meta = [
        ("n_samples", v.estimate.n_samples.to_string()),
        ("seed", cfg.oracle.seed.to_string()),
        ("rng", RNG_ALGORITHM.to_string()),
        ("sampling", SAMPLING.to_string()),
        ("realizations_with_unsatisfied_targets", v.estimate.n_unsatisfied.to_string()),
        ("max_error", v.comparison.max_error().to_string()),
        ("within_interval", v.comparison.within_interval().to_string()),
        ("passed", v.passed.to_string()),
    ];
    Ok(vec![Output::new(cfg, "validation_report.csv", &meta, &v.comparison.to_csv())])
}
