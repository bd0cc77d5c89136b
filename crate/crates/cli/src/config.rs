//! Experiment configuration: TOML with nested sections, `--set` overrides and
//! a SHA-256 fingerprint of the canonical form.

use std::path::PathBuf;
use std::sync::Arc;

use coarea_core::coarea::GridSpec;
use coarea_core::nullfield::SurfaceRule;
use coarea_core::oracle::OracleSetup;
use coarea_core::pipeline::ReconstructionSetup;
use coarea_core::shape::{ellipse_shape, random_octagon, StarShape};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    /// `a ≥ b`; `a = b` is the deterministic circle.
    Ellipse,
    Octagon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub kind: ShapeKind,
    pub a: f64,
    pub b: f64,
}

/// `m, n` are `M, N` for the ellipse, `M_q, N_q` for the octagon, and the
/// surface and rotation counts for the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    pub n: usize,
    /// Size of the naive tensor grid written by `grid`.
    #[serde(default = "default_naive")]
    pub naive: [usize; 2],
}

fn default_naive() -> [usize; 2] {
    [64, 32]
}

/// Exactly one of `kappa` and `kappa_r_max` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_r_max: Option<Vec<f64>>,
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub eps_ev: f64,
    pub eps_ed: f64,
    pub multipole_order: usize,
    #[serde(default)]
    pub modulation_order: usize,
    #[serde(default = "default_radial_factor")]
    pub radial_factor: f64,
    /// Unsatisfied targets tolerated per kernel before exit code 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_unsatisfied: Option<usize>,
}

fn default_radial_factor() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpcConfig {
    pub order: usize,
    /// Overrides `⌈3κ r_max⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<usize>,
    pub outcome_points: usize,
    pub surface: SurfaceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub smooth_points: usize,
    pub panels_per_segment: usize,
    pub points_per_panel: usize,
}

impl From<&SurfaceConfig> for SurfaceRule {
    fn from(s: &SurfaceConfig) -> Self {
        SurfaceRule {
            smooth_points: s.smooth_points,
            panels_per_segment: s.panels_per_segment,
            points_per_panel: s.points_per_panel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub sources: usize,
    pub multipole_order: usize,
    pub surface: SurfaceConfig,
    /// Allowed `|b^exact - b^approx|` beyond the Monte Carlo half width.
    pub tolerance: f64,
    /// Largest acceptable error over all modes.
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub shape: ShapeConfig,
    pub grid: GridConfig,
    pub sweep: SweepConfig,
    pub kernel: KernelConfig,
    pub gpc: GpcConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    /// The ellipse sweep with `M = 15`, `N = 10`, `L = 25, 30, ..., 50`.
    fn default() -> Self {
        Self {
            shape: ShapeConfig {
                kind: ShapeKind::Ellipse,
                a: 5.0,
                b: 1.0,
            },
            grid: GridConfig {
                m: 15,
                n: 10,
                naive: default_naive(),
            },
            sweep: SweepConfig {
                kappa: None,
                kappa_r_max: Some(vec![1.0, 2.0, 5.0, 10.0]),
                sources: vec![25, 30, 35, 40, 45, 50],
            },
            kernel: KernelConfig {
                eps_ev: 1e-4,
                eps_ed: 1e-8,
                multipole_order: 2,
                modulation_order: 4,
                radial_factor: default_radial_factor(),
                max_unsatisfied: None,
            },
            gpc: GpcConfig {
                order: 0,
                mu: None,
                outcome_points: 64,
                surface: SurfaceConfig {
                    smooth_points: 512,
                    panels_per_segment: 8,
                    points_per_panel: 20,
                },
            },
            oracle: OracleConfig {
                n_samples: 2000,
                seed: 20140601,
                sources: 100,
                multipole_order: 1,
                surface: SurfaceConfig {
                    smooth_points: 512,
                    panels_per_segment: 8,
                    points_per_panel: 20,
                },
                tolerance: 1e-4,
                max_error: 1e-3,
            },
            output: OutputConfig { dir: "out".into() },
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse with `section.key=value` overrides applied before validation.
    /// Values are read as TOML; anything that does not parse is a string.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical emitted form, hex encoded. The output
    /// directory is blanked first so relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let digest = Sha256::digest(canonical.emit().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Invalid {
            field: field.into(),
            message: msg,
        });
        let s = &self.shape;
        match s.kind {
            ShapeKind::Ellipse if !(s.a >= s.b && s.b > 0.0) => {
                return bad("shape", format!("ellipse needs a >= b > 0, got a={}, b={}", s.a, s.b))
            }
            ShapeKind::Octagon if !(s.a > s.b && s.b > 0.0) => {
                return bad("shape", format!("octagon needs a > b > 0, got a={}, b={}", s.a, s.b))
            }
            _ => {}
        }
        let k = &self.kernel;
        if !(k.eps_ed > 0.0 && k.eps_ev >= k.eps_ed) {
            return bad(
                "kernel.eps_ev",
                format!("need eps_ev >= eps_ed > 0, got eps_ev={}, eps_ed={}", k.eps_ev, k.eps_ed),
            );
        }
        if !(k.radial_factor > 0.0 && k.radial_factor < 1.0) {
            return bad("kernel.radial_factor", format!("must lie in (0, 1), got {}", k.radial_factor));
        }
        if self.grid.m == 0 || self.grid.n == 0 || self.grid.naive.contains(&0) {
            return bad("grid", "all grid counts must be at least 1".into());
        }
        match (&self.sweep.kappa, &self.sweep.kappa_r_max) {
            (Some(v), None) | (None, Some(v)) => {
                if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return bad("sweep.kappa", "wavenumbers must be positive and finite".into());
                }
            }
            _ => return bad("sweep", "give exactly one of kappa and kappa_r_max".into()),
        }
        if self.sweep.sources.is_empty() || self.sweep.sources.contains(&0) {
            return bad("sweep.sources", "source counts must be at least 1".into());
        }
        for (name, surf) in [("gpc.surface", &self.gpc.surface), ("oracle.surface", &self.oracle.surface)] {
            if surf.smooth_points == 0 || surf.panels_per_segment == 0 || surf.points_per_panel == 0 {
                return bad(name, "surface rule counts must be at least 1".into());
            }
        }
        if self.gpc.outcome_points == 0 {
            return bad("gpc.outcome_points", "must be at least 1".into());
        }
        if self.oracle.n_samples < 2 {
            return bad("oracle.n_samples", format!("need at least 2, got {}", self.oracle.n_samples));
        }
        if self.oracle.sources == 0 {
            return bad("oracle.sources", "must be at least 1".into());
        }
        if !(self.oracle.tolerance >= 0.0 && self.oracle.max_error >= 0.0) {
            return bad("oracle.tolerance", "tolerances must be non-negative".into());
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<Arc<StarShape>, CliError> {
        let s = &self.shape;
        let shape = match s.kind {
            ShapeKind::Ellipse => ellipse_shape(s.a, s.b)?,
            ShapeKind::Octagon => random_octagon(s.a, s.b)?,
        };
        Ok(Arc::new(shape))
    }

    pub fn grid_spec(&self) -> GridSpec {
        let (m, n) = (self.grid.m, self.grid.n);
        match self.shape.kind {
            ShapeKind::Ellipse if self.shape.a == self.shape.b => GridSpec::Circle { n_theta: m, n_z: n },
            ShapeKind::Ellipse => GridSpec::Ellipse { m, n_base: n },
            ShapeKind::Octagon => GridSpec::Polygon { m_q: m, n_q: n },
        }
    }

    /// Wavenumbers of the sweep, in config order.
    pub fn kappas(&self, shape: &StarShape) -> Vec<f64> {
        match (&self.sweep.kappa, &self.sweep.kappa_r_max) {
            (Some(k), _) => k.clone(),
            (None, Some(kr)) => kr.iter().map(|x| x / shape.r_max()).collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn setup(&self, kappa: f64, sources: usize) -> ReconstructionSetup {
        ReconstructionSetup {
            grid: self.grid_spec(),
            kappa,
            sources,
            multipole_order: self.kernel.multipole_order,
            modulation_order: self.kernel.modulation_order,
            radial_factor: self.kernel.radial_factor,
            eps_ev: self.kernel.eps_ev,
            eps_ed: self.kernel.eps_ed,
            gpc_order: self.gpc.order,
            mu: self.gpc.mu,
            surface: (&self.gpc.surface).into(),
            outcome_points: self.gpc.outcome_points,
        }
    }

    pub fn oracle_setup(&self, kappa: f64) -> OracleSetup {
        let mut o = OracleSetup::new(kappa, self.oracle.sources);
        o.multipole_order = self.oracle.multipole_order;
        o.radial_factor = self.kernel.radial_factor;
        o.eps_ev = self.kernel.eps_ev;
        o.eps_ed = self.kernel.eps_ed;
        o.mu = self.gpc.mu;
        o.rule = (&self.oracle.surface).into();
        o
    }
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not section.key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut table = doc;
    for k in parents {
        table = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{spec}`: `{k}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
