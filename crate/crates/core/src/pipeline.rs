//! End-to-end reconstruction: grid, targets, sources, kernel, outcomes, table.

use std::sync::Arc;

use num_complex::Complex64;

use crate::coarea::{build_grid, CoareaGrid, GridSpec};
use crate::error::Result;
use crate::gpc::{build_targets, estimate, GpcBasis, GpcTable};
use crate::nullfield::{
    discretize_batch, information_outcomes, parameter_rule, solve_kernel, ReconstructionKernel, SourceLayout,
    SurfaceRule,
};
use crate::shape::StarShape;
use crate::specfun::truncation_order;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionSetup {
    pub grid: GridSpec,
    pub kappa: f64,
    pub sources: usize,
    pub multipole_order: usize,
    pub modulation_order: usize,
    pub radial_factor: f64,
    pub eps_ev: f64,
    pub eps_ed: f64,
    pub gpc_order: usize,
    /// Overrides `⌈3κ r_max⌉` when set.
    pub mu: Option<usize>,
    pub surface: SurfaceRule,
    pub outcome_points: usize,
}

impl ReconstructionSetup {
    pub fn mu(&self, shape: &StarShape) -> usize {
        self.mu.unwrap_or_else(|| truncation_order(self.kappa, shape.r_max()))
    }

    pub fn layout(&self, shape: Arc<StarShape>) -> Result<SourceLayout> {
        let mut layout = SourceLayout::new(shape, self.sources, self.multipole_order)?;
        layout.radial_factor = self.radial_factor;
        layout.modulation_order = self.modulation_order;
        layout.validate()?;
        Ok(layout)
    }
}

/// Kernel only, for error sweeps.
pub fn build_kernel(shape: &Arc<StarShape>, grid: &CoareaGrid, setup: &ReconstructionSetup) -> Result<ReconstructionKernel> {
    let basis = GpcBasis::for_domain(shape.domain());
    let mu = setup.mu(shape);
    let targets = build_targets(grid, basis, setup.kappa, mu, setup.gpc_order)?;
    let layout = setup.layout(shape.clone())?;
    let sources = discretize_batch(grid, &layout.functionals(setup.kappa))?;
    solve_kernel(&targets, &sources, setup.eps_ev, setup.eps_ed)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub grid: CoareaGrid,
    pub kernel: ReconstructionKernel,
    pub outcomes: Vec<Complex64>,
    pub table: GpcTable,
}

pub fn reconstruct(shape: &Arc<StarShape>, setup: &ReconstructionSetup) -> Result<Reconstruction> {
    let grid = build_grid(shape, setup.grid)?;
    let kernel = build_kernel(shape, &grid, setup)?;
    let layout = setup.layout(shape.clone())?;
    let z_rule = parameter_rule(shape, setup.outcome_points);
    let outcomes = information_outcomes(&layout, setup.kappa, &z_rule, &setup.surface)?;
    let basis = GpcBasis::for_domain(shape.domain());
    let mut table = estimate(&kernel, &outcomes, basis, setup.mu(shape), setup.gpc_order)?;
    table.metadata.insert(0, ("kappa".into(), setup.kappa.to_string()));
    table.metadata.insert(1, ("sources".into(), setup.sources.to_string()));
    Ok(Reconstruction {
        grid,
        kernel,
        outcomes,
        table,
    })
}
