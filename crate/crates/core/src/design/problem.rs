//! Homogenized compliance and per-phase gradient constraints of graded
//! laminate designs.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::{DesignPartition, DesignVector, ResourceBudget};
use crate::error::{Error, Result};
use crate::grid::{build_domain_grid, element_gradient, DomainGrid, Rect, ScalarField, StructuredGrid};
use crate::homogenize::{CellSettings, CellSolution};
use crate::microstructure::{Axis, CoefficientSet, GradedLaminate, Mat2, Microstructure, Profile};
use crate::pde::{load_functional, solve_dirichlet, AffineFn, SolveLog, SolverSettings};

/// Objective and constraint values of one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation {
    /// `W = int f u^H`.
    pub compliance: f64,
    /// `C_i = sup_S M^i(grad u^H)`, one per phase.
    pub constraints: Vec<f64>,
    pub solve: SolveLog,
}

impl DesignEvaluation {
    /// `max_i C_i - level`; non-positive when the gradient constraint holds.
    pub fn violation(&self, level: Option<f64>) -> f64 {
        match level {
            None => f64::NEG_INFINITY,
            Some(m) => self.constraints.iter().fold(f64::NEG_INFINITY, |a, &c| a.max(c - m)),
        }
    }

    pub fn satisfies(&self, level: Option<f64>) -> bool {
        self.violation(level) <= 0.0
    }
}

/// A design problem on a fixed partition: zero Dirichlet data, load `f`,
/// constraint region `S`, resource budget, and a macroscopic grid.
///
/// Cell solutions are cached by the bit pattern of the volume fraction, so a
/// value seen once is never solved again.
#[derive(Debug)]
pub struct DesignProblem {
    partition: DesignPartition,
    coeffs: CoefficientSet,
    load: AffineFn,
    region: Rect,
    budget: ResourceBudget,
    grid: DomainGrid,
    element_subdomain: Vec<usize>,
    cell: CellSettings,
    solver: SolverSettings,
    cells: RwLock<HashMap<(Axis, u64), Arc<CellSolution>>>,
}

impl DesignProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        partition: DesignPartition,
        coeffs: CoefficientSet,
        load: AffineFn,
        region: Rect,
        budget: ResourceBudget,
        grid_m: usize,
        cell: CellSettings,
        solver: SolverSettings,
    ) -> Result<Self> {
        if coeffs.len() != 2 {
            return Err(Error::InvalidArgument(format!("laminate designs need 2 phases, got {}", coeffs.len())));
        }
        let bounds = partition.bounds();
        let inside = region.x[0] > bounds.x[0] && region.x[1] < bounds.x[1] && region.y[0] > bounds.y[0] && region.y[1] < bounds.y[1];
        if !inside {
            return Err(Error::Domain("constraint region must be compactly contained in the domain".into()));
        }
        solver.validate()?;
        crate::grid::build_cell_grid(cell.m)?;
        let grid = build_domain_grid(bounds, [grid_m, grid_m], 0.0)?;
        let element_subdomain = (0..grid.element_count())
            .map(|e| partition.subdomain_of(&grid.element_center(e)))
            .collect();
        Ok(DesignProblem {
            partition,
            coeffs,
            load,
            region,
            budget,
            grid,
            element_subdomain,
            cell,
            solver,
            cells: RwLock::new(HashMap::new()),
        })
    }

    pub fn partition(&self) -> &DesignPartition {
        &self.partition
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn load(&self) -> AffineFn {
        self.load
    }

    pub fn region(&self) -> Rect {
        self.region
    }

    pub fn budget(&self) -> &ResourceBudget {
        &self.budget
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn cell_settings(&self) -> &CellSettings {
        &self.cell
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.solver
    }

    pub fn cached_cells(&self) -> usize {
        self.cells.read().expect("cache lock").len()
    }

    /// The graded spec a design describes, frozen per subdomain.
    pub fn spec(&self, design: &DesignVector) -> Result<Microstructure> {
        Ok(Microstructure::Graded(GradedLaminate::new(
            design.clone(),
            self.partition.clone(),
            Profile::PiecewiseConstant,
        )?))
    }

    /// Cell solution of the laminate with phase-1 fraction `theta`.
    pub fn cell(&self, theta: f64, axis: Axis) -> Result<Arc<CellSolution>> {
        let key = (axis, theta.to_bits());
        if let Some(hit) = self.cells.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        // a one-subdomain graded spec rasterizes exactly like a subdomain of a realized design
        let single = DesignPartition::new(Rect::unit(), 1, 1)?;
        let design = DesignVector::new(vec![theta], 0.0, 1.0, 1.0, axis)?;
        let spec = Microstructure::Graded(GradedLaminate::new(design, single.clone(), Profile::PiecewiseConstant)?);
        let solved = Arc::new(CellSolution::for_spec(&spec, &self.coeffs, Some(&single.center(0)), &self.cell)?);
        let mut cache = self.cells.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(solved)))
    }

    fn cells_for(&self, design: &DesignVector) -> Result<Vec<Arc<CellSolution>>> {
        if design.len() != self.partition.len() {
            return Err(Error::InvalidArgument(format!(
                "design has {} entries for {} subdomains",
                design.len(),
                self.partition.len()
            )));
        }
        design.theta().par_iter().map(|&t| self.cell(t, design.axis())).collect()
    }

    /// `A^H` per element of the macroscopic grid.
    pub fn tensor_field(&self, design: &DesignVector) -> Result<Vec<Mat2>> {
        let cells = self.cells_for(design)?;
        Ok(self.element_subdomain.iter().map(|&l| *cells[l].tensor().matrix()).collect())
    }

    /// Homogenized solution with zero boundary data.
    pub fn solve(&self, design: &DesignVector) -> Result<(ScalarField, SolveLog)> {
        let tensors = self.tensor_field(design)?;
        solve_dirichlet(&self.grid, &tensors, &self.load.as_load(&self.grid), |_| 0.0, &self.solver)
    }

    pub fn compliance(&self, design: &DesignVector) -> Result<f64> {
        let (u, _) = self.solve(design)?;
        load_functional(&self.grid, &self.load.as_load(&self.grid), &u)
    }

    /// `sup_S M^i(grad u^H)` per phase for a given `u^H`.
    pub fn constraints_for(&self, design: &DesignVector, u_h: &ScalarField) -> Result<Vec<f64>> {
        u_h.check_len(&self.grid)?;
        let cells = self.cells_for(design)?;
        let grads = element_gradient(u_h, &self.grid);
        let mut sup = vec![0.0; self.coeffs.len()];
        for (e, g) in grads.iter().enumerate() {
            if !self.region.contains(&self.grid.element_center(e)) {
                continue;
            }
            for (s, m) in sup.iter_mut().zip(cells[self.element_subdomain[e]].modulation(g)) {
                *s = f64::max(*s, m);
            }
        }
        Ok(sup)
    }

    pub fn gradient_constraint(&self, design: &DesignVector) -> Result<Vec<f64>> {
        let (u, _) = self.solve(design)?;
        self.constraints_for(design, &u)
    }

    pub fn evaluate(&self, design: &DesignVector) -> Result<DesignEvaluation> {
        let (u, solve) = self.solve(design)?;
        let compliance = load_functional(&self.grid, &self.load.as_load(&self.grid), &u)?;
        let constraints = self.constraints_for(design, &u)?;
        Ok(DesignEvaluation { compliance, constraints, solve })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::default_region;
    use crate::homogenize::{laminate_closed_form, modulation_at};
    use crate::microstructure::PhaseMap;
    use approx::assert_abs_diff_eq;

    pub(crate) fn problem(k: usize, alpha: f64, beta: f64, load: AffineFn) -> DesignProblem {
        let partition = DesignPartition::new(Rect::unit(), k, k).unwrap();
        DesignProblem::new(
            partition,
            CoefficientSet::isotropic(&[alpha, beta]).unwrap(),
            load,
            default_region(&Rect::unit()).unwrap(),
            ResourceBudget::unlimited(),
            16,
            CellSettings { m: 32, solver: SolverSettings::default() },
            SolverSettings::default(),
        )
        .unwrap()
    }

    fn uniform(k: usize, theta: f64) -> DesignVector {
        DesignVector::uniform(k * k, theta, 0.0, 1.0, 10.0, Axis::X1).unwrap()
    }

    #[test]
    fn zero_load_gives_zero_objective_and_constraints() {
        let p = problem(2, 1.0, 2.0, AffineFn::constant(0.0));
        let ev = p.evaluate(&uniform(2, 0.5)).unwrap();
        assert_eq!(ev.compliance, 0.0);
        assert!(ev.constraints.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn stiffer_designs_have_smaller_compliance() {
        // phase 1 (alpha = 10) is the stiff one; theta is its fraction
        let p = problem(1, 10.0, 1.0, AffineFn::constant(1.0));
        let w: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&t| p.compliance(&uniform(1, t)).unwrap()).collect();
        assert!(w.windows(2).all(|v| v[1] < v[0]), "{w:?}");
        assert_eq!(p.cached_cells(), 5);
    }

    #[test]
    fn single_subdomain_matches_closed_form_tensor() {
        let p = problem(1, 1.0, 2.0, AffineFn::constant(1.0));
        let d = uniform(1, 0.5);
        let w = p.compliance(&d).unwrap();
        let c = laminate_closed_form(1.0, 2.0, 0.5).unwrap();
        let tensors = vec![c.tensor(Axis::X1); p.grid().element_count()];
        let (u, _) = solve_dirichlet(p.grid(), &tensors, &crate::pde::Load::Constant(1.0), |_| 0.0, p.solver()).unwrap();
        let w_closed = load_functional(p.grid(), &crate::pde::Load::Constant(1.0), &u).unwrap();
        assert_abs_diff_eq!(w, w_closed, epsilon = 1e-8 * w_closed);
    }

    #[test]
    fn constraint_matches_elementwise_modulation() {
        let p = problem(1, 1.0, 2.0, AffineFn::constant(1.0));
        let d = uniform(1, 0.5);
        let (u, _) = p.solve(&d).unwrap();
        let c = p.constraints_for(&d, &u).unwrap();
        let cell = p.cell(0.5, Axis::X1).unwrap();
        let mut brute = [0.0f64; 2];
        for (e, g) in element_gradient(&u, p.grid()).iter().enumerate() {
            if p.region().contains(&p.grid().element_center(e)) {
                let m = modulation_at(cell.phases(), cell.corrector_matrix(), g, 2);
                brute[0] = brute[0].max(m[0]);
                brute[1] = brute[1].max(m[1]);
            }
        }
        for (a, b) in c.iter().zip(brute) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12 * b);
        }
    }

    #[test]
    fn no_contrast_constraint_is_gradient_sup() {
        let p = problem(2, 3.0, 3.0, AffineFn::constant(1.0));
        let d = uniform(2, 0.5);
        let (u, _) = p.solve(&d).unwrap();
        let c = p.constraints_for(&d, &u).unwrap();
        let sup = element_gradient(&u, p.grid())
            .iter()
            .enumerate()
            .filter(|(e, _)| p.region().contains(&p.grid().element_center(*e)))
            .map(|(_, g)| g.norm())
            .fold(0.0, f64::max);
        for ci in c {
            assert_abs_diff_eq!(ci, sup, epsilon = 1e-9 * sup);
        }
    }

    #[test]
    fn endpoint_fractions_are_homogeneous_cells() {
        let p = problem(1, 1.0, 2.0, AffineFn::constant(1.0));
        let full = p.cell(1.0, Axis::X1).unwrap();
        assert_eq!(full.phases(), &PhaseMap::new(vec![0; full.phases().len()]));
        assert_abs_diff_eq!(full.tensor().matrix()[(0, 0)], 1.0, epsilon = 1e-12);
        let none = p.cell(0.0, Axis::X1).unwrap();
        assert_abs_diff_eq!(none.tensor().matrix()[(1, 1)], 2.0, epsilon = 1e-12);
    }
}
