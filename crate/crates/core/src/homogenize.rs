//! Corrector matrices, effective tensors (cell solves and the laminate closed
//! form), modulation functions and their fields over a domain grid.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    build_cell_grid, element_gradient, CellGrid, DomainGrid, Point, Rect, ScalarField, StructuredGrid, Vec2,
};
use crate::microstructure::{rasterize, Axis, CoefficientSet, Mat2, Microstructure, PhaseMap};
use crate::pde::{CellProblem, SolveLog, SolverSettings};

/// Per-element corrector matrix `P = [grad phi^1 + e1 | grad phi^2 + e2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorMatrixField {
    grid: CellGrid,
    values: Vec<Mat2>,
}

impl CorrectorMatrixField {
    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Mat2] {
        &self.values
    }

    pub fn at(&self, e: usize) -> &Mat2 {
        &self.values[e]
    }

    /// Element average of `P` over the cell.
    pub fn mean(&self) -> Mat2 {
        self.values.iter().fold(Mat2::zeros(), |acc, p| acc + p) / self.values.len() as f64
    }
}

pub fn corrector_matrix(phi: [&ScalarField; 2], grid: &CellGrid) -> Result<CorrectorMatrixField> {
    for f in phi {
        f.check_len(grid)?;
    }
    let g1 = element_gradient(phi[0], grid);
    let g2 = element_gradient(phi[1], grid);
    let values = g1
        .iter()
        .zip(&g2)
        .map(|(a, b)| Mat2::new(a.x + 1.0, b.x, a.y, b.y + 1.0))
        .collect();
    Ok(CorrectorMatrixField { grid: grid.clone(), values })
}

/// Homogenized coefficient `A^H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveTensor {
    matrix: Mat2,
}

impl EffectiveTensor {
    pub fn new(matrix: Mat2) -> Self {
        EffectiveTensor { matrix }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    /// `|a12 - a21| / |A|`.
    pub fn asymmetry(&self) -> f64 {
        let norm = self.matrix.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (self.matrix[(0, 1)] - self.matrix[(1, 0)]).abs() / norm
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let sym = (self.matrix + self.matrix.transpose()) * 0.5;
        let e = sym.symmetric_eigenvalues();
        [e.min(), e.max()]
    }
}

const ASYMMETRY_LIMIT: f64 = 1e-6;

/// `A^H = int_Y A(y) P(y) dy` by element quadrature.
pub fn effective_tensor(phase: &PhaseMap, coeffs: &CoefficientSet, p: &CorrectorMatrixField) -> Result<EffectiveTensor> {
    if phase.len() != p.values.len() {
        return Err(Error::Assembly(format!(
            "phase map has {} labels but the corrector field has {} elements",
            phase.len(),
            p.values.len()
        )));
    }
    let area = p.grid.element_area();
    let sum = phase
        .labels()
        .iter()
        .zip(&p.values)
        .fold(Mat2::zeros(), |acc, (&l, pe)| acc + coeffs.tensor(l) * pe);
    let tensor = EffectiveTensor::new(sum * area);
    if tensor.asymmetry() > ASYMMETRY_LIMIT {
        return Err(Error::Assembly(format!(
            "effective tensor asymmetry {:.3e} exceeds {ASYMMETRY_LIMIT:.0e}",
            tensor.asymmetry()
        )));
    }
    Ok(tensor)
}

/// Arithmetic mean `int_Y A` (upper bound of `A^H`).
pub fn voigt_bound(phase: &PhaseMap, coeffs: &CoefficientSet) -> Mat2 {
    phase.labels().iter().fold(Mat2::zeros(), |acc, &l| acc + coeffs.tensor(l)) / phase.len() as f64
}

/// Harmonic mean `(int_Y A^{-1})^{-1}` (lower bound of `A^H`).
pub fn reuss_bound(phase: &PhaseMap, coeffs: &CoefficientSet) -> Mat2 {
    let inv: Vec<Mat2> = coeffs.tensors().iter().map(|a| a.try_inverse().expect("positive definite")).collect();
    let mean = phase.labels().iter().fold(Mat2::zeros(), |acc, &l| acc + inv[l]) / phase.len() as f64;
    mean.try_inverse().expect("positive definite")
}

/// Closed-form two-phase laminate data: phase 0 has conductivity `alpha` and
/// volume fraction `theta`, phase 1 has `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateClosedForm {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    /// Harmonic mean across the layers.
    pub a_h: f64,
    /// Arithmetic mean along the layers.
    pub a_m: f64,
    /// Amplification of the normal gradient in phase 0.
    pub factor_1: f64,
    /// Amplification of the normal gradient in phase 1.
    pub factor_2: f64,
}

pub fn laminate_closed_form(alpha: f64, beta: f64, theta: f64) -> Result<LaminateClosedForm> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!("conductivities must be positive, got {alpha}, {beta}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("volume fraction must lie in (0, 1), got {theta}")));
    }
    let denom = theta * beta + (1.0 - theta) * alpha;
    Ok(LaminateClosedForm {
        alpha,
        beta,
        theta,
        a_h: alpha * beta / denom,
        a_m: theta * alpha + (1.0 - theta) * beta,
        factor_1: beta / denom,
        factor_2: alpha / denom,
    })
}

impl LaminateClosedForm {
    /// `A^H` for layers normal to `axis`.
    pub fn tensor(&self, axis: Axis) -> Mat2 {
        match axis {
            Axis::X1 => Mat2::new(self.a_h, 0.0, 0.0, self.a_m),
            Axis::X2 => Mat2::new(self.a_m, 0.0, 0.0, self.a_h),
        }
    }

    /// Corrector matrix inside `phase`.
    pub fn corrector(&self, phase: usize, axis: Axis) -> Mat2 {
        let f = if phase == 0 { self.factor_1 } else { self.factor_2 };
        match axis {
            Axis::X1 => Mat2::new(f, 0.0, 0.0, 1.0),
            Axis::X2 => Mat2::new(1.0, 0.0, 0.0, f),
        }
    }

    /// `[M^0(xi), M^1(xi)]`.
    pub fn modulation(&self, xi: &Vec2, axis: Axis) -> [f64; 2] {
        [(self.corrector(0, axis) * xi).norm(), (self.corrector(1, axis) * xi).norm()]
    }
}

/// `M^i = max over phase-i elements of |P xi|`, 0 for absent phases.
pub fn modulation_at(phase: &PhaseMap, p: &CorrectorMatrixField, gradient: &Vec2, phase_count: usize) -> Vec<f64> {
    let mut m = vec![0.0; phase_count];
    for (&l, pe) in phase.labels().iter().zip(&p.values) {
        if l < phase_count {
            m[l] = f64::max(m[l], (pe * gradient).norm());
        }
    }
    m
}

/// Cell resolution and solver settings for corrector computations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellSettings {
    /// Elements per side of the cell grid.
    pub m: usize,
    pub solver: SolverSettings,
}

impl Default for CellSettings {
    fn default() -> Self {
        CellSettings { m: 64, solver: SolverSettings::default() }
    }
}

/// Both correctors of one cell with everything derived from them.
#[derive(Clone, Debug)]
pub struct CellSolution {
    phases: PhaseMap,
    correctors: [ScalarField; 2],
    p: CorrectorMatrixField,
    tensor: EffectiveTensor,
    logs: [SolveLog; 2],
    /// Distinct `P^T P` per phase; `M^i(xi)^2` is the largest `xi . Q xi`.
    forms: Vec<Vec<Mat2>>,
}

fn distinct_forms(phases: &PhaseMap, p: &CorrectorMatrixField, phase_count: usize) -> Vec<Vec<Mat2>> {
    let mut forms: Vec<Vec<Mat2>> = vec![Vec::new(); phase_count];
    let mut seen: Vec<std::collections::HashSet<[i64; 3]>> = vec![Default::default(); phase_count];
    for (&l, pe) in phases.labels().iter().zip(p.values()) {
        let q = pe.transpose() * pe;
        // forms agreeing to ~1e-12 give the same maximum to that precision
        let key = [q[(0, 0)], q[(0, 1)], q[(1, 1)]].map(|v| (v * 1e12).round() as i64);
        if seen[l].insert(key) {
            forms[l].push(q);
        }
    }
    forms
}

impl CellSolution {
    pub fn compute(grid: &CellGrid, phases: PhaseMap, coeffs: &CoefficientSet, solver: &SolverSettings) -> Result<Self> {
        let problem = CellProblem::assemble(grid, phases.coefficients(coeffs))?;
        let (r1, r2) = rayon::join(
            || problem.solve(&Vec2::new(1.0, 0.0), solver),
            || problem.solve(&Vec2::new(0.0, 1.0), solver),
        );
        let ((phi1, log1), (phi2, log2)) = (r1?, r2?);
        let p = corrector_matrix([&phi1, &phi2], grid)?;
        let tensor = effective_tensor(&phases, coeffs, &p)?;
        let forms = distinct_forms(&phases, &p, coeffs.len());
        Ok(CellSolution { phases, correctors: [phi1, phi2], p, tensor, logs: [log1, log2], forms })
    }

    /// Rasterize `spec` at `x` on an `m x m` cell grid and solve.
    pub fn for_spec(spec: &Microstructure, coeffs: &CoefficientSet, x: Option<&Point>, settings: &CellSettings) -> Result<Self> {
        spec.check_coefficients(coeffs)?;
        let grid = build_cell_grid(settings.m)?;
        let phases = rasterize(spec, &grid, x)?;
        Self::compute(&grid, phases, coeffs, &settings.solver)
    }

    pub fn grid(&self) -> &CellGrid {
        self.p.grid()
    }

    pub fn phases(&self) -> &PhaseMap {
        &self.phases
    }

    pub fn correctors(&self) -> &[ScalarField; 2] {
        &self.correctors
    }

    pub fn corrector_matrix(&self) -> &CorrectorMatrixField {
        &self.p
    }

    pub fn tensor(&self) -> &EffectiveTensor {
        &self.tensor
    }

    pub fn logs(&self) -> &[SolveLog; 2] {
        &self.logs
    }

    pub fn phase_count(&self) -> usize {
        self.forms.len()
    }

    /// `M^i(xi)` for every phase.
    pub fn modulation(&self, xi: &Vec2) -> Vec<f64> {
        self.forms
            .iter()
            .map(|qs| qs.iter().map(|q| xi.dot(&(q * xi))).fold(0.0, f64::max).sqrt())
            .collect()
    }

    /// `int_Y eta(y) chi^i(y) P^T P dy`, so that the weighted two-scale energy
    /// density at gradient `xi` is `xi . W xi`.
    pub fn weighted_form(&self, phase: usize, eta: impl Fn(&Point) -> f64) -> Mat2 {
        let grid = self.grid();
        let area = grid.element_area();
        let mut w = Mat2::zeros();
        for (e, (&l, pe)) in self.phases.labels().iter().zip(self.p.values()).enumerate() {
            if l == phase {
                w += pe.transpose() * pe * (eta(&grid.element_center(e)) * area);
            }
        }
        w
    }
}

/// Per-element, per-phase modulation values on a domain grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationField {
    /// `values[i][e] = M^i` at the center of element `e`.
    values: Vec<Vec<f64>>,
}

impl ModulationField {
    pub fn phase_count(&self) -> usize {
        self.values.len()
    }

    pub fn phase(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Largest value over elements whose center lies in `s`.
    pub fn sup_over(&self, grid: &DomainGrid, s: &Rect, i: usize) -> f64 {
        self.values[i]
            .iter()
            .enumerate()
            .filter(|(e, _)| s.contains(&grid.element_center(*e)))
            .map(|(_, &v)| v)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum CellKey {
    Fixed,
    Theta(u64),
}

/// Cell solutions for one microstructure, computed on demand and shared.
/// Graded designs are evaluated per design subdomain (queries snap to the
/// containing subdomain) and cached by the local volume fraction.
#[derive(Debug)]
pub struct Homogenizer {
    spec: Microstructure,
    coeffs: CoefficientSet,
    settings: CellSettings,
    cache: RwLock<HashMap<CellKey, Arc<CellSolution>>>,
}

impl Homogenizer {
    pub fn new(spec: Microstructure, coeffs: CoefficientSet, settings: CellSettings) -> Result<Self> {
        spec.check_coefficients(&coeffs)?;
        settings.solver.validate()?;
        build_cell_grid(settings.m)?;
        Ok(Homogenizer { spec, coeffs, settings, cache: RwLock::new(HashMap::new()) })
    }

    pub fn spec(&self) -> &Microstructure {
        &self.spec
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn settings(&self) -> &CellSettings {
        &self.settings
    }

    /// Number of distinct cells solved so far.
    pub fn cached_cells(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    fn snapped(&self, x: Option<&Point>) -> Result<(CellKey, Option<Point>)> {
        match &self.spec {
            Microstructure::Graded(g) => {
                let x = x.ok_or_else(|| Error::InvalidArgument("graded microstructures need a point x".into()))?;
                let center = g.partition().center(g.partition().subdomain_of(x));
                let theta = g.theta_at(&center);
                Ok((CellKey::Theta(theta.to_bits()), Some(center)))
            }
            _ => Ok((CellKey::Fixed, None)),
        }
    }

    /// Cell solution governing the point `x` (ignored for periodic specs).
    pub fn cell_at(&self, x: Option<&Point>) -> Result<Arc<CellSolution>> {
        let (key, center) = self.snapped(x)?;
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let solved = Arc::new(CellSolution::for_spec(&self.spec, &self.coeffs, center.as_ref(), &self.settings)?);
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(solved)))
    }

    pub fn tensor_at(&self, x: Option<&Point>) -> Result<EffectiveTensor> {
        Ok(*self.cell_at(x)?.tensor())
    }

    /// Solve every distinct cell of a graded design up front, in parallel.
    pub fn prefetch(&self) -> Result<()> {
        if let Microstructure::Graded(g) = &self.spec {
            let centers: Vec<Point> = (0..g.partition().len()).map(|l| g.partition().center(l)).collect();
            centers.par_iter().try_for_each(|c| self.cell_at(Some(c)).map(|_| ()))?;
        } else {
            self.cell_at(None)?;
        }
        Ok(())
    }

    /// `A^H` at every element center of `grid`.
    pub fn tensor_field(&self, grid: &DomainGrid) -> Result<Vec<Mat2>> {
        self.prefetch()?;
        (0..grid.element_count())
            .map(|e| self.tensor_at(Some(&grid.element_center(e))).map(|t| *t.matrix()))
            .collect()
    }

    /// `M^i(grad u^H)` at every element center of `grid`.
    pub fn modulation_field(&self, u_h: &ScalarField, grid: &DomainGrid) -> Result<ModulationField> {
        u_h.check_len(grid)?;
        self.prefetch()?;
        let grads = element_gradient(u_h, grid);
        let phase_count = self.coeffs.len();
        let per_element: Vec<Vec<f64>> = grads
            .par_iter()
            .enumerate()
            .map(|(e, g)| self.cell_at(Some(&grid.element_center(e))).map(|c| c.modulation(g)))
            .collect::<Result<_>>()?;
        let mut values = vec![vec![0.0; grads.len()]; phase_count];
        for (e, m) in per_element.into_iter().enumerate() {
            for (i, v) in m.into_iter().enumerate() {
                values[i][e] = v;
            }
        }
        Ok(ModulationField { values })
    }
}

/// `A^H(x)` of the frozen-x cell, snapped to the design subdomain containing `x`.
pub fn graded_effective_tensor(
    spec: &Microstructure,
    coeffs: &CoefficientSet,
    x: &Point,
    settings: &CellSettings,
) -> Result<EffectiveTensor> {
    Homogenizer::new(spec.clone(), coeffs.clone(), *settings)?.tensor_at(Some(x))
}

/// `(sum_j ||grad_y w^j(x + h) - grad_y w^j(x)||^2_{L2(Y)})^{1/2}` with cells frozen
/// at the exact points `x` and `x + h`.
pub fn cell_solution_continuity(
    spec: &Microstructure,
    coeffs: &CoefficientSet,
    x: &Point,
    h: &Vec2,
    settings: &CellSettings,
) -> Result<f64> {
    let shifted = x + h;
    let (a, b) = rayon::join(
        || CellSolution::for_spec(spec, coeffs, Some(x), settings),
        || CellSolution::for_spec(spec, coeffs, Some(&shifted), settings),
    );
    let (a, b) = (a?, b?);
    let area = a.grid().element_area();
    let sum: f64 = a
        .corrector_matrix()
        .values()
        .iter()
        .zip(b.corrector_matrix().values())
        .map(|(pa, pb)| (pa - pb).norm_squared() * area)
        .sum();
    Ok(sum.sqrt())
}
