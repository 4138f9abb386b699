//! Q1 finite element assembly and solution of the periodic cell problems,
//! Dirichlet problems on rectangles, and local corrector problems on windows
//! `Y(x, r)`.

mod cg;
mod sparse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cg::{cg_solve, cg_solve_from, cg_solve_with, SolveLog, SolverSettings};
pub use sparse::{CsrMatrix, SparseSystem};

use crate::error::{Error, Result};
use crate::grid::{local_gradient, CellGrid, DomainGrid, Point, Rect, ScalarField, StructuredGrid, Vec2};
use crate::microstructure::{chi, Axis, CoefficientSet, Mat2, Microstructure, PhaseMap};

type Local = [[f64; 4]; 4];

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Element stiffness pieces for one spacing; `K(A) = a11 K11 + a12 (K12 + K21) + a22 K22`.
#[derive(Clone, Debug)]
struct ElementStiffness {
    k11: Local,
    k12: Local,
    k22: Local,
    /// `int_e grad N_k`.
    grad_integrals: [Vec2; 4],
    area: f64,
}

fn basis_gradient(k: usize, spacing: [f64; 2], s: f64, t: f64) -> Vec2 {
    let mut corners = [0.0; 4];
    corners[k] = 1.0;
    local_gradient(corners, spacing, s, t)
}

impl ElementStiffness {
    fn new(spacing: [f64; 2]) -> Self {
        let area = spacing[0] * spacing[1];
        let (mut k11, mut k12, mut k22) = ([[0.0; 4]; 4], [[0.0; 4]; 4], [[0.0; 4]; 4]);
        for &s in &GAUSS2 {
            for &t in &GAUSS2 {
                let g: Vec<Vec2> = (0..4).map(|k| basis_gradient(k, spacing, s, t)).collect();
                let w = 0.25 * area;
                for a in 0..4 {
                    for b in 0..4 {
                        k11[a][b] += w * g[a].x * g[b].x;
                        k12[a][b] += w * (g[a].x * g[b].y + g[a].y * g[b].x);
                        k22[a][b] += w * g[a].y * g[b].y;
                    }
                }
            }
        }
        let grad_integrals = [0, 1, 2, 3].map(|k| basis_gradient(k, spacing, 0.5, 0.5) * area);
        ElementStiffness { k11, k12, k22, grad_integrals, area }
    }

    fn matrix(&self, a: &Mat2) -> Local {
        let mut k = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                k[i][j] = a[(0, 0)] * self.k11[i][j] + a[(0, 1)] * self.k12[i][j] + a[(1, 1)] * self.k22[i][j];
            }
        }
        k
    }
}

/// Elements touching each node, as `(element, local index)`, in element order.
struct NodeAdjacency {
    offsets: Vec<usize>,
    entries: Vec<(usize, usize)>,
}

impl NodeAdjacency {
    fn new<G: StructuredGrid + ?Sized>(grid: &G) -> Self {
        let n = grid.node_count();
        let mut counts = vec![0usize; n + 1];
        for e in 0..grid.element_count() {
            for node in grid.element_nodes(e) {
                counts[node + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0, 0); counts[n]];
        for e in 0..grid.element_count() {
            for (local, node) in grid.element_nodes(e).into_iter().enumerate() {
                entries[fill[node]] = (e, local);
                fill[node] += 1;
            }
        }
        NodeAdjacency { offsets: counts, entries }
    }

    fn of(&self, node: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[node]..self.offsets[node + 1]]
    }
}

fn check_coefficients<G: StructuredGrid + ?Sized>(grid: &G, coeffs: &[Mat2]) -> Result<()> {
    if coeffs.len() != grid.element_count() {
        return Err(Error::Assembly(format!(
            "{} coefficients for {} elements",
            coeffs.len(),
            grid.element_count()
        )));
    }
    for (e, a) in coeffs.iter().enumerate() {
        let sym = (a[(0, 1)] - a[(1, 0)]).abs() <= 1e-12 * a.norm();
        if !sym || !(a[(0, 0)] > 0.0) || !(a.determinant() > 0.0) {
            return Err(Error::Assembly(format!("element {e} coefficient is not symmetric positive definite")));
        }
    }
    Ok(())
}

/// Stiffness matrix of a periodic cell problem with per-element coefficients.
/// The matrix is singular (constants); its right-hand sides are mean-free.
#[derive(Clone, Debug)]
pub struct CellProblem {
    grid: CellGrid,
    coeffs: Vec<Mat2>,
    matrix: CsrMatrix,
    stiffness: ElementStiffness,
}

impl CellProblem {
    pub fn assemble(grid: &CellGrid, coeffs: Vec<Mat2>) -> Result<Self> {
        check_coefficients(grid, &coeffs)?;
        let stiffness = ElementStiffness::new(grid.spacing());
        let adjacency = NodeAdjacency::new(grid);
        let rows: Vec<Vec<(usize, f64)>> = (0..grid.node_count())
            .into_par_iter()
            .with_min_len(1024)
            .map(|node| {
                let mut row = Vec::with_capacity(16);
                for &(e, la) in adjacency.of(node) {
                    let k = stiffness.matrix(&coeffs[e]);
                    for (lb, col) in grid.element_nodes(e).into_iter().enumerate() {
                        row.push((col, k[la][lb]));
                    }
                }
                row
            })
            .collect();
        let matrix = CsrMatrix::from_rows(rows)?;
        Ok(CellProblem { grid: grid.clone(), coeffs, matrix, stiffness })
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Mat2] {
        &self.coeffs
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// `b_i = -sum_e (A_e e) . int_e grad N_i`, the load of the cell problem driven by `e`.
    pub fn rhs(&self, e: &Vec2) -> Vec<f64> {
        let mut b = vec![0.0; self.grid.node_count()];
        for (el, a) in self.coeffs.iter().enumerate() {
            let flux = a * e;
            for (local, node) in self.grid.element_nodes(el).into_iter().enumerate() {
                b[node] -= flux.dot(&self.stiffness.grad_integrals[local]);
            }
        }
        b
    }

    /// Zero-mean periodic `w` with `div(A (grad w + e)) = 0`.
    pub fn solve(&self, e: &Vec2, settings: &SolverSettings) -> Result<(ScalarField, SolveLog)> {
        let (x, log) = cg_solve_with(&self.matrix, &self.rhs(e), settings, None, true)?;
        Ok((ScalarField::new(x), log))
    }

    /// Element area, shared by all elements.
    pub fn element_area(&self) -> f64 {
        self.stiffness.area
    }
}

/// Cell corrector `phi^j` for the phase map on a periodic grid.
pub fn solve_cell_problem(
    grid: &CellGrid,
    phase: &PhaseMap,
    coeffs: &CoefficientSet,
    j: Axis,
    settings: &SolverSettings,
) -> Result<(ScalarField, SolveLog)> {
    if phase.len() != grid.element_count() {
        return Err(Error::InvalidArgument(format!(
            "phase map has {} labels for {} elements",
            phase.len(),
            grid.element_count()
        )));
    }
    let problem = CellProblem::assemble(grid, phase.coefficients(coeffs))?;
    let mut e = Vec2::zeros();
    e[j.index()] = 1.0;
    problem.solve(&e, settings)
}

/// Right-hand side of a Dirichlet problem.
#[derive(Clone, Debug, PartialEq)]
pub enum Load {
    Constant(f64),
    /// Nodal values; the load is their bilinear interpolant.
    Nodal(ScalarField),
}

impl Load {
    pub fn is_zero(&self) -> bool {
        match self {
            Load::Constant(c) => *c == 0.0,
            Load::Nodal(f) => f.values().iter().all(|&v| v == 0.0),
        }
    }
}

/// `c + gx x1 + gy x2`, used for loads and boundary data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineFn {
    pub c: f64,
    pub gx: f64,
    pub gy: f64,
}

impl AffineFn {
    pub fn constant(c: f64) -> Self {
        AffineFn { c, gx: 0.0, gy: 0.0 }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.c + self.gx * p.x + self.gy * p.y
    }

    pub fn is_zero(&self) -> bool {
        self.c == 0.0 && self.gx == 0.0 && self.gy == 0.0
    }

    /// The load on `grid`; affine fields are represented exactly by nodal values.
    pub fn as_load(&self, grid: &DomainGrid) -> Load {
        if self.gx == 0.0 && self.gy == 0.0 {
            Load::Constant(self.c)
        } else {
            Load::Nodal(ScalarField::from_fn(grid, |p| self.eval(&p)))
        }
    }
}

const MASS: Local = [
    [4.0, 2.0, 2.0, 1.0],
    [2.0, 4.0, 1.0, 2.0],
    [2.0, 1.0, 4.0, 2.0],
    [1.0, 2.0, 2.0, 4.0],
];

/// `-div(A grad u) = f` in the rectangle, `u = g` on its boundary.
pub fn solve_dirichlet(
    grid: &DomainGrid,
    coeffs: &[Mat2],
    load: &Load,
    g: impl Fn(&Point) -> f64 + Sync,
    settings: &SolverSettings,
) -> Result<(ScalarField, SolveLog)> {
    solve_dirichlet_from(grid, coeffs, load, g, settings, None)
}

/// As [`solve_dirichlet`], starting conjugate gradients from `initial` when given.
pub fn solve_dirichlet_from(
    grid: &DomainGrid,
    coeffs: &[Mat2],
    load: &Load,
    g: impl Fn(&Point) -> f64 + Sync,
    settings: &SolverSettings,
    initial: Option<&ScalarField>,
) -> Result<(ScalarField, SolveLog)> {
    check_coefficients(grid, coeffs)?;
    if let Load::Nodal(f) = load {
        f.check_len(grid)?;
    }
    let n = grid.node_count();
    let boundary = grid.boundary_mask();
    let mut free_index = vec![usize::MAX; n];
    let mut free_nodes = Vec::new();
    for node in 0..n {
        if !boundary[node] {
            free_index[node] = free_nodes.len();
            free_nodes.push(node);
        }
    }
    let g_values: Vec<f64> = (0..n)
        .map(|node| if boundary[node] { g(&grid.node_position(node)) } else { 0.0 })
        .collect();

    let stiffness = ElementStiffness::new(grid.spacing());
    let adjacency = NodeAdjacency::new(grid);
    let assembled: Vec<(Vec<(usize, f64)>, f64)> = free_nodes
        .par_iter()
        .with_min_len(1024)
        .map(|&node| {
            let mut row = Vec::with_capacity(16);
            let mut rhs = 0.0;
            for &(e, la) in adjacency.of(node) {
                let k = stiffness.matrix(&coeffs[e]);
                let nodes = grid.element_nodes(e);
                for (lb, &col) in nodes.iter().enumerate() {
                    if boundary[col] {
                        rhs -= k[la][lb] * g_values[col];
                    } else {
                        row.push((free_index[col], k[la][lb]));
                    }
                }
                rhs += match load {
                    Load::Constant(c) => c * 0.25 * stiffness.area,
                    Load::Nodal(f) => {
                        let fv = f.values();
                        (0..4).map(|lb| MASS[la][lb] * fv[nodes[lb]]).sum::<f64>() * stiffness.area / 36.0
                    }
                };
            }
            (row, rhs)
        })
        .collect();
    let (rows, rhs): (Vec<_>, Vec<_>) = assembled.into_iter().unzip();
    let matrix = CsrMatrix::from_rows(rows)?;
    let start: Option<Vec<f64>> = initial
        .filter(|u| u.len() == n)
        .map(|u| free_nodes.iter().map(|&k| u.values()[k]).collect());
    let (x, log) = cg_solve_with(&matrix, &rhs, settings, start.as_deref(), false)?;
    let mut u = g_values;
    for (k, &node) in free_nodes.iter().enumerate() {
        u[node] = x[k];
    }
    Ok((ScalarField::new(u), log))
}

/// `int f u` for a bilinear `u`, exact for constant and nodal (bilinear) loads.
pub fn load_functional(grid: &DomainGrid, load: &Load, u: &ScalarField) -> Result<f64> {
    u.check_len(grid)?;
    if let Load::Nodal(f) = load {
        f.check_len(grid)?;
    }
    let area = grid.element_area();
    let uv = u.values();
    let mut total = 0.0;
    for e in 0..grid.element_count() {
        let nodes = grid.element_nodes(e);
        total += match load {
            Load::Constant(c) => c * 0.25 * area * nodes.iter().map(|&k| uv[k]).sum::<f64>(),
            Load::Nodal(f) => {
                let fv = f.values();
                let mut s = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        s += fv[nodes[a]] * MASS[a][b] * uv[nodes[b]];
                    }
                }
                s * area / 36.0
            }
        };
    }
    Ok(total)
}

/// Periodic problem on the window `Y(x, r)` at oscillation scale `n`:
/// coefficient `z -> A(chi(x + r z, n (x + r z)))` on a cell grid with
/// `elements_per_period` elements per period of the fine pattern.
#[derive(Clone, Debug)]
pub struct LocalCorrectorProblem {
    problem: CellProblem,
    phases: PhaseMap,
}

impl LocalCorrectorProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: &Microstructure,
        coeffs: &CoefficientSet,
        domain: &Rect,
        x: &Point,
        r: f64,
        n: usize,
        elements_per_period: usize,
    ) -> Result<Self> {
        spec.check_coefficients(coeffs)?;
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("window size must be positive, got {r}")));
        }
        let dist = domain.dist_to_boundary(x);
        if !(dist > r) {
            return Err(Error::Domain(format!(
                "window of size {r} around ({}, {}) leaves the domain (distance to boundary {dist})",
                x.x, x.y
            )));
        }
        let periods = r * n as f64;
        let rounded = periods.round();
        if (periods - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(Error::Schedule(format!("r n = {periods} is not a positive integer")));
        }
        let grid = crate::grid::build_cell_grid(rounded as usize * elements_per_period)?;
        let nf = n as f64;
        let labels = (0..grid.element_count())
            .map(|e| {
                let p = x + grid.element_center(e) * r;
                chi(spec, Some(&p), &(p * nf))
            })
            .collect::<Result<Vec<_>>>()?;
        let phases = PhaseMap::new(labels);
        let problem = CellProblem::assemble(&grid, phases.coefficients(coeffs))?;
        Ok(LocalCorrectorProblem { problem, phases })
    }

    pub fn grid(&self) -> &CellGrid {
        self.problem.grid()
    }

    pub fn phases(&self) -> &PhaseMap {
        &self.phases
    }

    pub fn cell_problem(&self) -> &CellProblem {
        &self.problem
    }

    /// `w` with `-div_z(A (grad_z w + e)) = 0`, zero mean. Linear in `e`.
    pub fn solve(&self, e: &Vec2, settings: &SolverSettings) -> Result<(ScalarField, SolveLog)> {
        self.problem.solve(e, settings)
    }
}

/// Local corrector `w^{r,n}_e(x, .)` on the cell grid of the window.
#[allow(clippy::too_many_arguments)]
pub fn solve_local_corrector(
    spec: &Microstructure,
    coeffs: &CoefficientSet,
    domain: &Rect,
    x: &Point,
    r: f64,
    n: usize,
    e: &Vec2,
    elements_per_period: usize,
    settings: &SolverSettings,
) -> Result<(LocalCorrectorProblem, ScalarField, SolveLog)> {
    let problem = LocalCorrectorProblem::new(spec, coeffs, domain, x, r, n, elements_per_period)?;
    let (w, log) = problem.solve(e, settings)?;
    Ok((problem, w, log))
}
