//! Uniform Q1 grids on the periodic unit cell `Y = [-1/2, 1/2)^2` and on
//! rectangular domains, plus the discrete gradient used for every
//! L-infinity extraction in the crate.
//!
//! Elements are indexed row-major, `e = ex + mx * ey`. The four local nodes of
//! an element are ordered `(0,0), (1,0), (0,1), (1,1)`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;
pub type Vec2 = Vector2<f64>;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rectangle [{x0}, {x1}] x [{y0}, {y1}] needs positive finite side lengths"
            )));
        }
        Ok(Rect { x: [x0, x1], y: [y0, y1] })
    }

    pub fn unit() -> Self {
        Rect { x: [0.0, 1.0], y: [0.0, 1.0] }
    }

    pub fn width(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn height(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    pub fn sides(&self) -> [f64; 2] {
        [self.width(), self.height()]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x[0] + self.x[1]), 0.5 * (self.y[0] + self.y[1]))
    }

    /// Closed containment.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x[0] && p.x <= self.x[1] && p.y >= self.y[0] && p.y <= self.y[1]
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x[0] >= self.x[0]
            && other.x[1] <= self.x[1]
            && other.y[0] >= self.y[0]
            && other.y[1] <= self.y[1]
    }

    /// Distance from an interior point to the boundary; negative outside.
    pub fn dist_to_boundary(&self, p: &Point) -> f64 {
        (p.x - self.x[0])
            .min(self.x[1] - p.x)
            .min(p.y - self.y[0])
            .min(self.y[1] - p.y)
    }

    /// `{x : dist(x, boundary) >= tau}`, or `None` when that set is degenerate.
    pub fn shrink(&self, tau: f64) -> Option<Rect> {
        let r = Rect {
            x: [self.x[0] + tau, self.x[1] - tau],
            y: [self.y[0] + tau, self.y[1] - tau],
        };
        (r.x[1] > r.x[0] && r.y[1] > r.y[0]).then_some(r)
    }
}

/// Common interface of the two uniform grids.
pub trait StructuredGrid: Sync {
    /// Elements per side.
    fn shape(&self) -> [usize; 2];
    fn spacing(&self) -> [f64; 2];
    /// Lower-left corner of element `(0, 0)`.
    fn origin(&self) -> Point;
    fn node_count(&self) -> usize;
    /// Index of lattice node `(i, j)`, `0 <= i <= mx`, `0 <= j <= my`.
    fn node_index(&self, i: usize, j: usize) -> usize;
    fn node_position(&self, node: usize) -> Point;

    fn element_count(&self) -> usize {
        let [mx, my] = self.shape();
        mx * my
    }

    fn element_ij(&self, e: usize) -> (usize, usize) {
        let mx = self.shape()[0];
        (e % mx, e / mx)
    }

    fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(e);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i, j + 1),
            self.node_index(i + 1, j + 1),
        ]
    }

    fn element_center(&self, e: usize) -> Point {
        let (i, j) = self.element_ij(e);
        let [hx, hy] = self.spacing();
        let o = self.origin();
        Point::new(o.x + (i as f64 + 0.5) * hx, o.y + (j as f64 + 0.5) * hy)
    }

    fn element_area(&self) -> f64 {
        let [hx, hy] = self.spacing();
        hx * hy
    }
}

/// Periodic grid on the unit cell. Opposite faces are identified, so there are
/// exactly `m^2` distinct nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    m: usize,
}

pub fn build_cell_grid(m: usize) -> Result<CellGrid> {
    if m < 2 {
        return Err(Error::InvalidResolution(format!(
            "cell grid needs at least 2 elements per side, got {m}"
        )));
    }
    Ok(CellGrid { m })
}

impl CellGrid {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Master node of a lattice node; faces at `i = m` fold onto `i = 0`.
    pub fn periodic_node(&self, i: usize, j: usize) -> usize {
        (i % self.m) + self.m * (j % self.m)
    }
}

impl StructuredGrid for CellGrid {
    fn shape(&self) -> [usize; 2] {
        [self.m, self.m]
    }

    fn spacing(&self) -> [f64; 2] {
        [self.h(), self.h()]
    }

    fn origin(&self) -> Point {
        Point::new(-0.5, -0.5)
    }

    fn node_count(&self) -> usize {
        self.m * self.m
    }

    fn node_index(&self, i: usize, j: usize) -> usize {
        self.periodic_node(i, j)
    }

    fn node_position(&self, node: usize) -> Point {
        let (i, j) = (node % self.m, node / self.m);
        Point::new(-0.5 + i as f64 * self.h(), -0.5 + j as f64 * self.h())
    }
}

/// Uniform grid on a rectangle with a Dirichlet boundary mask and an interior
/// region `Omega' = {x : dist(x, boundary) > margin}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainGrid {
    bounds: Rect,
    shape: [usize; 2],
    spacing: [f64; 2],
    boundary: Vec<bool>,
    margin: f64,
    interior: Rect,
}

pub fn build_domain_grid(bounds: Rect, m_per_side: [usize; 2], margin: f64) -> Result<DomainGrid> {
    let [mx, my] = m_per_side;
    if mx < 1 || my < 1 {
        return Err(Error::InvalidResolution(format!(
            "domain grid needs at least one element per side, got {mx}x{my}"
        )));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("interior margin must be >= 0, got {margin}")));
    }
    let half_side = 0.5 * bounds.width().min(bounds.height());
    if margin >= half_side {
        return Err(Error::EmptyInterior { margin, half_side });
    }
    let interior = bounds.shrink(margin).expect("margin below half side");
    let mut boundary = vec![false; (mx + 1) * (my + 1)];
    for j in 0..=my {
        for i in 0..=mx {
            boundary[i + (mx + 1) * j] = i == 0 || j == 0 || i == mx || j == my;
        }
    }
    Ok(DomainGrid {
        bounds,
        shape: m_per_side,
        spacing: [bounds.width() / mx as f64, bounds.height() / my as f64],
        boundary,
        margin,
        interior,
    })
}

impl DomainGrid {
    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// The interior region `Omega'`.
    pub fn interior(&self) -> Rect {
        self.interior
    }

    /// Elements whose closure contains `p` (one, two or four of them).
    pub fn elements_touching(&self, p: &Point) -> Vec<usize> {
        let [mx, my] = self.shape;
        let [hx, hy] = self.spacing;
        let s = (p.x - self.bounds.x[0]) / hx;
        let t = (p.y - self.bounds.y[0]) / hy;
        let candidates = |c: f64, m: usize| -> Vec<usize> {
            let tol = 1e-9;
            let mut out = Vec::with_capacity(2);
            let r = c.round();
            if (c - r).abs() < tol {
                let r = r as isize;
                for k in [r - 1, r] {
                    if k >= 0 && (k as usize) < m {
                        out.push(k as usize);
                    }
                }
            } else if c > 0.0 && c < m as f64 {
                out.push(c.floor() as usize);
            }
            out
        };
        let is = candidates(s, mx);
        let js = candidates(t, my);
        let mut out = Vec::with_capacity(4);
        for &j in &js {
            for &i in &is {
                out.push(i + mx * j);
            }
        }
        out
    }
}

impl StructuredGrid for DomainGrid {
    fn shape(&self) -> [usize; 2] {
        self.shape
    }

    fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    fn origin(&self) -> Point {
        Point::new(self.bounds.x[0], self.bounds.y[0])
    }

    fn node_count(&self) -> usize {
        (self.shape[0] + 1) * (self.shape[1] + 1)
    }

    fn node_index(&self, i: usize, j: usize) -> usize {
        i + (self.shape[0] + 1) * j
    }

    fn node_position(&self, node: usize) -> Point {
        let nx = self.shape[0] + 1;
        let (i, j) = (node % nx, node / nx);
        Point::new(
            self.bounds.x[0] + i as f64 * self.spacing[0],
            self.bounds.y[0] + j as f64 * self.spacing[1],
        )
    }
}

/// Nodal values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        ScalarField(values)
    }

    pub fn zeros(len: usize) -> Self {
        ScalarField(vec![0.0; len])
    }

    pub fn from_fn<G: StructuredGrid + ?Sized>(grid: &G, f: impl Fn(Point) -> f64) -> Self {
        ScalarField((0..grid.node_count()).map(|k| f(grid.node_position(k))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub(crate) fn check_len<G: StructuredGrid + ?Sized>(&self, grid: &G) -> Result<()> {
        if self.0.len() != grid.node_count() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but the grid has {} nodes",
                self.0.len(),
                grid.node_count()
            )));
        }
        Ok(())
    }
}

/// Gradient of the bilinear interpolant of `corners` at local coordinates
/// `(s, t)` in `[0, 1]^2`.
pub(crate) fn local_gradient(corners: [f64; 4], spacing: [f64; 2], s: f64, t: f64) -> Vec2 {
    let [u0, u1, u2, u3] = corners;
    Vec2::new(
        ((u1 - u0) * (1.0 - t) + (u3 - u2) * t) / spacing[0],
        ((u2 - u0) * (1.0 - s) + (u3 - u1) * s) / spacing[1],
    )
}

fn corner_values<G: StructuredGrid + ?Sized>(grid: &G, field: &[f64], e: usize) -> [f64; 4] {
    grid.element_nodes(e).map(|n| field[n])
}

/// Gradient of the bilinear interpolant at every element center.
pub fn element_gradient<G: StructuredGrid + ?Sized>(field: &ScalarField, grid: &G) -> Vec<Vec2> {
    debug_assert_eq!(field.len(), grid.node_count());
    let spacing = grid.spacing();
    let values = field.values();
    (0..grid.element_count())
        .map(|e| local_gradient(corner_values(grid, values, e), spacing, 0.5, 0.5))
        .collect()
}

/// Gradient at an arbitrary point of the domain: the average over all elements
/// whose closure contains the point. At a node this is a centered difference.
pub fn gradient_at(field: &ScalarField, grid: &DomainGrid, p: &Point) -> Result<Vec2> {
    let elements = grid.elements_touching(p);
    if elements.is_empty() {
        return Err(Error::Domain(format!("point ({}, {}) lies outside the grid", p.x, p.y)));
    }
    let spacing = grid.spacing();
    let o = grid.origin();
    let mut g = Vec2::zeros();
    for &e in &elements {
        let (i, j) = grid.element_ij(e);
        let s = ((p.x - o.x) / spacing[0] - i as f64).clamp(0.0, 1.0);
        let t = ((p.y - o.y) / spacing[1] - j as f64).clamp(0.0, 1.0);
        g += local_gradient(corner_values(grid, field.values(), e), spacing, s, t);
    }
    Ok(g / elements.len() as f64)
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// `||u_h - u||_{L^2}` by 3x3 Gauss quadrature per element.
pub fn l2_error<G: StructuredGrid + ?Sized>(
    field: &ScalarField,
    grid: &G,
    exact: impl Fn(Point) -> f64,
) -> f64 {
    let [hx, hy] = grid.spacing();
    let o = grid.origin();
    let mut sum = 0.0;
    for e in 0..grid.element_count() {
        let (i, j) = grid.element_ij(e);
        let [u0, u1, u2, u3] = corner_values(grid, field.values(), e);
        for &(s, ws) in &GAUSS3 {
            for &(t, wt) in &GAUSS3 {
                let uh = u0 * (1.0 - s) * (1.0 - t) + u1 * s * (1.0 - t) + u2 * (1.0 - s) * t + u3 * s * t;
                let p = Point::new(o.x + (i as f64 + s) * hx, o.y + (j as f64 + t) * hy);
                sum += ws * wt * (uh - exact(p)).powi(2);
            }
        }
    }
    (sum * hx * hy).sqrt()
}

/// `|u_h - u|_{H^1}` (gradient seminorm) by 3x3 Gauss quadrature per element.
pub fn h1_seminorm_error<G: StructuredGrid + ?Sized>(
    field: &ScalarField,
    grid: &G,
    exact_grad: impl Fn(Point) -> Vec2,
) -> f64 {
    let spacing = grid.spacing();
    let o = grid.origin();
    let mut sum = 0.0;
    for e in 0..grid.element_count() {
        let (i, j) = grid.element_ij(e);
        let corners = corner_values(grid, field.values(), e);
        for &(s, ws) in &GAUSS3 {
            for &(t, wt) in &GAUSS3 {
                let gh = local_gradient(corners, spacing, s, t);
                let p = Point::new(o.x + (i as f64 + s) * spacing[0], o.y + (j as f64 + t) * spacing[1]);
                sum += ws * wt * (gh - exact_grad(p)).norm_squared();
            }
        }
    }
    (sum * spacing[0] * spacing[1]).sqrt()
}

/// Wrap a coordinate into `[-1/2, 1/2)`.
pub fn wrap_unit(v: f64) -> f64 {
    let w = v - (v + 0.5).floor();
    // floor can round up to exactly 0.5 for tiny negative inputs
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

pub fn wrap_point(y: &Point) -> Point {
    Point::new(wrap_unit(y.x), wrap_unit(y.y))
}
