//! Phase geometries on the period cell, their rasterization, oscillatory
//! coefficients `A(n x)`, and piecewise-periodic approximations of graded
//! designs.
//!
//! Phases are indexed from 0 in code. Laminates put phase 0 in the layer
//! `y_axis <= -1/2 + theta` and phase 1 in the rest of the cell.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::design::{DesignPartition, DesignVector};
use crate::error::{Error, Result};
use crate::grid::{wrap_point, wrap_unit, CellGrid, DomainGrid, Point, StructuredGrid};

pub type Mat2 = Matrix2<f64>;

/// Phase tensors `A_1..A_N` with ellipticity bounds `lambda <= A_i <= Lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    tensors: Vec<Mat2>,
    lambda: f64,
    upper: f64,
}

impl CoefficientSet {
    pub fn new(tensors: Vec<Mat2>, lambda: f64, upper: f64) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("coefficient set needs at least one phase".into()));
        }
        if !(lambda > 0.0 && upper >= lambda && upper.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ellipticity bounds need 0 < lambda <= Lambda, got {lambda}, {upper}"
            )));
        }
        let slack = 1e-12 * upper;
        for (i, a) in tensors.iter().enumerate() {
            if (a[(0, 1)] - a[(1, 0)]).abs() > 1e-12 * a.norm() {
                return Err(Error::InvalidArgument(format!("phase {} tensor is not symmetric", i + 1)));
            }
            let eig = a.symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if lo < lambda - slack || hi > upper + slack {
                return Err(Error::InvalidArgument(format!(
                    "phase {} eigenvalues [{lo}, {hi}] outside [{lambda}, {upper}]",
                    i + 1
                )));
            }
        }
        Ok(CoefficientSet { tensors, lambda, upper })
    }

    /// Isotropic phases `a_i I`, with bounds taken from the extreme values.
    pub fn isotropic(values: &[f64]) -> Result<Self> {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::new(values.iter().map(|&a| Mat2::identity() * a).collect(), lo, hi)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, phase: usize) -> &Mat2 {
        &self.tensors[phase]
    }

    pub fn tensors(&self) -> &[Mat2] {
        &self.tensors
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.tensors.iter().map(|a| a * c).collect(), self.lambda * c, self.upper * c)
    }
}

/// Layer normal of a laminate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    /// From the 1-based axis number used in configs.
    pub fn from_number(axis: usize) -> Result<Self> {
        match axis {
            1 => Ok(Axis::X1),
            2 => Ok(Axis::X2),
            _ => Err(Error::InvalidArgument(format!("laminate axis must be 1 or 2, got {axis}"))),
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
}

fn laminate_phase(theta: f64, axis: Axis, y: &Point) -> usize {
    let c = wrap_unit(y[axis.index()]);
    if c <= -0.5 + theta {
        0
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Laminate {
    theta: f64,
    axis: Axis,
}

impl Laminate {
    pub fn new(theta: f64, axis: Axis) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("laminate volume fraction must lie in (0, 1), got {theta}")));
        }
        Ok(Laminate { theta, axis })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }
}

/// Elliptical particle strictly inside the cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Rotation of the first semi-axis from `e1`, radians.
    pub angle: f64,
    pub phase: usize,
}

impl Inclusion {
    pub fn disk(center: [f64; 2], radius: f64, phase: usize) -> Self {
        Inclusion { center, semi_axes: [radius, radius], angle: 0.0, phase }
    }

    /// Closed containment test for a point already wrapped into the cell.
    pub fn contains(&self, y: &Point) -> bool {
        let (dx, dy) = (y.x - self.center[0], y.y - self.center[1]);
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) <= 1.0
    }

    /// Half widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let [a, b] = self.semi_axes;
        [(a * a * c * c + b * b * s * s).sqrt(), (a * a * s * s + b * b * c * c).sqrt()]
    }

    fn boundary_point(&self, t: f64) -> Point {
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (self.semi_axes[0] * t.cos(), self.semi_axes[1] * t.sin());
        Point::new(self.center[0] + c * u - s * v, self.center[1] + s * u + c * v)
    }

    /// Distance from the bounding box to the cell faces.
    pub fn clearance(&self) -> f64 {
        let [wx, wy] = self.half_extents();
        (0.5 - self.center[0].abs() - wx).min(0.5 - self.center[1].abs() - wy)
    }
}

fn ellipses_overlap(a: &Inclusion, b: &Inclusion) -> bool {
    const SAMPLES: usize = 720;
    let center_b = Point::new(b.center[0], b.center[1]);
    let center_a = Point::new(a.center[0], a.center[1]);
    if a.contains(&center_b) || b.contains(&center_a) {
        return true;
    }
    (0..SAMPLES).any(|k| {
        let t = std::f64::consts::TAU * k as f64 / SAMPLES as f64;
        b.contains(&a.boundary_point(t)) || a.contains(&b.boundary_point(t))
    })
}

/// Disjoint particles embedded in a connected matrix phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionSet {
    inclusions: Vec<Inclusion>,
    matrix_phase: usize,
}

impl InclusionSet {
    pub fn new(inclusions: Vec<Inclusion>, matrix_phase: usize) -> Result<Self> {
        for (i, inc) in inclusions.iter().enumerate() {
            if !(inc.semi_axes[0] > 0.0 && inc.semi_axes[1] > 0.0) {
                return Err(Error::InvalidArgument(format!("inclusion {} needs positive semi-axes", i + 1)));
            }
            if inc.phase == matrix_phase {
                return Err(Error::InvalidArgument(format!(
                    "inclusion {} uses the matrix phase {}",
                    i + 1,
                    matrix_phase + 1
                )));
            }
            if inc.clearance() <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "inclusion {} touches or crosses the cell boundary",
                    i + 1
                )));
            }
        }
        for i in 0..inclusions.len() {
            for j in i + 1..inclusions.len() {
                if ellipses_overlap(&inclusions[i], &inclusions[j]) {
                    return Err(Error::InvalidArgument(format!("inclusions {} and {} overlap", i + 1, j + 1)));
                }
            }
        }
        Ok(InclusionSet { inclusions, matrix_phase })
    }

    pub fn inclusions(&self) -> &[Inclusion] {
        &self.inclusions
    }

    pub fn matrix_phase(&self) -> usize {
        self.matrix_phase
    }

    /// Smallest distance from any particle's bounding box to the cell faces.
    pub fn clearance(&self) -> f64 {
        self.inclusions.iter().map(Inclusion::clearance).fold(f64::INFINITY, f64::min)
    }

    fn phase_at(&self, y: &Point) -> usize {
        let y = wrap_point(y);
        self.inclusions
            .iter()
            .find(|inc| inc.contains(&y))
            .map_or(self.matrix_phase, |inc| inc.phase)
    }
}

/// How a graded design is evaluated between subdomain centers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// Bilinear interpolation of `theta` through the subdomain centers
    /// (linearly extended past the outermost centers, clamped to the box).
    Bilinear,
    /// `theta` frozen per subdomain.
    PiecewiseConstant,
}

/// Locally periodic laminate whose volume fraction varies over the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradedLaminate {
    design: DesignVector,
    partition: DesignPartition,
    profile: Profile,
}

impl GradedLaminate {
    pub fn new(design: DesignVector, partition: DesignPartition, profile: Profile) -> Result<Self> {
        if design.len() != partition.len() {
            return Err(Error::InvalidArgument(format!(
                "design has {} entries for {} subdomains",
                design.len(),
                partition.len()
            )));
        }
        if !design.within_box() {
            return Err(Error::InvalidArgument("graded design violates its box bounds".into()));
        }
        Ok(GradedLaminate { design, partition, profile })
    }

    /// Samples `theta` at the subdomain centers.
    pub fn from_fn(
        partition: DesignPartition,
        theta: impl Fn(&Point) -> f64,
        bounds: [f64; 2],
        lipschitz: f64,
        axis: Axis,
        profile: Profile,
    ) -> Result<Self> {
        let values = (0..partition.len()).map(|l| theta(&partition.center(l))).collect();
        let design = DesignVector::new(values, bounds[0], bounds[1], lipschitz, axis)?;
        Self::new(design, partition, profile)
    }

    pub fn design(&self) -> &DesignVector {
        &self.design
    }

    pub fn partition(&self) -> &DesignPartition {
        &self.partition
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn axis(&self) -> Axis {
        self.design.axis()
    }

    /// Local volume fraction of phase 0 at `x`.
    pub fn theta_at(&self, x: &Point) -> f64 {
        let th = self.design.theta();
        let t = match self.profile {
            Profile::PiecewiseConstant => th[self.partition.subdomain_of(x)],
            Profile::Bilinear => {
                let [kx, ky] = self.partition.shape();
                let [w, h] = self.partition.cell_size();
                let b = self.partition.bounds();
                let coord = |v: f64, lo: f64, size: f64, k: usize| -> (usize, usize, f64) {
                    if k == 1 {
                        return (0, 0, 0.0);
                    }
                    let s = (v - lo) / size - 0.5;
                    let i0 = s.floor().clamp(0.0, (k - 2) as f64) as usize;
                    (i0, i0 + 1, s - i0 as f64)
                };
                let (i0, i1, s) = coord(x.x, b.x[0], w, kx);
                let (j0, j1, t) = coord(x.y, b.y[0], h, ky);
                let at = |i: usize, j: usize| th[self.partition.index(i, j)];
                (1.0 - t) * ((1.0 - s) * at(i0, j0) + s * at(i1, j0)) + t * ((1.0 - s) * at(i0, j1) + s * at(i1, j1))
            }
        };
        t.clamp(self.design.lower(), self.design.upper())
    }

    /// The periodic cell seen at `x` (`theta` may sit at 0 or 1 here).
    fn phase_at(&self, x: &Point, y: &Point) -> usize {
        laminate_phase(self.theta_at(x), self.design.axis(), y)
    }
}

/// A cell geometry, possibly varying with the macroscopic point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Microstructure {
    Laminate(Laminate),
    Inclusions(InclusionSet),
    Graded(GradedLaminate),
}

impl Microstructure {
    /// Single phase everywhere.
    pub fn homogeneous(phase: usize) -> Self {
        Microstructure::Inclusions(InclusionSet { inclusions: Vec::new(), matrix_phase: phase })
    }

    pub fn laminate(theta: f64, axis: Axis) -> Result<Self> {
        Ok(Microstructure::Laminate(Laminate::new(theta, axis)?))
    }

    pub fn is_graded(&self) -> bool {
        matches!(self, Microstructure::Graded(_))
    }

    /// Number of phases the coefficient set must provide.
    pub fn phase_count(&self) -> usize {
        match self {
            Microstructure::Laminate(_) | Microstructure::Graded(_) => 2,
            Microstructure::Inclusions(set) => set
                .inclusions
                .iter()
                .map(|i| i.phase)
                .chain(std::iter::once(set.matrix_phase))
                .max()
                .unwrap_or(0)
                + 1,
        }
    }

    pub fn check_coefficients(&self, coeffs: &CoefficientSet) -> Result<()> {
        if coeffs.len() < self.phase_count() {
            return Err(Error::InvalidArgument(format!(
                "microstructure uses {} phases but only {} tensors were given",
                self.phase_count(),
                coeffs.len()
            )));
        }
        Ok(())
    }
}

/// Phase index at macroscopic point `x` and cell point `y` (wrapped into `Y`).
pub fn chi(spec: &Microstructure, x: Option<&Point>, y: &Point) -> Result<usize> {
    match spec {
        Microstructure::Laminate(l) => Ok(laminate_phase(l.theta, l.axis, y)),
        Microstructure::Inclusions(set) => Ok(set.phase_at(y)),
        Microstructure::Graded(g) => {
            let x = x.ok_or_else(|| {
                Error::InvalidArgument("graded microstructures need a macroscopic point x".into())
            })?;
            Ok(g.phase_at(x, y))
        }
    }
}

/// Per-element phase labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    labels: Vec<usize>,
}

impl PhaseMap {
    pub fn new(labels: Vec<usize>) -> Self {
        PhaseMap { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, e: usize) -> usize {
        self.labels[e]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, phase: usize) -> usize {
        self.labels.iter().filter(|&&l| l == phase).count()
    }

    /// Fraction of elements carrying `phase`.
    pub fn fraction(&self, phase: usize) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.count(phase) as f64 / self.labels.len() as f64
    }

    /// Tensor of each element's phase.
    pub fn coefficients(&self, coeffs: &CoefficientSet) -> Vec<Mat2> {
        self.labels.iter().map(|&l| *coeffs.tensor(l)).collect()
    }
}

/// Sample `chi(spec, x, center)` at every element center.
pub fn rasterize<G: StructuredGrid + ?Sized>(spec: &Microstructure, grid: &G, x: Option<&Point>) -> Result<PhaseMap> {
    (0..grid.element_count())
        .map(|e| chi(spec, x, &grid.element_center(e)))
        .collect::<Result<Vec<_>>>()
        .map(PhaseMap::new)
}

/// Fine-scale phase map of `chi(spec, x, n x)` at the element centers of a domain grid.
pub fn rasterize_oscillatory(spec: &Microstructure, grid: &DomainGrid, n: usize) -> Result<PhaseMap> {
    if n == 0 {
        return Err(Error::InvalidArgument("oscillation scale n must be >= 1".into()));
    }
    let nf = n as f64;
    (0..grid.element_count())
        .map(|e| {
            let x = grid.element_center(e);
            chi(spec, Some(&x), &(x * nf))
        })
        .collect::<Result<Vec<_>>>()
        .map(PhaseMap::new)
}

/// `A(chi(spec, x, n x))`.
pub fn oscillatory_coefficient(spec: &Microstructure, coeffs: &CoefficientSet, n: usize, x: &Point) -> Result<Mat2> {
    if n == 0 {
        return Err(Error::InvalidArgument("oscillation scale n must be >= 1".into()));
    }
    spec.check_coefficients(coeffs)?;
    let phase = chi(spec, Some(x), &(x * n as f64))?;
    Ok(*coeffs.tensor(phase))
}

/// `sum_i int_Y |chi^i(x + h, y) - chi^i(x, y)| dy` by element-center quadrature.
pub fn continuity_modulus(spec: &Microstructure, x: &Point, h: &Point, grid: &CellGrid) -> Result<f64> {
    let Microstructure::Graded(_) = spec else {
        return Err(Error::NotApplicable("continuity modulus is defined for graded microstructures".into()));
    };
    let shifted = x + h;
    let mut changed = 0usize;
    for e in 0..grid.element_count() {
        let y = grid.element_center(e);
        if chi(spec, Some(x), &y)? != chi(spec, Some(&shifted), &y)? {
            changed += 1;
        }
    }
    // a changed element flips one phase off and another on
    Ok(2.0 * changed as f64 * grid.element_area())
}

/// Quadrature used to measure the L1 distance between a graded design and its
/// piecewise-periodic approximation.
#[derive(Clone, Debug)]
pub struct ApproximationQuadrature {
    /// Midpoint samples per side of each subdomain.
    pub x_samples: usize,
    pub cell: CellGrid,
}

impl Default for ApproximationQuadrature {
    fn default() -> Self {
        ApproximationQuadrature {
            x_samples: 8,
            cell: crate::grid::build_cell_grid(128).expect("valid resolution"),
        }
    }
}

/// `int_{Omega x Y} |chi^i_k - chi^i| dy dx`, per phase and summed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproximationError {
    pub per_phase: Vec<f64>,
    pub total: f64,
}

/// Freeze a graded design at the centers of a `k x k` partition of its domain.
pub fn piecewise_periodic_approximation(
    spec: &Microstructure,
    k: usize,
    quadrature: &ApproximationQuadrature,
) -> Result<(Microstructure, ApproximationError)> {
    let Microstructure::Graded(graded) = spec else {
        return Err(Error::NotApplicable("piecewise-periodic approximation needs a graded design".into()));
    };
    if k == 0 {
        return Err(Error::InvalidArgument("partition refinement k must be >= 1".into()));
    }
    let partition = DesignPartition::new(graded.partition().bounds(), k, k)?;
    let frozen: Vec<f64> = (0..partition.len()).map(|l| graded.theta_at(&partition.center(l))).collect();
    let design = graded.design().with_theta(frozen);
    let approx = GradedLaminate::new(design, partition.clone(), Profile::PiecewiseConstant)?;
    let approx_spec = Microstructure::Graded(approx);

    let q = quadrature.x_samples.max(1);
    let [w, h] = partition.cell_size();
    let sample_area = w * h / (q * q) as f64;
    let cell = &quadrature.cell;
    let cell_area = cell.element_area();
    let mut per_phase = vec![0.0; 2];
    for l in 0..partition.len() {
        let r = partition.rect(l);
        for a in 0..q {
            for b in 0..q {
                let x = Point::new(r.x[0] + (a as f64 + 0.5) * w / q as f64, r.y[0] + (b as f64 + 0.5) * h / q as f64);
                let mut diff = 0usize;
                for e in 0..cell.element_count() {
                    let y = cell.element_center(e);
                    if chi(&approx_spec, Some(&x), &y)? != chi(spec, Some(&x), &y)? {
                        diff += 1;
                    }
                }
                let contrib = diff as f64 * cell_area * sample_area;
                per_phase[0] += contrib;
                per_phase[1] += contrib;
            }
        }
    }
    let total = per_phase.iter().sum();
    Ok((approx_spec, ApproximationError { per_phase, total }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cell_grid, build_domain_grid, Rect};
    use approx::assert_abs_diff_eq;

    fn lam(theta: f64) -> Microstructure {
        Microstructure::laminate(theta, Axis::X1).unwrap()
    }

    fn graded_x1(k: usize, profile: Profile) -> Microstructure {
        let p = DesignPartition::new(Rect::unit(), k, k).unwrap();
        Microstructure::Graded(GradedLaminate::from_fn(p, |x| x.x, [0.0, 1.0], 2.0, Axis::X1, profile).unwrap())
    }

    #[test]
    fn laminate_phases() {
        let s = lam(0.5);
        assert_eq!(chi(&s, None, &Point::new(-0.4, 0.1)).unwrap(), 0);
        assert_eq!(chi(&s, None, &Point::new(0.3, 0.0)).unwrap(), 1);
        assert!(Laminate::new(0.0, Axis::X1).is_err());
        assert!(Laminate::new(1.0, Axis::X1).is_err());
    }

    #[test]
    fn disk_wraps_corner_to_matrix() {
        let s = Microstructure::Inclusions(InclusionSet::new(vec![Inclusion::disk([0.0, 0.0], 0.25, 0)], 1).unwrap());
        assert_eq!(chi(&s, None, &Point::new(0.5, 0.5)).unwrap(), 1);
        assert_eq!(chi(&s, None, &Point::new(1.1, -0.9)).unwrap(), 0);
    }

    #[test]
    fn inclusion_validation() {
        let touching = Inclusion::disk([0.3, 0.0], 0.25, 0);
        assert!(InclusionSet::new(vec![touching], 1).is_err());
        let a = Inclusion::disk([-0.2, 0.0], 0.15, 0);
        let b = Inclusion::disk([0.05, 0.0], 0.15, 0);
        assert!(InclusionSet::new(vec![a, b], 1).is_err());
        let c = Inclusion { center: [0.25, 0.0], semi_axes: [0.05, 0.2], angle: 0.3, phase: 2 };
        assert!(InclusionSet::new(vec![a, c], 1).is_ok());
    }

    #[test]
    fn graded_needs_x() {
        assert!(matches!(chi(&graded_x1(2, Profile::Bilinear), None, &Point::zeros()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn aligned_laminate_rasterization() {
        let g = build_cell_grid(4).unwrap();
        let map = rasterize(&lam(0.5), &g, None).unwrap();
        assert_eq!((map.count(0), map.count(1)), (8, 8));
        let g = build_cell_grid(6).unwrap();
        let map = rasterize(&lam(1.0 / 3.0), &g, None).unwrap();
        assert_abs_diff_eq!(map.fraction(0), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn disk_pixel_fraction_matches_area() {
        let g = build_cell_grid(256).unwrap();
        let s = Microstructure::Inclusions(InclusionSet::new(vec![Inclusion::disk([0.0, 0.0], 0.25, 0)], 1).unwrap());
        let frac = rasterize(&s, &g, None).unwrap().fraction(0);
        let exact = std::f64::consts::PI / 16.0;
        assert!((frac - exact).abs() / exact < 0.01, "fraction {frac}");
    }

    #[test]
    fn oscillatory_coefficient_wraps_nx() {
        let coeffs = CoefficientSet::isotropic(&[1.0, 2.0]).unwrap();
        let a = oscillatory_coefficient(&lam(0.5), &coeffs, 2, &Point::new(0.1, 0.7)).unwrap();
        assert_eq!(a, Mat2::identity() * 2.0);
        let single = CoefficientSet::isotropic(&[3.0]).unwrap();
        let hom = Microstructure::homogeneous(0);
        for n in [1, 3, 17] {
            let a = oscillatory_coefficient(&hom, &single, n, &Point::new(0.37, 0.81)).unwrap();
            assert_eq!(a, Mat2::identity() * 3.0);
        }
    }

    #[test]
    fn continuity_modulus_of_graded_laminate() {
        let g = build_cell_grid(200).unwrap();
        let s = graded_x1(5, Profile::Bilinear);
        let x = Point::new(0.2, 0.5);
        assert_eq!(continuity_modulus(&s, &x, &Point::zeros(), &g).unwrap(), 0.0);
        let v = continuity_modulus(&s, &x, &Point::new(0.1, 0.0), &g).unwrap();
        assert!((v - 0.2).abs() <= g.h(), "modulus {v}");
        let pc = graded_x1(4, Profile::PiecewiseConstant);
        let v = continuity_modulus(&pc, &Point::new(0.3, 0.3), &Point::new(0.01, 0.0), &g).unwrap();
        assert_eq!(v, 0.0);
        assert!(matches!(continuity_modulus(&lam(0.5), &x, &Point::zeros(), &g), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn constant_design_has_zero_approximation_error() {
        let p = DesignPartition::new(Rect::unit(), 3, 3).unwrap();
        let s = Microstructure::Graded(
            GradedLaminate::from_fn(p, |_| 0.4, [0.0, 1.0], 1.0, Axis::X2, Profile::Bilinear).unwrap(),
        );
        let quad = ApproximationQuadrature { x_samples: 3, cell: build_cell_grid(32).unwrap() };
        for k in [1, 2, 5] {
            assert_eq!(piecewise_periodic_approximation(&s, k, &quad).unwrap().1.total, 0.0);
        }
    }

    #[test]
    fn rasterize_oscillatory_matches_cell_pattern() {
        let g = build_domain_grid(Rect::unit(), [32, 32], 0.0).unwrap();
        let map = rasterize_oscillatory(&lam(0.5), &g, 4).unwrap();
        assert_abs_diff_eq!(map.fraction(0), 0.5, epsilon = 1e-15);
        // n x in [k, k + 1/2) wraps to [0, 1/2), which is phase 1
        for e in 0..g.element_count() {
            let (i, _) = g.element_ij(e);
            assert_eq!(map.label(e), if i % 8 < 4 { 1 } else { 0 });
        }
    }
}
