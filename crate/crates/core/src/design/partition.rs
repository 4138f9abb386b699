//! Design partitions, per-subdomain laminate design vectors and the
//! admissibility test (box, Lipschitz and resource constraints).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, Rect};
use crate::microstructure::Axis;

/// `kx * ky` congruent rectangles covering a domain. Subdomain `l = ix + kx * iy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPartition {
    bounds: Rect,
    k: [usize; 2],
}

impl DesignPartition {
    pub fn new(bounds: Rect, kx: usize, ky: usize) -> Result<Self> {
        if kx == 0 || ky == 0 {
            return Err(Error::InvalidArgument(format!(
                "partition needs at least one subdomain per side, got {kx}x{ky}"
            )));
        }
        Ok(DesignPartition { bounds, k: [kx, ky] })
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn shape(&self) -> [usize; 2] {
        self.k
    }

    pub fn len(&self) -> usize {
        self.k[0] * self.k[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> [f64; 2] {
        [self.bounds.width() / self.k[0] as f64, self.bounds.height() / self.k[1] as f64]
    }

    pub fn diameter(&self) -> f64 {
        let [w, h] = self.cell_size();
        w.hypot(h)
    }

    pub fn area(&self, _l: usize) -> f64 {
        let [w, h] = self.cell_size();
        w * h
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.k[0] * iy
    }

    pub fn center(&self, l: usize) -> Point {
        let [w, h] = self.cell_size();
        let (ix, iy) = (l % self.k[0], l / self.k[0]);
        Point::new(
            self.bounds.x[0] + (ix as f64 + 0.5) * w,
            self.bounds.y[0] + (iy as f64 + 0.5) * h,
        )
    }

    pub fn rect(&self, l: usize) -> Rect {
        let [w, h] = self.cell_size();
        let (ix, iy) = (l % self.k[0], l / self.k[0]);
        let x0 = self.bounds.x[0] + ix as f64 * w;
        let y0 = self.bounds.y[0] + iy as f64 * h;
        Rect { x: [x0, x0 + w], y: [y0, y0 + h] }
    }

    /// Subdomain containing `x`; points outside are clamped to the nearest one.
    pub fn subdomain_of(&self, x: &Point) -> usize {
        let [w, h] = self.cell_size();
        let ix = ((x.x - self.bounds.x[0]) / w).floor().clamp(0.0, (self.k[0] - 1) as f64) as usize;
        let iy = ((x.y - self.bounds.y[0]) / h).floor().clamp(0.0, (self.k[1] - 1) as f64) as usize;
        self.index(ix, iy)
    }

    /// Edge-sharing neighbour pairs `(l, l')` with `l < l'`.
    pub fn adjacency(&self) -> Vec<(usize, usize)> {
        let [kx, ky] = self.k;
        let mut pairs = Vec::new();
        for iy in 0..ky {
            for ix in 0..kx {
                let l = self.index(ix, iy);
                if ix + 1 < kx {
                    pairs.push((l, self.index(ix + 1, iy)));
                }
                if iy + 1 < ky {
                    pairs.push((l, self.index(ix, iy + 1)));
                }
            }
        }
        pairs
    }
}

/// Per-subdomain laminate volume fraction `theta_l` (phase 1 fraction) with
/// box bounds, a Lipschitz constant and a fixed layer normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    theta: Vec<f64>,
    lower: f64,
    upper: f64,
    lipschitz: f64,
    axis: Axis,
}

impl DesignVector {
    pub fn new(theta: Vec<f64>, lower: f64, upper: f64, lipschitz: f64, axis: Axis) -> Result<Self> {
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower > upper {
            return Err(Error::InvalidArgument(format!(
                "theta bounds must satisfy 0 <= lower <= upper <= 1, got [{lower}, {upper}]"
            )));
        }
        if !(lipschitz > 0.0) {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be positive, got {lipschitz}")));
        }
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("design vector needs finite entries".into()));
        }
        Ok(DesignVector { theta, lower, upper, lipschitz, axis })
    }

    /// Spatially constant design.
    pub fn uniform(len: usize, theta: f64, lower: f64, upper: f64, lipschitz: f64, axis: Axis) -> Result<Self> {
        Self::new(vec![theta; len], lower, upper, lipschitz, axis)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        DesignVector { theta, ..self.clone() }
    }

    pub fn within_box(&self) -> bool {
        self.theta.iter().all(|&t| t >= self.lower && t <= self.upper)
    }
}

/// Upper bounds `gamma_i` on the domain integral of each phase's local volume fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceBudget {
    gamma: Vec<f64>,
}

impl ResourceBudget {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != 2 || gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "laminate designs need two non-negative budgets, got {gamma:?}"
            )));
        }
        Ok(ResourceBudget { gamma })
    }

    /// No effective limit on either phase.
    pub fn unlimited() -> Self {
        ResourceBudget { gamma: vec![f64::INFINITY, f64::INFINITY] }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
}

/// Amount of each phase used by a design: `sum_l |Omega_l| theta_i(beta_l)`.
pub fn resource_usage(design: &DesignVector, partition: &DesignPartition) -> [f64; 2] {
    let mut used = [0.0, 0.0];
    for (l, &t) in design.theta().iter().enumerate() {
        used[0] += partition.area(l) * t;
        used[1] += partition.area(l) * (1.0 - t);
    }
    used
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// Subdomains outside the box.
    pub box_violations: Vec<usize>,
    /// Adjacent pairs whose jump exceeds `C * dist(centers)`.
    pub lipschitz_violations: Vec<(usize, usize)>,
    /// `(phase, used, budget)` for exceeded budgets (phases numbered from 1).
    pub resource_violations: Vec<(usize, f64, f64)>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.box_violations.is_empty() && self.lipschitz_violations.is_empty() && self.resource_violations.is_empty()
    }
}

const ADMISSIBILITY_SLACK: f64 = 1e-12;

pub fn admissible(design: &DesignVector, budget: &ResourceBudget, partition: &DesignPartition) -> AdmissibilityReport {
    let mut report = AdmissibilityReport::default();
    if design.len() != partition.len() {
        report.box_violations = (0..design.len().max(partition.len())).collect();
        return report;
    }
    let th = design.theta();
    for (l, &t) in th.iter().enumerate() {
        if t < design.lower() - ADMISSIBILITY_SLACK || t > design.upper() + ADMISSIBILITY_SLACK {
            report.box_violations.push(l);
        }
    }
    for (a, b) in partition.adjacency() {
        let limit = design.lipschitz() * (partition.center(a) - partition.center(b)).norm();
        if (th[a] - th[b]).abs() > limit + ADMISSIBILITY_SLACK {
            report.lipschitz_violations.push((a, b));
        }
    }
    let used = resource_usage(design, partition);
    for (i, (&u, &g)) in used.iter().zip(budget.gamma()).enumerate() {
        if u > g + ADMISSIBILITY_SLACK * (1.0 + g.abs().min(1e300)) {
            report.resource_violations.push((i + 1, u, g));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2x2() -> DesignPartition {
        DesignPartition::new(Rect::unit(), 2, 2).unwrap()
    }

    #[test]
    fn partition_geometry() {
        let p = unit2x2();
        assert_eq!(p.len(), 4);
        assert_eq!(p.center(3), Point::new(0.75, 0.75));
        assert_eq!(p.subdomain_of(&Point::new(0.1, 0.9)), 2);
        assert_eq!(p.subdomain_of(&Point::new(1.0, 1.0)), 3);
        assert_eq!(p.adjacency(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        let total: f64 = (0..4).map(|l| p.area(l)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_design_is_admissible() {
        let p = unit2x2();
        let d = DesignVector::uniform(4, 0.5, 0.2, 0.8, 1.0, Axis::X1).unwrap();
        assert!(admissible(&d, &ResourceBudget::new(vec![1.0, 1.0]).unwrap(), &p).is_admissible());
    }

    #[test]
    fn lipschitz_jump_is_reported() {
        let p = unit2x2();
        let d = DesignVector::new(vec![0.2, 0.8, 0.2, 0.2], 0.0, 1.0, 1.0, Axis::X1).unwrap();
        let r = admissible(&d, &ResourceBudget::unlimited(), &p);
        assert_eq!(r.lipschitz_violations, vec![(0, 1), (1, 3)]);
        assert!(!r.is_admissible());
    }

    #[test]
    fn resource_overuse_is_reported() {
        let p = DesignPartition::new(Rect::unit(), 1, 1).unwrap();
        let d = DesignVector::uniform(1, 0.9, 0.0, 1.0, 1.0, Axis::X1).unwrap();
        let r = admissible(&d, &ResourceBudget::new(vec![0.5, 1.0]).unwrap(), &p);
        assert_eq!(r.resource_violations.len(), 1);
        let (phase, used, budget) = r.resource_violations[0];
        assert_eq!(phase, 1);
        assert!((used - 0.9).abs() < 1e-15 && budget == 0.5);
    }
}
