//! Realization of an optimized design as a fine-scale piecewise-periodic
//! microstructure, checked against the constraint level.

use serde::Serialize;

use super::partition::DesignVector;
use super::problem::DesignProblem;
use crate::analysis::{convergence_study, ConvergenceRecord, RobustSupSettings, StudySettings};
use crate::error::{Error, Result};
use crate::microstructure::{piecewise_periodic_approximation, ApproximationError, ApproximationQuadrature, Microstructure};
use crate::pde::AffineFn;

#[derive(Clone, Debug)]
pub struct RealizeSettings {
    /// Subdomains per side of the realized partition; a multiple of the design partition.
    pub k: usize,
    pub n: usize,
    pub elements_per_period: usize,
    pub robust: RobustSupSettings,
    pub quadrature: ApproximationQuadrature,
}

impl RealizeSettings {
    pub fn new(k: usize, n: usize, elements_per_period: usize) -> Self {
        RealizeSettings {
            k,
            n,
            elements_per_period,
            robust: RobustSupSettings::default(),
            quadrature: ApproximationQuadrature::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Realization {
    pub spec: Microstructure,
    pub approximation: ApproximationError,
    pub record: ConvergenceRecord,
    pub level: Option<f64>,
    /// Fine-scale robust supremum of `chi^i |grad u_n|` over `S`, per phase.
    pub robust_sup: Vec<f64>,
    /// `robust_sup / level` per phase, when constrained.
    pub ratio: Option<Vec<f64>>,
}

/// Freeze `design` on a `k x k` partition, oscillate it at scale `n` and solve
/// the fine problem with the design load and zero boundary data.
pub fn realize(
    problem: &DesignProblem,
    design: &DesignVector,
    level: Option<f64>,
    settings: &RealizeSettings,
) -> Result<Realization> {
    let [kx, ky] = problem.partition().shape();
    if settings.k == 0 || settings.k % kx != 0 || settings.k % ky != 0 {
        return Err(Error::InvalidArgument(format!(
            "realization partition {} must refine the {kx}x{ky} design partition",
            settings.k
        )));
    }
    let spec = problem.spec(design)?;
    let (realized, approximation) = piecewise_periodic_approximation(&spec, settings.k, &settings.quadrature)?;
    let study = StudySettings {
        schedule: vec![settings.n],
        elements_per_period: settings.elements_per_period,
        domain: problem.partition().bounds(),
        load: problem.load(),
        boundary: AffineFn::default(),
        region: Some(problem.region()),
        robust: settings.robust,
        cell_m: Some(problem.cell_settings().m),
        solver: *problem.solver(),
        ..Default::default()
    };
    let record = convergence_study(&realized, problem.coefficients(), &study)?;
    let robust_sup: Vec<f64> = record.scales[0].phases.iter().map(|p| p.robust_sup).collect();
    let ratio = level.map(|m| robust_sup.iter().map(|r| r / m).collect());
    Ok(Realization { spec: realized, approximation, record, level, robust_sup, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::default_region;
    use crate::design::{DesignPartition, ResourceBudget};
    use crate::grid::{Point, Rect};
    use crate::homogenize::{CellSettings, Homogenizer};
    use crate::microstructure::{Axis, CoefficientSet};
    use crate::pde::SolverSettings;

    fn problem() -> DesignProblem {
        DesignProblem::new(
            DesignPartition::new(Rect::unit(), 2, 2).unwrap(),
            CoefficientSet::isotropic(&[1.0, 2.0]).unwrap(),
            AffineFn::constant(1.0),
            default_region(&Rect::unit()).unwrap(),
            ResourceBudget::unlimited(),
            16,
            CellSettings { m: 32, solver: SolverSettings::default() },
            SolverSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn realized_cells_are_the_design_cells() {
        let p = problem();
        let d = DesignVector::new(vec![0.25, 0.5, 0.5, 0.75], 0.0, 1.0, 10.0, Axis::X1).unwrap();
        let spec = p.spec(&d).unwrap();
        let (realized, err) = piecewise_periodic_approximation(&spec, 4, &ApproximationQuadrature::default()).unwrap();
        assert_eq!(err.total, 0.0);
        let hom = Homogenizer::new(realized, p.coefficients().clone(), *p.cell_settings()).unwrap();
        for (l, &t) in d.theta().iter().enumerate() {
            let c = p.partition().center(l);
            let x = Point::new(c.x + 0.1, c.y - 0.1);
            assert_eq!(hom.tensor_at(Some(&x)).unwrap(), *p.cell(t, Axis::X1).unwrap().tensor());
        }
    }

    #[test]
    fn homogeneous_design_stays_below_level() {
        let p = problem();
        let d = DesignVector::uniform(4, 1.0, 0.0, 1.0, 1.0, Axis::X1).unwrap();
        let c = p.gradient_constraint(&d).unwrap();
        let level = c[0];
        let r = realize(&p, &d, Some(level), &RealizeSettings::new(2, 2, 16)).unwrap();
        assert!(r.robust_sup[0] <= level * 1.02, "{} vs {level}", r.robust_sup[0]);
        assert_eq!(r.robust_sup[1], 0.0);
        assert!(realize(&p, &d, None, &RealizeSettings::new(3, 2, 16)).is_err());
    }
}
