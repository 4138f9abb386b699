use approx::assert_relative_eq;
use homlinf::analysis::{convergence_study, StudySettings};
use homlinf::design::{
    optimize, realize, DesignPartition, DesignProblem, DesignVector, OptimizerSettings, RealizeSettings, ResourceBudget,
};
use homlinf::grid::{Point, Rect};
use homlinf::homogenize::{laminate_closed_form, CellSettings, CellSolution};
use homlinf::io::{BinaryField, FieldKind};
use homlinf::microstructure::{Axis, CoefficientSet, Inclusion, InclusionSet, Microstructure};
use homlinf::pde::{AffineFn, SolverSettings};
use homlinf::Error;

fn cell(spec: &Microstructure, coeffs: &CoefficientSet, m: usize) -> CellSolution {
    CellSolution::for_spec(spec, coeffs, None, &CellSettings { m, solver: SolverSettings::default() }).unwrap()
}

#[test]
fn laminate_cells_reproduce_the_closed_form_on_both_axes() {
    let coeffs = CoefficientSet::isotropic(&[3.0, 0.5]).unwrap();
    for axis in [Axis::X1, Axis::X2] {
        // fractions that are multiples of 1/32 are resolved exactly
        for theta in [0.25, 0.5, 0.75] {
            let c = cell(&Microstructure::laminate(theta, axis).unwrap(), &coeffs, 32);
            let exact = laminate_closed_form(3.0, 0.5, theta).unwrap();
            let a = c.tensor().matrix();
            let expected = exact.tensor(axis);
            for k in 0..4 {
                assert_relative_eq!(a[k], expected[k], epsilon = 1e-9, max_relative = 1e-9);
            }
            let m = c.modulation(&homlinf::grid::Vec2::new(1.0, 2.0));
            let m_exact = exact.modulation(&homlinf::grid::Vec2::new(1.0, 2.0), axis);
            assert_relative_eq!(m[0], m_exact[0], max_relative = 1e-9);
            assert_relative_eq!(m[1], m_exact[1], max_relative = 1e-9);
        }
    }
}

#[test]
fn homogeneous_medium_has_no_homogenization_gap() {
    let spec = Microstructure::homogeneous(0);
    let coeffs = CoefficientSet::isotropic(&[2.0]).unwrap();
    let settings = StudySettings { schedule: vec![1, 2], ..Default::default() };
    let rec = convergence_study(&spec, &coeffs, &settings).unwrap();
    for s in &rec.scales {
        assert!(s.energy_gap < 1e-10, "{}", s.energy_gap);
        assert!(s.phases[0].gap_linf < 1e-8, "{}", s.phases[0].gap_linf);
    }
}

#[test]
fn disk_tensor_is_isotropic_and_bracketed() {
    let spec = Microstructure::Inclusions(InclusionSet::new(vec![Inclusion::disk([0.0, 0.0], 0.25, 1)], 0).unwrap());
    let coeffs = CoefficientSet::isotropic(&[1.0, 10.0]).unwrap();
    let c = cell(&spec, &coeffs, 32);
    let a = c.tensor().matrix();
    assert_relative_eq!(a[(0, 0)], a[(1, 1)], max_relative = 1e-9);
    assert!(a[(0, 1)].abs() < 1e-9);
    // Hashin-Shtrikman bounds for a 2-d isotropic two-phase composite
    let f = c.phases().fraction(1);
    let lower = 1.0 + f / (1.0 / 9.0 + (1.0 - f) / 2.0);
    let upper = 10.0 + (1.0 - f) / (1.0 / (1.0 - 10.0) + f / 20.0);
    assert!(a[(0, 0)] > lower - 1e-3 && a[(0, 0)] < upper + 1e-3, "{} not in [{lower}, {upper}]", a[(0, 0)]);
}

#[test]
fn corrector_fields_round_trip_through_the_binary_format() {
    let spec = Microstructure::laminate(0.5, Axis::X2).unwrap();
    let c = cell(&spec, &CoefficientSet::isotropic(&[1.0, 4.0]).unwrap(), 16);
    let field = BinaryField::nodal(&c.correctors()[1], c.grid()).unwrap();
    let back = BinaryField::from_bytes(&field.to_bytes()).unwrap();
    assert_eq!(back.kind, FieldKind::Nodal);
    assert_eq!(back.values, c.correctors()[1].values());
    assert!(BinaryField::from_bytes(&field.to_bytes()[..10]).is_err());
}

#[test]
fn optimized_design_realizes_within_its_level() {
    let problem = DesignProblem::new(
        DesignPartition::new(Rect::unit(), 1, 1).unwrap(),
        CoefficientSet::isotropic(&[4.0, 1.0]).unwrap(),
        AffineFn::constant(1.0),
        Rect::new(0.2, 0.8, 0.2, 0.8).unwrap(),
        ResourceBudget::new(vec![0.5, 1.0]).unwrap(),
        16,
        CellSettings { m: 16, solver: SolverSettings::default() },
        SolverSettings::default(),
    )
    .unwrap();
    let start = DesignVector::uniform(1, 0.25, 0.25, 0.75, 1.0, Axis::X1).unwrap();
    let result = optimize(&problem, &start, None, &OptimizerSettings::default()).unwrap();
    assert!(result.feasible);
    assert!((result.design.theta()[0] - 0.5).abs() < 1e-12, "{:?}", result.design.theta());
    let level = result.constraints.iter().cloned().fold(0.0, f64::max);
    let real = realize(&problem, &result.design, Some(level), &RealizeSettings::new(1, 4, 16)).unwrap();
    assert_eq!(real.robust_sup.len(), 2);
    assert!(real.approximation.total < 1e-12);
    assert!(matches!(
        realize(&problem, &result.design, None, &RealizeSettings::new(0, 4, 16)),
        Err(Error::InvalidArgument(_))
    ));
    let p = Point::new(0.5, 0.5);
    assert!(homlinf::microstructure::chi(&real.spec, Some(&p), &Point::new(-0.3, 0.0)).is_ok());
}
