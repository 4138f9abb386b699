//! Per-phase statistics of element-wise gradient fields: L-infinity norms,
//! distribution functions, robust suprema and energies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{element_gradient, DomainGrid, Rect, ScalarField, StructuredGrid};
use crate::microstructure::{Mat2, PhaseMap};

/// Fraction `epsilon` of `|S|` that a robust supremum may discard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustSupSettings {
    pub epsilon: f64,
}

impl Default for RobustSupSettings {
    fn default() -> Self {
        RobustSupSettings { epsilon: 1e-3 }
    }
}

impl RobustSupSettings {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1), got {epsilon}")));
        }
        Ok(RobustSupSettings { epsilon })
    }
}

/// Non-negative element values of one phase inside a region `S`, together
/// with the element area and the measure of `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSample {
    values: Vec<f64>,
    element_area: f64,
    region_elements: usize,
}

impl PhaseSample {
    /// `values` are the phase's elements in `S`; `region_elements` counts all
    /// elements of `S` regardless of phase.
    pub fn new(values: Vec<f64>, element_area: f64, region_elements: usize) -> Self {
        PhaseSample { values, element_area, region_elements }
    }

    /// Restrict per-element values of a domain grid to phase `i` and region `s`
    /// (elements whose center lies in `s`).
    pub fn restrict(values: &[f64], grid: &DomainGrid, phase: &PhaseMap, s: &Rect, i: usize) -> Self {
        let mut kept = Vec::new();
        let mut region_elements = 0;
        for (e, &v) in values.iter().enumerate() {
            if s.contains(&grid.element_center(e)) {
                region_elements += 1;
                if phase.label(e) == i {
                    kept.push(v);
                }
            }
        }
        PhaseSample { values: kept, element_area: grid.element_area(), region_elements }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `|S|` as the area of its elements.
    pub fn region_measure(&self) -> f64 {
        self.region_elements as f64 * self.element_area
    }

    /// Largest value, 0 for an empty sample.
    pub fn linf(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// `|{field > t}|`.
    pub fn measure_above(&self, t: f64) -> f64 {
        self.values.iter().filter(|&&v| v > t).count() as f64 * self.element_area
    }

    /// Smallest attained value `v` (or 0) with `|{field > v}| <= epsilon |S|`.
    pub fn robust_sup(&self, settings: &RobustSupSettings) -> f64 {
        let allowed = (settings.epsilon * self.region_elements as f64 * (1.0 + 1e-12)).floor() as usize;
        if self.values.len() <= allowed {
            return 0.0;
        }
        let mut sorted = self.values.clone();
        // descending; the (allowed+1)-th largest value leaves at most `allowed` elements above it
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[allowed]
    }

    /// `lambda(t)` on `k` uniform thresholds from 0 to the largest value.
    pub fn distribution(&self, k: usize) -> Result<DistributionFunction> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("distribution needs at least 2 thresholds, got {k}")));
        }
        let max = self.linf();
        let top = if max > 0.0 { max } else { 1.0 };
        let thresholds: Vec<f64> = (0..k)
            .map(|j| if j + 1 == k { top } else { top * (j as f64 / (k - 1) as f64) })
            .collect();
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        let measures = thresholds
            .iter()
            .map(|&t| {
                let above = sorted.len() - sorted.partition_point(|&v| v <= t);
                above as f64 * self.element_area
            })
            .collect();
        Ok(DistributionFunction { thresholds, measures, region_measure: self.region_measure() })
    }
}

/// Sampled `lambda(t) = |{x in S : chi^i |grad u| > t}|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionFunction {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
    pub region_measure: f64,
}

impl DistributionFunction {
    pub fn is_non_increasing(&self) -> bool {
        self.measures.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `|grad u|` at every element center.
pub fn gradient_magnitudes(u: &ScalarField, grid: &DomainGrid) -> Result<Vec<f64>> {
    u.check_len(grid)?;
    Ok(element_gradient(u, grid).iter().map(|g| g.norm()).collect())
}

/// Per-phase `max |grad u|` over the phase's elements with center in `s`.
pub fn phase_linf(u: &ScalarField, grid: &DomainGrid, phase: &PhaseMap, s: &Rect, phase_count: usize) -> Result<Vec<f64>> {
    let mags = gradient_magnitudes(u, grid)?;
    Ok((0..phase_count).map(|i| PhaseSample::restrict(&mags, grid, phase, s, i).linf()).collect())
}

pub fn robust_esssup(
    u: &ScalarField,
    grid: &DomainGrid,
    phase: &PhaseMap,
    s: &Rect,
    i: usize,
    settings: &RobustSupSettings,
) -> Result<f64> {
    let mags = gradient_magnitudes(u, grid)?;
    Ok(PhaseSample::restrict(&mags, grid, phase, s, i).robust_sup(settings))
}

pub fn distribution(
    u: &ScalarField,
    grid: &DomainGrid,
    phase: &PhaseMap,
    s: &Rect,
    i: usize,
    k: usize,
) -> Result<DistributionFunction> {
    let mags = gradient_magnitudes(u, grid)?;
    PhaseSample::restrict(&mags, grid, phase, s, i).distribution(k)
}

/// `|{x in S : field > ell - delta}|`.
pub fn nonconcentration_check(sample: &PhaseSample, ell: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(sample.measure_above(ell - delta))
}

/// `sum over elements in s of A grad u . grad u * |e|`, gradients at element centers.
pub fn energy_functional(u: &ScalarField, grid: &DomainGrid, coeffs: &[Mat2], s: &Rect) -> Result<f64> {
    u.check_len(grid)?;
    if coeffs.len() != grid.element_count() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for {} elements",
            coeffs.len(),
            grid.element_count()
        )));
    }
    let area = grid.element_area();
    Ok(element_gradient(u, grid)
        .iter()
        .enumerate()
        .filter(|(e, _)| s.contains(&grid.element_center(*e)))
        .map(|(e, g)| g.dot(&(coeffs[e] * g)) * area)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_domain_grid;
    use proptest::prelude::*;

    fn sample(values: Vec<f64>) -> PhaseSample {
        let n = values.len();
        PhaseSample::new(values, 1.0 / n as f64, n)
    }

    #[test]
    fn robust_sup_examples() {
        assert_eq!(sample(vec![1.0; 50]).robust_sup(&RobustSupSettings::default()), 1.0);
        // 10 on a set of measure 1e-4 |S|, 1 elsewhere
        let mut v = vec![1.0; 10_000];
        v[1234] = 10.0;
        let s = sample(v);
        assert_eq!(s.robust_sup(&RobustSupSettings::new(1e-3).unwrap()), 1.0);
        assert_eq!(s.robust_sup(&RobustSupSettings::new(0.0).unwrap()), 10.0);
        assert_eq!(s.linf(), 10.0);
    }

    #[test]
    fn distribution_examples() {
        let s = sample(vec![1.0, 1.0, 2.0, 2.0]);
        let d = s.distribution(5).unwrap();
        assert_eq!(d.thresholds, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d.measures, vec![1.0, 1.0, 0.5, 0.5, 0.0]);
        let z = sample(vec![0.0, 0.0, 3.0]);
        assert!((z.distribution(3).unwrap().measures[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.distribution(1).is_err());
    }

    #[test]
    fn phase_linf_and_energy_of_linear_field() {
        let g = build_domain_grid(Rect::unit(), [8, 8], 0.0).unwrap();
        let u = ScalarField::from_fn(&g, |p| p.x);
        let phase = PhaseMap::new(vec![0; 64]);
        let linf = phase_linf(&u, &g, &phase, &Rect::unit(), 2).unwrap();
        assert!((linf[0] - 1.0).abs() < 1e-14);
        assert_eq!(linf[1], 0.0);
        let e = energy_functional(&u, &g, &vec![Mat2::identity(); 64], &Rect::unit()).unwrap();
        assert!((e - 1.0).abs() < 1e-13);
        let zero = ScalarField::zeros(g.node_count());
        assert_eq!(energy_functional(&zero, &g, &vec![Mat2::identity(); 64], &Rect::unit()).unwrap(), 0.0);
    }

    #[test]
    fn nonconcentration_examples() {
        let s = sample(vec![2.0; 10]);
        assert!((nonconcentration_check(&s, 2.0, 0.1).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nonconcentration_check(&s, 5.0, 0.1).unwrap(), 0.0);
        assert!(nonconcentration_check(&s, 2.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn robust_sup_is_monotone_in_epsilon(values in prop::collection::vec(0.0f64..100.0, 1..300), a in 0.0f64..0.5, b in 0.0f64..0.5) {
            let s = sample(values);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.robust_sup(&RobustSupSettings::new(hi).unwrap()) <= s.robust_sup(&RobustSupSettings::new(lo).unwrap()));
            prop_assert_eq!(s.robust_sup(&RobustSupSettings::new(0.0).unwrap()), s.linf());
        }

        #[test]
        fn robust_sup_commutes_with_squaring(values in prop::collection::vec(0.0f64..100.0, 1..300), eps in 0.0f64..0.9) {
            let settings = RobustSupSettings::new(eps).unwrap();
            let s = sample(values.clone());
            let sq = sample(values.iter().map(|v| v * v).collect());
            prop_assert_eq!(sq.robust_sup(&settings), s.robust_sup(&settings).powi(2));
        }

        #[test]
        fn distribution_is_non_increasing(values in prop::collection::vec(0.0f64..10.0, 1..200), k in 2usize..40) {
            let s = sample(values);
            let d = s.distribution(k).unwrap();
            prop_assert!(d.is_non_increasing());
            prop_assert_eq!(*d.measures.last().unwrap(), 0.0);
            prop_assert!(d.measures[0] <= d.region_measure + 1e-12);
        }
    }
}
