//! Fine-scale versus homogenized comparisons along an oscillation schedule.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{gradient_magnitudes, nonconcentration_check, energy_functional, PhaseSample, RobustSupSettings};
use crate::error::{Error, Result};
use crate::grid::{build_domain_grid, element_gradient, gradient_at, DomainGrid, Point, Rect, ScalarField, StructuredGrid};
use crate::homogenize::{CellSettings, CellSolution, Homogenizer};
use crate::microstructure::{rasterize_oscillatory, CoefficientSet, Mat2, Microstructure, PhaseMap};
use crate::pde::{solve_dirichlet_from, AffineFn, LocalCorrectorProblem, SolveLog, SolverSettings};

/// Smallest admissible number of elements per period of the fine pattern.
pub const MIN_ELEMENTS_PER_PERIOD: usize = 16;

/// Elements per side for oscillation scale `n`: `elements_per_period * n * side`,
/// which must be a whole number for both sides.
pub fn mesh_for_scale(domain: &Rect, n: usize, elements_per_period: usize) -> Result<[usize; 2]> {
    if n == 0 {
        return Err(Error::Schedule("oscillation scale n must be >= 1".into()));
    }
    if elements_per_period < MIN_ELEMENTS_PER_PERIOD {
        return Err(Error::Schedule(format!(
            "{elements_per_period} elements per period is below the minimum of {MIN_ELEMENTS_PER_PERIOD}"
        )));
    }
    let side = |len: f64| -> Result<usize> {
        let m = elements_per_period as f64 * n as f64 * len;
        let r = m.round();
        if (m - r).abs() > 1e-9 * m.max(1.0) || r < 1.0 {
            return Err(Error::Schedule(format!(
                "n = {n} with {elements_per_period} elements per period gives {m} elements on a side of length {len}"
            )));
        }
        Ok(r as usize)
    };
    Ok([side(domain.width())?, side(domain.height())?])
}

/// `Omega` shrunk by a tenth of its diameter.
pub fn default_region(domain: &Rect) -> Result<Rect> {
    domain
        .shrink(0.1 * domain.diameter())
        .ok_or_else(|| Error::Domain("domain too thin for the default interior region".into()))
}

fn check_region(domain: &Rect, s: &Rect) -> Result<()> {
    let inside = s.x[0] > domain.x[0] && s.x[1] < domain.x[1] && s.y[0] > domain.y[0] && s.y[1] < domain.y[1];
    if !inside {
        return Err(Error::Domain(format!(
            "region [{}, {}] x [{}, {}] is not compactly contained in the domain",
            s.x[0], s.x[1], s.y[0], s.y[1]
        )));
    }
    Ok(())
}

/// Fine-scale solution `u_n` with its mesh and phase layout.
#[derive(Clone, Debug)]
pub struct FineSolution {
    pub n: usize,
    pub grid: DomainGrid,
    pub phases: PhaseMap,
    pub coefficients: Vec<Mat2>,
    pub u: ScalarField,
    pub log: SolveLog,
}

/// Solve `-div(A(chi(x, n x)) grad u_n) = f`, `u_n = g` on the mesh fixed by the mesh rule.
#[allow(clippy::too_many_arguments)]
pub fn solve_fine(
    spec: &Microstructure,
    coeffs: &CoefficientSet,
    domain: &Rect,
    n: usize,
    elements_per_period: usize,
    load: &AffineFn,
    boundary: &AffineFn,
    solver: &SolverSettings,
    initial: Option<&ScalarField>,
) -> Result<FineSolution> {
    spec.check_coefficients(coeffs)?;
    let shape = mesh_for_scale(domain, n, elements_per_period)?;
    let grid = build_domain_grid(*domain, shape, 0.0)?;
    let phases = rasterize_oscillatory(spec, &grid, n)?;
    let coefficients = phases.coefficients(coeffs);
    let (u, log) = solve_dirichlet_from(&grid, &coefficients, &load.as_load(&grid), |p| boundary.eval(p), solver, initial)?;
    Ok(FineSolution { n, grid, phases, coefficients, u, log })
}

/// Homogenized solution `u^H` on a given grid.
#[derive(Clone, Debug)]
pub struct HomogenizedSolution {
    pub tensors: Vec<Mat2>,
    pub u: ScalarField,
    pub log: SolveLog,
}

pub fn solve_homogenized(
    homogenizer: &Homogenizer,
    grid: &DomainGrid,
    load: &AffineFn,
    boundary: &AffineFn,
    solver: &SolverSettings,
) -> Result<HomogenizedSolution> {
    let tensors = homogenizer.tensor_field(grid)?;
    let (u, log) = solve_dirichlet_from(grid, &tensors, &load.as_load(grid), |p| boundary.eval(p), solver, None)?;
    Ok(HomogenizedSolution { tensors, u, log })
}

/// `3 x 3` lattice at the quartiles of `S ∩ {dist(x, boundary) > r}`.
pub fn default_window_samples(domain: &Rect, s: &Rect, r: f64) -> Result<Vec<Point>> {
    let inner = domain
        .shrink(r)
        .ok_or_else(|| Error::Domain(format!("no point of the domain admits a window of size {r}")))?;
    let lo = [s.x[0].max(inner.x[0]), s.y[0].max(inner.y[0])];
    let hi = [s.x[1].min(inner.x[1]), s.y[1].min(inner.y[1])];
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return Err(Error::Domain(format!("no point of the region admits a window of size {r}")));
    }
    let mut out = Vec::with_capacity(9);
    for b in 1..=3 {
        for a in 1..=3 {
            out.push(Point::new(
                lo[0] + a as f64 * (hi[0] - lo[0]) / 4.0,
                lo[1] + b as f64 * (hi[1] - lo[1]) / 4.0,
            ));
        }
    }
    Ok(out)
}

/// `int_S int_Y |P^{r,n}(x, y) grad u^H(x) - grad u_n(x + r y)|^2 dy dx`, with the
/// outer integral approximated by `|S|` times the mean over `samples`.
#[allow(clippy::too_many_arguments)]
pub fn corrector_approx_error(
    fine: &FineSolution,
    spec: &Microstructure,
    coeffs: &CoefficientSet,
    u_h: &ScalarField,
    grid_h: &DomainGrid,
    s: &Rect,
    r: f64,
    samples: &[Point],
    elements_per_period: usize,
    solver: &SolverSettings,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("corrector error needs at least one sample point".into()));
    }
    u_h.check_len(grid_h)?;
    let domain = fine.grid.bounds();
    let per_sample: Vec<f64> = samples
        .par_iter()
        .map(|x| -> Result<f64> {
            let window = LocalCorrectorProblem::new(spec, coeffs, &domain, x, r, fine.n, elements_per_period)?;
            let xi = gradient_at(u_h, grid_h, x)?;
            let (w, _) = window.solve(&xi, solver)?;
            let cell = window.grid();
            let area = cell.element_area();
            let mut sum = 0.0;
            for (e, gw) in element_gradient(&w, cell).iter().enumerate() {
                let p = x + cell.element_center(e) * r;
                let local = gw + xi;
                let g = gradient_at(&fine.u, &fine.grid, &p)?;
                sum += (local - g).norm_squared() * area;
            }
            Ok(sum)
        })
        .collect::<Result<_>>()?;
    Ok(s.area() * per_sample.iter().sum::<f64>() / samples.len() as f64)
}

/// For a laminate with layers normal to axis `k`:
/// `(max |a(n x) d_k u_n - a_h d_k u^H|, max |d_t u_n - d_t u^H|)` over elements in `region`.
pub fn flux_uniform_error(
    fine: &FineSolution,
    u_h: &ScalarField,
    spec: &Microstructure,
    coeffs: &CoefficientSet,
    a_h: f64,
    region: &Rect,
) -> Result<[f64; 2]> {
    let Microstructure::Laminate(lam) = spec else {
        return Err(Error::NotApplicable("uniform flux convergence is defined for laminates".into()));
    };
    u_h.check_len(&fine.grid)?;
    for a in coeffs.tensors() {
        if a[(0, 1)] != 0.0 || a[(0, 0)] != a[(1, 1)] {
            return Err(Error::NotApplicable("uniform flux check needs isotropic phases".into()));
        }
    }
    let k = lam.axis().index();
    let t = 1 - k;
    let gn = element_gradient(&fine.u, &fine.grid);
    let gh = element_gradient(u_h, &fine.grid);
    let mut err = [0.0f64; 2];
    for e in 0..fine.grid.element_count() {
        if !region.contains(&fine.grid.element_center(e)) {
            continue;
        }
        let a = fine.coefficients[e][(0, 0)];
        err[0] = err[0].max((a * gn[e][k] - a_h * gh[e][k]).abs());
        err[1] = err[1].max((gn[e][t] - gh[e][t]).abs());
    }
    Ok(err)
}

/// Two sides of the weighted energy identity for one phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedIdentity {
    /// `int phi(x) eta(n x) chi^i(x, n x) |grad u_n|^2 dx`.
    pub left: f64,
    /// `int int phi(x) eta(y) chi^i(x, y) |P(x, y) grad u^H(x)|^2 dy dx`.
    pub right: f64,
    /// The right side with `|phi|` and `|eta|`; a scale for the gap when the
    /// weights change sign.
    pub right_abs: f64,
}

impl WeightedIdentity {
    pub fn gap(&self) -> f64 {
        if self.right_abs == 0.0 {
            return (self.left - self.right).abs();
        }
        (self.left - self.right).abs() / self.right_abs
    }
}

/// Evaluate both sides on the fine grid; `u_h` lives on the same grid.
pub fn weighted_energy_identity(
    fine: &FineSolution,
    u_h: &ScalarField,
    homogenizer: &Homogenizer,
    phi: impl Fn(&Point) -> f64 + Sync,
    eta: impl Fn(&Point) -> f64 + Sync,
    phase: usize,
) -> Result<WeightedIdentity> {
    u_h.check_len(&fine.grid)?;
    let grid = &fine.grid;
    let area = grid.element_area();
    let nf = fine.n as f64;
    let gn = element_gradient(&fine.u, grid);
    let gh = element_gradient(u_h, grid);
    homogenizer.prefetch()?;
    let mut forms: HashMap<*const CellSolution, (Mat2, Mat2)> = HashMap::new();
    let (mut left, mut right, mut right_abs) = (0.0, 0.0, 0.0);
    for e in 0..grid.element_count() {
        let x = grid.element_center(e);
        let w = phi(&x);
        if fine.phases.label(e) == phase {
            let y = crate::grid::wrap_point(&(x * nf));
            left += w * eta(&y) * gn[e].norm_squared() * area;
        }
        let cell: Arc<CellSolution> = homogenizer.cell_at(Some(&x))?;
        let (wf, wa) = *forms
            .entry(Arc::as_ptr(&cell))
            .or_insert_with(|| (cell.weighted_form(phase, &eta), cell.weighted_form(phase, |y| eta(y).abs())));
        let xi = gh[e];
        right += w * xi.dot(&(wf * xi)) * area;
        right_abs += w.abs() * xi.dot(&(wa * xi)) * area;
    }
    Ok(WeightedIdentity { left, right, right_abs })
}

/// Inputs of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySettings {
    pub schedule: Vec<usize>,
    pub elements_per_period: usize,
    pub domain: Rect,
    pub load: AffineFn,
    pub boundary: AffineFn,
    /// Region `S`; defaults to the domain shrunk by a tenth of its diameter.
    pub region: Option<Rect>,
    pub robust: RobustSupSettings,
    /// Cell grid for the homogenized references; by default one element per
    /// fine-scale element of a period, so both describe the same rasterized material.
    pub cell_m: Option<usize>,
    pub solver: SolverSettings,
    /// Window size `r` for the corrector error; scales with non-integer `r n` are skipped.
    pub window: Option<f64>,
    /// Non-concentration level `delta` as a fraction of `sup_S M^i`.
    pub delta_fraction: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            schedule: vec![4, 8, 16],
            elements_per_period: MIN_ELEMENTS_PER_PERIOD,
            domain: Rect::unit(),
            load: AffineFn::constant(1.0),
            boundary: AffineFn::default(),
            region: None,
            robust: RobustSupSettings::default(),
            cell_m: None,
            solver: SolverSettings::default(),
            window: None,
            delta_fraction: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    /// Phase number, counted from 1.
    pub phase: usize,
    pub linf: f64,
    pub robust_sup: f64,
    pub modulation_sup: f64,
    /// `|robust_sup - modulation_sup| / modulation_sup`.
    pub gap: f64,
    /// `|linf - modulation_sup| / modulation_sup`.
    pub gap_linf: f64,
    /// `|{chi^i |grad u_n| > modulation_sup - delta}|` in `S`.
    pub nonconcentration_measure: f64,
    /// Fraction of `S` occupied by the phase.
    pub phase_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub n: usize,
    /// Elements per side (first axis).
    pub m: usize,
    pub phases: Vec<PhaseRecord>,
    pub energy: f64,
    pub energy_homogenized: f64,
    pub energy_gap: f64,
    pub corr_l2: Option<f64>,
    pub flux_err: Option<[f64; 2]>,
    pub fine_solve: SolveLog,
    pub homogenized_solve: SolveLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub elements_per_period: usize,
    pub cell_m: usize,
    pub region: Rect,
    pub epsilon: f64,
    pub window: Option<f64>,
    /// `A^H` for periodic specs (row-major), absent for graded ones.
    pub effective_tensor: Option<[[f64; 2]; 2]>,
    pub cell_solves: Vec<SolveLog>,
    pub scales: Vec<ScaleRecord>,
}

impl ConvergenceRecord {
    pub const CSV_HEADER: &'static str =
        "n,m,phase,linf,robust_sup,modulation_sup,gap,energy,energy_gap,corr_l2,flux_err_1,flux_err_2";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.12e}"));
        for s in &self.scales {
            for p in &s.phases {
                out.push_str(&format!(
                    "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}\n",
                    s.n,
                    s.m,
                    p.phase,
                    p.linf,
                    p.robust_sup,
                    p.modulation_sup,
                    p.gap,
                    s.energy,
                    s.energy_gap,
                    opt(s.corr_l2),
                    opt(s.flux_err.map(|f| f[0])),
                    opt(s.flux_err.map(|f| f[1])),
                ));
            }
        }
        out
    }

    pub fn finest(&self) -> Option<&ScaleRecord> {
        self.scales.iter().max_by_key(|s| s.n)
    }
}

fn relative_gap(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        return if value == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (value - reference).abs() / reference
}

/// Solve fine and homogenized problems for each `n` and compare per-phase
/// gradient norms, energies and (when configured) corrector and flux errors.
pub fn convergence_study(spec: &Microstructure, coeffs: &CoefficientSet, settings: &StudySettings) -> Result<ConvergenceRecord> {
    if settings.schedule.is_empty() {
        return Err(Error::Schedule("empty n-schedule".into()));
    }
    let mut schedule = settings.schedule.clone();
    schedule.sort_unstable();
    schedule.dedup();
    for &n in &schedule {
        mesh_for_scale(&settings.domain, n, settings.elements_per_period)?;
    }
    let region = match settings.region {
        Some(r) => r,
        None => default_region(&settings.domain)?,
    };
    check_region(&settings.domain, &region)?;
    RobustSupSettings::new(settings.robust.epsilon)?;

    let cell = CellSettings { m: settings.cell_m.unwrap_or(settings.elements_per_period), solver: settings.solver };
    let homogenizer = Homogenizer::new(spec.clone(), coeffs.clone(), cell)?;
    homogenizer.prefetch()?;
    let periodic_cell = if spec.is_graded() { None } else { Some(homogenizer.cell_at(None)?) };
    let a_h_normal = match spec {
        Microstructure::Laminate(l) => periodic_cell.as_ref().map(|c| c.tensor().matrix()[(l.axis().index(), l.axis().index())]),
        _ => None,
    };

    let scales: Vec<ScaleRecord> = schedule
        .par_iter()
        .map(|&n| -> Result<ScaleRecord> {
            let shape = mesh_for_scale(&settings.domain, n, settings.elements_per_period)?;
            let grid = build_domain_grid(settings.domain, shape, 0.0)?;
            let hom = solve_homogenized(&homogenizer, &grid, &settings.load, &settings.boundary, &settings.solver)?;
            let fine = solve_fine(
                spec,
                coeffs,
                &settings.domain,
                n,
                settings.elements_per_period,
                &settings.load,
                &settings.boundary,
                &settings.solver,
                Some(&hom.u),
            )?;
            let modulation = homogenizer.modulation_field(&hom.u, &grid)?;
            let mags = gradient_magnitudes(&fine.u, &grid)?;
            let phases = (0..coeffs.len())
                .map(|i| -> Result<PhaseRecord> {
                    let sample = PhaseSample::restrict(&mags, &grid, &fine.phases, &region, i);
                    let linf = sample.linf();
                    let robust_sup = sample.robust_sup(&settings.robust);
                    let modulation_sup = modulation.sup_over(&grid, &region, i);
                    let delta = settings.delta_fraction * modulation_sup;
                    let nonconcentration_measure = if delta > 0.0 {
                        nonconcentration_check(&sample, modulation_sup, delta)?
                    } else {
                        0.0
                    };
                    let phase_fraction = if sample.region_measure() > 0.0 {
                        sample.values().len() as f64 * grid.element_area() / sample.region_measure()
                    } else {
                        0.0
                    };
                    Ok(PhaseRecord {
                        phase: i + 1,
                        linf,
                        robust_sup,
                        modulation_sup,
                        gap: relative_gap(robust_sup, modulation_sup),
                        gap_linf: relative_gap(linf, modulation_sup),
                        nonconcentration_measure,
                        phase_fraction,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let energy = energy_functional(&fine.u, &grid, &fine.coefficients, &region)?;
            let energy_homogenized = energy_functional(&hom.u, &grid, &hom.tensors, &region)?;
            let corr_l2 = match settings.window {
                Some(r) if ((r * n as f64) - (r * n as f64).round()).abs() <= 1e-9 && (r * n as f64).round() >= 1.0 => {
                    let samples = default_window_samples(&settings.domain, &region, r)?;
                    Some(corrector_approx_error(
                        &fine,
                        spec,
                        coeffs,
                        &hom.u,
                        &grid,
                        &region,
                        r,
                        &samples,
                        settings.elements_per_period,
                        &settings.solver,
                    )?)
                }
                _ => None,
            };
            let flux_err = match a_h_normal {
                Some(a_h) => match flux_uniform_error(&fine, &hom.u, spec, coeffs, a_h, &region) {
                    Ok(v) => Some(v),
                    Err(Error::NotApplicable(_)) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            Ok(ScaleRecord {
                n,
                m: shape[0],
                phases,
                energy,
                energy_homogenized,
                energy_gap: relative_gap(energy, energy_homogenized),
                corr_l2,
                flux_err,
                fine_solve: fine.log,
                homogenized_solve: hom.log,
            })
        })
        .collect::<Result<_>>()?;

    let effective_tensor = periodic_cell.as_ref().map(|c| {
        let a = c.tensor().matrix();
        [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]]
    });
    let cell_solves = periodic_cell.map(|c| c.logs().to_vec()).unwrap_or_default();
    Ok(ConvergenceRecord {
        elements_per_period: settings.elements_per_period,
        cell_m: cell.m,
        region,
        epsilon: settings.robust.epsilon,
        window: settings.window,
        effective_tensor,
        cell_solves,
        scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::Axis;

    #[test]
    fn mesh_rule() {
        assert_eq!(mesh_for_scale(&Rect::unit(), 4, 16).unwrap(), [64, 64]);
        assert!(matches!(mesh_for_scale(&Rect::unit(), 4, 8), Err(Error::Schedule(_))));
        let r = Rect::new(0.0, 1.0, 0.0, 0.3).unwrap();
        assert!(matches!(mesh_for_scale(&r, 1, 16), Err(Error::Schedule(_))));
        assert_eq!(mesh_for_scale(&r, 5, 16).unwrap(), [80, 24]);
    }

    #[test]
    fn default_samples_match_window_constraint() {
        let s = Rect::new(0.125, 0.875, 0.125, 0.875).unwrap();
        let pts = default_window_samples(&Rect::unit(), &s, 0.25).unwrap();
        let xs: Vec<f64> = pts.iter().take(3).map(|p| p.x).collect();
        assert_eq!(xs, vec![0.375, 0.5, 0.625]);
    }

    #[test]
    fn homogeneous_study_has_no_gap() {
        let coeffs = CoefficientSet::isotropic(&[2.0]).unwrap();
        let settings = StudySettings {
            schedule: vec![1, 2],
            window: Some(0.25),
            ..Default::default()
        };
        let rec = convergence_study(&Microstructure::homogeneous(0), &coeffs, &settings).unwrap();
        for s in &rec.scales {
            assert!(s.phases[0].gap < 1e-8, "gap {}", s.phases[0].gap);
            assert!(s.energy_gap < 1e-8);
        }
        // r n = 1/4 is not an integer, r n = 1/2 neither: no corrector error
        assert!(rec.scales.iter().all(|s| s.corr_l2.is_none()));
        assert!(rec.to_csv().starts_with(ConvergenceRecord::CSV_HEADER));
    }

    #[test]
    fn layered_profile_has_no_flux_error() {
        // boundary data from the 1-d layered solution, which the Q1 space contains
        // when interfaces sit on grid lines; u^H = x1 is its homogenized limit
        let coeffs = CoefficientSet::isotropic(&[1.0, 2.0]).unwrap();
        let spec = Microstructure::laminate(0.5, Axis::X1).unwrap();
        let n = 2;
        let a_h = 4.0 / 3.0;
        let layered = |x: f64| -> f64 {
            // a u' = a_h: slope a_h / a in each layer; phase 1 (a = 2) occupies [k/n, k/n + 1/(2n))
            let period = 1.0 / n as f64;
            let k = (x / period).floor();
            let t = x - k * period;
            let half = 0.5 * period;
            let base = k * period;
            if t <= half {
                base + a_h / 2.0 * t
            } else {
                base + a_h / 2.0 * half + a_h * (t - half)
            }
        };
        let grid = build_domain_grid(Rect::unit(), [32, 32], 0.0).unwrap();
        let phases = rasterize_oscillatory(&spec, &grid, n).unwrap();
        let coefficients = phases.coefficients(&coeffs);
        let (u, log) = crate::pde::solve_dirichlet(
            &grid,
            &coefficients,
            &crate::pde::Load::Constant(0.0),
            |p| layered(p.x),
            &SolverSettings::default(),
        )
        .unwrap();
        let fine = FineSolution { n, grid: grid.clone(), phases, coefficients, u, log };
        let u_h = ScalarField::from_fn(&grid, |p| p.x);
        let s = default_region(&Rect::unit()).unwrap();
        let flux = flux_uniform_error(&fine, &u_h, &spec, &coeffs, a_h, &s).unwrap();
        assert!(flux[0] < 1e-8 && flux[1] < 1e-8, "flux {flux:?}");
    }
}
