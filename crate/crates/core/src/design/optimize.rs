//! Deterministic derivative-free minimization of compliance under the
//! gradient constraint and the admissibility constraints.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::{admissible, DesignPartition, DesignVector, ResourceBudget};
use super::problem::{DesignEvaluation, DesignProblem};
use crate::error::{Error, Result};

/// Relative decrease required to accept a move.
const IMPROVEMENT: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    /// Step sizes on `theta`, used in order.
    pub steps: Vec<f64>,
    /// Quantized `theta` levels. When set, moves go to neighbouring levels,
    /// trials are never projected, and `steps` is ignored.
    pub lattice: Option<Vec<f64>>,
    /// Sweep limit of the alternating projection onto the admissible set.
    pub projection_sweeps: usize,
    /// Sweep limit per step size.
    pub max_sweeps: usize,
    /// Also try moving `theta` in opposite directions on adjacent subdomains,
    /// which keeps the resource usage fixed.
    pub pair_moves: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            steps: vec![0.1, 0.05, 0.025],
            lattice: None,
            projection_sweeps: 100,
            max_sweeps: 50,
            pair_moves: true,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(levels) = &self.lattice {
            if levels.len() < 2 || levels.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidArgument("lattice levels must be strictly increasing, at least 2".into()));
            }
        } else if self.steps.is_empty() || self.steps.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("optimizer steps must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Start,
    Feasibility,
    Descent,
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub stage: Stage,
    pub step: f64,
    /// Subdomains the move changed directly.
    pub moved: Vec<usize>,
    pub theta: Vec<f64>,
    pub compliance: f64,
    pub constraints: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub design: DesignVector,
    pub compliance: f64,
    pub constraints: Vec<f64>,
    /// Constraint level `M`; `None` means unconstrained.
    pub level: Option<f64>,
    pub feasible: bool,
    /// Distinct designs evaluated.
    pub evaluations: usize,
    pub log: Vec<IterateRecord>,
}

/// Euclidean projection onto box, Lipschitz slabs and resource half-spaces
/// by Dykstra's alternating scheme.
pub fn project_admissible(
    design: &DesignVector,
    budget: &ResourceBudget,
    partition: &DesignPartition,
    sweeps: usize,
) -> DesignVector {
    let n = design.len();
    let pairs = partition.adjacency();
    let limits: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| design.lipschitz() * (partition.center(a) - partition.center(b)).norm())
        .collect();
    let weights: Vec<f64> = (0..n).map(|l| partition.area(l)).collect();
    let w2: f64 = weights.iter().map(|w| w * w).sum();
    let total: f64 = weights.iter().sum();
    let (lo, hi) = (design.lower(), design.upper());
    let gamma = budget.gamma();

    // set 0: box; 1..=pairs: slabs; then the two resource half-spaces
    let set_count = 1 + pairs.len() + 2;
    let mut x = design.theta().to_vec();
    let mut incr = vec![vec![0.0; n]; set_count];
    for _ in 0..sweeps {
        let before = x.clone();
        for (k, p) in incr.iter_mut().enumerate() {
            let y: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let mut z = y.clone();
            if k == 0 {
                z.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
            } else if k <= pairs.len() {
                let (a, b) = pairs[k - 1];
                let d = z[a] - z[b];
                let c = limits[k - 1];
                if d.abs() > c {
                    let shift = 0.5 * (d.abs() - c) * d.signum();
                    z[a] -= shift;
                    z[b] += shift;
                }
            } else {
                let used: f64 = z.iter().zip(&weights).map(|(t, w)| t * w).sum();
                // phase 1 uses sum w theta, phase 2 uses total - sum w theta
                let excess = if k == pairs.len() + 1 { used - gamma[0] } else { (total - gamma[1]) - used };
                if excess > 0.0 && excess.is_finite() {
                    let sign = if k == pairs.len() + 1 { -1.0 } else { 1.0 };
                    z.iter_mut().zip(&weights).for_each(|(t, w)| *t += sign * excess * w / w2);
                }
            }
            p.iter_mut().zip(y.iter().zip(&z)).for_each(|(pi, (yi, zi))| *pi = yi - zi);
            x = z;
        }
        let moved = x.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved <= 1e-15 {
            break;
        }
    }
    // the box is the last word: clamp rounding residue
    x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    design.with_theta(x)
}

struct Search<'a> {
    problem: &'a DesignProblem,
    settings: &'a OptimizerSettings,
    memo: Mutex<HashMap<Vec<u64>, DesignEvaluation>>,
}

impl Search<'_> {
    fn key(design: &DesignVector) -> Vec<u64> {
        design.theta().iter().map(|t| t.to_bits()).collect()
    }

    fn evaluate(&self, design: &DesignVector) -> Result<DesignEvaluation> {
        let key = Self::key(design);
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let ev = self.problem.evaluate(design)?;
        self.memo.lock().expect("memo lock").insert(key, ev.clone());
        Ok(ev)
    }

    fn is_admissible(&self, design: &DesignVector) -> bool {
        admissible(design, self.problem.budget(), self.problem.partition()).is_admissible()
    }

    /// The admissible design reached by one move, if any.
    fn trial(&self, current: &DesignVector, step: f64, moved: &[(usize, f64)]) -> Option<DesignVector> {
        let mut theta = current.theta().to_vec();
        match &self.settings.lattice {
            Some(levels) => {
                for &(l, dir) in moved {
                    let idx = nearest_level(levels, theta[l]) as isize + dir as isize;
                    if idx < 0 || idx as usize >= levels.len() {
                        return None;
                    }
                    theta[l] = levels[idx as usize];
                }
                let d = current.with_theta(theta);
                self.is_admissible(&d).then_some(d)
            }
            None => {
                for &(l, dir) in moved {
                    theta[l] += dir * step;
                }
                let d = project_admissible(
                    &current.with_theta(theta),
                    self.problem.budget(),
                    self.problem.partition(),
                    self.settings.projection_sweeps,
                );
                (d.theta() != current.theta() && self.is_admissible(&d)).then_some(d)
            }
        }
    }

    fn moves(&self) -> Vec<Vec<(usize, f64)>> {
        let n = self.problem.partition().len();
        let mut moves: Vec<Vec<(usize, f64)>> = Vec::new();
        for l in 0..n {
            moves.push(vec![(l, 1.0)]);
            moves.push(vec![(l, -1.0)]);
        }
        if self.settings.pair_moves {
            for (a, b) in self.problem.partition().adjacency() {
                moves.push(vec![(a, 1.0), (b, -1.0)]);
                moves.push(vec![(a, -1.0), (b, 1.0)]);
            }
        }
        moves
    }

    /// Coordinate descent on `score` restricted to trials passing `accept`.
    /// Moves are grouped by their lowest subdomain; each group's trials are
    /// evaluated concurrently and the best strict improvement is taken
    /// (earliest trial on ties). Stops early once `done` holds.
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        mut current: DesignVector,
        mut eval: DesignEvaluation,
        stage: Stage,
        score: impl Fn(&DesignEvaluation) -> f64 + Sync,
        accept: impl Fn(&DesignEvaluation) -> bool + Sync,
        done: impl Fn(&DesignEvaluation) -> bool,
        log: &mut Vec<IterateRecord>,
    ) -> Result<(DesignVector, DesignEvaluation)> {
        let steps: Vec<f64> = match &self.settings.lattice {
            Some(_) => vec![1.0],
            None => self.settings.steps.clone(),
        };
        let moves = self.moves();
        let mut groups: Vec<Vec<&Vec<(usize, f64)>>> = vec![Vec::new(); self.problem.partition().len()];
        for m in &moves {
            groups[m.iter().map(|(l, _)| *l).min().unwrap_or(0)].push(m);
        }
        for &step in &steps {
            for _ in 0..self.settings.max_sweeps {
                let mut improved = false;
                for group in &groups {
                    if done(&eval) {
                        return Ok((current, eval));
                    }
                    let candidates: Vec<(Vec<usize>, DesignVector)> = group
                        .iter()
                        .filter_map(|m| {
                            self.trial(&current, step, m).map(|d| (m.iter().map(|(l, _)| *l).collect(), d))
                        })
                        .collect();
                    let evals: Vec<DesignEvaluation> =
                        candidates.par_iter().map(|(_, d)| self.evaluate(d)).collect::<Result<_>>()?;
                    let base = score(&eval);
                    let mut best: Option<usize> = None;
                    for (k, ev) in evals.iter().enumerate() {
                        if !accept(ev) {
                            continue;
                        }
                        let s = score(ev);
                        let bar = best.map_or(base - IMPROVEMENT * base.abs(), |b| score(&evals[b]));
                        if s < bar {
                            best = Some(k);
                        }
                    }
                    if let Some(k) = best {
                        let (moved, design) = candidates[k].clone();
                        current = design;
                        eval = evals[k].clone();
                        improved = true;
                        log.push(record(stage, step, moved, &current, &eval));
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        Ok((current, eval))
    }
}

fn nearest_level(levels: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, &v) in levels.iter().enumerate() {
        if (v - t).abs() < (levels[best] - t).abs() {
            best = k;
        }
    }
    best
}

fn record(stage: Stage, step: f64, moved: Vec<usize>, design: &DesignVector, ev: &DesignEvaluation) -> IterateRecord {
    IterateRecord {
        stage,
        step,
        moved,
        theta: design.theta().to_vec(),
        compliance: ev.compliance,
        constraints: ev.constraints.clone(),
    }
}

/// Minimize compliance over admissible designs with `C_i <= level`.
///
/// An inadmissible start is projected (or snapped to the lattice); a start
/// violating the gradient constraint first goes through a feasibility stage
/// that minimizes `max_i C_i - level`. Fails with [`Error::Infeasible`] when
/// no feasible design is reached.
pub fn optimize(
    problem: &DesignProblem,
    start: &DesignVector,
    level: Option<f64>,
    settings: &OptimizerSettings,
) -> Result<DesignResult> {
    settings.validate()?;
    if let Some(m) = level {
        if !(m >= 0.0) {
            return Err(Error::InvalidArgument(format!("constraint level must be non-negative, got {m}")));
        }
    }
    if start.len() != problem.partition().len() {
        return Err(Error::InvalidArgument(format!(
            "start design has {} entries for {} subdomains",
            start.len(),
            problem.partition().len()
        )));
    }
    let search = Search { problem, settings, memo: Mutex::new(HashMap::new()) };
    let mut current = match &settings.lattice {
        Some(levels) => start.with_theta(start.theta().iter().map(|&t| levels[nearest_level(levels, t)]).collect()),
        None => start.clone(),
    };
    if !search.is_admissible(&current) {
        if settings.lattice.is_some() {
            return Err(Error::Infeasible("start design is not admissible on the lattice".into()));
        }
        current = project_admissible(&current, problem.budget(), problem.partition(), settings.projection_sweeps);
        if !search.is_admissible(&current) {
            return Err(Error::Infeasible("no admissible design found by projection".into()));
        }
    }
    let mut log = Vec::new();
    let mut eval = search.evaluate(&current)?;
    log.push(record(Stage::Start, 0.0, Vec::new(), &current, &eval));

    if !eval.satisfies(level) {
        let (d, e) = search.descend(
            current,
            eval,
            Stage::Feasibility,
            |ev| ev.violation(level),
            |_| true,
            |ev| ev.satisfies(level),
            &mut log,
        )?;
        if !e.satisfies(level) {
            return Err(Error::Infeasible(format!(
                "gradient constraint exceeds M = {} by {:.6e} at the best design found",
                level.unwrap_or(f64::INFINITY),
                e.violation(level)
            )));
        }
        current = d;
        eval = e;
    }
    let (design, eval) = search.descend(
        current,
        eval,
        Stage::Descent,
        |ev| ev.compliance,
        |ev| ev.satisfies(level),
        |_| false,
        &mut log,
    )?;
    let evaluations = search.memo.lock().expect("memo lock").len();
    Ok(DesignResult {
        feasible: eval.satisfies(level),
        compliance: eval.compliance,
        constraints: eval.constraints,
        design,
        level,
        evaluations,
        log,
    })
}

/// Best admissible, feasible design with every `theta_l` on `levels`
/// (lowest lexicographic index on ties), by enumeration.
pub fn exhaustive_search(
    problem: &DesignProblem,
    template: &DesignVector,
    levels: &[f64],
    level: Option<f64>,
) -> Result<Option<(DesignVector, DesignEvaluation)>> {
    let n = problem.partition().len();
    let count = levels
        .len()
        .checked_pow(n as u32)
        .filter(|c| *c <= 1_000_000)
        .ok_or_else(|| Error::InvalidArgument("exhaustive search space too large".into()))?;
    let designs: Vec<DesignVector> = (0..count)
        .map(|mut idx| {
            let mut theta = vec![0.0; n];
            for t in theta.iter_mut() {
                *t = levels[idx % levels.len()];
                idx /= levels.len();
            }
            template.with_theta(theta)
        })
        .filter(|d| admissible(d, problem.budget(), problem.partition()).is_admissible())
        .collect();
    let evals: Vec<DesignEvaluation> = designs.par_iter().map(|d| problem.evaluate(d)).collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    for (k, ev) in evals.iter().enumerate() {
        if ev.satisfies(level) && best.is_none_or(|b| ev.compliance < evals[b].compliance) {
            best = Some(k);
        }
    }
    Ok(best.map(|k| (designs[k].clone(), evals[k].clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::default_region;
    use crate::grid::Rect;
    use crate::homogenize::CellSettings;
    use crate::microstructure::{Axis, CoefficientSet};
    use crate::pde::{AffineFn, SolverSettings};

    fn problem(k: usize, coeffs: [f64; 2], budget: ResourceBudget, load: AffineFn) -> DesignProblem {
        DesignProblem::new(
            DesignPartition::new(Rect::unit(), k, k).unwrap(),
            CoefficientSet::isotropic(&coeffs).unwrap(),
            load,
            default_region(&Rect::unit()).unwrap(),
            budget,
            16,
            CellSettings { m: 32, solver: SolverSettings::default() },
            SolverSettings::default(),
        )
        .unwrap()
    }

    fn levels() -> Vec<f64> {
        vec![0.25, 0.375, 0.5, 0.625, 0.75]
    }

    #[test]
    fn projection_lands_in_admissible_set() {
        let partition = DesignPartition::new(Rect::unit(), 2, 2).unwrap();
        let budget = ResourceBudget::new(vec![0.5, 1.0]).unwrap();
        let d = DesignVector::new(vec![0.9, 0.1, 0.8, 0.95], 0.0, 1.0, 0.5, Axis::X1).unwrap();
        let p = project_admissible(&d, &budget, &partition, 100);
        let report = admissible(&p, &budget, &partition);
        assert!(report.is_admissible(), "{report:?} {:?}", p.theta());
        let inside = DesignVector::uniform(4, 0.4, 0.0, 1.0, 1.0, Axis::X1).unwrap();
        assert_eq!(project_admissible(&inside, &budget, &partition, 100), inside);
    }

    #[test]
    fn unconstrained_single_subdomain_takes_stiffest_budgeted_fraction() {
        // phase 1 is stiff; the budget caps its fraction at 0.6
        let p = problem(1, [10.0, 1.0], ResourceBudget::new(vec![0.6, 1.0]).unwrap(), AffineFn::constant(1.0));
        let start = DesignVector::uniform(1, 0.2, 0.1, 0.9, 1.0, Axis::X1).unwrap();
        let r = optimize(&p, &start, None, &OptimizerSettings::default()).unwrap();
        assert!((r.design.theta()[0] - 0.6).abs() <= 0.025 + 1e-12, "{:?}", r.design.theta());
        assert!(r.feasible);
        // 1-d grid search oracle
        let oracle = exhaustive_search(&p, &start, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], None).unwrap().unwrap();
        assert_eq!(oracle.0.theta(), &[0.6]);
        assert!(r.compliance <= oracle.1.compliance * (1.0 + 1e-12));
    }

    #[test]
    fn accepted_iterates_descend_and_stay_admissible() {
        let budget = ResourceBudget::new(vec![2.0, 2.0]).unwrap();
        let p = problem(2, [10.0, 1.0], budget, AffineFn { c: 1.0, gx: 1.0, gy: 0.0 });
        let start = DesignVector::uniform(4, 0.5, 0.2, 0.8, 1.0, Axis::X1).unwrap();
        let level = Some(10.0);
        let r = optimize(&p, &start, level, &OptimizerSettings::default()).unwrap();
        let descent: Vec<&IterateRecord> = r.log.iter().filter(|it| it.stage != Stage::Feasibility).collect();
        assert!(descent.windows(2).all(|w| w[1].compliance <= w[0].compliance));
        for it in &r.log {
            let d = start.with_theta(it.theta.clone());
            assert!(admissible(&d, p.budget(), p.partition()).is_admissible());
            assert!(it.constraints.iter().all(|&c| c <= 10.0));
        }
        assert!(r.compliance <= r.log[0].compliance);
    }

    #[test]
    fn lattice_optimum_is_returned_unchanged() {
        let budget = ResourceBudget::new(vec![0.5, 1.0]).unwrap();
        let p = problem(2, [10.0, 1.0], budget, AffineFn { c: 1.0, gx: 1.0, gy: 0.0 });
        let template = DesignVector::uniform(4, 0.5, 0.25, 0.75, 2.0, Axis::X1).unwrap();
        let (best, ev) = exhaustive_search(&p, &template, &levels(), None).unwrap().unwrap();
        let settings = OptimizerSettings { lattice: Some(levels()), ..Default::default() };
        let r = optimize(&p, &best, None, &settings).unwrap();
        assert_eq!(r.design.theta(), best.theta());
        assert_eq!(r.compliance, ev.compliance);
        assert_eq!(r.log.len(), 1);
    }

    #[test]
    fn zero_level_with_load_is_infeasible() {
        let p = problem(1, [1.0, 2.0], ResourceBudget::unlimited(), AffineFn::constant(1.0));
        let start = DesignVector::uniform(1, 0.5, 0.0, 1.0, 1.0, Axis::X1).unwrap();
        let err = optimize(&p, &start, Some(0.0), &OptimizerSettings::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err:?}");
    }

    #[test]
    fn optimize_is_deterministic() {
        let p = problem(2, [10.0, 1.0], ResourceBudget::new(vec![0.5, 1.0]).unwrap(), AffineFn::constant(1.0));
        let start = DesignVector::uniform(4, 0.3, 0.1, 0.9, 1.0, Axis::X1).unwrap();
        let a = optimize(&p, &start, None, &OptimizerSettings::default()).unwrap();
        let b = optimize(&p, &start, None, &OptimizerSettings::default()).unwrap();
        assert_eq!(a, b);
    }
}
