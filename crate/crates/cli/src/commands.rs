//! The subcommands. Each writes its files through [`Outputs`] and returns the
//! solver record of the run.

use homlinf::analysis::{convergence_study, ConvergenceRecord};
use homlinf::design::{optimize, realize, DesignProblem, DesignResult, Realization, RealizeSettings};
use homlinf::homogenize::{laminate_closed_form, reuss_bound, voigt_bound, CellSolution, LaminateClosedForm};
use homlinf::io::{corrector_matrix_csv, field_csv, phase_map_csv, BinaryField};
use homlinf::microstructure::{CoefficientSet, Mat2, Microstructure};
use homlinf::{Error, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::{realized_config, RunConfig};
use crate::output::{json_err, Outputs, RunRecord};

fn rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn is_isotropic(a: &Mat2) -> bool {
    a[(0, 1)] == 0.0 && a[(1, 0)] == 0.0 && a[(0, 0)] == a[(1, 1)]
}

/// Effective tensor file contents.
#[derive(Debug, Serialize)]
pub struct TensorReport {
    pub cell_m: usize,
    pub matrix: [[f64; 2]; 2],
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    /// Laminates: computed coefficient across the layers.
    pub a_h: Option<f64>,
    /// Laminates: computed coefficient along the layers.
    pub a_m: Option<f64>,
    /// Laminates of isotropic phases.
    pub closed_form: Option<LaminateClosedForm>,
    pub eigenvalues: [f64; 2],
    pub voigt: [[f64; 2]; 2],
    pub reuss: [[f64; 2]; 2],
    pub asymmetry: f64,
    /// Cell average of the corrector matrix.
    pub corrector_mean: [[f64; 2]; 2],
}

fn tensor_report(spec: &Microstructure, coeffs: &CoefficientSet, cell: &CellSolution) -> Result<TensorReport> {
    let a = *cell.tensor().matrix();
    let (a_h, a_m, closed_form) = match spec {
        Microstructure::Laminate(l) => {
            let k = l.axis().index();
            let closed = if coeffs.len() == 2 && is_isotropic(coeffs.tensor(0)) && is_isotropic(coeffs.tensor(1)) {
                Some(laminate_closed_form(coeffs.tensor(0)[(0, 0)], coeffs.tensor(1)[(0, 0)], l.theta())?)
            } else {
                None
            };
            (Some(a[(k, k)]), Some(a[(1 - k, 1 - k)]), closed)
        }
        _ => (None, None, None),
    };
    Ok(TensorReport {
        cell_m: cell.grid().m(),
        matrix: rows(&a),
        a11: a[(0, 0)],
        a12: a[(0, 1)],
        a21: a[(1, 0)],
        a22: a[(1, 1)],
        a_h,
        a_m,
        closed_form,
        eigenvalues: cell.tensor().eigenvalues(),
        voigt: rows(&voigt_bound(cell.phases(), coeffs)),
        reuss: rows(&reuss_bound(cell.phases(), coeffs)),
        asymmetry: cell.tensor().asymmetry(),
        corrector_mean: rows(&cell.corrector_matrix().mean()),
    })
}

pub fn run_cell(cfg: &RunConfig, out: &mut Outputs) -> Result<RunRecord> {
    let spec = cfg.microstructure()?;
    let coeffs = cfg.coefficients()?;
    let settings = cfg.cell_settings()?;
    let x = cfg.cell_point();
    if spec.is_graded() && x.is_none() {
        return Err(Error::Config("[cell] x is required for graded microstructures".into()));
    }
    let cell = CellSolution::for_spec(&spec, &coeffs, x.as_ref(), &settings)?;
    out.write_json("effective_tensor.json", &tensor_report(&spec, &coeffs, &cell)?)?;
    out.write("corrector_matrix.csv", corrector_matrix_csv(cell.corrector_matrix()).as_bytes())?;
    out.write("phase_map.csv", phase_map_csv(cell.phases()).as_bytes())?;
    let mut record = RunRecord::default();
    for (j, (phi, log)) in cell.correctors().iter().zip(cell.logs()).enumerate() {
        out.write(&format!("corrector_{}.csv", j + 1), field_csv(phi, cell.grid())?.as_bytes())?;
        out.write(&format!("corrector_{}.bin", j + 1), &BinaryField::nodal(phi, cell.grid())?.to_bytes())?;
        record.push(format!("cell corrector e{}", j + 1), *log);
    }
    Ok(record)
}

#[derive(Debug, Serialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub gap: f64,
    pub gap_linf: f64,
    /// Robust gap never grows along the schedule.
    pub gap_non_increasing: bool,
    /// Largest `robust_sup / modulation_sup` over the schedule.
    pub upper_ratio_max: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergeSummary {
    pub finest_n: usize,
    /// Largest robust gap over the phases at the finest scale.
    pub gap_at_finest: f64,
    pub gap_tol: f64,
    pub gap_pass: bool,
    pub energy_gap_at_finest: f64,
    pub energy_tol: f64,
    pub energy_pass: bool,
    pub phases: Vec<PhaseSummary>,
    pub pass: bool,
}

pub fn summarize(record: &ConvergenceRecord, gap_tol: f64, energy_tol: f64) -> Result<ConvergeSummary> {
    let finest = record.finest().ok_or_else(|| Error::Schedule("empty schedule".into()))?;
    let phases: Vec<PhaseSummary> = finest
        .phases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let gaps: Vec<f64> = record.scales.iter().map(|s| s.phases[i].gap).collect();
            let upper_ratio_max = record
                .scales
                .iter()
                .map(|s| {
                    let q = &s.phases[i];
                    if q.modulation_sup > 0.0 {
                        q.robust_sup / q.modulation_sup
                    } else if q.robust_sup > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            PhaseSummary {
                phase: p.phase,
                gap: p.gap,
                gap_linf: p.gap_linf,
                gap_non_increasing: gaps.windows(2).all(|w| w[1] <= w[0]),
                upper_ratio_max,
            }
        })
        .collect();
    let gap_at_finest = phases.iter().map(|p| p.gap).fold(0.0, f64::max);
    let gap_pass = gap_at_finest <= gap_tol;
    let energy_pass = finest.energy_gap <= energy_tol;
    Ok(ConvergeSummary {
        finest_n: finest.n,
        gap_at_finest,
        gap_tol,
        gap_pass,
        energy_gap_at_finest: finest.energy_gap,
        energy_tol,
        energy_pass,
        phases,
        pass: gap_pass && energy_pass,
    })
}

#[derive(Debug, Serialize)]
struct ConvergeFile<'a> {
    summary: &'a ConvergeSummary,
    record: &'a ConvergenceRecord,
}

pub fn run_converge(cfg: &RunConfig, out: &mut Outputs) -> Result<RunRecord> {
    let spec = cfg.microstructure()?;
    let coeffs = cfg.coefficients()?;
    let study = cfg.study()?;
    let record = convergence_study(&spec, &coeffs, &study)?;
    let summary = summarize(&record, cfg.converge.gap_tol, cfg.converge.energy_tol)?;
    out.write("convergence.csv", record.to_csv().as_bytes())?;
    out.write_json("convergence_summary.json", &ConvergeFile { summary: &summary, record: &record })?;
    let mut run = RunRecord::default();
    for (j, log) in record.cell_solves.iter().enumerate() {
        run.push(format!("cell solve {}", j + 1), *log);
    }
    for s in &record.scales {
        run.push(format!("fine n={}", s.n), s.fine_solve);
        run.push(format!("homogenized n={}", s.n), s.homogenized_solve);
    }
    Ok(run)
}

#[derive(Debug, Serialize)]
struct DesignFile<'a> {
    result: &'a DesignResult,
    realization: Option<&'a Realization>,
}

pub fn run_design(cfg: &RunConfig, out: &mut Outputs) -> Result<RunRecord> {
    let coeffs = cfg.coefficients()?;
    let partition = cfg.design_partition()?;
    let start = cfg.design_start(&partition)?;
    let d = &cfg.design;
    let cell = homlinf::homogenize::CellSettings { m: d.cell_m, solver: cfg.solver()? };
    let problem = DesignProblem::new(
        partition,
        coeffs,
        d.load,
        cfg.design_region()?,
        cfg.design_budget()?,
        d.grid_m,
        cell,
        cfg.solver()?,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(m) | Error::Domain(m) | Error::InvalidResolution(m) => Error::Config(format!("[design] {m}")),
        other => other,
    })?;
    let result = optimize(&problem, &start, d.level, &d.optimizer)?;
    let realization = match d.realize {
        Some(r) => Some(realize(
            &problem,
            &result.design,
            d.level,
            &RealizeSettings::new(r.k, r.n, r.elements_per_period),
        )?),
        None => None,
    };
    out.write_json("design_result.json", &DesignFile { result: &result, realization: realization.as_ref() })?;
    let mut run = RunRecord::default();
    if let Some(r) = &realization {
        out.write("realized_spec.toml", realized_config(cfg, &r.spec)?.as_bytes())?;
        out.write("verification.csv", r.record.to_csv().as_bytes())?;
        for s in &r.record.scales {
            run.push(format!("realized fine n={}", s.n), s.fine_solve);
        }
    }
    Ok(run)
}

fn read_json(out: &Outputs, name: &str) -> Result<Option<Value>> {
    let path = out.dir().join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map(Some).map_err(json_err)
}

fn num(v: &Value, path: &[&str]) -> String {
    let mut cur = v;
    for k in path {
        match cur.get(k) {
            Some(next) => cur = next,
            None => return "-".into(),
        }
    }
    match cur {
        Value::Number(n) => format!("{:.6}", n.as_f64().unwrap_or(f64::NAN)),
        Value::Bool(b) => b.to_string(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

/// Markdown summary of the result files found in the output directory.
pub fn run_report(out: &mut Outputs) -> Result<()> {
    let mut md = String::from("# homlinf report\n\n");
    let mut found = false;
    if let Some(t) = read_json(out, "effective_tensor.json")? {
        found = true;
        md.push_str("## Effective tensor\n\n");
        md.push_str(&format!(
            "| a11 | a12 | a21 | a22 | a_h | a_m |\n|---|---|---|---|---|---|\n| {} | {} | {} | {} | {} | {} |\n\n",
            num(&t, &["a11"]),
            num(&t, &["a12"]),
            num(&t, &["a21"]),
            num(&t, &["a22"]),
            num(&t, &["a_h"]),
            num(&t, &["a_m"])
        ));
    }
    if let Some(c) = read_json(out, "convergence_summary.json")? {
        found = true;
        md.push_str("## Convergence study\n\n| n | phase | linf | robust_sup | modulation_sup | gap | energy_gap |\n|---|---|---|---|---|---|---|\n");
        for s in c["record"]["scales"].as_array().into_iter().flatten() {
            for p in s["phases"].as_array().into_iter().flatten() {
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} |\n",
                    s["n"],
                    p["phase"],
                    num(p, &["linf"]),
                    num(p, &["robust_sup"]),
                    num(p, &["modulation_sup"]),
                    num(p, &["gap"]),
                    num(s, &["energy_gap"])
                ));
            }
        }
        md.push_str(&format!(
            "\ngap at finest n: {} (tolerance {}), energy gap: {} (tolerance {}), pass: {}\n\n",
            num(&c, &["summary", "gap_at_finest"]),
            num(&c, &["summary", "gap_tol"]),
            num(&c, &["summary", "energy_gap_at_finest"]),
            num(&c, &["summary", "energy_tol"]),
            num(&c, &["summary", "pass"])
        ));
    }
    if let Some(d) = read_json(out, "design_result.json")? {
        found = true;
        md.push_str("## Design\n\n");
        md.push_str(&format!(
            "theta*: {}\n\ncompliance W: {}\n\nconstraints C_i: {}\n\nlevel M: {}\n\nfeasible: {}\n\naccepted iterates: {}\n\n",
            d["result"]["design"]["theta"],
            num(&d, &["result", "compliance"]),
            d["result"]["constraints"],
            num(&d, &["result", "level"]),
            num(&d, &["result", "feasible"]),
            d["result"]["log"].as_array().map_or(0, |l| l.len())
        ));
        if !d["realization"].is_null() {
            md.push_str(&format!(
                "realized robust sup per phase: {}\n\nratio to M: {}\n\n",
                d["realization"]["robust_sup"], d["realization"]["ratio"]
            ));
        }
    }
    if !found {
        md.push_str("No result files found.\n");
    }
    out.write("report.md", md.as_bytes())
}
