//! Run configuration: a TOML file with one section per subcommand. Every key
//! has a default, so an empty file is a valid config; `print-defaults` shows
//! the complete set.

use homlinf::analysis::{RobustSupSettings, StudySettings};
use homlinf::design::{DesignPartition, DesignVector, OptimizerSettings, ResourceBudget};
use homlinf::grid::{Point, Rect};
use homlinf::homogenize::CellSettings;
use homlinf::microstructure::{
    Axis, CoefficientSet, GradedLaminate, Inclusion, InclusionSet, Mat2, Microstructure, Profile,
};
use homlinf::pde::{AffineFn, SolverSettings};
use homlinf::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Worker threads; 0 picks one per core.
    pub threads: usize,
    pub microstructure: MicrostructureConfig,
    pub solver: SolverConfig,
    pub cell: CellConfig,
    pub converge: ConvergeConfig,
    pub design: DesignConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threads: 0,
            microstructure: MicrostructureConfig::default(),
            solver: SolverConfig::default(),
            cell: CellConfig::default(),
            converge: ConvergeConfig::default(),
            design: DesignConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Laminate,
    Inclusions,
    Homogeneous,
    Graded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub a11: f64,
    #[serde(default)]
    pub a12: f64,
    pub a22: f64,
}

impl PhaseConfig {
    pub fn isotropic(a: f64) -> Self {
        PhaseConfig { a11: a, a12: 0.0, a22: a }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    /// Defaults to `a` (a disk).
    pub b: Option<f64>,
    #[serde(default)]
    pub angle: f64,
    /// Phase id, counted from 1.
    pub phase: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub kx: usize,
    pub ky: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileConfig {
    Bilinear,
    PiecewiseConstant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradedConfig {
    /// `[x0, x1, y0, y1]`.
    pub domain: [f64; 4],
    pub partition: PartitionConfig,
    /// Phase-1 fraction per subdomain, `l = ix + kx * iy`; overrides `theta_linear`.
    pub theta: Option<Vec<f64>>,
    /// `theta(x) = c + gx x1 + gy x2`, sampled at subdomain centers.
    pub theta_linear: AffineFn,
    pub theta_bounds: [f64; 2],
    #[serde(rename = "lipschitz_C")]
    pub lipschitz: f64,
    pub profile: ProfileConfig,
}

impl Default for GradedConfig {
    fn default() -> Self {
        GradedConfig {
            domain: [0.0, 1.0, 0.0, 1.0],
            partition: PartitionConfig { kx: 4, ky: 4 },
            theta: None,
            theta_linear: AffineFn { c: 0.3, gx: 0.4, gy: 0.0 },
            theta_bounds: [0.0, 1.0],
            lipschitz: 1.0,
            profile: ProfileConfig::Bilinear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicrostructureConfig {
    pub variant: Variant,
    /// Laminate: volume fraction of phase 1.
    pub theta: f64,
    /// Laminate and graded: layer normal, 1 or 2.
    pub axis: usize,
    /// Homogeneous: the phase filling the cell.
    pub phase: usize,
    /// Inclusions: the surrounding phase.
    pub matrix_phase: usize,
    pub inclusions: Vec<InclusionConfig>,
    pub graded: GradedConfig,
    pub phases: Vec<PhaseConfig>,
    /// Ellipticity bounds; default to the extreme phase eigenvalues.
    pub lambda: Option<f64>,
    #[serde(rename = "Lambda")]
    pub upper: Option<f64>,
}

impl Default for MicrostructureConfig {
    fn default() -> Self {
        MicrostructureConfig {
            variant: Variant::Laminate,
            theta: 0.5,
            axis: 1,
            phase: 1,
            matrix_phase: 1,
            inclusions: Vec::new(),
            graded: GradedConfig::default(),
            phases: vec![PhaseConfig::isotropic(1.0), PhaseConfig::isotropic(2.0)],
            lambda: None,
            upper: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverConfig { rel_tol: s.rel_tol, max_iter: s.max_iter }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    pub m: usize,
    /// Macroscopic point for graded microstructures.
    pub x: Option<[f64; 2]>,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig { m: CellSettings::default().m, x: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub schedule: Vec<usize>,
    pub elements_per_period: usize,
    pub domain: [f64; 4],
    pub load: AffineFn,
    pub boundary: AffineFn,
    /// Region `S` as `[x0, x1, y0, y1]`; defaults to the domain shrunk by a tenth of its diameter.
    pub region: Option<[f64; 4]>,
    pub epsilon: f64,
    /// Cell resolution of the homogenized references; defaults to `elements_per_period`.
    pub cell_m: Option<usize>,
    /// Window size `r` of the local corrector error.
    pub window: Option<f64>,
    pub delta_fraction: f64,
    /// Pass threshold for the relative gap at the finest scale.
    pub gap_tol: f64,
    /// Pass threshold for the relative energy gap at the finest scale.
    pub energy_tol: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        let s = StudySettings::default();
        ConvergeConfig {
            schedule: s.schedule,
            elements_per_period: s.elements_per_period,
            domain: [0.0, 1.0, 0.0, 1.0],
            load: s.load,
            boundary: s.boundary,
            region: None,
            epsilon: s.robust.epsilon,
            cell_m: None,
            window: None,
            delta_fraction: s.delta_fraction,
            gap_tol: 0.05,
            energy_tol: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealizeConfig {
    pub k: usize,
    pub n: usize,
    pub elements_per_period: usize,
}

impl Default for RealizeConfig {
    fn default() -> Self {
        RealizeConfig { k: 2, n: 4, elements_per_period: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub domain: [f64; 4],
    pub partition: PartitionConfig,
    pub axis: usize,
    pub theta_bounds: [f64; 2],
    #[serde(rename = "lipschitz_C")]
    pub lipschitz: f64,
    /// Resource budget per phase; unlimited when absent.
    pub gamma: Option<Vec<f64>>,
    /// Gradient constraint level; unconstrained when absent.
    #[serde(rename = "M")]
    pub level: Option<f64>,
    pub load: AffineFn,
    /// `S` is the domain shrunk by `S_margin * diam`.
    #[serde(rename = "S_margin")]
    pub s_margin: f64,
    /// Elements per side of the macroscopic grid.
    pub grid_m: usize,
    /// Cell resolution for the per-subdomain correctors.
    pub cell_m: usize,
    /// Starting volume fraction, or one value per subdomain.
    pub theta0: Vec<f64>,
    pub optimizer: OptimizerSettings,
    pub realize: Option<RealizeConfig>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            domain: [0.0, 1.0, 0.0, 1.0],
            partition: PartitionConfig { kx: 2, ky: 2 },
            axis: 1,
            theta_bounds: [0.25, 0.75],
            lipschitz: 2.0,
            gamma: None,
            level: None,
            load: AffineFn::constant(1.0),
            s_margin: 0.1,
            grid_m: 32,
            cell_m: 32,
            theta0: vec![0.5],
            optimizer: OptimizerSettings::default(),
            realize: Some(RealizeConfig::default()),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parse a config, reporting syntax, type and unknown-key errors with a line number.
pub fn parse(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let msg = e.message().to_string();
        match line {
            Some(l) => config_err(format!("line {l}: {msg}")),
            None => config_err(msg),
        }
    })
}

pub fn defaults_toml() -> String {
    toml::to_string_pretty(&RunConfig::default()).expect("default config serializes")
}

fn rect(v: [f64; 4], key: &str) -> Result<Rect> {
    Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| config_err(format!("{key}: {e}")))
}

fn axis(n: usize, key: &str) -> Result<Axis> {
    Axis::from_number(n).map_err(|_| config_err(format!("{key} must be 1 or 2, got {n}")))
}

fn phase_index(id: usize, key: &str) -> Result<usize> {
    id.checked_sub(1).ok_or_else(|| config_err(format!("{key}: phase ids start at 1")))
}

fn wrap(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| config_err(format!("{key}: {e}"))
}

impl RunConfig {
    pub fn solver(&self) -> Result<SolverSettings> {
        SolverSettings::new(self.solver.rel_tol, self.solver.max_iter).map_err(wrap("[solver]"))
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        let m = &self.microstructure;
        if m.phases.is_empty() {
            return Err(config_err("[microstructure] phases: at least one phase is required"));
        }
        let tensors: Vec<Mat2> = m.phases.iter().map(|p| Mat2::new(p.a11, p.a12, p.a12, p.a22)).collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &tensors {
            let eig = t.symmetric_eigenvalues();
            lo = lo.min(eig.min());
            hi = hi.max(eig.max());
        }
        CoefficientSet::new(tensors, m.lambda.unwrap_or(lo), m.upper.unwrap_or(hi)).map_err(wrap("[microstructure] phases"))
    }

    pub fn microstructure(&self) -> Result<Microstructure> {
        let m = &self.microstructure;
        let spec = match m.variant {
            Variant::Laminate => {
                Microstructure::laminate(m.theta, axis(m.axis, "axis")?).map_err(wrap("[microstructure] theta"))?
            }
            Variant::Homogeneous => Microstructure::homogeneous(phase_index(m.phase, "[microstructure] phase")?),
            Variant::Inclusions => {
                let inclusions = m
                    .inclusions
                    .iter()
                    .map(|c| -> Result<Inclusion> {
                        Ok(Inclusion {
                            center: [c.cx, c.cy],
                            semi_axes: [c.a, c.b.unwrap_or(c.a)],
                            angle: c.angle,
                            phase: phase_index(c.phase, "[microstructure] inclusions")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let matrix = phase_index(m.matrix_phase, "[microstructure] matrix_phase")?;
                Microstructure::Inclusions(InclusionSet::new(inclusions, matrix).map_err(wrap("[microstructure] inclusions"))?)
            }
            Variant::Graded => {
                let g = &m.graded;
                let partition = DesignPartition::new(rect(g.domain, "graded.domain")?, g.partition.kx, g.partition.ky)
                    .map_err(wrap("graded.partition"))?;
                let ax = axis(m.axis, "axis")?;
                let profile = match g.profile {
                    ProfileConfig::Bilinear => Profile::Bilinear,
                    ProfileConfig::PiecewiseConstant => Profile::PiecewiseConstant,
                };
                let graded = match &g.theta {
                    Some(values) => {
                        let design = DesignVector::new(values.clone(), g.theta_bounds[0], g.theta_bounds[1], g.lipschitz, ax)
                            .map_err(wrap("graded.theta"))?;
                        GradedLaminate::new(design, partition, profile).map_err(wrap("graded.theta"))?
                    }
                    None => {
                        let f = g.theta_linear;
                        GradedLaminate::from_fn(partition, |x| f.eval(x), g.theta_bounds, g.lipschitz, ax, profile)
                            .map_err(wrap("graded.theta_linear"))?
                    }
                };
                Microstructure::Graded(graded)
            }
        };
        spec.check_coefficients(&self.coefficients()?).map_err(wrap("[microstructure]"))?;
        Ok(spec)
    }

    pub fn cell_settings(&self) -> Result<CellSettings> {
        homlinf::grid::build_cell_grid(self.cell.m).map_err(wrap("[cell] m"))?;
        Ok(CellSettings { m: self.cell.m, solver: self.solver()? })
    }

    pub fn cell_point(&self) -> Option<Point> {
        self.cell.x.map(|[x, y]| Point::new(x, y))
    }

    /// Study settings. The schedule itself is checked by the study (mesh rule).
    pub fn study(&self) -> Result<StudySettings> {
        let c = &self.converge;
        let domain = rect(c.domain, "[converge] domain")?;
        let region = c.region.map(|r| rect(r, "[converge] region")).transpose()?;
        if !(c.delta_fraction > 0.0) {
            return Err(config_err("[converge] delta_fraction must be positive"));
        }
        Ok(StudySettings {
            schedule: c.schedule.clone(),
            elements_per_period: c.elements_per_period,
            domain,
            load: c.load,
            boundary: c.boundary,
            region,
            robust: RobustSupSettings::new(c.epsilon).map_err(wrap("[converge] epsilon"))?,
            cell_m: c.cell_m,
            solver: self.solver()?,
            window: c.window,
            delta_fraction: c.delta_fraction,
        })
    }

    pub fn design_partition(&self) -> Result<DesignPartition> {
        let d = &self.design;
        DesignPartition::new(rect(d.domain, "[design] domain")?, d.partition.kx, d.partition.ky).map_err(wrap("[design] partition"))
    }

    pub fn design_region(&self) -> Result<Rect> {
        let d = &self.design;
        let domain = rect(d.domain, "[design] domain")?;
        if !(d.s_margin > 0.0) {
            return Err(config_err("[design] S_margin must be positive"));
        }
        domain
            .shrink(d.s_margin * domain.diameter())
            .ok_or_else(|| config_err("[design] S_margin leaves an empty region"))
    }

    pub fn design_budget(&self) -> Result<ResourceBudget> {
        match &self.design.gamma {
            None => Ok(ResourceBudget::unlimited()),
            Some(g) => ResourceBudget::new(g.clone()).map_err(wrap("[design] gamma")),
        }
    }

    pub fn design_start(&self, partition: &DesignPartition) -> Result<DesignVector> {
        let d = &self.design;
        let theta = match d.theta0.len() {
            1 => vec![d.theta0[0]; partition.len()],
            n if n == partition.len() => d.theta0.clone(),
            n => return Err(config_err(format!("[design] theta0 has {n} values for {} subdomains", partition.len()))),
        };
        DesignVector::new(theta, d.theta_bounds[0], d.theta_bounds[1], d.lipschitz, axis(d.axis, "[design] axis")?)
            .map_err(wrap("[design]"))
    }
}

/// Config text describing a realized graded design, reusable with `cell` and `converge`.
pub fn realized_config(base: &RunConfig, spec: &Microstructure) -> Result<String> {
    let Microstructure::Graded(g) = spec else {
        return Err(Error::InvalidArgument("realized designs are graded".into()));
    };
    let b = g.partition().bounds();
    let [kx, ky] = g.partition().shape();
    let mut cfg = RunConfig { microstructure: base.microstructure.clone(), solver: base.solver, ..Default::default() };
    cfg.microstructure.variant = Variant::Graded;
    cfg.microstructure.axis = g.axis().number();
    cfg.microstructure.graded = GradedConfig {
        domain: [b.x[0], b.x[1], b.y[0], b.y[1]],
        partition: PartitionConfig { kx, ky },
        theta: Some(g.design().theta().to_vec()),
        theta_linear: AffineFn::default(),
        theta_bounds: [g.design().lower(), g.design().upper()],
        lipschitz: g.design().lipschitz(),
        profile: ProfileConfig::PiecewiseConstant,
    };
    cfg.converge.domain = [b.x[0], b.x[1], b.y[0], b.y[1]];
    cfg.converge.load = base.design.load;
    cfg.converge.boundary = AffineFn::default();
    toml::to_string_pretty(&cfg).map_err(|e| Error::InvalidArgument(e.to_string()))
}
