//! Stage sequence SRG → STU → LAT, marker bookkeeping, prescribed nodule
//! trajectories and automatic calibration against tape-measure targets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anatomy::{
    apex_height, build_initial_breast, build_thorax, stage_config, Anthropometry, StageConfig, StageId,
};
use crate::energy::EnergySpec;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{FacetRole, Marker, TriMesh};
use crate::solver::{enforce_obstacles, minimize, MinimizeReport, SolverParams};
use crate::tmr::{report, MarkerReport, MeasurementReport, Quantity};

/// Per-stage overrides of the anatomical defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSettings {
    pub id: StageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_dir: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<f64>,
}

impl StageSettings {
    pub fn new(id: StageId) -> Self {
        Self {
            id,
            g_dir: None,
            support: None,
        }
    }
}

/// Everything needed to run the stage sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub anthro: Anthropometry,
    /// Material coefficients. Gravity direction, support and datum are set
    /// per stage.
    pub spec: EnergySpec,
    pub solver: SolverParams,
    pub edge_target: f64,
    pub stages: Vec<StageSettings>,
    /// Table distance from the base centre for LAT; the initial apex height when absent.
    pub d_table: Option<f64>,
    /// Material markers attached to the initial surface at the nearest point.
    pub markers: Vec<(String, Vec3)>,
}

impl Simulation {
    /// `spec.rest_volume` is replaced by the anthropometric rest volume.
    pub fn new(anthro: Anthropometry, spec: EnergySpec, solver: SolverParams, edge_target: f64) -> Self {
        let spec = EnergySpec {
            rest_volume: anthro.rest_volume,
            ..spec
        };
        Self {
            anthro,
            spec,
            solver,
            edge_target,
            stages: StageId::ALL.iter().map(|&s| StageSettings::new(s)).collect(),
            d_table: None,
            markers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.anthro.validate()?;
        self.solver.validate()?;
        self.spec.validate()?;
        if self.stages.is_empty() {
            return Err(Error::InvalidParameter("no stages to run".into()));
        }
        if self.stages.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(Error::InvalidParameter(
                "stages must follow the order SRG, STU, LAT".into(),
            ));
        }
        for s in &self.stages {
            if let Some(g) = s.g_dir {
                if !(g.norm() > 0.0) || g.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{} g_dir must be nonzero", s.id)));
                }
            }
            if let Some(f) = s.support {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidParameter(format!("{} support must lie in [0, 1]", s.id)));
                }
            }
        }
        if let Some(d) = self.d_table {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter("d_table must be > 0".into()));
            }
        }
        Ok(())
    }

    /// The SRG starting mesh with the configured markers attached.
    pub fn initial_mesh(&self) -> Result<TriMesh> {
        let mut mesh = build_initial_breast(&self.anthro, self.edge_target)?;
        for (label, p) in &self.markers {
            let m = attach_marker(&mesh, label, p)?;
            mesh.markers.retain(|x| x.label != *label);
            mesh.markers.push(m);
        }
        Ok(mesh)
    }

    /// Stage configurations with overrides applied.
    pub fn stage_configs(&self, initial: &TriMesh) -> Result<Vec<StageConfig>> {
        let (thorax, _) = build_thorax(&self.anthro)?;
        let d_table = match self.d_table {
            Some(d) => d,
            None => apex_height(initial, &self.anthro, &thorax)
                .ok_or_else(|| Error::InvalidMesh("initial mesh has no nipple marker".into()))?,
        };
        self.stages
            .iter()
            .map(|s| {
                let mut cfg = stage_config(s.id, &self.anthro, d_table)?;
                if let Some(g) = s.g_dir {
                    cfg.g_dir = g.normalize();
                }
                if let Some(f) = s.support {
                    cfg.support = f;
                }
                Ok(cfg)
            })
            .collect()
    }
}

/// Closest point of a triangle to `p`, as barycentric weights.
fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    [1.0 - v - w, v, w]
}

/// Marker at the breast-surface point nearest `p`.
pub fn attach_marker(mesh: &TriMesh, label: &str, p: &Vec3) -> Result<Marker> {
    let mut best: Option<(usize, [f64; 3], f64)> = None;
    for f in 0..mesh.facet_count() {
        if mesh.facet_roles[f] != FacetRole::Breast {
            continue;
        }
        let [a, b, c] = mesh.corners(f);
        let w = closest_on_triangle(p, a, b, c);
        let q = w[0] * a + w[1] * b + w[2] * c;
        let d = (q - p).norm();
        if best.is_none_or(|(_, _, bd)| d < bd) {
            best = Some((f, w, d));
        }
    }
    let (f, mut w, _) = best.ok_or_else(|| Error::InvalidMesh("mesh has no breast facet".into()))?;
    let s: f64 = w.iter().map(|x| x.max(0.0)).sum();
    for x in &mut w {
        *x = x.max(0.0) / s;
    }
    Marker::new(label, f, w)
}

/// Lowest supporting level along gravity: the fixed base vertices and the
/// reference points of obstacles facing against gravity.
pub fn support_datum(mesh: &TriMesh, stage: &StageConfig) -> Vec3 {
    let g = stage.g_dir;
    let fixed = (0..mesh.vertex_count())
        .filter(|&i| !mesh.is_free(i))
        .map(|i| mesh.vertices[i]);
    let planes = stage
        .obstacles
        .iter()
        .filter(|o| o.plane.normal.dot(&g) < 0.0)
        .map(|o| o.plane.point);
    fixed
        .chain(planes)
        .max_by(|a, b| a.dot(&g).total_cmp(&b.dot(&g)))
        .unwrap_or_else(Vec3::zeros)
}

/// Outcome of one stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub config: StageConfig,
    pub mesh: TriMesh,
    pub report: MeasurementReport,
    pub solve: MinimizeReport,
}

/// Relaxes `mesh` under the stage's loading and measures the result.
///
/// Heights are measured from [`support_datum`].
pub fn run_stage(
    mesh: &TriMesh,
    stage: &StageConfig,
    spec: &EnergySpec,
    params: &SolverParams,
    anthro: &Anthropometry,
) -> Result<StageResult> {
    let (thorax, _) = build_thorax(anthro)?;
    let (start, _) = enforce_obstacles(mesh, &stage.obstacles)?;
    let spec = EnergySpec {
        g_dir: stage.g_dir,
        support: stage.support,
        datum: support_datum(&start, stage),
        ..spec.clone()
    };
    let (out, solve) = minimize(&start, &spec, &stage.obstacles, params)?;
    let report = report(&out, stage.id, anthro.breast_mass, &thorax, stage.table());
    Ok(StageResult {
        config: stage.clone(),
        mesh: out,
        report,
        solve,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub initial: TriMesh,
    pub stages: Vec<StageResult>,
}

impl PipelineRun {
    pub fn reports(&self) -> Vec<MeasurementReport> {
        self.stages.iter().map(|s| s.report.clone()).collect()
    }
}

/// Builds the SRG mesh and runs every configured stage, each starting from the
/// previous stage's equilibrium.
pub fn run_pipeline(sim: &Simulation) -> Result<PipelineRun> {
    sim.validate()?;
    let initial = sim.initial_mesh()?;
    let configs = sim.stage_configs(&initial)?;
    let mut stages: Vec<StageResult> = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let from = stages.last().map_or(&initial, |s| &s.mesh);
        let r = run_stage(from, cfg, &sim.spec, &sim.solver, &sim.anthro)?;
        stages.push(r);
    }
    Ok(PipelineRun { initial, stages })
}

/// Prescribed marker positions per label, as `(stage, position)` keyframes in
/// pipeline order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub keyframes: BTreeMap<String, Vec<(StageId, Vec3)>>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        for (label, frames) in &self.keyframes {
            if frames.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidParameter(format!(
                    "trajectory {label}: stages out of order"
                )));
            }
            if frames.iter().any(|(_, p)| p.iter().any(|c| !c.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "trajectory {label}: non-finite position"
                )));
            }
        }
        Ok(())
    }

    /// Keyframe of `stage`, or the latest one before it.
    pub fn position(&self, label: &str, stage: StageId) -> Option<Vec3> {
        self.keyframes
            .get(label)?
            .iter()
            .rev()
            .find(|(s, _)| *s <= stage)
            .map(|(_, p)| *p)
    }
}

/// Adds prescribed positions to the advected marker positions of a stage.
/// Trajectory labels without a surface marker are appended with no advected
/// position.
pub fn apply_trajectory(markers: &[MarkerReport], trajectory: &Trajectory, stage: StageId) -> Vec<MarkerReport> {
    let mut out: Vec<MarkerReport> = markers
        .iter()
        .map(|m| MarkerReport {
            predefined: trajectory.position(&m.label, stage),
            ..m.clone()
        })
        .collect();
    for label in trajectory.keyframes.keys() {
        if markers.iter().all(|m| m.label != *label) {
            if let Some(p) = trajectory.position(label, stage) {
                out.push(MarkerReport {
                    label: label.clone(),
                    advected: None,
                    predefined: Some(p),
                });
            }
        }
    }
    out
}

/// Calibration unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Sigma,
    Willmore,
    Compressibility,
    SupportSrg,
    DTable,
    /// Unloaded content volume of the volume penalty.
    RestVolume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParameter {
    pub parameter: Parameter,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub stage: StageId,
    pub quantity: Quantity,
    pub value: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProblem {
    pub free: Vec<FreeParameter>,
    pub targets: Vec<Target>,
    /// Relative residual regarded as a match.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Maximum number of pipeline evaluations.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_tolerance() -> f64 {
    0.02
}

fn default_budget() -> usize {
    200
}

impl CalibrationProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.targets.is_empty() {
            return bad("calibration needs at least one target".into());
        }
        for f in &self.free {
            if !(f.lower.is_finite() && f.upper.is_finite() && f.lower < f.upper) {
                return bad(format!("bounds of {:?} must be finite with lower < upper", f.parameter));
            }
        }
        for (i, f) in self.free.iter().enumerate() {
            if self.free[..i].iter().any(|g| g.parameter == f.parameter) {
                return bad(format!("{:?} listed twice", f.parameter));
            }
        }
        for t in &self.targets {
            if !(t.value > 0.0 && t.value.is_finite() && t.weight >= 0.0 && t.weight.is_finite()) {
                return bad(format!(
                    "target {} {} needs value > 0 and weight >= 0",
                    t.stage, t.quantity
                ));
            }
        }
        if !(self.tolerance > 0.0) || self.budget == 0 {
            return bad("tolerance and budget must be > 0".into());
        }
        Ok(())
    }
}

/// Sets one parameter on a simulation.
pub fn set_parameter(sim: &mut Simulation, p: Parameter, value: f64) {
    match p {
        Parameter::Sigma => sim.spec.sigma = value,
        Parameter::Willmore => sim.spec.willmore = value,
        Parameter::Compressibility => sim.spec.compressibility = value,
        Parameter::SupportSrg => match sim.stages.iter_mut().find(|s| s.id == StageId::Srg) {
            Some(s) => s.support = Some(value),
            None => sim.stages.insert(
                0,
                StageSettings {
                    support: Some(value),
                    ..StageSettings::new(StageId::Srg)
                },
            ),
        },
        Parameter::DTable => sim.d_table = Some(value),
        Parameter::RestVolume => sim.spec.rest_volume = value,
    }
}

/// Weighted sum of squared relative deviations.
pub fn residual(reports: &[MeasurementReport], targets: &[Target]) -> f64 {
    targets
        .iter()
        .map(|t| {
            let measured = reports
                .iter()
                .find(|r| r.stage == t.stage)
                .and_then(|r| r.quantity(t.quantity));
            match measured {
                Some(m) => t.weight * ((m - t.value) / t.value).powi(2),
                None => f64::INFINITY,
            }
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub simulation: Simulation,
    pub values: Vec<f64>,
    pub residual: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead search over the free parameters, normalized to the unit box
/// and clamped to it. The start simplex is the box midpoint plus one vertex
/// 10% of the range along each axis.
pub fn calibrate(sim: &Simulation, problem: &CalibrationProblem) -> Result<Calibration> {
    problem.validate()?;
    sim.validate()?;
    let last_stage = problem.targets.iter().map(|t| t.stage).max().unwrap_or(StageId::Srg);
    let mut base = sim.clone();
    base.stages.retain(|s| s.id <= last_stage);
    for t in &problem.targets {
        if base.stages.iter().all(|s| s.id != t.stage) {
            return Err(Error::InvalidParameter(format!("target stage {} is not run", t.stage)));
        }
    }

    let to_values = |u: &[f64]| -> Vec<f64> {
        problem
            .free
            .iter()
            .zip(u)
            .map(|(f, x)| f.lower + x * (f.upper - f.lower))
            .collect()
    };
    let configure = |u: &[f64]| -> Simulation {
        let mut s = base.clone();
        for (f, v) in problem.free.iter().zip(to_values(u)) {
            set_parameter(&mut s, f.parameter, v);
        }
        s
    };
    let mut evaluations = 0;
    let mut objective = |u: &[f64]| -> f64 {
        evaluations += 1;
        match run_pipeline(&configure(u)) {
            Ok(run) => residual(&run.reports(), &problem.targets),
            Err(_) => f64::INFINITY,
        }
    };

    let n = problem.free.len();
    let goal = problem.tolerance * problem.tolerance;
    let (best_u, best_f) = if n == 0 {
        (Vec::new(), objective(&[]))
    } else {
        nelder_mead(&mut objective, n, goal, problem.budget)
    };
    let mut simulation = configure(&best_u);
    simulation.stages = sim.stages.clone();
    for (f, v) in problem.free.iter().zip(to_values(&best_u)) {
        set_parameter(&mut simulation, f.parameter, v);
    }
    Ok(Calibration {
        simulation,
        values: to_values(&best_u),
        residual: best_f,
        evaluations,
        converged: best_f <= goal,
    })
}

const DIAMETER_TOL: f64 = 1e-4;

fn clamp_unit(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    clamp_unit(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect())
}

/// Minimizes `f` on the unit box; returns the best point and value.
fn nelder_mead(f: &mut impl FnMut(&[f64]) -> f64, n: usize, goal: f64, budget: usize) -> (Vec<f64>, f64) {
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mid = vec![0.5; n];
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    simplex.push((mid.clone(), eval(&mid, &mut evals)));
    for i in 0..n {
        if evals >= budget {
            break;
        }
        let mut x = mid.clone();
        x[i] += 0.1;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    if simplex.len() < n + 1 {
        return simplex.swap_remove(0);
    }
    loop {
        let diameter = simplex
            .iter()
            .flat_map(|a| simplex.iter().map(move |b| (a, b)))
            .map(|(a, b)| a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if simplex[0].1 <= goal || diameter < DIAMETER_TOL || evals >= budget {
            break;
        }
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v.0[k]).sum::<f64>() / n as f64)
            .collect();
        let xr = affine(&centroid, &worst.0, -1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= budget {
                simplex[n] = (xr, fr);
            } else {
                let xe = affine(&centroid, &worst.0, -2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            }
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else if evals < budget {
            let outside = fr < worst.1;
            let xc = if outside {
                affine(&centroid, &xr, 0.5)
            } else {
                affine(&centroid, &worst.0, 0.5)
            };
            let fc = eval(&xc, &mut evals);
            if (outside && fc <= fr) || (!outside && fc < worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    if evals >= budget {
                        break;
                    }
                    let x = affine(&best, &v.0, 0.5);
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
        order(&mut simplex);
    }
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::tests::volunteer;
    use crate::mesh::refine;

    #[test]
    fn rosenbrock_minimum() {
        // (x, y) = 4u - 2 on the unit box, minimum at u = (0.75, 0.75)
        let mut f = |u: &[f64]| {
            let (x, y) = (4.0 * u[0] - 2.0, 4.0 * u[1] - 2.0);
            (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
        };
        let (u, v) = nelder_mead(&mut f, 2, 1e-12, 2000);
        assert!(v < 1e-8, "{v}");
        assert!((u[0] - 0.75).abs() < 1e-3 && (u[1] - 0.75).abs() < 1e-3);
    }

    #[test]
    fn budget_is_respected() {
        let mut calls = 0;
        let mut f = |u: &[f64]| {
            calls += 1;
            u.iter().map(|x| (x - 0.9).powi(2)).sum::<f64>()
        };
        nelder_mead(&mut f, 3, 0.0, 17);
        assert!(calls <= 17);
    }

    #[test]
    fn bounds_clamp() {
        let mut f = |u: &[f64]| -u[0];
        let (u, _) = nelder_mead(&mut f, 1, f64::NEG_INFINITY, 200);
        assert_eq!(u[0], 1.0);
    }

    #[test]
    fn trajectory_holds_last_keyframe() {
        let mut t = Trajectory::default();
        t.keyframes.insert(
            "n1".into(),
            vec![
                (StageId::Srg, Vec3::new(1.0, 2.0, 3.0)),
                (StageId::Lat, Vec3::new(4.0, 5.0, 6.0)),
            ],
        );
        assert_eq!(t.position("n1", StageId::Stu), Some(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(t.position("n1", StageId::Lat), Some(Vec3::new(4.0, 5.0, 6.0)));
        assert_eq!(t.position("n2", StageId::Lat), None);

        let advected = vec![MarkerReport {
            label: "nipple".into(),
            advected: Some(Vec3::x()),
            predefined: None,
        }];
        let out = apply_trajectory(&advected, &t, StageId::Srg);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].predefined, None);
        assert_eq!(out[1].advected, None);
        assert_eq!(out[1].predefined, Some(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(
            apply_trajectory(&advected, &Trajectory::default(), StageId::Lat),
            advected
        );
    }

    #[test]
    fn out_of_order_trajectory() {
        let mut t = Trajectory::default();
        t.keyframes.insert(
            "n".into(),
            vec![(StageId::Stu, Vec3::zeros()), (StageId::Srg, Vec3::zeros())],
        );
        assert!(t.validate().is_err());
    }

    #[test]
    fn attached_marker_survives_refinement() {
        let sim = Simulation {
            markers: vec![("nodule".into(), Vec3::new(2.0, 1.0, 30.0))],
            ..Simulation::new(volunteer(), EnergySpec::default(), SolverParams::default(), 2.5)
        };
        let mesh = sim.initial_mesh().unwrap();
        let m = mesh.marker("nodule").unwrap();
        let before = mesh.marker_position(m);
        let fine = refine(&mesh, 0.8).unwrap();
        let after = fine.marker_position(fine.marker("nodule").unwrap());
        assert!((before - after).norm() < 1e-12);
    }

    #[test]
    fn closest_point_on_triangle() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let w = closest_on_triangle(&Vec3::new(0.2, 0.3, 5.0), &a, &b, &c);
        for (x, y) in w.iter().zip([0.5, 0.2, 0.3]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(
            closest_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c),
            [1.0, 0.0, 0.0]
        );
        let w = closest_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((w[1] - 0.5).abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
    }

    fn quick(spec: EnergySpec) -> Simulation {
        let solver = SolverParams {
            max_iters: 60,
            step0: 0.2,
            ..Default::default()
        };
        Simulation::new(volunteer(), spec, solver, 3.0)
    }

    #[test]
    fn weightless_pipeline_keeps_volume() {
        let mut sim = quick(EnergySpec {
            compressibility: 1e4,
            ..Default::default()
        });
        for s in &mut sim.stages {
            s.support = Some(0.0);
        }
        let run = run_pipeline(&sim).unwrap();
        let v0 = run.initial.enclosed_volume();
        for r in run.reports() {
            assert!((r.volume / v0 - 1.0).abs() <= 1e-6, "{}", r.volume);
            assert_eq!(r.mass, 700.0);
        }
    }

    #[test]
    fn zero_free_parameters() {
        let sim = quick(EnergySpec {
            sigma: 100.0,
            compressibility: 1e5,
            ..Default::default()
        });
        let problem = CalibrationProblem {
            free: vec![],
            targets: vec![Target {
                stage: StageId::Srg,
                quantity: Quantity::Volume,
                value: 700.0,
                weight: 1.0,
            }],
            tolerance: 0.02,
            budget: 200,
        };
        let c = calibrate(&sim, &problem).unwrap();
        assert_eq!(c.evaluations, 1);
        assert_eq!(c.simulation, sim);
        assert!(c.converged);
    }
}
