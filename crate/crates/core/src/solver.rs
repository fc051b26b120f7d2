//! Projected gradient descent over the free vertices with backtracking line
//! search, one-sided plane obstacles and an optional hard volume constraint.

use serde::{Deserialize, Serialize};

use crate::energy::{gradient, total_energy, EnergySpec};
use crate::error::{Error, Result};
use crate::geometry::{area_vector, Plane, Vec3};
use crate::mesh::{equiangulate, vertex_average, TriMesh, MIN_FACET_AREA};

/// Distance under which a vertex counts as touching an obstacle, cm.
pub const CONTACT_TOL: f64 = 1e-9;

/// Smallest trial displacement before the line search gives up, cm.
pub const MIN_STEP: f64 = 1e-12;

/// One-sided plane: admissible points satisfy `(x - point) . normal >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub plane: Plane,
    pub label: String,
}

impl Obstacle {
    pub fn new(point: Vec3, normal: Vec3, label: impl Into<String>) -> Result<Self> {
        Ok(Self {
            plane: Plane::new(point, normal)?,
            label: label.into(),
        })
    }
}

/// A free vertex resting on an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contact {
    pub vertex: usize,
    pub obstacle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Largest vertex displacement tried by the line search, cm.
    pub step0: f64,
    /// Backtracking factor in (0, 1).
    pub shrink: f64,
    /// Stop when the projected gradient norm falls to this, erg/cm.
    pub grad_tol: f64,
    /// Stop after 10 consecutive iterations with relative energy change at most this.
    pub energy_tol: f64,
    /// Keep the enclosed volume at `EnergySpec::rest_volume` exactly.
    pub hard_volume: bool,
    /// Relative volume tolerance of the hard constraint.
    pub volume_tol: f64,
    /// Iterations between mesh maintenance passes; 0 disables maintenance.
    pub maintenance_every: usize,
    /// Polak–Ribière conjugate directions instead of plain steepest descent.
    pub conjugate: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            step0: 0.5,
            shrink: 0.5,
            grad_tol: 1e-3,
            energy_tol: 1e-9,
            hard_volume: false,
            volume_tol: 1e-9,
            maintenance_every: 50,
            conjugate: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.step0 > 0.0 && self.grad_tol > 0.0 && self.energy_tol > 0.0 && self.volume_tol > 0.0) {
            return bad("step0 and tolerances must be > 0");
        }
        Ok(())
    }
}

/// Projects free vertices that violate an obstacle orthogonally onto it and
/// returns the contacts, i.e. free vertices within [`CONTACT_TOL`] of a plane.
pub fn enforce_obstacles(mesh: &TriMesh, obstacles: &[Obstacle]) -> Result<(TriMesh, Vec<Contact>)> {
    let mut m = mesh.clone();
    for (k, ob) in obstacles.iter().enumerate() {
        for i in 0..m.vertex_count() {
            let d = ob.plane.signed_distance(&m.vertices[i]);
            if d >= 0.0 {
                continue;
            }
            if m.is_free(i) {
                m.vertices[i] = ob.plane.project(&m.vertices[i]);
            } else if d < -CONTACT_TOL {
                return Err(Error::InfeasibleFixedGeometry {
                    vertex: i,
                    obstacle: obstacles[k].label.clone(),
                    depth: -d,
                });
            }
        }
    }
    let contacts = contacts(&m, obstacles);
    Ok((m, contacts))
}

fn contacts(m: &TriMesh, obstacles: &[Obstacle]) -> Vec<Contact> {
    let mut out = Vec::new();
    for i in 0..m.vertex_count() {
        if !m.is_free(i) {
            continue;
        }
        for (k, ob) in obstacles.iter().enumerate() {
            if ob.plane.signed_distance(&m.vertices[i]).abs() <= CONTACT_TOL {
                out.push(Contact { vertex: i, obstacle: k });
            }
        }
    }
    out
}

/// Largest obstacle penetration over free vertices (0 when feasible), cm.
pub fn max_violation(mesh: &TriMesh, obstacles: &[Obstacle]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..mesh.vertex_count() {
        if mesh.is_free(i) {
            for ob in obstacles {
                worst = worst.max(-ob.plane.signed_distance(&mesh.vertices[i]));
            }
        }
    }
    worst
}

/// Moves all free vertices along their area-weighted normals by a common
/// distance so that `|V - target| <= volume_tol * target`.
pub fn project_volume(mesh: &TriMesh, target: f64, volume_tol: f64) -> Result<TriMesh> {
    let movable: Vec<bool> = (0..mesh.vertex_count()).map(|i| mesh.is_free(i)).collect();
    project_volume_masked(mesh, target, volume_tol, &movable)
}

fn project_volume_masked(mesh: &TriMesh, target: f64, volume_tol: f64, movable: &[bool]) -> Result<TriMesh> {
    if !(target > 0.0) {
        return Err(Error::InvalidParameter("target volume must be > 0".into()));
    }
    if (mesh.enclosed_volume() - target).abs() <= volume_tol * target {
        return Ok(mesh.clone());
    }
    crate::mesh::average::restore_volume(mesh, target, volume_tol, movable).map(|(m, _)| m)
}

/// Result of one projected-gradient step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub mesh: TriMesh,
    pub energy: f64,
    /// Largest vertex displacement of the accepted step; 0 when no decrease was found.
    pub step_len: f64,
    /// Norm of the projected gradient at the starting configuration.
    pub grad_norm: f64,
}

/// One projected-gradient step with backtracking from `params.step0`.
pub fn step(mesh: &TriMesh, spec: &EnergySpec, obstacles: &[Obstacle], params: &SolverParams) -> Result<StepOutcome> {
    descend(mesh, spec, obstacles, params, params.step0, None, None)
}

fn descent_direction(mesh: &TriMesh, spec: &EnergySpec, obstacles: &[Obstacle], hard_volume: bool) -> Vec<Vec3> {
    let mut dir: Vec<Vec3> = gradient(mesh, spec).into_iter().map(|g| -g).collect();
    admissible(mesh, obstacles, hard_volume, &mut dir);
    dir
}

/// Removes from `dir` the components that push active vertices into their
/// obstacle, change the volume to first order (hard mode) or move fixed vertices.
fn admissible(mesh: &TriMesh, obstacles: &[Obstacle], hard_volume: bool, dir: &mut [Vec3]) {
    let active = contacts(mesh, obstacles);
    let mut pinned = vec![false; mesh.vertex_count()];
    for c in &active {
        let n = obstacles[c.obstacle].plane.normal;
        let d = &mut dir[c.vertex];
        let into = d.dot(&n);
        if into < 0.0 {
            *d -= into * n;
        }
        pinned[c.vertex] = true;
    }
    if hard_volume {
        // remove the first-order volume change carried by the unpinned vertices
        let vg = mesh.volume_gradient();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..mesh.vertex_count() {
            if mesh.is_free(i) && !pinned[i] {
                num += dir[i].dot(&vg[i]);
                den += vg[i].norm_squared();
            }
        }
        if den > 0.0 {
            let s = num / den;
            for i in 0..mesh.vertex_count() {
                if mesh.is_free(i) && !pinned[i] {
                    dir[i] -= s * vg[i];
                }
            }
        }
    }
    for (i, d) in dir.iter_mut().enumerate() {
        if !mesh.is_free(i) {
            *d = Vec3::zeros();
        }
    }
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Previous steepest and search directions for conjugate steps.
#[derive(Debug, Clone, Default)]
struct Memory {
    steepest: Vec<Vec3>,
    search: Vec<Vec3>,
}

/// Every facet keeps a positive area and does not turn over.
fn facets_sound(before: &TriMesh, after: &TriMesh) -> bool {
    before.facets.iter().all(|tri| {
        let p = tri.map(|i| before.vertices[i]);
        let q = tri.map(|i| after.vertices[i]);
        let n0 = area_vector(&p[0], &p[1], &p[2]);
        let n1 = area_vector(&q[0], &q[1], &q[2]);
        0.5 * n1.norm() > MIN_FACET_AREA && n0.dot(&n1) > 0.0
    })
}

fn descend(
    mesh: &TriMesh,
    spec: &EnergySpec,
    obstacles: &[Obstacle],
    params: &SolverParams,
    initial: f64,
    energy: Option<f64>,
    memory: Option<&mut Memory>,
) -> Result<StepOutcome> {
    let e0 = energy.unwrap_or_else(|| total_energy(mesh, spec));
    let steepest = descent_direction(mesh, spec, obstacles, params.hard_volume);
    let grad_norm = dot(&steepest, &steepest).sqrt();
    let unchanged = StepOutcome {
        mesh: mesh.clone(),
        energy: e0,
        step_len: 0.0,
        grad_norm,
    };
    if !(grad_norm > params.grad_tol) {
        return Ok(unchanged);
    }
    let Some(memory) = memory else {
        return Ok(line_search(mesh, spec, obstacles, params, initial, e0, &steepest, grad_norm).unwrap_or(unchanged));
    };
    let mut search = steepest.clone();
    let prev = dot(&memory.steepest, &memory.steepest);
    if memory.search.len() == steepest.len() && prev > 0.0 {
        let beta = ((grad_norm * grad_norm - dot(&steepest, &memory.steepest)) / prev).max(0.0);
        for (d, p) in search.iter_mut().zip(&memory.search) {
            *d += beta * p;
        }
        admissible(mesh, obstacles, params.hard_volume, &mut search);
        if dot(&search, &steepest) <= 0.0 {
            search.clone_from(&steepest);
        }
    }
    let mut out = line_search(mesh, spec, obstacles, params, initial, e0, &search, grad_norm);
    if out.is_none() && search != steepest {
        search.clone_from(&steepest);
        out = line_search(mesh, spec, obstacles, params, initial, e0, &search, grad_norm);
    }
    match out {
        Some(o) => {
            memory.steepest = steepest;
            memory.search = search;
            Ok(o)
        }
        None => {
            *memory = Memory::default();
            Ok(unchanged)
        }
    }
}

/// Backtracks along `dir`, scaled so the largest vertex move equals the trial
/// step, until the energy strictly drops.
#[allow(clippy::too_many_arguments)]
fn line_search(
    mesh: &TriMesh,
    spec: &EnergySpec,
    obstacles: &[Obstacle],
    params: &SolverParams,
    initial: f64,
    e0: f64,
    dir: &[Vec3],
    grad_norm: f64,
) -> Option<StepOutcome> {
    let dmax = dir.iter().map(|d| d.norm()).fold(0.0, f64::max);
    if !(dmax > 0.0) {
        return None;
    }
    let mut alpha = initial.min(params.step0);
    while alpha >= MIN_STEP {
        let scale = alpha / dmax;
        let mut trial = mesh.clone();
        for (v, d) in trial.vertices.iter_mut().zip(dir) {
            *v += scale * d;
        }
        let (mut trial, touching) = enforce_obstacles(&trial, obstacles).ok()?;
        let mut ok = true;
        if params.hard_volume {
            let mut movable: Vec<bool> = (0..trial.vertex_count()).map(|i| trial.is_free(i)).collect();
            for c in &touching {
                movable[c.vertex] = false;
            }
            match project_volume_masked(&trial, spec.rest_volume, params.volume_tol, &movable) {
                Ok(m) => trial = m,
                Err(_) => ok = false,
            }
            ok = ok && max_violation(&trial, obstacles) <= CONTACT_TOL;
        }
        if ok && facets_sound(mesh, &trial) {
            let e1 = total_energy(&trial, spec);
            if e1 < e0 {
                return Some(StepOutcome {
                    mesh: trial,
                    energy: e1,
                    step_len: alpha,
                    grad_norm,
                });
            }
        }
        alpha *= params.shrink;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MinimizeReport {
    pub iters: usize,
    pub final_energy: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Energy after the initial feasibility projection and after every iteration.
    pub energies: Vec<f64>,
    /// Largest obstacle penetration after every iteration, cm.
    pub violations: Vec<f64>,
    pub maintenance_passes: usize,
    pub maintenance_rollbacks: usize,
}

/// Iterates [`step`] until the projected gradient norm reaches `grad_tol`,
/// the relative energy change stays within `energy_tol` for 10 consecutive
/// iterations, the line search stalls, or `max_iters` is reached.
///
/// Every `maintenance_every` iterations the mesh is equiangulated and vertex
/// averaged; the pass is rolled back if it would raise the energy.
pub fn minimize(
    mesh: &TriMesh,
    spec: &EnergySpec,
    obstacles: &[Obstacle],
    params: &SolverParams,
) -> Result<(TriMesh, MinimizeReport)> {
    spec.validate()?;
    params.validate()?;
    let (mut m, _) = enforce_obstacles(mesh, obstacles)?;
    if params.hard_volume {
        m = project_volume(&m, spec.rest_volume, params.volume_tol)?;
    }
    let mut energy = total_energy(&m, spec);
    let mut report = MinimizeReport {
        energies: vec![energy],
        violations: vec![max_violation(&m, obstacles)],
        ..Default::default()
    };
    let mut alpha = params.step0;
    let mut quiet = 0;
    let mut grad_norm = f64::INFINITY;
    let mut memory = params.conjugate.then(Memory::default);
    for it in 0..params.max_iters {
        let out = descend(&m, spec, obstacles, params, alpha, Some(energy), memory.as_mut())?;
        grad_norm = out.grad_norm;
        if out.step_len == 0.0 {
            report.converged = true;
            break;
        }
        let change = (energy - out.energy) / energy.abs().max(f64::MIN_POSITIVE);
        quiet = if change <= params.energy_tol { quiet + 1 } else { 0 };
        alpha = (2.0 * out.step_len).min(params.step0);
        m = out.mesh;
        energy = out.energy;
        report.iters = it + 1;

        if params.maintenance_every > 0 && report.iters.is_multiple_of(params.maintenance_every) {
            report.maintenance_passes += 1;
            match maintain(&m, energy, spec, obstacles, params) {
                Some((candidate, e)) => {
                    m = candidate;
                    energy = e;
                    if let Some(mem) = memory.as_mut() {
                        *mem = Memory::default();
                    }
                }
                None => report.maintenance_rollbacks += 1,
            }
        }
        report.energies.push(energy);
        report.violations.push(max_violation(&m, obstacles));
        if quiet >= 10 {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        let dir = descent_direction(&m, spec, obstacles, params.hard_volume);
        grad_norm = dir.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
        report.converged = grad_norm <= params.grad_tol;
    }
    report.final_energy = energy;
    report.final_grad_norm = grad_norm;
    Ok((m, report))
}

/// Equiangulation followed by vertex averaging; when that raises the energy,
/// equiangulation alone. `None` when neither lowers it.
fn maintain(
    m: &TriMesh,
    energy: f64,
    spec: &EnergySpec,
    obstacles: &[Obstacle],
    params: &SolverParams,
) -> Option<(TriMesh, f64)> {
    let flipped = equiangulate(m).ok()?;
    let finish = |mesh: TriMesh| -> Option<(TriMesh, f64)> {
        let (mut out, _) = enforce_obstacles(&mesh, obstacles).ok()?;
        if params.hard_volume {
            out = project_volume(&out, spec.rest_volume, params.volume_tol).ok()?;
        }
        if !out.validate().is_empty() {
            return None;
        }
        let e = total_energy(&out, spec);
        (e <= energy).then_some((out, e))
    };
    vertex_average(&flipped)
        .ok()
        .and_then(&finish)
        .or_else(|| if flipped == *m { None } else { finish(flipped) })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::mesh::primitives::icosphere;
    use crate::mesh::VertexRole;

    fn table() -> Obstacle {
        Obstacle::new(Vec3::zeros(), Vec3::z(), "table").unwrap()
    }

    #[test]
    fn feasible_mesh_is_untouched() {
        let m = icosphere(1, 1.0).translated(&Vec3::new(0.0, 0.0, 2.0));
        let (out, active) = enforce_obstacles(&m, &[table()]).unwrap();
        assert_eq!(out, m);
        assert!(active.is_empty());
    }

    #[test]
    fn violating_vertex_is_projected_and_active() {
        let mut m = icosphere(1, 1.0).translated(&Vec3::new(0.0, 0.0, 2.0));
        m.vertices[3] = Vec3::new(0.2, 0.1, -0.3);
        let (out, active) = enforce_obstacles(&m, &[table()]).unwrap();
        assert_eq!(out.vertices[3], Vec3::new(0.2, 0.1, 0.0));
        assert_eq!(active, vec![Contact { vertex: 3, obstacle: 0 }]);
    }

    #[test]
    fn vertex_on_plane_is_active_and_unchanged() {
        let mut m = icosphere(1, 1.0).translated(&Vec3::new(0.0, 0.0, 2.0));
        m.vertices[4].z = 0.0;
        let (out, active) = enforce_obstacles(&m, &[table()]).unwrap();
        assert_eq!(out.vertices[4], m.vertices[4]);
        assert_eq!(active, vec![Contact { vertex: 4, obstacle: 0 }]);
    }

    #[test]
    fn fixed_vertex_below_plane_is_infeasible() {
        let mut m = icosphere(1, 1.0);
        m.vertex_roles[0] = VertexRole::Fixed;
        let plane = Obstacle::new(Vec3::new(0.0, 5.0, 0.0), Vec3::y(), "wall").unwrap();
        assert!(matches!(
            enforce_obstacles(&m, &[plane]),
            Err(Error::InfeasibleFixedGeometry { .. })
        ));
    }

    #[test]
    fn volume_projection() {
        let m = icosphere(3, 1.0);
        let v = m.enclosed_volume();
        assert_eq!(project_volume(&m, v, 1e-9).unwrap(), m);

        let doubled = project_volume(&m, 2.0 * v, 1e-9).unwrap();
        assert!(((doubled.enclosed_volume() - 2.0 * v) / (2.0 * v)).abs() <= 1e-9);
        let mean_radius = doubled.vertices.iter().map(|x| x.norm()).sum::<f64>() / doubled.vertex_count() as f64;
        let expected = 2f64.cbrt();
        assert!(((mean_radius - expected) / expected).abs() < 1e-4, "{mean_radius}");
    }

    #[test]
    fn stationary_configuration_does_not_move() {
        let m = icosphere(2, 1.0);
        let spec = EnergySpec::inert(1.0);
        let out = step(&m, &spec, &[], &SolverParams::default()).unwrap();
        assert_eq!(out.step_len, 0.0);
        assert_eq!(out.mesh, m);
    }

    fn perturbed_sphere(level: u32, amplitude: f64, seed: u64) -> TriMesh {
        let mut state = seed;
        let mut m = icosphere(level, 1.0);
        for v in &mut m.vertices {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            *v *= 1.0 + amplitude * u;
        }
        m
    }

    #[test]
    fn tension_with_hard_volume_decreases_energy() {
        let m = perturbed_sphere(2, 0.1, 3);
        let spec = EnergySpec {
            sigma: 1.0,
            support: 0.0,
            rest_volume: 4.0 * PI / 3.0,
            ..Default::default()
        };
        let params = SolverParams {
            hard_volume: true,
            ..Default::default()
        };
        let start = project_volume(&m, spec.rest_volume, 1e-9).unwrap();
        let e0 = total_energy(&start, &spec);
        let out = step(&start, &spec, &[], &params).unwrap();
        assert!(out.step_len > 0.0);
        assert!(out.energy < e0);
        assert!(((out.mesh.enclosed_volume() - spec.rest_volume) / spec.rest_volume).abs() <= 1e-9);
    }

    #[test]
    fn pressed_vertex_stays_admissible() {
        let m = icosphere(2, 1.0).translated(&Vec3::new(0.0, 0.0, 1.0));
        let spec = EnergySpec {
            sigma: 1.0,
            compressibility: 100.0,
            rest_volume: m.enclosed_volume(),
            ..Default::default()
        };
        let (m, _) = enforce_obstacles(&m, &[table()]).unwrap();
        let out = step(&m, &spec, &[table()], &SolverParams::default()).unwrap();
        assert!(max_violation(&out.mesh, &[table()]) <= CONTACT_TOL);
        assert!(out.energy <= total_energy(&m, &spec));
    }

    #[test]
    fn isoperimetric_minimum() {
        let spec = EnergySpec {
            sigma: 1.0,
            support: 0.0,
            rest_volume: 4.0 * PI / 3.0,
            ..Default::default()
        };
        let params = SolverParams {
            hard_volume: true,
            max_iters: 3000,
            step0: 0.05,
            ..Default::default()
        };
        let (out, report) = minimize(&perturbed_sphere(2, 0.1, 11), &spec, &[], &params).unwrap();
        let area = out.total_area(None);
        assert!((area / (4.0 * PI) - 1.0).abs() < 0.005, "area {area}, {report:?}");
        assert!(report.energies.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn restart_at_minimum_converges_quickly() {
        let spec = EnergySpec {
            sigma: 1.0,
            support: 0.0,
            rest_volume: 4.0 * PI / 3.0,
            ..Default::default()
        };
        let params = SolverParams {
            hard_volume: true,
            max_iters: 3000,
            step0: 0.05,
            ..Default::default()
        };
        let (first, _) = minimize(&perturbed_sphere(1, 0.05, 5), &spec, &[], &params).unwrap();
        let (second, report) = minimize(&first, &spec, &[], &params).unwrap();
        assert!(report.converged);
        assert!(report.iters <= 10, "{report:?}");
        let moved = first
            .vertices
            .iter()
            .zip(&second.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(moved < 1e-3);
    }

    #[test]
    fn ball_settles_on_table() {
        let ball = icosphere(2, 1.0).translated(&Vec3::new(0.0, 0.0, 1.2));
        let spec = EnergySpec {
            sigma: 500.0,
            compressibility: 2e4,
            rest_volume: ball.enclosed_volume(),
            ..Default::default()
        };
        let params = SolverParams {
            max_iters: 400,
            step0: 0.05,
            ..Default::default()
        };
        let (out, report) = minimize(&ball, &spec, &[table()], &params).unwrap();
        assert!(report.energies.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.violations.iter().all(|&v| v <= CONTACT_TOL));
        let (_, active) = enforce_obstacles(&out, &[table()]).unwrap();
        assert!(!active.is_empty());
        for c in active {
            assert!(out.vertices[c.vertex].z.abs() <= CONTACT_TOL);
        }
    }

    #[test]
    fn minimize_is_deterministic() {
        let m = perturbed_sphere(1, 0.1, 9).translated(&Vec3::new(0.0, 0.0, 1.0));
        let spec = EnergySpec {
            sigma: 300.0,
            willmore: 10.0,
            compressibility: 1e4,
            rest_volume: 4.0,
            ..Default::default()
        };
        let params = SolverParams {
            max_iters: 120,
            step0: 0.05,
            ..Default::default()
        };
        let a = minimize(&m, &spec, &[table()], &params).unwrap();
        let b = minimize(&m, &spec, &[table()], &params).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
