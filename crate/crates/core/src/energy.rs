//! Energy functionals on the closed surface and their analytic gradients.
//!
//! The minimized objective is the sum of surface tension on breast facets,
//! the gravitational potential of the enclosed content, the Willmore bending
//! energy `w_b * sum A_i H_i^2` over free vertices, and a quadratic
//! compressibility penalty on the enclosed volume. All units are cgs: energies
//! in erg, forces in erg/cm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cot_angle_with_gradient, mixed_areas_with_gradient, triangle_area_gradient, Vec3};
use crate::mesh::{FacetRole, TriMesh};

/// Standard gravity, cm/s².
pub const STANDARD_GRAVITY: f64 = 980.665;

/// Physical coefficients of the energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    /// Surface tension, erg/cm².
    pub sigma: f64,
    /// Content density, g/cm³.
    pub rho: f64,
    /// Gravitational acceleration, cm/s².
    pub g: f64,
    /// Unit direction gravity pulls towards.
    pub g_dir: Vec3,
    /// Willmore weight, erg.
    pub willmore: f64,
    /// Compressibility modulus, erg/cm³.
    pub compressibility: f64,
    /// Rest volume of the content, cm³.
    pub rest_volume: f64,
    /// Fraction of the weight not carried by external support, in [0, 1].
    pub support: f64,
    /// Zero level of the height `h = -g_dir . (x - datum)`.
    pub datum: Vec3,
}

impl Default for EnergySpec {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            rho: 1.0,
            g: STANDARD_GRAVITY,
            g_dir: -Vec3::z(),
            willmore: 0.0,
            compressibility: 0.0,
            rest_volume: 1.0,
            support: 1.0,
            datum: Vec3::zeros(),
        }
    }
}

impl EnergySpec {
    /// Every coefficient zero: no force acts.
    pub fn inert(rest_volume: f64) -> Self {
        Self {
            support: 0.0,
            rest_volume,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be >= 0");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be > 0");
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad("g must be > 0");
        }
        if (self.g_dir.norm() - 1.0).abs() > 1e-9 {
            return bad("g_dir must be a unit vector");
        }
        if !(self.willmore >= 0.0 && self.willmore.is_finite()) {
            return bad("willmore weight must be >= 0");
        }
        if !(self.compressibility >= 0.0 && self.compressibility.is_finite()) {
            return bad("compressibility must be >= 0");
        }
        if !(self.rest_volume > 0.0 && self.rest_volume.is_finite()) {
            return bad("rest volume must be > 0");
        }
        if !(0.0..=1.0).contains(&self.support) {
            return bad("support must lie in [0, 1]");
        }
        if !self.datum.iter().all(|c| c.is_finite()) {
            return bad("datum must be finite");
        }
        Ok(())
    }

    fn weight_factor(&self) -> f64 {
        self.support * self.rho * self.g
    }
}

/// The four energy contributions, erg.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms {
    pub tension: f64,
    pub gravity: f64,
    pub willmore: f64,
    pub volume: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.tension + self.gravity + self.willmore + self.volume
    }
}

pub fn tension_energy(mesh: &TriMesh, spec: &EnergySpec) -> f64 {
    if spec.sigma == 0.0 {
        return 0.0;
    }
    spec.sigma * mesh.total_area(Some(FacetRole::Breast))
}

/// `support * rho * g * integral of h over the enclosed volume`, evaluated
/// exactly on the piecewise-linear surface through the divergence theorem.
pub fn gravity_energy(mesh: &TriMesh, spec: &EnergySpec) -> f64 {
    let k = spec.weight_factor();
    if k == 0.0 {
        return 0.0;
    }
    let up = -spec.g_dir;
    let mut sum = 0.0;
    for tri in &mesh.facets {
        let p = tri.map(|i| mesh.vertices[i]);
        let h = p.map(|x| up.dot(&(x - spec.datum)));
        let n_up = up.dot(&(p[1] - p[0]).cross(&(p[2] - p[0])));
        sum += n_up * height_quadratic(&h);
    }
    k * sum / 24.0
}

#[inline]
fn height_quadratic(h: &[f64; 3]) -> f64 {
    h[0] * h[0] + h[1] * h[1] + h[2] * h[2] + h[0] * h[1] + h[1] * h[2] + h[2] * h[0]
}

/// `w_b * sum over free vertices of A_i H_i^2`.
pub fn willmore_energy(mesh: &TriMesh, spec: &EnergySpec) -> f64 {
    if spec.willmore == 0.0 {
        return 0.0;
    }
    let (lap, area) = mesh.cotan_vectors_and_areas();
    let mut sum = 0.0;
    for i in 0..mesh.vertex_count() {
        if mesh.is_free(i) && area[i] > 0.0 {
            sum += lap[i].norm_squared() / (16.0 * area[i]);
        }
    }
    spec.willmore * sum
}

/// `(K / 2) (V - V0)^2 / V0`.
pub fn volume_energy(mesh: &TriMesh, spec: &EnergySpec) -> f64 {
    volume_penalty(mesh.enclosed_volume(), spec)
}

#[inline]
pub fn volume_penalty(volume: f64, spec: &EnergySpec) -> f64 {
    let dv = volume - spec.rest_volume;
    0.5 * spec.compressibility * dv * dv / spec.rest_volume
}

pub fn energy_terms(mesh: &TriMesh, spec: &EnergySpec) -> EnergyTerms {
    EnergyTerms {
        tension: tension_energy(mesh, spec),
        gravity: gravity_energy(mesh, spec),
        willmore: willmore_energy(mesh, spec),
        volume: volume_energy(mesh, spec),
    }
}

pub fn total_energy(mesh: &TriMesh, spec: &EnergySpec) -> f64 {
    energy_terms(mesh, spec).total()
}

/// Analytic gradient of [`total_energy`] with respect to every vertex
/// position; fixed vertices get zero.
pub fn gradient(mesh: &TriMesh, spec: &EnergySpec) -> Vec<Vec3> {
    let nv = mesh.vertex_count();
    let mut grad = vec![Vec3::zeros(); nv];

    if spec.sigma != 0.0 {
        for (f, tri) in mesh.facets.iter().enumerate() {
            if mesh.facet_roles[f] != FacetRole::Breast {
                continue;
            }
            let [a, b, c] = mesh.corners(f);
            let ga = triangle_area_gradient(a, b, c);
            for k in 0..3 {
                grad[tri[k]] += spec.sigma * ga[k];
            }
        }
    }

    let k = spec.weight_factor();
    if k != 0.0 {
        let up = -spec.g_dir;
        let c = k / 24.0;
        for tri in &mesh.facets {
            let p = tri.map(|i| mesh.vertices[i]);
            let h = p.map(|x| up.dot(&(x - spec.datum)));
            let n_up = up.dot(&(p[1] - p[0]).cross(&(p[2] - p[0])));
            let s = height_quadratic(&h);
            let hsum = h[0] + h[1] + h[2];
            for a in 0..3 {
                let b = (a + 1) % 3;
                let d = (a + 2) % 3;
                let g = s * (p[b] - p[d]).cross(&up) + n_up * (h[a] + hsum) * up;
                grad[tri[a]] += c * g;
            }
        }
    }

    if spec.willmore != 0.0 {
        add_willmore_gradient(mesh, spec.willmore, &mut grad);
    }

    if spec.compressibility != 0.0 {
        let dv = mesh.enclosed_volume() - spec.rest_volume;
        let scale = spec.compressibility * dv / spec.rest_volume;
        for (g, dvg) in grad.iter_mut().zip(mesh.volume_gradient()) {
            *g += scale * dvg;
        }
    }

    for (i, g) in grad.iter_mut().enumerate() {
        if !mesh.is_free(i) {
            *g = Vec3::zeros();
        }
    }
    grad
}

fn add_willmore_gradient(mesh: &TriMesh, weight: f64, grad: &mut [Vec3]) {
    let (lap, area) = mesh.cotan_vectors_and_areas();
    let nv = mesh.vertex_count();
    // dE/dL_i and dE/dA_i for every free vertex
    let mut d_lap = vec![Vec3::zeros(); nv];
    let mut d_area = vec![0.0; nv];
    for i in 0..nv {
        if mesh.is_free(i) && area[i] > 0.0 {
            d_lap[i] = weight * lap[i] / (8.0 * area[i]);
            d_area[i] = -weight * lap[i].norm_squared() / (16.0 * area[i] * area[i]);
        }
    }
    for tri in &mesh.facets {
        if tri.iter().all(|&i| d_area[i] == 0.0 && d_lap[i] == Vec3::zeros()) {
            continue;
        }
        let p = tri.map(|i| mesh.vertices[i]);
        // cot[k] and d cot[k] / d p[j]
        let mut cot = [0.0; 3];
        let mut dcot = [[Vec3::zeros(); 3]; 3];
        for k in 0..3 {
            let (c, g) = cot_angle_with_gradient(&p[k], &p[(k + 1) % 3], &p[(k + 2) % 3]);
            cot[k] = c;
            for (off, gj) in g.iter().enumerate() {
                dcot[k][(k + off) % 3] = *gj;
            }
        }
        let (_, darea) = mixed_areas_with_gradient(&p);
        for a in 0..3 {
            let w = d_lap[tri[a]];
            let s = d_area[tri[a]];
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            // L_a contribution: cot[c] (p_a - p_b) + cot[b] (p_a - p_c)
            let wab = w.dot(&(p[a] - p[b]));
            let wac = w.dot(&(p[a] - p[c]));
            let mut g = [Vec3::zeros(); 3];
            g[a] += (cot[c] + cot[b]) * w;
            g[b] -= cot[c] * w;
            g[c] -= cot[b] * w;
            for j in 0..3 {
                g[j] += wab * dcot[c][j] + wac * dcot[b][j] + s * darea[a][j];
            }
            for j in 0..3 {
                grad[tri[j]] += g[j];
            }
        }
    }
}

/// Worst disagreement between [`gradient`] and central differences of
/// [`total_energy`] over every free vertex coordinate: relative error, or
/// absolute error where the analytic component is below 1e-8.
pub fn fd_check(mesh: &TriMesh, spec: &EnergySpec, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be > 0".into()));
    }
    let analytic = gradient(mesh, spec);
    let mut probe = mesh.clone();
    let mut worst: f64 = 0.0;
    for i in 0..mesh.vertex_count() {
        if !mesh.is_free(i) {
            continue;
        }
        for axis in 0..3 {
            let x0 = mesh.vertices[i][axis];
            probe.vertices[i][axis] = x0 + step;
            let plus = total_energy(&probe, spec);
            probe.vertices[i][axis] = x0 - step;
            let minus = total_energy(&probe, spec);
            probe.vertices[i][axis] = x0;
            let fd = (plus - minus) / (2.0 * step);
            let a = analytic[i][axis];
            let err = if a.abs() < 1e-8 {
                (a - fd).abs()
            } else {
                ((a - fd) / a).abs()
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
