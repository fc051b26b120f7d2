//! Thorax model, initial breast mesh and per-stage configurations, all built
//! from tape-measure anthropometry.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{FacetRole, Marker, TriMesh, VertexRole};
use crate::solver::Obstacle;
use crate::tmr::Quantity;

/// Tolerated mismatch between the measured girth and the ellipse perimeter.
pub const PERIMETER_TOL: f64 = 0.02;

/// Standard table plate, cm.
pub const TABLE_DIMS: (f64, f64) = (18.0, 24.0);

/// Label of the marker placed at the dome apex.
pub const NIPPLE: &str = "nipple";

/// Positions in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageId {
    #[serde(rename = "SRG")]
    Srg,
    #[serde(rename = "STU")]
    Stu,
    #[serde(rename = "LAT")]
    Lat,
}

impl StageId {
    pub const ALL: [StageId; 3] = [StageId::Srg, StageId::Stu, StageId::Lat];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Srg => "SRG",
            StageId::Stu => "STU",
            StageId::Lat => "LAT",
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "SRG" => Ok(StageId::Srg),
            "STU" => Ok(StageId::Stu),
            "LAT" => Ok(StageId::Lat),
            "CRC" | "LET" | "MLO" => Err(Error::InvalidParameter(format!("stage out of scope: {s}"))),
            other => Err(Error::InvalidParameter(format!("unknown stage: {other}"))),
        }
    }
}

/// TMR target values for one stage.
pub type StageTargets = BTreeMap<Quantity, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anthropometry {
    /// Girth of the thorax under the breasts, cm.
    pub thorax_perimeter: f64,
    /// Semi-axes `(a, b)` of the thorax cross-section along Ox and Oz, cm.
    pub thorax_semi_axes: (f64, f64),
    pub base_perimeter_supported: f64,
    pub base_perimeter_unsupported: f64,
    /// g
    pub breast_mass: f64,
    /// cm³
    pub rest_volume: f64,
    /// Centre of the breast base; must lie on the thorax surface.
    pub base_center: Vec3,
    #[serde(default)]
    pub stage_targets: BTreeMap<StageId, StageTargets>,
}

impl Anthropometry {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.thorax_semi_axes;
        let lengths = [
            ("thorax_perimeter", self.thorax_perimeter),
            ("thorax semi-axis a", a),
            ("thorax semi-axis b", b),
            ("base_perimeter_supported", self.base_perimeter_supported),
            ("base_perimeter_unsupported", self.base_perimeter_unsupported),
            ("breast_mass", self.breast_mass),
            ("rest_volume", self.rest_volume),
        ];
        for (name, x) in lengths {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        if self.base_perimeter_supported > self.base_perimeter_unsupported {
            return Err(Error::InvalidParameter(
                "perimeter ordering: base_perimeter_supported > unsupported".into(),
            ));
        }
        for (stage, targets) in &self.stage_targets {
            for (q, v) in targets {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("target {stage}.{q} must be > 0")));
                }
            }
        }
        Thorax::new(a, b)?.check_perimeter(self.thorax_perimeter)
    }
}

/// Elliptic cylinder `(x/a)² + (z/b)² = 1`, axis along Oy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thorax {
    pub a: f64,
    pub b: f64,
}

impl Thorax {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::ThoraxInconsistent(format!(
                "semi-axes must be > 0, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// Ramanujan's second approximation of the cross-section perimeter.
    pub fn perimeter(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        let h = ((a - b) / (a + b)).powi(2);
        PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
    }

    fn check_perimeter(&self, measured: f64) -> Result<()> {
        let p = self.perimeter();
        if ((p - measured) / measured).abs() > PERIMETER_TOL {
            return Err(Error::ThoraxInconsistent(format!(
                "semi-axes ({}, {}) give perimeter {p:.3} cm, measured {measured:.3} cm",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// Outward unit normal of the cylinder at the cross-section of `p`.
    pub fn normal_at(&self, p: &Vec3) -> Vec3 {
        Vec3::new(p.x / (self.a * self.a), 0.0, p.z / (self.b * self.b)).normalize()
    }

    /// Signed Euclidean distance to the cylinder, positive outside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let (x, z) = (p.x.abs(), p.z.abs());
        let d = if self.a >= self.b {
            ellipse_distance(self.a, self.b, x, z)
        } else {
            ellipse_distance(self.b, self.a, z, x)
        };
        if (p.x / self.a).powi(2) + (p.z / self.b).powi(2) < 1.0 {
            -d
        } else {
            d
        }
    }

    /// Distance `t >= 0` from `q` along `-n` to the first cylinder crossing.
    pub fn depth_below(&self, q: &Vec3, n: &Vec3) -> Option<f64> {
        let (ia, ib) = (1.0 / (self.a * self.a), 1.0 / (self.b * self.b));
        let qa = n.x * n.x * ia + n.z * n.z * ib;
        let qb = q.x * n.x * ia + q.z * n.z * ib;
        let qc = q.x * q.x * ia + q.z * q.z * ib - 1.0;
        let disc = qb * qb - qa * qc;
        if disc < 0.0 || qb + disc.sqrt() <= 0.0 {
            return None;
        }
        Some(qc / (qb + disc.sqrt()))
    }

    /// Tangent frame `(e_x, e_y, n)` at a surface point: `n` outward,
    /// `e_y` along Oy and `e_x = e_y × n`.
    pub fn frame_at(&self, p: &Vec3) -> (Vec3, Vec3, Vec3) {
        let n = self.normal_at(p);
        let ey = Vec3::y();
        (ey.cross(&n), ey, n)
    }
}

/// Distance from `(y0, y1)` in the first quadrant to the ellipse with
/// semi-axes `e0 >= e1`.
fn ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let (z0, z1) = (y0 / e0, y1 / e1);
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = bisect_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            ((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt()
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xd = numer / denom;
            let x0 = e0 * xd;
            let x1 = e1 * (1.0 - xd * xd).sqrt();
            ((x0 - y0).powi(2) + x1 * x1).sqrt()
        } else {
            (y0 - e0).abs()
        }
    }
}

fn bisect_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = s0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let g = (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Thorax cylinder and the chest-wall obstacle.
///
/// The wall is the tangent plane at the base centre, pushed back by the
/// cylinder's depth under a disk of the unsupported base radius so that the
/// fixed base cap lies on its admissible side.
pub fn build_thorax(anthro: &Anthropometry) -> Result<(Thorax, Obstacle)> {
    anthro.validate()?;
    let (a, b) = anthro.thorax_semi_axes;
    let thorax = Thorax::new(a, b)?;
    let c = anthro.base_center;
    let off = thorax.signed_distance(&c);
    if off.abs() > 1e-6 * a.max(b) {
        return Err(Error::ThoraxInconsistent(format!(
            "base_center lies {off:.3e} cm off the thorax surface"
        )));
    }
    let (ex, ey, n) = thorax.frame_at(&c);
    let radius = anthro.base_perimeter_unsupported / (2.0 * PI);
    let mut depth: f64 = 0.0;
    for k in 0..72 {
        let th = 2.0 * PI * k as f64 / 72.0;
        let q = c + radius * (th.cos() * ex + th.sin() * ey);
        let t = thorax
            .depth_below(&q, &n)
            .ok_or_else(|| Error::ThoraxInconsistent("base disk does not fit on the thorax".into()))?;
        depth = depth.max(t);
    }
    let wall = Obstacle::new(c - (depth + 1e-6) * n, n, "wall")?;
    Ok((thorax, wall))
}

/// Hexagonal-ring disk: vertex 0 is the centre, ring `k` holds `6k` vertices.
struct Disk {
    rings: usize,
}

impl Disk {
    fn count(&self) -> usize {
        1 + 3 * self.rings * (self.rings + 1)
    }

    fn index(k: usize, j: usize) -> usize {
        if k == 0 {
            0
        } else {
            1 + 3 * k * (k - 1) + j % (6 * k)
        }
    }

    /// Normalized radius and angle of every vertex.
    fn polar(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0)];
        for k in 1..=self.rings {
            for j in 0..6 * k {
                out.push((k as f64 / self.rings as f64, PI * j as f64 / (3 * k) as f64));
            }
        }
        out
    }

    /// Triangles counter-clockwise as seen from the disk's upper side.
    fn triangles(&self) -> Vec<[usize; 3]> {
        let mut tris = Vec::with_capacity(6 * self.rings * self.rings);
        for k in 1..=self.rings {
            for s in 0..6 {
                let outer = |t: usize| Self::index(k, s * k + t);
                let inner = |t: usize| Self::index(k - 1, s * (k - 1) + t);
                for t in 0..k {
                    tris.push([outer(t), outer(t + 1), inner(t)]);
                    if t + 1 < k {
                        tris.push([inner(t), outer(t + 1), inner(t + 1)]);
                    }
                }
            }
        }
        tris
    }
}

/// Spherical-cap dome over a base disk of radius `rho` with apex height `h`.
fn cap_point(rho: f64, h: f64, r: f64) -> (f64, f64) {
    let radius = (rho * rho + h * h) / (2.0 * h);
    let phi_max = (rho / radius).clamp(-1.0, 1.0).asin();
    let phi_max = if h > radius { PI - phi_max } else { phi_max };
    let phi = r * phi_max;
    (radius * phi.sin(), radius * phi.cos() - (radius - h))
}

struct Layout<'a> {
    thorax: &'a Thorax,
    center: Vec3,
    frame: (Vec3, Vec3, Vec3),
    disk: Disk,
}

impl Layout<'_> {
    /// Point on the thorax under the tangent-plane point at polar `(rho, th)`.
    fn on_thorax(&self, rho: f64, th: f64) -> Result<(Vec3, f64)> {
        let (ex, ey, n) = self.frame;
        let q = self.center + rho * (th.cos() * ex + th.sin() * ey);
        let t = self
            .thorax
            .depth_below(&q, &n)
            .ok_or_else(|| Error::BaseVolumeInconsistent("base disk does not fit on the thorax".into()))?;
        Ok((q - t * n, t))
    }

    fn rim_length(&self, rho: f64) -> Result<f64> {
        let k = self.disk.rings;
        let mut pts = Vec::with_capacity(6 * k);
        for j in 0..6 * k {
            pts.push(self.on_thorax(rho, PI * j as f64 / (3 * k) as f64)?.0);
        }
        Ok((0..pts.len()).map(|i| (pts[(i + 1) % pts.len()] - pts[i]).norm()).sum())
    }

    fn mesh(&self, rho: f64, h: f64) -> Result<TriMesh> {
        let n = self.frame.2;
        let (ex, ey) = (self.frame.0, self.frame.1);
        let polar = self.disk.polar();
        let nd = self.disk.count();
        let rim_start = Disk::index(self.disk.rings, 0);

        let mut verts = Vec::with_capacity(2 * nd);
        for &(r, th) in &polar {
            let (rad, up) = cap_point(rho, h, r);
            let (base, t) = self.on_thorax(r * rho, th)?;
            if r == 1.0 {
                verts.push(base);
            } else {
                verts.push(self.center + rad * (th.cos() * ex + th.sin() * ey) + (up - t) * n);
            }
        }
        // cap interior vertices; the rim ring is shared with the dome
        let mut cap_index: Vec<usize> = (0..nd).collect();
        for (i, &(r, th)) in polar.iter().enumerate().take(rim_start) {
            cap_index[i] = verts.len();
            verts.push(self.on_thorax(r * rho, th)?.0);
        }

        let tris = self.disk.triangles();
        let mut facets = tris.clone();
        facets.extend(tris.iter().map(|t| [cap_index[t[0]], cap_index[t[2]], cap_index[t[1]]]));
        let dome_facets = tris.len();

        let mut m = TriMesh::new(verts, facets);
        for i in rim_start..m.vertex_count() {
            m.vertex_roles[i] = VertexRole::Fixed;
        }
        for f in dome_facets..m.facet_count() {
            m.facet_roles[f] = FacetRole::BaseCap;
        }
        Ok(m)
    }
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed left-breast mesh: a spherical-cap dome whose rim lies on the thorax,
/// closed by a fixed base cap on the thorax surface. The rim length matches
/// the supported base perimeter and the enclosed volume the rest volume. The
/// ring count grows until no edge exceeds `edge_target`; the dome apex carries
/// the [`NIPPLE`] marker.
pub fn build_initial_breast(anthro: &Anthropometry, edge_target: f64) -> Result<TriMesh> {
    if !(edge_target > 0.0 && edge_target.is_finite()) {
        return Err(Error::InvalidParameter("edge_target must be > 0".into()));
    }
    let (thorax, _) = build_thorax(anthro)?;
    let center = anthro.base_center;
    let perimeter = anthro.base_perimeter_supported;
    let volume = anthro.rest_volume;
    let mut rings = 2;
    loop {
        let layout = Layout {
            thorax: &thorax,
            center,
            frame: thorax.frame_at(&center),
            disk: Disk { rings },
        };
        let rho = bisect(0.0, perimeter / 4.0, |r| Ok(layout.rim_length(r)? - perimeter))?;
        let signed_volume = |h: f64| -> Result<f64> { Ok(layout.mesh(rho, h)?.enclosed_volume() - volume) };
        let h_max = 20.0 * rho;
        if signed_volume(h_max)? < 0.0 {
            return Err(Error::BaseVolumeInconsistent(format!(
                "no dome over a {perimeter} cm base reaches {volume} cm³"
            )));
        }
        let h = bisect(rho * 1e-6, h_max, signed_volume)?;
        let mut mesh = layout.mesh(rho, h)?;
        let longest = mesh
            .edges()
            .iter()
            .map(|&(i, j)| (mesh.vertices[i] - mesh.vertices[j]).norm())
            .fold(0.0, f64::max);
        if longest <= edge_target {
            mesh.markers.push(Marker::new(NIPPLE, 0, [0.0, 0.0, 1.0])?);
            mesh.ensure_valid()?;
            if (mesh.rim_length() - perimeter).abs() > 0.005 * perimeter
                || (mesh.enclosed_volume() - volume).abs() > 0.01 * volume
            {
                return Err(Error::BaseVolumeInconsistent(
                    "dome cannot match base perimeter and volume together".into(),
                ));
            }
            return Ok(mesh);
        }
        rings += 1;
        if rings > 400 {
            return Err(Error::InvalidParameter(format!(
                "edge_target {edge_target} cm is too small"
            )));
        }
    }
}

/// Restores vertex and facet roles of a mesh read back from a plain file.
/// Vertices on the thorax surface (within `tol` cm) are fixed; a facet whose
/// corners are all fixed and whose normal points into the thorax is base cap.
pub fn assign_roles(mesh: &mut TriMesh, thorax: &Thorax, tol: f64) {
    for (v, role) in mesh.vertices.iter().zip(mesh.vertex_roles.iter_mut()) {
        *role = if thorax.signed_distance(v).abs() <= tol {
            VertexRole::Fixed
        } else {
            VertexRole::Free
        };
    }
    for f in 0..mesh.facet_count() {
        let on_thorax = mesh.facets[f].iter().all(|&v| !mesh.is_free(v));
        let c = mesh.corners(f);
        let centroid = (c[0] + c[1] + c[2]) / 3.0;
        let inward = mesh.facet_normal(f).dot(&thorax.normal_at(&centroid)) < 0.0;
        mesh.facet_roles[f] = if on_thorax && inward {
            FacetRole::BaseCap
        } else {
            FacetRole::Breast
        };
    }
}

/// Height of the dome apex above the base centre along the thorax normal.
pub fn apex_height(mesh: &TriMesh, anthro: &Anthropometry, thorax: &Thorax) -> Option<f64> {
    let tip = mesh.marker(NIPPLE)?;
    let n = thorax.normal_at(&anthro.base_center);
    Some((mesh.marker_position(tip) - anthro.base_center).dot(&n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub id: StageId,
    /// Unit direction of gravity in the body frame.
    pub g_dir: Vec3,
    /// Fraction of the weight acting on the breast, in [0, 1].
    pub support: f64,
    pub obstacles: Vec<Obstacle>,
    pub targets: StageTargets,
    pub table_dims: Option<(f64, f64)>,
}

impl StageConfig {
    pub fn table(&self) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.label == "table")
    }
}

/// Default configuration of a stage. `d_table` is the distance of the LAT
/// table from the base centre along the thorax normal.
pub fn stage_config(id: StageId, anthro: &Anthropometry, d_table: f64) -> Result<StageConfig> {
    let (thorax, wall) = build_thorax(anthro)?;
    let targets = anthro.stage_targets.get(&id).cloned().unwrap_or_default();
    let cfg = match id {
        StageId::Srg => StageConfig {
            id,
            g_dir: -Vec3::z(),
            support: 0.2,
            obstacles: vec![wall],
            targets,
            table_dims: None,
        },
        StageId::Stu => StageConfig {
            id,
            g_dir: -Vec3::y(),
            support: 1.0,
            obstacles: vec![wall],
            targets,
            table_dims: None,
        },
        StageId::Lat => {
            if !(d_table > 0.0 && d_table.is_finite()) {
                return Err(Error::InvalidParameter("d_table must be > 0".into()));
            }
            let n = thorax.normal_at(&anthro.base_center);
            let table = Obstacle::new(anthro.base_center + d_table * n, -n, "table")?;
            StageConfig {
                id,
                g_dir: Vec3::z(),
                support: 1.0,
                obstacles: vec![wall, table],
                targets,
                table_dims: Some(TABLE_DIMS),
            }
        }
    };
    Ok(cfg)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn volunteer() -> Anthropometry {
        Anthropometry {
            thorax_perimeter: 86.0,
            thorax_semi_axes: (15.2, 12.1),
            base_perimeter_supported: 46.0,
            base_perimeter_unsupported: 50.0,
            breast_mass: 700.0,
            rest_volume: 700.0,
            base_center: Vec3::new(0.0, 0.0, 12.1),
            stage_targets: BTreeMap::new(),
        }
    }

    /// Nearly flat thorax carrying a unit hemisphere.
    pub(crate) fn flat_hemisphere() -> Anthropometry {
        let big = 1e6;
        Anthropometry {
            thorax_perimeter: 2.0 * PI * big,
            thorax_semi_axes: (big, big),
            base_perimeter_supported: 2.0 * PI,
            base_perimeter_unsupported: 2.0 * PI,
            breast_mass: 2.0 * PI / 3.0,
            rest_volume: 2.0 * PI / 3.0,
            base_center: Vec3::new(0.0, 0.0, big),
            stage_targets: BTreeMap::new(),
        }
    }

    #[test]
    fn circle_perimeter() {
        assert!((Thorax::new(1.0, 1.0).unwrap().perimeter() - 2.0 * PI).abs() < 1e-12);
        let r = 86.0 / (2.0 * PI);
        assert!((r - 13.687).abs() < 1e-3);
        assert!((Thorax::new(r, r).unwrap().perimeter() - 86.0).abs() < 1e-9);
        // arc-length quadrature of the ellipse
        let (a, b) = (15.2f64, 12.1f64);
        let n = 100_000;
        let exact: f64 = (0..n)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt() * 2.0 * PI / n as f64
            })
            .sum();
        assert!((Thorax::new(a, b).unwrap().perimeter() / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inconsistent_thorax_is_rejected() {
        let mut a = volunteer();
        a.thorax_semi_axes = (16.0, 13.0);
        assert!(matches!(a.validate(), Err(Error::ThoraxInconsistent(_))));
        let mut a = volunteer();
        a.base_center = Vec3::new(0.0, 0.0, 13.0);
        assert!(matches!(build_thorax(&a), Err(Error::ThoraxInconsistent(_))));
    }

    #[test]
    fn perimeter_ordering() {
        let mut a = volunteer();
        a.base_perimeter_supported = 50.0;
        a.base_perimeter_unsupported = 46.0;
        let err = a.validate().unwrap_err().to_string();
        assert!(err.contains("perimeter ordering"), "{err}");
    }

    #[test]
    fn ellipse_distance_matches_sampling() {
        let t = Thorax::new(15.2, 12.1).unwrap();
        for p in [
            Vec3::new(3.0, 0.0, 14.0),
            Vec3::new(-20.0, 1.0, 2.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, 20.0),
            Vec3::new(16.0, 0.0, 0.0),
            Vec3::new(14.0, 0.0, 0.0),
        ] {
            let brute = (0..200_000)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / 200_000.0;
                    ((p.x - t.a * th.cos()).powi(2) + (p.z - t.b * th.sin()).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            let d = t.signed_distance(&p);
            assert!((d.abs() - brute).abs() < 1e-5, "{p:?}: {d} vs {brute}");
        }
        assert!(t.signed_distance(&Vec3::new(1.0, 0.0, 1.0)) < 0.0);
        assert!(t.signed_distance(&Vec3::new(0.0, 0.0, 13.0)) > 0.0);
    }

    #[test]
    fn wall_keeps_base_admissible() {
        let anthro = volunteer();
        let (_, wall) = build_thorax(&anthro).unwrap();
        let mesh = build_initial_breast(&anthro, 2.0).unwrap();
        for v in &mesh.vertices {
            assert!(wall.plane.signed_distance(v) > 0.0);
        }
    }

    #[test]
    fn volunteer_initial_breast() {
        let anthro = volunteer();
        let mesh = build_initial_breast(&anthro, 1.5).unwrap();
        assert!(mesh.validate().is_empty());
        assert!((mesh.enclosed_volume() - 700.0).abs() <= 7.0);
        assert!((mesh.rim_length() - 46.0).abs() <= 0.23);
        let longest = mesh
            .edges()
            .iter()
            .map(|&(i, j)| (mesh.vertices[i] - mesh.vertices[j]).norm())
            .fold(0.0, f64::max);
        assert!(longest <= 1.5);
        let tip = mesh.marker_position(mesh.marker(NIPPLE).unwrap());
        assert!(tip.x.abs() < 1e-6 && tip.y.abs() < 1e-6);
    }

    #[test]
    fn base_is_fixed() {
        let mesh = build_initial_breast(&volunteer(), 2.0).unwrap();
        for (f, tri) in mesh.facets.iter().enumerate() {
            if mesh.facet_roles[f] == FacetRole::BaseCap {
                assert!(tri.iter().all(|&v| !mesh.is_free(v)));
            }
        }
        for (a, b) in mesh.rim_edges() {
            assert!(!mesh.is_free(a) && !mesh.is_free(b));
        }
    }

    #[test]
    fn initial_breast_is_mirror_symmetric() {
        let mesh = build_initial_breast(&volunteer(), 1.5).unwrap();
        for v in &mesh.vertices {
            let image = Vec3::new(-v.x, v.y, v.z);
            let nearest = mesh
                .vertices
                .iter()
                .map(|w| (w - image).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-6);
        }
    }

    #[test]
    fn flat_limit_is_a_hemisphere() {
        let anthro = flat_hemisphere();
        let mesh = build_initial_breast(&anthro, 0.15).unwrap();
        let c = anthro.base_center;
        let tip = mesh.marker_position(mesh.marker(NIPPLE).unwrap());
        assert!(((tip - c).z - 1.0).abs() < 0.01);
        for (i, v) in mesh.vertices.iter().enumerate() {
            if mesh.is_free(i) {
                let r = (v - c).norm();
                assert!((r - 1.0).abs() < 0.01, "{r}");
            }
        }
    }

    #[test]
    fn unreachable_volume() {
        let mut a = volunteer();
        a.base_perimeter_supported = 0.5;
        a.base_perimeter_unsupported = 0.5;
        assert!(matches!(
            build_initial_breast(&a, 5.0),
            Err(Error::BaseVolumeInconsistent(_))
        ));
    }

    #[test]
    fn stage_defaults() {
        let a = volunteer();
        let cfgs: Vec<_> = StageId::ALL
            .iter()
            .map(|&s| stage_config(s, &a, 6.0).unwrap())
            .collect();
        for c in &cfgs {
            assert!((c.g_dir.norm() - 1.0).abs() < 1e-15);
        }
        assert!(cfgs[0].support < cfgs[1].support);
        let table = cfgs[2].table().unwrap();
        assert_eq!(cfgs[2].table_dims, Some((18.0, 24.0)));
        assert!((table.plane.signed_distance(&Vec3::new(0.0, 0.0, 12.1)) - 6.0).abs() < 1e-12);
        assert!(cfgs[0].table().is_none() && cfgs[1].table().is_none());
    }

    #[test]
    fn stage_tokens() {
        assert_eq!("STU".parse::<StageId>().unwrap(), StageId::Stu);
        assert!("MLO"
            .parse::<StageId>()
            .unwrap_err()
            .to_string()
            .contains("stage out of scope"));
        assert!("XYZ"
            .parse::<StageId>()
            .unwrap_err()
            .to_string()
            .contains("unknown stage"));
    }
    #[test]
    fn roles_are_recovered_from_geometry() {
        let anthro = volunteer();
        let mesh = build_initial_breast(&anthro, 2.0).unwrap();
        let (thorax, _) = build_thorax(&anthro).unwrap();
        let mut bare = TriMesh::new(mesh.vertices.clone(), mesh.facets.clone());
        assign_roles(&mut bare, &thorax, 1e-7);
        assert_eq!(bare.vertex_roles, mesh.vertex_roles);
        assert_eq!(bare.facet_roles, mesh.facet_roles);
    }
}
