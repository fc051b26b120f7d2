//! Virtual tape measure: plane-section perimeters, the four semi-arcs through
//! the nipple and per-stage measurement reports.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::anatomy::{StageId, Thorax, NIPPLE, TABLE_DIMS};
use crate::error::{Error, Result};
use crate::geometry::{Plane, Vec3};
use crate::mesh::{plane_section, FacetRole, Marker, Polyline, TriMesh};
use crate::solver::Obstacle;

/// Distance under which a vertex counts as resting on the table, cm.
pub const CONTACT_EPS: f64 = 1e-6;

/// Measurable quantities usable as calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Area,
    Volume,
    BasePerimeter,
    HLeft,
    HRight,
    VBottom,
    VTop,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Quantity::Area,
        Quantity::Volume,
        Quantity::BasePerimeter,
        Quantity::HLeft,
        Quantity::HRight,
        Quantity::VBottom,
        Quantity::VTop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Area => "area",
            Quantity::Volume => "volume",
            Quantity::BasePerimeter => "base_perimeter",
            Quantity::HLeft => "h_left",
            Quantity::HRight => "h_right",
            Quantity::VBottom => "v_bottom",
            Quantity::VTop => "v_top",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown quantity: {s}")))
    }
}

/// Tape lengths from the base rim to the nipple, cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiArcs {
    pub h_left: f64,
    pub h_right: f64,
    pub v_bottom: f64,
    pub v_top: f64,
    /// Full horizontal and vertical section arcs.
    pub horizontal: f64,
    pub vertical: f64,
}

/// Extents of the table contact, measured along Ox and Oy projected onto the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPatch {
    pub width: f64,
    pub height: f64,
    pub vertices: usize,
    pub exceeds_table: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerReport {
    pub label: String,
    /// Position carried by the surface attachment; absent for labels known
    /// only from a trajectory.
    pub advected: Option<Vec3>,
    /// Prescribed position for this stage, when a trajectory supplies one.
    pub predefined: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub stage: StageId,
    /// Breast skin area without the base cap, cm².
    pub area: f64,
    pub volume: f64,
    pub mass: f64,
    pub density: f64,
    pub base_perimeter: f64,
    pub semi_arcs: Option<SemiArcs>,
    /// Material nipple when tracked, else the vertex farthest from the thorax.
    pub nipple: Vec3,
    pub contact: Option<ContactPatch>,
    pub markers: Vec<MarkerReport>,
    pub warnings: Vec<String>,
}

impl MeasurementReport {
    pub fn quantity(&self, q: Quantity) -> Option<f64> {
        let arcs = self.semi_arcs.as_ref();
        match q {
            Quantity::Area => Some(self.area),
            Quantity::Volume => Some(self.volume),
            Quantity::BasePerimeter => Some(self.base_perimeter),
            Quantity::HLeft => arcs.map(|a| a.h_left),
            Quantity::HRight => arcs.map(|a| a.h_right),
            Quantity::VBottom => arcs.map(|a| a.v_bottom),
            Quantity::VTop => arcs.map(|a| a.v_top),
        }
    }
}

/// Marker on the free vertex farthest outside the thorax; ties go to the
/// lowest vertex index. It sits at weight 1 on the lowest-index incident facet.
pub fn locate_nipple(mesh: &TriMesh, thorax: &Thorax) -> Result<Marker> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in mesh.vertices.iter().enumerate() {
        if !mesh.is_free(i) {
            continue;
        }
        let d = thorax.signed_distance(v);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    let (v, _) = best.ok_or_else(|| Error::InvalidMesh("no free vertex".into()))?;
    let (f, tri) = mesh
        .facets
        .iter()
        .enumerate()
        .find(|(_, t)| t.contains(&v))
        .ok_or_else(|| Error::InvalidMesh(format!("vertex {v} has no facet")))?;
    let mut bary = [0.0; 3];
    bary[tri.iter().position(|&x| x == v).unwrap()] = 1.0;
    Marker::new("nipple", f, bary)
}

fn nearest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    a + ab * ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

/// Splits the breast section through `p` at the point nearest `p`. Returns
/// `(head, tail, full)`, head being the part that starts at `points[0]`, and
/// whether the head runs towards negative `axis`.
fn split_arc(
    mesh: &TriMesh,
    plane: &Plane,
    p: &Vec3,
    axis: &Vec3,
    rim: &HashSet<(usize, usize)>,
) -> Result<(f64, f64, f64)> {
    let lines = plane_section(mesh, plane, Some(FacetRole::Breast));
    let mut best: Option<(&Polyline, usize, Vec3, f64)> = None;
    for line in &lines {
        for s in 0..line.points.len().saturating_sub(1) {
            let q = nearest_on_segment(p, &line.points[s], &line.points[s + 1]);
            let d = (q - p).norm();
            if best.as_ref().is_none_or(|b| d < b.3) {
                best = Some((line, s, q, d));
            }
        }
    }
    let (line, seg, at, _) = best.ok_or_else(|| Error::ArcNotAnchored("section does not pass the nipple".into()))?;
    if line.closed {
        return Err(Error::ArcNotAnchored(
            "section through the nipple is a closed loop".into(),
        ));
    }
    let ends = [line.edges[0], line.edges[line.edges.len() - 1]];
    if !ends.iter().all(|e| rim.contains(e)) {
        return Err(Error::ArcNotAnchored("section does not end on the base rim".into()));
    }
    let (head, tail) = line.split_lengths(seg, &at);
    let full = line.length();
    if (line.points[0] - p).dot(axis) < 0.0 {
        Ok((head, tail, full))
    } else {
        Ok((tail, head, full))
    }
}

/// Horizontal (normal Oy) and vertical (normal Ox) breast sections through the
/// nipple, each split at the nipple into its two semi-arcs.
pub fn semi_arcs(mesh: &TriMesh, nipple: &Marker) -> Result<SemiArcs> {
    let p = mesh.marker_position(nipple);
    let rim: HashSet<(usize, usize)> = mesh
        .rim_edges()
        .into_iter()
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    let (h_left, h_right, horizontal) = split_arc(mesh, &Plane::new(p, Vec3::y())?, &p, &Vec3::x(), &rim)?;
    let (v_bottom, v_top, vertical) = split_arc(mesh, &Plane::new(p, Vec3::x())?, &p, &Vec3::y(), &rim)?;
    Ok(SemiArcs {
        h_left,
        h_right,
        v_bottom,
        v_top,
        horizontal,
        vertical,
    })
}

/// Least-squares plane of the base rim, normal pointing into the breast.
pub fn base_plane(mesh: &TriMesh) -> Result<Plane> {
    let mut ids: Vec<usize> = mesh.rim_edges().into_iter().map(|(a, _)| a).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 3 {
        return Err(Error::NoSection);
    }
    let c = ids.iter().map(|&i| mesh.vertices[i]).sum::<Vec3>() / ids.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in &ids {
        let d = mesh.vertices[i] - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut n: Vec3 = eig.eigenvectors.column(k).into_owned();
    let free_mean = mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, _)| mesh.is_free(*i))
        .map(|(_, v)| v - c)
        .sum::<Vec3>();
    if n.dot(&free_mean) < 0.0 {
        n = -n;
    }
    Plane::new(c, n)
}

/// Length of the longest closed breast section; on the base plane itself, the
/// rim length.
pub fn section_perimeter(mesh: &TriMesh, plane: &Plane) -> Result<f64> {
    if let Ok(base) = base_plane(mesh) {
        let scale = mesh.rim_length().max(1.0);
        if base.normal.dot(&plane.normal).abs() > 1.0 - 1e-12
            && base.signed_distance(&plane.point).abs() <= 1e-9 * scale
        {
            return Ok(mesh.rim_length());
        }
    }
    plane_section(mesh, plane, Some(FacetRole::Breast))
        .iter()
        .filter(|l| l.closed)
        .map(Polyline::length)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))))
        .ok_or(Error::NoSection)
}

fn contact_patch(mesh: &TriMesh, table: &Obstacle, dims: (f64, f64)) -> ContactPatch {
    let n = table.plane.normal;
    let u = {
        let c = Vec3::y().cross(&n);
        if c.norm() > 1e-9 {
            c.normalize()
        } else {
            Vec3::x()
        }
    };
    let v = n.cross(&u);
    let touching: Vec<&Vec3> = mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, p)| mesh.is_free(*i) && table.plane.signed_distance(p).abs() <= CONTACT_EPS)
        .map(|(_, p)| p)
        .collect();
    let extent = |axis: &Vec3| {
        let (lo, hi) = touching
            .iter()
            .map(|p| p.dot(axis))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
        if touching.is_empty() {
            0.0
        } else {
            hi - lo
        }
    };
    let (width, height) = (extent(&u), extent(&v));
    let fits = (width <= dims.0 && height <= dims.1) || (width <= dims.1 && height <= dims.0);
    ContactPatch {
        width,
        height,
        vertices: touching.len(),
        exceeds_table: !fits,
    }
}

/// Measurements of one stage. Sections that fail are reported as warnings.
pub fn report(
    mesh: &TriMesh,
    stage: StageId,
    mass: f64,
    thorax: &Thorax,
    table: Option<&Obstacle>,
) -> MeasurementReport {
    let volume = mesh.enclosed_volume();
    let mut warnings = Vec::new();
    // the tracked material nipple wins over the farthest vertex: a breast
    // flattened on the table has near-ties for the latter
    let anchor = match mesh.marker(NIPPLE) {
        Some(m) => Some(m.clone()),
        None => locate_nipple(mesh, thorax)
            .map_err(|e| warnings.push(e.to_string()))
            .ok(),
    };
    let nipple = anchor.as_ref().map_or_else(Vec3::zeros, |m| mesh.marker_position(m));
    let semi = anchor
        .as_ref()
        .and_then(|m| semi_arcs(mesh, m).map_err(|e| warnings.push(e.to_string())).ok());
    let contact = table.map(|t| {
        let patch = contact_patch(mesh, t, TABLE_DIMS);
        if patch.vertices == 0 {
            warnings.push("no table contact".into());
        }
        if patch.exceeds_table {
            warnings.push(format!(
                "contact patch {:.2} x {:.2} cm exceeds the {} x {} cm table",
                patch.width, patch.height, TABLE_DIMS.0, TABLE_DIMS.1
            ));
        }
        patch
    });
    let markers = mesh
        .markers
        .iter()
        .map(|m| MarkerReport {
            label: m.label.clone(),
            advected: Some(mesh.marker_position(m)),
            predefined: None,
        })
        .collect();
    MeasurementReport {
        stage,
        area: mesh.total_area(Some(FacetRole::Breast)),
        volume,
        mass,
        density: mass / volume,
        base_perimeter: mesh.rim_length(),
        semi_arcs: semi,
        nipple,
        contact,
        markers,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::anatomy::tests::{flat_hemisphere, volunteer};
    use crate::anatomy::{build_initial_breast, build_thorax};
    use crate::mesh::primitives::icosphere;

    #[test]
    fn equator_perimeter() {
        let m = icosphere(3, 1.0);
        let l = section_perimeter(&m, &Plane::new(Vec3::zeros(), Vec3::z()).unwrap()).unwrap();
        assert!((l / (2.0 * PI) - 1.0).abs() < 0.01);
        let far = Plane::new(Vec3::new(0.0, 0.0, 5.0), Vec3::z()).unwrap();
        assert!(matches!(section_perimeter(&m, &far), Err(Error::NoSection)));
    }

    #[test]
    fn base_plane_gives_base_perimeter() {
        let mesh = build_initial_breast(&volunteer(), 2.0).unwrap();
        let plane = base_plane(&mesh).unwrap();
        let l = section_perimeter(&mesh, &plane).unwrap();
        assert!((l - 46.0).abs() <= 0.23);
    }

    #[test]
    fn apex_is_the_nipple() {
        let anthro = volunteer();
        let (thorax, _) = build_thorax(&anthro).unwrap();
        let mesh = build_initial_breast(&anthro, 2.0).unwrap();
        let m = locate_nipple(&mesh, &thorax).unwrap();
        let p = mesh.marker_position(&m);
        assert_eq!(p, mesh.marker_position(mesh.marker(NIPPLE).unwrap()));
        assert!(p.x.abs() < 1e-6);
    }

    #[test]
    fn nipple_follows_translation_along_the_axis() {
        let anthro = volunteer();
        let (thorax, _) = build_thorax(&anthro).unwrap();
        let mesh = build_initial_breast(&anthro, 2.0).unwrap();
        let shifted = mesh.translated(&Vec3::new(0.0, 3.0, 0.0));
        let a = locate_nipple(&mesh, &thorax).unwrap();
        let b = locate_nipple(&shifted, &thorax).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hemisphere_semi_arcs_are_quarter_circles() {
        let mesh = build_initial_breast(&flat_hemisphere(), 0.1).unwrap();
        let arcs = semi_arcs(&mesh, mesh.marker(NIPPLE).unwrap()).unwrap();
        for l in [arcs.h_left, arcs.h_right, arcs.v_bottom, arcs.v_top] {
            assert!((l / (PI / 2.0) - 1.0).abs() < 0.01, "{arcs:?}");
        }
    }

    #[test]
    fn symmetric_dome_arcs() {
        let mesh = build_initial_breast(&volunteer(), 1.5).unwrap();
        let a = semi_arcs(&mesh, mesh.marker(NIPPLE).unwrap()).unwrap();
        assert!((a.h_left / a.h_right - 1.0).abs() < 0.005, "{a:?}");
        assert!((a.v_bottom / a.v_top - 1.0).abs() < 0.005, "{a:?}");
        assert!(((a.h_left + a.h_right) / a.horizontal - 1.0).abs() < 1e-9);
        assert!(((a.v_bottom + a.v_top) / a.vertical - 1.0).abs() < 1e-9);
    }

    #[test]
    fn closed_sphere_arc_is_not_anchored() {
        let m = icosphere(2, 1.0);
        let nip = Marker::new("n", 0, [1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(semi_arcs(&m, &nip), Err(Error::ArcNotAnchored(_))));
    }

    #[test]
    fn density_is_mass_over_volume() {
        let anthro = volunteer();
        let (thorax, _) = build_thorax(&anthro).unwrap();
        let mesh = build_initial_breast(&anthro, 2.0).unwrap();
        let r = report(&mesh, StageId::Srg, 700.0, &thorax, None);
        assert_eq!(r.density, 700.0 / r.volume);
        assert!(r.contact.is_none());
        assert!((700.0f64 / 680.0 - 1.0294).abs() < 1e-4);
        assert_eq!(r.markers.len(), 1);
    }

    #[test]
    fn table_contact_patch() {
        let anthro = volunteer();
        let (thorax, _) = build_thorax(&anthro).unwrap();
        let mesh = build_initial_breast(&anthro, 2.0).unwrap();
        let tip = mesh.marker_position(mesh.marker(NIPPLE).unwrap());
        let table = Obstacle::new(tip, -Vec3::z(), "table").unwrap();
        let r = report(&mesh, StageId::Lat, 700.0, &thorax, Some(&table));
        let c = r.contact.unwrap();
        assert_eq!(c.vertices, 1);
        assert_eq!((c.width, c.height), (0.0, 0.0));
        assert!(!c.exceeds_table);
    }

    #[test]
    fn lengths_are_rigid_invariant() {
        let mesh = build_initial_breast(&volunteer(), 2.0).unwrap();
        let nip = mesh.marker(NIPPLE).unwrap().clone();
        let a = semi_arcs(&mesh, &nip).unwrap();
        let moved = mesh.translated(&Vec3::new(1.5, -2.0, 0.7));
        let b = semi_arcs(&moved, &nip).unwrap();
        for (x, y) in [
            (a.h_left, b.h_left),
            (a.h_right, b.h_right),
            (a.v_bottom, b.v_bottom),
            (a.v_top, b.v_top),
        ] {
            assert!((x / y - 1.0).abs() < 1e-9);
        }
    }
}
