//! Closed oriented triangle meshes with a free/fixed vertex partition.
//!
//! The deforming breast surface is closed against the thorax by a fixed base
//! cap, so enclosed volume is always well defined. Facet winding is
//! counter-clockwise seen from outside.

pub(crate) mod average;
mod equiangulate;
pub mod primitives;
mod refine;
mod section;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area_vector, triangle_area, Vec3};

pub use average::vertex_average;
pub use equiangulate::equiangulate;
pub use refine::refine;
pub use section::{plane_section, Polyline};

/// Smallest facet area accepted as non-degenerate, cm².
pub const MIN_FACET_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexRole {
    Free,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacetRole {
    Breast,
    BaseCap,
}

/// Material point carried by the surface: a facet and barycentric weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub facet: usize,
    pub bary: [f64; 3],
    pub label: String,
}

impl Marker {
    pub fn new(label: impl Into<String>, facet: usize, bary: [f64; 3]) -> Result<Self> {
        let sum: f64 = bary.iter().sum();
        if bary.iter().any(|b| !(*b >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "barycentric coordinates {bary:?} must be non-negative and sum to 1"
            )));
        }
        Ok(Self {
            facet,
            bary,
            label: label.into(),
        })
    }
}

/// One reason a mesh fails its invariants.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RoleCountMismatch,
    NonFiniteVertex {
        vertex: usize,
    },
    IndexOutOfRange {
        facet: usize,
    },
    RepeatedVertex {
        facet: usize,
    },
    DegenerateFacet {
        facet: usize,
        area: f64,
    },
    /// Edge with a single incident facet.
    BoundaryEdge {
        a: usize,
        b: usize,
    },
    /// Edge with more than two incident facets.
    NonManifoldEdge {
        a: usize,
        b: usize,
        facets: usize,
    },
    /// Two incident facets traverse the edge in the same direction.
    OrientationConflict {
        a: usize,
        b: usize,
    },
    CapFacetWithFreeVertex {
        facet: usize,
    },
    InvalidMarker {
        marker: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub facets: Vec<[usize; 3]>,
    pub vertex_roles: Vec<VertexRole>,
    pub facet_roles: Vec<FacetRole>,
    pub markers: Vec<Marker>,
}

/// Directed edge `(from, to)` to the facet that traverses it.
pub(crate) type EdgeMap = HashMap<(usize, usize), usize>;

impl TriMesh {
    /// All vertices free and all facets breast-role.
    pub fn new(vertices: Vec<Vec3>, facets: Vec<[usize; 3]>) -> Self {
        let nv = vertices.len();
        let nf = facets.len();
        Self {
            vertices,
            facets,
            vertex_roles: vec![VertexRole::Free; nv],
            facet_roles: vec![FacetRole::Breast; nf],
            markers: Vec::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    #[inline]
    pub fn is_free(&self, v: usize) -> bool {
        self.vertex_roles[v] == VertexRole::Free
    }

    #[inline]
    pub fn corners(&self, f: usize) -> [&Vec3; 3] {
        let [a, b, c] = self.facets[f];
        [&self.vertices[a], &self.vertices[b], &self.vertices[c]]
    }

    pub fn facet_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(f);
        triangle_area(a, b, c)
    }

    /// Unit outward normal of a facet.
    pub fn facet_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        area_vector(a, b, c).normalize()
    }

    /// Returns every invariant violation; an empty list means the mesh is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let nv = self.vertices.len();
        if self.vertex_roles.len() != nv || self.facet_roles.len() != self.facets.len() {
            out.push(Violation::RoleCountMismatch);
            return out;
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                out.push(Violation::NonFiniteVertex { vertex: i });
            }
        }
        // undirected edge -> (count min->max, count max->min)
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut edge_order = Vec::new();
        for (f, tri) in self.facets.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                out.push(Violation::IndexOutOfRange { facet: f });
                continue;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                out.push(Violation::RepeatedVertex { facet: f });
                continue;
            }
            let area = self.facet_area(f);
            if !(area > MIN_FACET_AREA) {
                out.push(Violation::DegenerateFacet { facet: f, area });
            }
            if self.facet_roles[f] == FacetRole::BaseCap && tri.iter().any(|&i| self.is_free(i)) {
                out.push(Violation::CapFacetWithFreeVertex { facet: f });
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let entry = edges.entry(key).or_insert_with(|| {
                    edge_order.push(key);
                    (0, 0)
                });
                if a < b {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
        for key in edge_order {
            let (fwd, bwd) = edges[&key];
            let (a, b) = key;
            match fwd + bwd {
                1 => out.push(Violation::BoundaryEdge { a, b }),
                2 if fwd != 1 => out.push(Violation::OrientationConflict { a, b }),
                2 => {}
                n => out.push(Violation::NonManifoldEdge { a, b, facets: n }),
            }
        }
        for (i, m) in self.markers.iter().enumerate() {
            let sum: f64 = m.bary.iter().sum();
            if m.facet >= self.facets.len() || m.bary.iter().any(|b| !(*b >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                out.push(Violation::InvalidMarker { marker: i });
            }
        }
        out
    }

    /// Errors with a summary when `validate` reports anything.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMesh(format!(
                "{} violation(s), first: {:?}",
                v.len(),
                v[0]
            )))
        }
    }

    /// Sum of facet areas, restricted to one role when `role` is given.
    pub fn total_area(&self, role: Option<FacetRole>) -> f64 {
        let mut sum = 0.0;
        for f in 0..self.facets.len() {
            if role.is_none_or(|r| self.facet_roles[f] == r) {
                sum += self.facet_area(f);
            }
        }
        sum
    }

    /// Mean vertex position, used as the reference point of volume sums.
    pub(crate) fn reference_point(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        let mut c = Vec3::zeros();
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    /// Signed enclosed volume; positive for outward orientation.
    ///
    /// Summed relative to the vertex centroid, which equals the origin-based
    /// sum on closed meshes but keeps far-from-origin meshes well conditioned.
    pub fn enclosed_volume(&self) -> f64 {
        let c = self.reference_point();
        let mut sum = 0.0;
        for tri in &self.facets {
            let a = self.vertices[tri[0]] - c;
            let b = self.vertices[tri[1]] - c;
            let d = self.vertices[tri[2]] - c;
            sum += a.dot(&b.cross(&d));
        }
        sum / 6.0
    }

    /// Gradient of the enclosed volume with respect to every vertex.
    pub fn volume_gradient(&self) -> Vec<Vec3> {
        let mut g = vec![Vec3::zeros(); self.vertices.len()];
        let c = self.reference_point();
        for tri in &self.facets {
            let p = [
                self.vertices[tri[0]] - c,
                self.vertices[tri[1]] - c,
                self.vertices[tri[2]] - c,
            ];
            g[tri[0]] += p[1].cross(&p[2]) / 6.0;
            g[tri[1]] += p[2].cross(&p[0]) / 6.0;
            g[tri[2]] += p[0].cross(&p[1]) / 6.0;
        }
        g
    }

    /// Area-weighted vertex normals (unit length, zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::zeros(); self.vertices.len()];
        for tri in &self.facets {
            let [a, b, c] = [&self.vertices[tri[0]], &self.vertices[tri[1]], &self.vertices[tri[2]]];
            let av = area_vector(a, b, c);
            for &i in tri {
                n[i] += av;
            }
        }
        for v in &mut n {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        }
        n
    }

    /// Per-vertex cotangent vectors `L_i = sum_j (cot a_ij + cot b_ij)(x_i - x_j)`
    /// and mixed Voronoi vertex areas.
    pub fn cotan_vectors_and_areas(&self) -> (Vec<Vec3>, Vec<f64>) {
        let nv = self.vertices.len();
        let mut lap = vec![Vec3::zeros(); nv];
        let mut area = vec![0.0; nv];
        for tri in &self.facets {
            let p = tri.map(|i| self.vertices[i]);
            let (l, a) = facet_curvature_terms(&p);
            for k in 0..3 {
                lap[tri[k]] += l[k];
                area[tri[k]] += a[k];
            }
        }
        (lap, area)
    }

    /// Discrete mean curvature at `vertex`: `H = |L_i| / (4 A_i)` with the
    /// cotangent vector `L_i` and the mixed Voronoi area `A_i`.
    ///
    /// `H` is signed positive where the surface bends away from its outward
    /// normal (spheres are positive). Also returns the unit vertex normal.
    pub fn mean_curvature(&self, vertex: usize) -> Result<(f64, Vec3)> {
        if vertex >= self.vertices.len() {
            return Err(Error::InvalidParameter(format!("vertex {vertex} out of range")));
        }
        let mut lap = Vec3::zeros();
        let mut area = 0.0;
        let mut normal = Vec3::zeros();
        for tri in &self.facets {
            let Some(k) = slot_of(tri, vertex) else {
                continue;
            };
            let p = tri.map(|i| self.vertices[i]);
            let (l, a) = facet_curvature_terms(&p);
            lap += l[k];
            area += a[k];
            normal += area_vector(&p[0], &p[1], &p[2]);
        }
        if !(area > 0.0) {
            return Err(Error::DegenerateStar { vertex });
        }
        let normal = normal.normalize();
        let h = lap.norm() / (4.0 * area);
        let signed = if lap.dot(&normal) < 0.0 { -h } else { h };
        Ok((signed, normal))
    }

    /// Position of a material marker on the current surface.
    pub fn marker_position(&self, marker: &Marker) -> Vec3 {
        let [a, b, c] = self.corners(marker.facet);
        marker.bary[0] * a + marker.bary[1] * b + marker.bary[2] * c
    }

    pub fn marker(&self, label: &str) -> Option<&Marker> {
        self.markers.iter().find(|m| m.label == label)
    }

    /// Directed edge map; assumes a consistently oriented manifold.
    pub(crate) fn edge_map(&self) -> EdgeMap {
        let mut map = HashMap::with_capacity(self.facets.len() * 3);
        for (f, tri) in self.facets.iter().enumerate() {
            for k in 0..3 {
                map.insert((tri[k], tri[(k + 1) % 3]), f);
            }
        }
        map
    }

    /// Undirected edges in first-seen facet order, each as `(a, b)` with the
    /// direction of its first occurrence.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = std::collections::HashSet::with_capacity(self.facets.len() * 2);
        let mut out = Vec::with_capacity(self.facets.len() * 3 / 2);
        for tri in &self.facets {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if seen.insert((a.min(b), a.max(b))) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Edges between a breast facet and a base-cap facet, as directed on the
    /// breast side.
    pub fn rim_edges(&self) -> Vec<(usize, usize)> {
        let map = self.edge_map();
        let mut out = Vec::new();
        for (f, tri) in self.facets.iter().enumerate() {
            if self.facet_roles[f] != FacetRole::Breast {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if let Some(&g) = map.get(&(b, a)) {
                    if self.facet_roles[g] == FacetRole::BaseCap {
                        out.push((a, b));
                    }
                }
            }
        }
        out
    }

    /// Total length of the breast/base-cap junction.
    pub fn rim_length(&self) -> f64 {
        self.rim_edges()
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .sum()
    }

    /// Rigid translation of every vertex.
    pub fn translated(&self, t: &Vec3) -> Self {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v += t;
        }
        m
    }

    /// Applies `f` to every vertex position.
    pub fn mapped(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v = f(v);
        }
        m
    }

    /// Mirror image through the plane `x = x0`; windings are reversed so the
    /// result stays outward oriented.
    pub fn mirrored_x(&self, x0: f64) -> Self {
        let mut m = self.mapped(|v| Vec3::new(2.0 * x0 - v.x, v.y, v.z));
        for tri in &mut m.facets {
            tri.swap(1, 2);
        }
        for mk in &mut m.markers {
            mk.bary.swap(1, 2);
        }
        m
    }
}

/// Cotangent-vector contributions and mixed areas of one facet, per corner.
pub(crate) fn facet_curvature_terms(p: &[Vec3; 3]) -> ([Vec3; 3], [f64; 3]) {
    let cot = [
        crate::geometry::cot_angle(&p[0], &p[1], &p[2]),
        crate::geometry::cot_angle(&p[1], &p[2], &p[0]),
        crate::geometry::cot_angle(&p[2], &p[0], &p[1]),
    ];
    let mut lap = [Vec3::zeros(); 3];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        lap[a] = cot[c] * (p[a] - p[b]) + cot[b] * (p[a] - p[c]);
    }
    (lap, crate::geometry::mixed_areas(p))
}

/// Index of `v` within facet `tri`.
#[inline]
pub(crate) fn slot_of(tri: &[usize; 3], v: usize) -> Option<usize> {
    tri.iter().position(|&i| i == v)
}
