use std::collections::HashMap;

use super::{FacetRole, TriMesh};
use crate::geometry::{Plane, Vec3};

/// Chain of plane/surface crossing points. Each point lies on a mesh edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec3>,
    /// Undirected mesh edge `(min, max)` carrying each point.
    pub edges: Vec<(usize, usize)>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let mut len: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if self.closed && self.points.len() > 1 {
            len += (self.points[0] - self.points[self.points.len() - 1]).norm();
        }
        len
    }

    /// Length of the open prefix `points[0..=i]`, then of `points[i..]`, split
    /// at the arbitrary on-polyline point `at` lying on segment `(i, i+1)`.
    pub(crate) fn split_lengths(&self, seg: usize, at: &Vec3) -> (f64, f64) {
        let head: f64 = self.points[..=seg]
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum::<f64>()
            + (at - self.points[seg]).norm();
        let tail: f64 = (self.points[seg + 1] - at).norm()
            + self.points[seg + 1..]
                .windows(2)
                .map(|w| (w[1] - w[0]).norm())
                .sum::<f64>();
        (head, tail)
    }
}

/// Intersection of the surface with `plane`, restricted to facets of `role`
/// when given. Facets crossing the plane contribute one segment each; segments
/// are chained across shared edges. Open chains come first, then closed loops,
/// each in order of their lowest facet index.
///
/// Vertices lying on the plane would make the crossing ambiguous, so in that
/// case the plane offset is nudged by +1e-9 cm along its normal.
pub fn plane_section(mesh: &TriMesh, plane: &Plane, role: Option<FacetRole>) -> Vec<Polyline> {
    let mut dist: Vec<f64> = mesh.vertices.iter().map(|v| plane.signed_distance(v)).collect();
    if dist.iter().any(|d| d.abs() < 1e-12) {
        for d in &mut dist {
            *d -= 1e-9;
        }
    }
    let crossing = |a: usize, b: usize| -> Vec3 {
        let t = dist[a] / (dist[a] - dist[b]);
        mesh.vertices[a] + t * (mesh.vertices[b] - mesh.vertices[a])
    };

    // facet -> its two crossed edges; edge -> incident crossing facets
    let mut segs: Vec<(usize, [(usize, usize); 2])> = Vec::new();
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, tri) in mesh.facets.iter().enumerate() {
        if role.is_some_and(|r| mesh.facet_roles[f] != r) {
            continue;
        }
        let mut cut = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if (dist[a] >= 0.0) != (dist[b] >= 0.0) {
                cut.push((a.min(b), a.max(b)));
            }
        }
        if cut.len() == 2 {
            let s = segs.len();
            segs.push((f, [cut[0], cut[1]]));
            by_edge.entry(cut[0]).or_default().push(s);
            by_edge.entry(cut[1]).or_default().push(s);
        }
    }

    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let walk = |start_seg: usize, start_edge: (usize, usize), used: &mut Vec<bool>| -> (Vec<(usize, usize)>, bool) {
        let mut edges = vec![start_edge];
        let mut seg = start_seg;
        let mut entry = start_edge;
        loop {
            used[seg] = true;
            let [e0, e1] = segs[seg].1;
            let exit = if e0 == entry { e1 } else { e0 };
            if exit == start_edge {
                return (edges, true);
            }
            edges.push(exit);
            let next = by_edge[&exit].iter().copied().find(|&s| s != seg && !used[s]);
            match next {
                Some(s) => {
                    seg = s;
                    entry = exit;
                }
                None => return (edges, false),
            }
        }
    };

    // Open chains start at edges with a single incident crossing facet.
    for s in 0..segs.len() {
        if used[s] {
            continue;
        }
        for e in segs[s].1 {
            if by_edge[&e].len() == 1 && !used[s] {
                let (edges, closed) = walk(s, e, &mut used);
                out.push((edges, closed));
            }
        }
    }
    for s in 0..segs.len() {
        if !used[s] {
            let (edges, closed) = walk(s, segs[s].1[0], &mut used);
            out.push((edges, closed));
        }
    }
    out.into_iter()
        .map(|(edges, closed)| Polyline {
            points: edges.iter().map(|&(a, b)| crossing(a, b)).collect(),
            edges,
            closed,
        })
        .collect()
}
