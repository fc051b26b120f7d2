use std::f64::consts::PI;

use super::{slot_of, FacetRole, Marker, TriMesh, MIN_FACET_AREA};
use crate::error::{Error, Result};
use crate::geometry::{angle_at, triangle_area, Vec3};

/// Flips edges between breast facets whose opposite angles sum to more than
/// `pi + 1e-9`, until no such edge remains.
///
/// Edges touching the base cap are never flipped. A flip is skipped if it
/// would duplicate an existing edge or create a facet below
/// [`MIN_FACET_AREA`]. Markers on flipped facets are re-expressed in
/// whichever new facet contains them.
pub fn equiangulate(mesh: &TriMesh) -> Result<TriMesh> {
    let mut m = mesh.clone();
    let mut map = m.edge_map();
    let guard = 50 * m.edges().len();
    let mut flips = 0;
    loop {
        let mut flipped = false;
        for (a, b) in m.edges() {
            if try_flip(&mut m, &mut map, a, b) {
                flips += 1;
                flipped = true;
                if flips > guard {
                    return Err(Error::EquiangulationCycle { flips });
                }
            }
        }
        if !flipped {
            return Ok(m);
        }
    }
}

fn try_flip(m: &mut TriMesh, map: &mut super::EdgeMap, a: usize, b: usize) -> bool {
    let (Some(&f1), Some(&f2)) = (map.get(&(a, b)), map.get(&(b, a))) else {
        return false;
    };
    if m.facet_roles[f1] != FacetRole::Breast || m.facet_roles[f2] != FacetRole::Breast {
        return false;
    }
    let c = m.facets[f1][(slot_of(&m.facets[f1], a).unwrap() + 2) % 3];
    let d = m.facets[f2][(slot_of(&m.facets[f2], b).unwrap() + 2) % 3];
    if c == d || map.contains_key(&(c, d)) || map.contains_key(&(d, c)) {
        return false;
    }
    let (pa, pb, pc, pd) = (m.vertices[a], m.vertices[b], m.vertices[c], m.vertices[d]);
    if angle_at(&pc, &pa, &pb) + angle_at(&pd, &pb, &pa) <= PI + 1e-9 {
        return false;
    }
    if triangle_area(&pa, &pd, &pc) < MIN_FACET_AREA || triangle_area(&pd, &pb, &pc) < MIN_FACET_AREA {
        return false;
    }
    let positions: Vec<Option<Vec3>> = m
        .markers
        .iter()
        .map(|mk| (mk.facet == f1 || mk.facet == f2).then(|| m.marker_position(mk)))
        .collect();

    m.facets[f1] = [a, d, c];
    m.facets[f2] = [d, b, c];
    map.remove(&(a, b));
    map.remove(&(b, a));
    map.insert((a, d), f1);
    map.insert((d, c), f1);
    map.insert((c, a), f1);
    map.insert((d, b), f2);
    map.insert((b, c), f2);
    map.insert((c, d), f2);

    for (mk, p) in m.markers.iter_mut().zip(positions) {
        if let Some(p) = p {
            relocate(mk, &p, f1, f2, &m.facets, &m.vertices);
        }
    }
    true
}

/// Barycentric coordinates of the projection of `p` onto the plane of `tri`.
pub(crate) fn barycentric(p: &Vec3, tri: [&Vec3; 3]) -> [f64; 3] {
    let v0 = tri[1] - tri[0];
    let v1 = tri[2] - tri[0];
    let v2 = p - tri[0];
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let den = d00 * d11 - d01 * d01;
    let w1 = (d11 * d20 - d01 * d21) / den;
    let w2 = (d00 * d21 - d01 * d20) / den;
    [1.0 - w1 - w2, w1, w2]
}

/// Clamps negative weights to zero and renormalizes so the sum is exactly 1.
pub(crate) fn clamp_bary(w: [f64; 3]) -> [f64; 3] {
    let c = w.map(|x| x.max(0.0));
    let s = c[0] + c[1] + c[2];
    let (b0, b1) = (c[0] / s, c[1] / s);
    [b0, b1, (1.0 - b0 - b1).max(0.0)]
}

fn relocate(mk: &mut Marker, p: &Vec3, f1: usize, f2: usize, facets: &[[usize; 3]], verts: &[Vec3]) {
    let corners = |f: usize| {
        let t = facets[f];
        [&verts[t[0]], &verts[t[1]], &verts[t[2]]]
    };
    let w1 = barycentric(p, corners(f1));
    let w2 = barycentric(p, corners(f2));
    let min = |w: &[f64; 3]| w[0].min(w[1]).min(w[2]);
    let (facet, w) = if min(&w1) >= min(&w2) { (f1, w1) } else { (f2, w2) };
    mk.facet = facet;
    mk.bary = clamp_bary(w);
}
