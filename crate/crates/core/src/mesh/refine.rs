use super::{slot_of, TriMesh, VertexRole};
use crate::error::{Error, Result};

/// Bisects every edge longer than `max_edge` at its midpoint until none remain.
///
/// Longest edges are split first within each pass. Splitting only inserts
/// vertices on existing edges, so the surface point set (and with it area and
/// volume) is unchanged. Markers are re-expressed exactly in the child facet.
pub fn refine(mesh: &TriMesh, max_edge: f64) -> Result<TriMesh> {
    if !(max_edge > 0.0 && max_edge.is_finite()) {
        return Err(Error::InvalidParameter("max_edge must be positive".into()));
    }
    let mut m = mesh.clone();
    let limit = max_edge * max_edge;
    loop {
        let mut long: Vec<(f64, usize, usize)> = m
            .edges()
            .into_iter()
            .filter_map(|(a, b)| {
                let l = (m.vertices[a] - m.vertices[b]).norm_squared();
                (l > limit).then_some((l, a, b))
            })
            .collect();
        if long.is_empty() {
            return Ok(m);
        }
        long.sort_by(|x, y| y.0.total_cmp(&x.0));
        let mut map = m.edge_map();
        for (_, a, b) in long {
            if map.contains_key(&(a, b)) {
                split_edge(&mut m, &mut map, a, b);
            }
        }
    }
}

fn split_edge(m: &mut TriMesh, map: &mut super::EdgeMap, a: usize, b: usize) {
    let f1 = map[&(a, b)];
    let f2 = map[&(b, a)];
    let k1 = slot_of(&m.facets[f1], a).unwrap();
    let k2 = slot_of(&m.facets[f2], b).unwrap();
    let c = m.facets[f1][(k1 + 2) % 3];
    let d = m.facets[f2][(k2 + 2) % 3];

    let mid = m.vertices.len();
    m.vertices.push(0.5 * (m.vertices[a] + m.vertices[b]));
    let fixed = !m.is_free(a) && !m.is_free(b);
    m.vertex_roles
        .push(if fixed { VertexRole::Fixed } else { VertexRole::Free });

    let f1n = m.facets.len();
    let f2n = f1n + 1;
    m.facets[f1] = [a, mid, c];
    m.facets.push([mid, b, c]);
    m.facet_roles.push(m.facet_roles[f1]);
    m.facets[f2] = [b, mid, d];
    m.facets.push([mid, a, d]);
    m.facet_roles.push(m.facet_roles[f2]);

    map.remove(&(a, b));
    map.remove(&(b, a));
    map.insert((a, mid), f1);
    map.insert((mid, c), f1);
    map.insert((c, a), f1);
    map.insert((mid, b), f1n);
    map.insert((b, c), f1n);
    map.insert((c, mid), f1n);
    map.insert((b, mid), f2);
    map.insert((mid, d), f2);
    map.insert((d, b), f2);
    map.insert((mid, a), f2n);
    map.insert((a, d), f2n);
    map.insert((d, mid), f2n);

    for mk in &mut m.markers {
        // (first, second, apex) weights in the old facet's rotated order, where
        // the split edge runs first -> second.
        let (facet, k, child) = if mk.facet == f1 {
            (f1, k1, f1n)
        } else if mk.facet == f2 {
            (f2, k2, f2n)
        } else {
            continue;
        };
        let w0 = mk.bary[k];
        let w1 = mk.bary[(k + 1) % 3];
        let wc = mk.bary[(k + 2) % 3];
        if w0 >= w1 {
            mk.facet = facet;
            mk.bary = [w0 - w1, 2.0 * w1, wc];
        } else {
            mk.facet = child;
            mk.bary = [2.0 * w0, w1 - w0, wc];
        }
    }
}
