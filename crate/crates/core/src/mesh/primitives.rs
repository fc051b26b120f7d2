//! Reference closed meshes used by tests and diagnostics.

use std::collections::HashMap;

use super::TriMesh;
use crate::geometry::Vec3;

/// Tetrahedron on `(0,0,0), (1,0,0), (0,1,0), (0,0,1)`, outward oriented.
pub fn tetrahedron() -> TriMesh {
    TriMesh::new(
        vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    )
}

/// Surface of `[0,1]^3`, two triangles per face.
pub fn unit_cube() -> TriMesh {
    let v = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 2, 3, 1], // z = 0
        [4, 5, 7, 6], // z = 1
        [0, 1, 5, 4], // y = 0
        [2, 6, 7, 3], // y = 1
        [0, 4, 6, 2], // x = 0
        [1, 3, 7, 5], // x = 1
    ];
    let mut f = Vec::with_capacity(12);
    for [a, b, c, d] in quads {
        f.push([a, b, c]);
        f.push([a, c, d]);
    }
    TriMesh::new(v, f)
}

/// Subdivided icosahedron with all vertices on the sphere of `radius`.
pub fn icosphere(level: u32, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut verts {
        *v *= radius;
    }
    TriMesh::new(verts, faces)
}

/// Closed box whose top face `z = 0` over `[0,1]^2` is an `n x n` vertex grid
/// (row-major, vertex `i + n*j` at `(i, j)/(n-1)`), with a bottom at `z = -depth`.
pub fn flat_topped_box(n: usize, depth: f64) -> TriMesh {
    assert!(n >= 2);
    let s = (n - 1) as f64;
    let mut verts: Vec<Vec3> = (0..n * n)
        .map(|k| Vec3::new((k % n) as f64 / s, (k / n) as f64 / s, 0.0))
        .collect();
    let id = |i: usize, j: usize| i + n * j;
    let mut faces = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let base = verts.len();
    for (x, y) in corners {
        verts.push(Vec3::new(x, y, -depth));
    }
    // Boundary of the top grid, counter-clockwise from above, split per side.
    let m = n - 1;
    let sides: [Vec<usize>; 4] = [
        (0..=m).map(|i| id(i, 0)).collect(),
        (0..=m).map(|j| id(m, j)).collect(),
        (0..=m).rev().map(|i| id(i, m)).collect(),
        (0..=m).rev().map(|j| id(0, j)).collect(),
    ];
    for (s, top) in sides.iter().enumerate() {
        let b0 = base + s;
        let b1 = base + (s + 1) % 4;
        for w in top.windows(2) {
            faces.push([b0, w[1], w[0]]);
        }
        faces.push([b0, b1, *top.last().unwrap()]);
    }
    faces.push([base, base + 2, base + 1]);
    faces.push([base, base + 3, base + 2]);
    TriMesh::new(verts, faces)
}
