use super::TriMesh;
use crate::error::{Error, Result};
use crate::geometry::{triangle_area, Vec3};

/// Moves each free vertex to the area-weighted mean of its incident facet
/// centroids, then pushes free vertices along their normals by a common
/// distance so the enclosed volume returns to its value before the call.
pub fn vertex_average(mesh: &TriMesh) -> Result<TriMesh> {
    let target = mesh.enclosed_volume();
    let nv = mesh.vertex_count();
    let mut acc = vec![Vec3::zeros(); nv];
    let mut weight = vec![0.0; nv];
    for tri in &mesh.facets {
        let [a, b, c] = tri.map(|i| mesh.vertices[i]);
        let area = triangle_area(&a, &b, &c);
        let centroid = (a + b + c) / 3.0;
        for &i in tri {
            acc[i] += area * centroid;
            weight[i] += area;
        }
    }
    let mut m = mesh.clone();
    for i in 0..nv {
        if m.is_free(i) && weight[i] > 0.0 {
            m.vertices[i] = acc[i] / weight[i];
        }
    }
    let movable: Vec<bool> = (0..nv).map(|i| m.is_free(i)).collect();
    let (m, _) = restore_volume(&m, target, 1e-12, &movable)?;
    Ok(m)
}

/// Displaces the `movable` vertices along their (unit, area-weighted) normals
/// by a common `lambda`, found by Newton iteration, so that the enclosed
/// volume matches `target` within `rel_tol * target`. Returns the mesh and
/// `lambda`.
pub(crate) fn restore_volume(mesh: &TriMesh, target: f64, rel_tol: f64, movable: &[bool]) -> Result<(TriMesh, f64)> {
    const MAX_ITERS: usize = 50;
    let normals = mesh.vertex_normals();
    let mut m = mesh.clone();
    let mut lambda = 0.0;
    let mut residual = m.enclosed_volume() - target;
    let tol = rel_tol * target.abs();
    for _ in 0..MAX_ITERS {
        if residual.abs() <= tol {
            return Ok((m, lambda));
        }
        let grad = m.volume_gradient();
        let slope: f64 = (0..m.vertex_count())
            .filter(|&i| movable[i])
            .map(|i| grad[i].dot(&normals[i]))
            .sum();
        if !(slope.abs() > 0.0) {
            break;
        }
        let delta = -residual / slope;
        lambda += delta;
        for i in 0..m.vertex_count() {
            if movable[i] {
                m.vertices[i] = mesh.vertices[i] + lambda * normals[i];
            }
        }
        residual = m.enclosed_volume() - target;
    }
    if residual.abs() <= tol {
        return Ok((m, lambda));
    }
    Err(Error::VolumeProjectionStall {
        residual: residual.abs(),
        iterations: MAX_ITERS,
    })
}
