//! Small vector helpers shared by the mesh, energy and measurement code.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position or direction in centimetres (cgs units throughout).
pub type Vec3 = Vector3<f64>;

/// Unnormalized facet area vector, `(p1 - p0) x (p2 - p0)`; its length is twice the area.
#[inline]
pub fn area_vector(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Vec3 {
    (p1 - p0).cross(&(p2 - p0))
}

#[inline]
pub fn triangle_area(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> f64 {
    0.5 * area_vector(p0, p1, p2).norm()
}

/// Gradient of the triangle area with respect to each corner.
pub fn triangle_area_gradient(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> [Vec3; 3] {
    let n = area_vector(p0, p1, p2);
    let len = n.norm();
    if len == 0.0 {
        return [Vec3::zeros(); 3];
    }
    let n = n / len;
    [
        0.5 * (p1 - p2).cross(&n),
        0.5 * (p2 - p0).cross(&n),
        0.5 * (p0 - p1).cross(&n),
    ]
}

/// Cotangent of the interior angle at `apex` between the rays towards `a` and `b`.
#[inline]
pub fn cot_angle(apex: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let u = a - apex;
    let v = b - apex;
    u.dot(&v) / u.cross(&v).norm()
}

/// Cotangent at `apex` together with its gradient with respect to `(apex, a, b)`.
pub fn cot_angle_with_gradient(apex: &Vec3, a: &Vec3, b: &Vec3) -> (f64, [Vec3; 3]) {
    let u = a - apex;
    let v = b - apex;
    let c = u.cross(&v);
    let s = c.norm();
    let d = u.dot(&v);
    let n = c / s;
    let cot = d / s;
    // d|u x v| = du . (v x n) + dv . (n x u)
    let gu = v / s - (d / (s * s)) * v.cross(&n);
    let gv = u / s - (d / (s * s)) * n.cross(&u);
    (cot, [-(gu + gv), gu, gv])
}

/// Interior angle at `apex`.
#[inline]
pub fn angle_at(apex: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let u = a - apex;
    let v = b - apex;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Mixed Voronoi vertex areas of one triangle: Voronoi regions for
/// non-obtuse triangles, otherwise half the area to the obtuse corner and a
/// quarter to each other corner. The three weights sum to the triangle area.
pub fn mixed_areas(p: &[Vec3; 3]) -> [f64; 3] {
    mixed_areas_impl(p, false).0
}

/// Mixed areas and `d area[a] / d p[b]` for every corner pair.
pub fn mixed_areas_with_gradient(p: &[Vec3; 3]) -> ([f64; 3], [[Vec3; 3]; 3]) {
    mixed_areas_impl(p, true)
}

fn mixed_areas_impl(p: &[Vec3; 3], with_grad: bool) -> ([f64; 3], [[Vec3; 3]; 3]) {
    let mut grad = [[Vec3::zeros(); 3]; 3];
    let dots = [
        (p[1] - p[0]).dot(&(p[2] - p[0])),
        (p[2] - p[1]).dot(&(p[0] - p[1])),
        (p[0] - p[2]).dot(&(p[1] - p[2])),
    ];
    if let Some(obtuse) = dots.iter().position(|&d| d < 0.0) {
        let area = triangle_area(&p[0], &p[1], &p[2]);
        let share = |a: usize| if a == obtuse { 0.5 } else { 0.25 };
        if with_grad {
            let ga = triangle_area_gradient(&p[0], &p[1], &p[2]);
            for (a, row) in grad.iter_mut().enumerate() {
                for b in 0..3 {
                    row[b] = share(a) * ga[b];
                }
            }
        }
        return ([share(0) * area, share(1) * area, share(2) * area], grad);
    }
    let mut areas = [0.0; 3];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        let eab = p[a] - p[b];
        let eac = p[a] - p[c];
        if with_grad {
            // cot at c (opposite ab) and at b (opposite ac)
            let (cot_c, gc) = cot_angle_with_gradient(&p[c], &p[a], &p[b]);
            let (cot_b, gb) = cot_angle_with_gradient(&p[b], &p[c], &p[a]);
            areas[a] = (eab.norm_squared() * cot_c + eac.norm_squared() * cot_b) / 8.0;
            let (lab, lac) = (eab.norm_squared(), eac.norm_squared());
            grad[a][a] += (2.0 * eab * cot_c + 2.0 * eac * cot_b + lab * gc[1] + lac * gb[2]) / 8.0;
            grad[a][b] += (-2.0 * eab * cot_c + lab * gc[2] + lac * gb[0]) / 8.0;
            grad[a][c] += (-2.0 * eac * cot_b + lab * gc[0] + lac * gb[1]) / 8.0;
        } else {
            let cot_c = cot_angle(&p[c], &p[a], &p[b]);
            let cot_b = cot_angle(&p[b], &p[c], &p[a]);
            areas[a] = (eab.norm_squared() * cot_c + eac.norm_squared() * cot_b) / 8.0;
        }
    }
    (areas, grad)
}

/// Oriented plane given by a point and a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    /// Builds a plane, normalizing `normal`.
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self> {
        let len = normal.norm();
        if !(len.is_finite() && len > 0.0) || !point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter(
                "plane needs a finite point and a nonzero normal".into(),
            ));
        }
        Ok(Self {
            point,
            normal: normal / len,
        })
    }

    #[inline]
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        (x - self.point).dot(&self.normal)
    }

    /// Orthogonal projection of `x` onto the plane.
    #[inline]
    pub fn project(&self, x: &Vec3) -> Vec3 {
        x - self.signed_distance(x) * self.normal
    }
}

/// Unit vector or an error naming `what`.
pub fn unit(v: Vec3, what: &str) -> Result<Vec3> {
    let len = v.norm();
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} must be a nonzero finite vector"
        )));
    }
    Ok(v / len)
}
