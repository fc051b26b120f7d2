//! Constrained surface evolution of a breast surface through the surgery,
//! stand-up and lay-on-table positions.

// `!(x > 0.0)` guards are deliberate: they also reject NaN. Index loops
// over parallel per-vertex arrays read better than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anatomy;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod pipeline;
pub mod solver;
pub mod tmr;

pub use error::{Error, Result};
pub use geometry::{Plane, Vec3};
pub use mesh::{FacetRole, Marker, TriMesh, VertexRole, Violation};
