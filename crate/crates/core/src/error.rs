use thiserror::Error;

/// Failures raised by the simulation kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate star at vertex {vertex}")]
    DegenerateStar { vertex: usize },
    #[error("equiangulation cycle: gave up after {flips} flips")]
    EquiangulationCycle { flips: usize },
    #[error("infeasible fixed geometry: fixed vertex {vertex} violates obstacle '{obstacle}' by {depth:.3e} cm")]
    InfeasibleFixedGeometry {
        vertex: usize,
        obstacle: String,
        depth: f64,
    },
    #[error("volume projection stall: |V - target| = {residual:.3e} cm^3 after {iterations} iterations")]
    VolumeProjectionStall { residual: f64, iterations: usize },
    #[error("thorax inconsistent: {0}")]
    ThoraxInconsistent(String),
    #[error("base/volume inconsistent: {0}")]
    BaseVolumeInconsistent(String),
    #[error("arc not anchored: {0}")]
    ArcNotAnchored(String),
    #[error("no section: plane does not cut the breast surface")]
    NoSection,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
