//! Domains, meshes, and one-parameter deformations.

mod field;
mod mesh;
mod meshing;
mod orthotope;
mod path;

pub use field::{flow_deform, integrate, squashing_field, VectorField2D, DEFAULT_RHO, FLOW_TOLERANCE};
pub use mesh::{BoundaryEdge, IntervalMesh, Locator, MeshedDomain, Point2};
pub use meshing::{
    disk_sides, mesh_domain, mesh_mapped_ball, mesh_orthotope, mesh_polygon, rectangle_mesh, regular_polygon,
    validate_polygon, BallMap, DiagonalPattern, DomainSpec, MIN_VERTEX_SEPARATION,
};
pub use orthotope::{make_orthotope, Orthotope};
pub use path::{interpolation_path, DeformationPath, PathGenerator};
