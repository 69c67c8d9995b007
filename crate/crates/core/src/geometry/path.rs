use super::field::{flow_deform, VectorField2D};
use super::mesh::MeshedDomain;
use crate::error::{invalid, Error, Result};

/// How the domains along a path are produced from the base mesh.
#[derive(Debug, Clone)]
pub enum PathGenerator {
    /// Flow of a field; parameter `t` runs the flow for `t * duration`.
    Flow { field: VectorField2D, duration: f64 },
    /// Vertexwise linear interpolation toward a mesh with the same connectivity.
    Interpolation { target: MeshedDomain },
}

/// One-parameter family of meshes sampled on an increasing grid in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct DeformationPath {
    base: MeshedDomain,
    generator: PathGenerator,
    t_grid: Vec<f64>,
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first() != Some(&0.0) {
        return Err(invalid("t-grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(invalid("t-grid must be strictly increasing inside [0, 1]"));
    }
    Ok(())
}

fn same_connectivity(a: &MeshedDomain, b: &MeshedDomain) -> Result<()> {
    if a.vertices.len() != b.vertices.len() || a.triangles != b.triangles {
        return Err(Error::IncompatibleMesh(format!(
            "{} vertices / {} triangles vs {} / {}",
            a.vertices.len(),
            a.triangles.len(),
            b.vertices.len(),
            b.triangles.len()
        )));
    }
    Ok(())
}

impl DeformationPath {
    pub fn new(base: MeshedDomain, generator: PathGenerator, t_grid: Vec<f64>) -> Result<Self> {
        check_grid(&t_grid)?;
        match &generator {
            PathGenerator::Interpolation { target } => same_connectivity(&base, target)?,
            PathGenerator::Flow { duration, .. } if !duration.is_finite() => {
                return Err(invalid("flow duration must be finite"))
            }
            PathGenerator::Flow { .. } => {}
        }
        Ok(DeformationPath { base, generator, t_grid })
    }

    /// Path following the flow of `field` for `duration`, sampled at `steps + 1` uniform times.
    pub fn flow(base: MeshedDomain, field: VectorField2D, duration: f64, steps: usize) -> Result<Self> {
        Self::new(base, PathGenerator::Flow { field, duration }, uniform_grid(steps)?)
    }

    pub fn base(&self) -> &MeshedDomain {
        &self.base
    }

    pub fn generator(&self) -> &PathGenerator {
        &self.generator
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn mesh_at(&self, t: f64) -> Result<MeshedDomain> {
        if t == 0.0 {
            return Ok(self.base.clone());
        }
        match &self.generator {
            PathGenerator::Flow { field, duration } => flow_deform(&self.base, field, t * duration),
            PathGenerator::Interpolation { target } => {
                let vertices = self
                    .base
                    .vertices
                    .iter()
                    .zip(&target.vertices)
                    .map(|(a, b)| [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]])
                    .collect();
                self.base.with_vertices(vertices).map_err(|e| match e {
                    Error::Deformation(msg) => Error::Deformation(format!("at t = {t}: {msg}")),
                    other => other,
                })
            }
        }
    }

    /// Every mesh on the grid, in order.
    pub fn meshes(&self) -> Result<Vec<MeshedDomain>> {
        self.t_grid.iter().map(|&t| self.mesh_at(t)).collect()
    }

    /// The same family traversed from `t = 1` back to `t = 0`.
    pub fn reversed(&self) -> Result<Self> {
        let end = self.mesh_at(1.0)?;
        let generator = match &self.generator {
            PathGenerator::Interpolation { .. } => PathGenerator::Interpolation { target: self.base.clone() },
            PathGenerator::Flow { field, duration } => PathGenerator::Flow { field: field.clone(), duration: -duration },
        };
        let mut grid: Vec<f64> = self.t_grid.iter().map(|t| 1.0 - t).rev().collect();
        if grid[0] != 0.0 {
            return Err(invalid("only paths sampled at t = 1 can be reversed"));
        }
        grid[0] = 0.0;
        Self::new(end, generator, grid)
    }
}

pub(crate) fn uniform_grid(steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(invalid("a path needs at least one step"));
    }
    Ok((0..=steps).map(|k| k as f64 / steps as f64).collect())
}

/// Linear interpolation path between two meshes of a common reference mesh.
///
/// Every intermediate mesh is built and checked for inversion.
pub fn interpolation_path(dom0: &MeshedDomain, dom1: &MeshedDomain, steps: usize) -> Result<DeformationPath> {
    same_connectivity(dom0, dom1)?;
    let path = DeformationPath::new(
        dom0.clone(),
        PathGenerator::Interpolation { target: dom1.clone() },
        uniform_grid(steps)?,
    )?;
    path.meshes()?;
    Ok(path)
}
