//! P1 finite-element assembly on interval and triangle meshes.

use crate::geometry::{IntervalMesh, MeshedDomain};
use crate::sparse::CsrMatrix;

/// A mesh the P1 discretization can run on.
#[derive(Debug, Clone, PartialEq)]
pub enum FemMesh {
    Interval(IntervalMesh),
    Triangle(MeshedDomain),
}

impl From<MeshedDomain> for FemMesh {
    fn from(m: MeshedDomain) -> Self {
        FemMesh::Triangle(m)
    }
}

impl From<IntervalMesh> for FemMesh {
    fn from(m: IntervalMesh) -> Self {
        FemMesh::Interval(m)
    }
}

impl FemMesh {
    pub fn dim(&self) -> usize {
        match self {
            FemMesh::Interval(_) => 1,
            FemMesh::Triangle(_) => 2,
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            FemMesh::Interval(m) => m.nodes.len(),
            FemMesh::Triangle(m) => m.vertices.len(),
        }
    }

    pub fn num_cells(&self) -> usize {
        match self {
            FemMesh::Interval(m) => m.num_cells(),
            FemMesh::Triangle(m) => m.triangles.len(),
        }
    }

    pub fn cell_areas(&self) -> Vec<f64> {
        match self {
            FemMesh::Interval(m) => m.nodes.windows(2).map(|w| w[1] - w[0]).collect(),
            FemMesh::Triangle(m) => m.cell_areas.clone(),
        }
    }

    pub fn measure(&self) -> f64 {
        self.cell_areas().iter().sum()
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        match self {
            FemMesh::Interval(m) => m.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
            FemMesh::Triangle(m) => m.max_edge_length(),
        }
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        match self {
            FemMesh::Interval(m) => {
                let mut mask = vec![false; m.nodes.len()];
                mask[0] = true;
                *mask.last_mut().expect("non-empty mesh") = true;
                mask
            }
            FemMesh::Triangle(m) => m.boundary_mask(),
        }
    }

    /// Indices of the nodes carrying unknowns after Dirichlet elimination.
    pub fn interior_nodes(&self) -> Vec<usize> {
        self.boundary_mask().iter().enumerate().filter(|(_, b)| !**b).map(|(i, _)| i).collect()
    }

    pub fn content_hash(&self) -> String {
        match self {
            FemMesh::Interval(m) => m.content_hash(),
            FemMesh::Triangle(m) => m.content_hash(),
        }
    }

    /// Node coordinates as `dim`-vectors.
    pub fn node(&self, i: usize) -> Vec<f64> {
        match self {
            FemMesh::Interval(m) => vec![m.nodes[i]],
            FemMesh::Triangle(m) => m.vertices[i].to_vec(),
        }
    }

    /// Cell connectivity as node lists (two or three nodes).
    pub fn cell_nodes(&self, c: usize) -> Vec<usize> {
        match self {
            FemMesh::Interval(_) => vec![c, c + 1],
            FemMesh::Triangle(m) => m.triangles[c].to_vec(),
        }
    }

    /// Full stiffness and consistent mass matrices, boundary nodes included.
    pub fn assemble(&self) -> (CsrMatrix, CsrMatrix) {
        let n = self.num_nodes();
        let mut kt = Vec::new();
        let mut mt = Vec::new();
        match self {
            FemMesh::Interval(m) => {
                for c in 0..m.num_cells() {
                    let h = m.nodes[c + 1] - m.nodes[c];
                    for (a, b) in [(c, c), (c + 1, c + 1)] {
                        kt.push((a, b, 1.0 / h));
                        mt.push((a, b, h / 3.0));
                    }
                    for (a, b) in [(c, c + 1), (c + 1, c)] {
                        kt.push((a, b, -1.0 / h));
                        mt.push((a, b, h / 6.0));
                    }
                }
            }
            FemMesh::Triangle(m) => {
                for (t, tri) in m.triangles.iter().enumerate() {
                    let area = m.cell_areas[t];
                    let g = m.hat_gradients(t);
                    for a in 0..3 {
                        for b in 0..3 {
                            let k = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                            let mass = if a == b { area / 6.0 } else { area / 12.0 };
                            kt.push((tri[a], tri[b], k));
                            mt.push((tri[a], tri[b], mass));
                        }
                    }
                }
            }
        }
        (CsrMatrix::from_triplets(n, kt), CsrMatrix::from_triplets(n, mt))
    }

    /// Matrices restricted to interior nodes (homogeneous Dirichlet conditions).
    pub fn assemble_dirichlet(&self) -> DirichletSystem {
        let (k, m) = self.assemble();
        let interior = self.interior_nodes();
        DirichletSystem {
            stiffness: k.principal_submatrix(&interior),
            mass: m.principal_submatrix(&interior),
            lumped_mass_full: m.row_sums(),
            interior,
        }
    }
}

/// Interior-node stiffness and mass matrices.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub interior: Vec<usize>,
    /// Row sums of the full consistent mass matrix, indexed by node.
    pub lumped_mass_full: Vec<f64>,
}

impl DirichletSystem {
    /// Scatter interior values into a full nodal vector with zero boundary values.
    pub fn expand(&self, interior_values: &[f64], num_nodes: usize) -> Vec<f64> {
        let mut full = vec![0.0; num_nodes];
        for (&i, &v) in self.interior.iter().zip(interior_values) {
            full[i] = v;
        }
        full
    }
}
