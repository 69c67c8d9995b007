use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

/// Twice the signed area of triangle `abc`.
pub(crate) fn orient2(a: Point2, b: Point2, c: Point2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// A boundary edge `a -> b`, oriented so that the domain lies to its left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    /// Outward unit normal.
    pub normal: Point2,
    /// The triangle owning this edge.
    pub triangle: usize,
}

impl BoundaryEdge {
    pub fn length(&self, mesh: &MeshedDomain) -> f64 {
        let [a, b] = self.vertices;
        dist(mesh.vertices[a], mesh.vertices[b])
    }
}

pub(crate) fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Conforming triangulation of a planar domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshedDomain {
    pub vertices: Vec<Point2>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub cell_areas: Vec<f64>,
}

impl MeshedDomain {
    /// Builds a mesh from raw connectivity, deriving areas, boundary edges and normals.
    ///
    /// Triangles must be counter-clockwise with positive area; the boundary is
    /// every edge owned by exactly one triangle.
    pub fn from_triangles(vertices: Vec<Point2>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Geometry("mesh has no triangles".into()));
        }
        let nv = vertices.len();
        let mut cell_areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::Geometry(format!("triangle {t} references a missing vertex")));
            }
            let a2 = orient2(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a2 > 0.0) {
                return Err(Error::Deformation(format!(
                    "triangle {t} has non-positive area {:e}",
                    0.5 * a2
                )));
            }
            cell_areas.push(0.5 * a2);
        }

        // sorted edge -> (use count, oriented edge, owning triangle)
        let mut edges: HashMap<(usize, usize), (u8, [usize; 2], usize)> = HashMap::new();
        let mut order = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = edges.entry(key).or_insert_with(|| {
                    order.push(key);
                    (0, [a, b], t)
                });
                e.0 += 1;
                if e.0 > 2 {
                    return Err(Error::Geometry(format!("edge {a}-{b} is shared by more than two triangles")));
                }
            }
        }
        let mut boundary_edges = Vec::new();
        for key in order {
            let (count, [a, b], t) = edges[&key];
            if count == 1 {
                let (pa, pb) = (vertices[a], vertices[b]);
                let len = dist(pa, pb);
                let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
                boundary_edges.push(BoundaryEdge { vertices: [a, b], normal, triangle: t });
            }
        }
        let mesh = MeshedDomain { vertices, triangles, boundary_edges, cell_areas };
        mesh.boundary_loops()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    /// Marks vertices lying on the boundary.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for e in &self.boundary_edges {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    pub fn num_interior_vertices(&self) -> usize {
        self.boundary_mask().iter().filter(|b| !**b).count()
    }

    /// Chains boundary edges into closed loops of vertex indices.
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>> {
        let mut next: HashMap<usize, usize> = HashMap::new();
        for e in &self.boundary_edges {
            if next.insert(e.vertices[0], e.vertices[1]).is_some() {
                return Err(Error::Geometry(format!(
                    "boundary vertex {} starts two boundary edges",
                    e.vertices[0]
                )));
            }
        }
        let mut seen: HashMap<usize, bool> = HashMap::new();
        let mut loops = Vec::new();
        for e in &self.boundary_edges {
            let start = e.vertices[0];
            if seen.contains_key(&start) {
                continue;
            }
            let mut lp = vec![start];
            seen.insert(start, true);
            let mut cur = start;
            loop {
                let nx = *next
                    .get(&cur)
                    .ok_or_else(|| Error::Geometry(format!("boundary is open at vertex {cur}")))?;
                if nx == start {
                    break;
                }
                if seen.insert(nx, true).is_some() {
                    return Err(Error::Geometry(format!("boundary loop revisits vertex {nx}")));
                }
                lp.push(nx);
                cur = nx;
            }
            loops.push(lp);
        }
        Ok(loops)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Checks every structural invariant of the type.
    pub fn validate(&self) -> Result<()> {
        for (t, tri) in self.triangles.iter().enumerate() {
            let a2 = orient2(self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]);
            if !(a2 > 0.0) {
                return Err(Error::Deformation(format!("triangle {t} is inverted")));
            }
            if (0.5 * a2 - self.cell_areas[t]).abs() > 1e-12 * (1.0 + self.cell_areas[t]) {
                return Err(Error::Geometry(format!("cell area {t} is stale")));
            }
        }
        for e in &self.boundary_edges {
            let n = e.normal[0].hypot(e.normal[1]);
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::Geometry("boundary normal is not unit length".into()));
            }
        }
        self.boundary_loops().map(|_| ())
    }

    /// Same connectivity, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::IncompatibleMesh("vertex count changed".into()));
        }
        MeshedDomain::from_triangles(vertices, self.triangles.clone())
    }

    /// Content hash of vertices and connectivity, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.vertices {
            h.update(v[0].to_le_bytes());
            h.update(v[1].to_le_bytes());
        }
        for t in &self.triangles {
            for &i in t {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Gradients of the three P1 hat functions on triangle `t`.
    pub fn hat_gradients(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let two_area = orient2(p0, p1, p2);
        [
            [(p1[1] - p2[1]) / two_area, (p2[0] - p1[0]) / two_area],
            [(p2[1] - p0[1]) / two_area, (p0[0] - p2[0]) / two_area],
            [(p0[1] - p1[1]) / two_area, (p1[0] - p0[0]) / two_area],
        ]
    }

    pub fn locator(&self) -> Locator<'_> {
        Locator::new(self)
    }
}

/// Uniform bucket grid over triangle bounding boxes for point location.
pub struct Locator<'a> {
    mesh: &'a MeshedDomain,
    lo: Point2,
    cell: Point2,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a MeshedDomain) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let side = (mesh.triangles.len() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(1e-300),
            ((hi[1] - lo[1]) / side as f64).max(1e-300),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &v in tri {
                for k in 0..2 {
                    tlo[k] = tlo[k].min(mesh.vertices[v][k]);
                    thi[k] = thi[k].max(mesh.vertices[v][k]);
                }
            }
            let (i0, j0) = Self::bucket_of(lo, cell, dims, tlo);
            let (i1, j1) = Self::bucket_of(lo, cell, dims, thi);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[j * dims[0] + i].push(t);
                }
            }
        }
        Locator { mesh, lo, cell, dims, buckets }
    }

    fn bucket_of(lo: Point2, cell: Point2, dims: [usize; 2], p: Point2) -> (usize, usize) {
        let i = ((p[0] - lo[0]) / cell[0]).floor().clamp(0.0, (dims[0] - 1) as f64) as usize;
        let j = ((p[1] - lo[1]) / cell[1]).floor().clamp(0.0, (dims[1] - 1) as f64) as usize;
        (i, j)
    }

    /// Triangle containing `p` (within `tol` in barycentric coordinates) and the
    /// barycentric weights of `p` in it.
    pub fn locate(&self, p: Point2, tol: f64) -> Option<(usize, [f64; 3])> {
        let (i, j) = Self::bucket_of(self.lo, self.cell, self.dims, p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let [a, b, c] = self.mesh.triangles[t];
            let (pa, pb, pc) = (self.mesh.vertices[a], self.mesh.vertices[b], self.mesh.vertices[c]);
            let area2 = orient2(pa, pb, pc);
            let l0 = orient2(p, pb, pc) / area2;
            let l1 = orient2(pa, p, pc) / area2;
            let l2 = 1.0 - l0 - l1;
            let worst = l0.min(l1).min(l2);
            if worst >= 0.0 {
                return Some((t, [l0, l1, l2]));
            }
            if worst >= -tol && best.map_or(true, |b| worst > b.2) {
                best = Some((t, [l0, l1, l2], worst));
            }
        }
        best.map(|(t, l, _)| (t, l))
    }
}

/// Uniform P1 mesh of the interval `(0, length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMesh {
    pub nodes: Vec<f64>,
}

impl IntervalMesh {
    pub fn uniform(length: f64, cells: usize) -> Result<Self> {
        if !(length > 0.0) || cells < 2 {
            return Err(Error::InvalidParameter(
                "interval mesh needs a positive length and at least two cells".into(),
            ));
        }
        let nodes = (0..=cells).map(|i| length * i as f64 / cells as f64).collect();
        Ok(IntervalMesh { nodes })
    }

    pub fn num_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.nodes[self.nodes.len() - 1] - self.nodes[0]
    }

    /// Cell containing `x` and the local coordinate in `[0, 1]`.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let (a, b) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
        if !(x >= a && x <= b) {
            return None;
        }
        let c = match self.nodes.binary_search_by(|n| n.total_cmp(&x)) {
            Ok(i) => i.min(self.num_cells() - 1),
            Err(i) => i - 1,
        };
        let s = (x - self.nodes[c]) / (self.nodes[c + 1] - self.nodes[c]);
        Some((c, s))
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for x in &self.nodes {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangle_square() -> MeshedDomain {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        MeshedDomain::from_triangles(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn boundary_of_square() {
        let m = two_triangle_square();
        assert_eq!(m.boundary_edges.len(), 4);
        let loops = m.boundary_loops().unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 4);
        // bottom edge 0->1 has outward normal (0,-1)
        let bottom = m.boundary_edges.iter().find(|e| e.vertices == [0, 1]).unwrap();
        assert!((bottom.normal[1] + 1.0).abs() < 1e-15);
        assert!((m.area() - 1.0).abs() < 1e-15);
        m.validate().unwrap();
    }

    #[test]
    fn inverted_triangle_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = MeshedDomain::from_triangles(v, vec![[0, 2, 1]]).unwrap_err();
        assert!(matches!(err, Error::Deformation(_)));
    }

    #[test]
    fn locate_points() {
        let m = two_triangle_square();
        let loc = m.locator();
        let (t, l) = loc.locate([0.75, 0.25], 1e-12).unwrap();
        assert_eq!(t, 0);
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(loc.locate([1.5, 0.5], 1e-9).is_none());
        assert!(loc.locate([1.0 + 1e-12, 0.5], 1e-9).is_some());
    }

    #[test]
    fn hash_changes_with_geometry() {
        let m = two_triangle_square();
        let mut v = m.vertices.clone();
        v[2] = [1.0, 1.1];
        let m2 = m.with_vertices(v).unwrap();
        assert_ne!(m.content_hash(), m2.content_hash());
    }

    #[test]
    fn interval_locate() {
        let m = IntervalMesh::uniform(2.0, 4).unwrap();
        let (c, s) = m.locate(0.6).unwrap();
        assert_eq!(c, 1);
        assert!((s - 0.2).abs() < 1e-12);
        assert_eq!(m.locate(2.0).unwrap().0, 3);
        assert!(m.locate(2.1).is_none());
    }
}
