//! Cellwise quadrature tables.
//!
//! Every integral in the crate (Gram matrices, damping weights, couplings,
//! potential derivatives) is a weighted sum over one of these tables. Each
//! point remembers its cell, so per-cell designs such as damping densities can
//! be applied directly. Tables built on a finite-element mesh also carry the P1
//! shape values needed to interpolate nodal fields at the points.

use crate::error::{invalid, Result};
use crate::fem::FemMesh;
use crate::geometry::Orthotope;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => (vec![-0.5773502691896257, 0.5773502691896257], vec![1.0, 1.0]),
        3 => (
            vec![-0.7745966692414834, 0.0, 0.7745966692414834],
            vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            vec![-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526],
            vec![0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538],
        ),
        5 => (
            vec![-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664],
            vec![
                0.2369268850561891,
                0.4786286704993665,
                0.5688888888888889,
                0.4786286704993665,
                0.2369268850561891,
            ],
        ),
        _ => return Err(invalid(format!("Gauss-Legendre rule with {n} points is not tabulated"))),
    };
    Ok((x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|v| 0.5 * v).collect()))
}

// Degree-4 six-point rule on the reference triangle: (barycentric, weight / area)
const TRI_RULE: [([f64; 3], f64); 6] = [
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
];

/// Quadrature points grouped by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    cell_of: Vec<usize>,
    cell_areas: Vec<f64>,
    /// P1 interpolation data: three (node, value) pairs per point.
    shape: Option<Vec<[(usize, f64); 3]>>,
}

impl Quadrature {
    /// Tensor Gauss-Legendre rule on a uniform grid of boxes covering the orthotope.
    pub fn orthotope_grid(ortho: &Orthotope, cells_per_axis: usize, points_per_axis: usize) -> Result<Self> {
        if cells_per_axis == 0 {
            return Err(invalid("need at least one cell per axis"));
        }
        let d = ortho.dim();
        let (gx, gw) = gauss_legendre_unit(points_per_axis)?;
        let widths: Vec<f64> = (0..d).map(|i| ortho.side(i) / cells_per_axis as f64).collect();
        let cell_volume: f64 = widths.iter().product();
        let num_cells = cells_per_axis.pow(d as u32);
        let per_cell = points_per_axis.pow(d as u32);
        let mut points = Vec::with_capacity(num_cells * per_cell * d);
        let mut weights = Vec::with_capacity(num_cells * per_cell);
        let mut cell_of = Vec::with_capacity(num_cells * per_cell);
        for c in 0..num_cells {
            let mut idx = c;
            let corner: Vec<f64> = (0..d)
                .map(|i| {
                    let k = idx % cells_per_axis;
                    idx /= cells_per_axis;
                    k as f64 * widths[i]
                })
                .collect();
            for q in 0..per_cell {
                let mut qi = q;
                let mut w = cell_volume;
                for i in 0..d {
                    let g = qi % points_per_axis;
                    qi /= points_per_axis;
                    points.push(corner[i] + gx[g] * widths[i]);
                    w *= gw[g];
                }
                weights.push(w);
                cell_of.push(c);
            }
        }
        Ok(Quadrature { dim: d, points, weights, cell_of, cell_areas: vec![cell_volume; num_cells], shape: None })
    }

    /// Degree-4 rule on triangles, three-point Gauss on intervals; exact for
    /// products of up to four P1 functions.
    pub fn on_mesh(mesh: &FemMesh) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut cell_of = Vec::new();
        let mut shape = Vec::new();
        match mesh {
            FemMesh::Interval(m) => {
                let (gx, gw) = gauss_legendre_unit(3).expect("tabulated");
                for c in 0..m.num_cells() {
                    let (a, b) = (m.nodes[c], m.nodes[c + 1]);
                    for (x, w) in gx.iter().zip(&gw) {
                        points.push(a + x * (b - a));
                        weights.push(w * (b - a));
                        cell_of.push(c);
                        shape.push([(c, 1.0 - x), (c + 1, *x), (c, 0.0)]);
                    }
                }
            }
            FemMesh::Triangle(m) => {
                for (t, tri) in m.triangles.iter().enumerate() {
                    let p: Vec<_> = tri.iter().map(|&v| m.vertices[v]).collect();
                    for (bary, w) in TRI_RULE {
                        points.push(bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0]);
                        points.push(bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1]);
                        weights.push(w * m.cell_areas[t]);
                        cell_of.push(t);
                        shape.push([(tri[0], bary[0]), (tri[1], bary[1]), (tri[2], bary[2])]);
                    }
                }
            }
        }
        Quadrature { dim: mesh.dim(), points, weights, cell_of, cell_areas: mesh.cell_areas(), shape: Some(shape) }
    }

    /// One point per cell at its centroid, weighted by the cell area.
    pub fn mesh_midpoint(mesh: &FemMesh) -> Self {
        let mut points = Vec::new();
        let mut shape = Vec::new();
        match mesh {
            FemMesh::Interval(m) => {
                for c in 0..m.num_cells() {
                    points.push(0.5 * (m.nodes[c] + m.nodes[c + 1]));
                    shape.push([(c, 0.5), (c + 1, 0.5), (c, 0.0)]);
                }
            }
            FemMesh::Triangle(m) => {
                for tri in &m.triangles {
                    for k in 0..2 {
                        points.push(tri.iter().map(|&v| m.vertices[v][k]).sum::<f64>() / 3.0);
                    }
                    shape.push([(tri[0], 1.0 / 3.0), (tri[1], 1.0 / 3.0), (tri[2], 1.0 / 3.0)]);
                }
            }
        }
        let cell_areas = mesh.cell_areas();
        Quadrature {
            dim: mesh.dim(),
            points,
            weights: cell_areas.clone(),
            cell_of: (0..cell_areas.len()).collect(),
            cell_areas,
            shape: Some(shape),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_of(&self) -> &[usize] {
        &self.cell_of
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    pub fn num_cells(&self) -> usize {
        self.cell_areas.len()
    }

    pub fn measure(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    /// Interpolates a nodal field at every point; `None` when the table has no mesh data.
    pub fn interpolate(&self, nodal: &[f64]) -> Option<Vec<f64>> {
        self.shape
            .as_ref()
            .map(|s| s.iter().map(|entries| entries.iter().map(|&(n, v)| v * nodal[n]).sum()).collect())
    }

    /// P1 `(node, value)` pairs at point `q`, when the table carries mesh data.
    pub fn shape_entries(&self, q: usize) -> Option<&[(usize, f64); 3]> {
        self.shape.as_ref().map(|s| &s[q])
    }

    pub fn has_shape(&self) -> bool {
        self.shape.is_some()
    }

    /// Evaluates `f` at every point.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|q| f(self.point(q))).collect()
    }

    /// `sum_q w_q values_q`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Per-cell integrals of the sampled `values`.
    pub fn cell_integrals(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_cells()];
        for ((c, w), v) in self.cell_of.iter().zip(&self.weights).zip(values) {
            out[*c] += w * v;
        }
        out
    }

    /// The table with weights outside the masked cells set to zero.
    pub fn restricted(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.num_cells() {
            return Err(invalid(format!("cell mask has {} entries for {} cells", mask.len(), self.num_cells())));
        }
        let mut out = self.clone();
        for (w, c) in out.weights.iter_mut().zip(&self.cell_of) {
            if !mask[*c] {
                *w = 0.0;
            }
        }
        Ok(out)
    }

    /// Cell centroids (mean of the quadrature points of each cell).
    pub fn cell_centers(&self) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; self.dim]; self.num_cells()];
        let mut counts = vec![0usize; self.num_cells()];
        for q in 0..self.len() {
            let c = self.cell_of[q];
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(self.point(q)) {
                *s += x;
            }
        }
        for (s, n) in sums.iter_mut().zip(counts) {
            for x in s.iter_mut() {
                *x /= n.max(1) as f64;
            }
        }
        sums
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_orthotope, rectangle_mesh, DiagonalPattern, IntervalMesh};
    use std::f64::consts::PI;

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=5 {
            let (x, w) = gauss_legendre_unit(n).unwrap();
            for deg in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
        assert!(gauss_legendre_unit(6).is_err());
    }

    #[test]
    fn triangle_rule_is_degree_four() {
        let m = FemMesh::from(rectangle_mesh(1.0, 1.0, 1, 1, DiagonalPattern::Uniform).unwrap());
        let q = Quadrature::on_mesh(&m);
        // int_0^1 int_0^1 x^2 y^2 = 1/9, x^4 -> 1/5
        let v = q.sample(|p| p[0] * p[0] * p[1] * p[1]);
        assert!((q.integrate(&v) - 1.0 / 9.0).abs() < 1e-12);
        let v = q.sample(|p| p[0].powi(4));
        assert!((q.integrate(&v) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn orthotope_grid_measures() {
        let o = make_orthotope(&[1.0, 0.5]).unwrap();
        let q = Quadrature::orthotope_grid(&o, 8, 3).unwrap();
        assert_eq!(q.num_cells(), 64);
        assert!((q.measure() - PI * PI * 0.5).abs() < 1e-12);
        let v = q.sample(|p| p[0].sin().powi(2));
        assert!((q.integrate(&v) - PI / 2.0 * PI * 0.5).abs() < 1e-7);
    }

    #[test]
    fn interpolation_and_restriction() {
        let m = FemMesh::from(IntervalMesh::uniform(1.0, 4).unwrap());
        let q = Quadrature::on_mesh(&m);
        let nodal = [0.0, 0.25, 0.5, 0.75, 1.0];
        let vals = q.interpolate(&nodal).unwrap();
        for k in 0..q.len() {
            assert!((vals[k] - q.point(k)[0]).abs() < 1e-15);
        }
        let half = q.restricted(&[true, true, false, false]).unwrap();
        let ones = vec![1.0; q.len()];
        assert!((half.integrate(&ones) - 0.5).abs() < 1e-15);
        assert!(q.restricted(&[true]).is_err());
    }
}
