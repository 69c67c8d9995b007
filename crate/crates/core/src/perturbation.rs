//! Eigenvalue curves along deformation paths and first-order eigenvalue
//! derivatives with respect to the boundary (Hadamard formula) and to a
//! potential, each with a finite-difference cross-check.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::eigensolver::{solve_pencil, EigenSystem, Eigenfunctions, OrthotopeMode, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::fem::FemMesh;
use crate::geometry::{flow_deform, DeformationPath, MeshedDomain, Orthotope, VectorField2D};
use crate::quadrature::{gauss_legendre_unit, Quadrature};
use crate::sparse::{dot, CsrMatrix};

/// Default crossing threshold, relative to `1 + lambda`.
pub const DEFAULT_CROSSING_TOL: f64 = 1e-4;

/// Overlap below which a non-crossing step is considered ambiguous.
pub const MIN_PAIRING_OVERLAP: f64 = 0.9;

/// One quadrature node on the perturbed part of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryNode {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub weight: f64,
    /// Normal speed `V . nu`.
    pub speed: f64,
    /// Mesh cell adjacent to the boundary piece holding the node.
    pub cell: Option<usize>,
}

/// Normal speed sampled on a part `Gamma` of the boundary, with quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPerturbation {
    nodes: Vec<BoundaryNode>,
    /// `(axis, upper)` when the perturbation translates a whole orthotope face at constant speed.
    face_translation: Option<(usize, bool)>,
}

impl BoundaryPerturbation {
    /// The face `x_axis = side` (or `x_axis = 0`) of an orthotope, with tensor Gauss rules.
    pub fn orthotope_face<F>(ortho: &Orthotope, axis: usize, upper: bool, speed: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let d = ortho.dim();
        if axis >= d {
            return Err(invalid(format!("axis {axis} out of range for dimension {d}")));
        }
        let (gx, gw) = gauss_legendre_unit(4)?;
        let cells = if d == 1 { 1 } else { 64 };
        let per_cell = gx.len();
        let free: Vec<usize> = (0..d).filter(|&i| i != axis).collect();
        let count = (cells * per_cell).pow(free.len() as u32);
        let mut normal = vec![0.0; d];
        normal[axis] = if upper { 1.0 } else { -1.0 };
        let mut nodes = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rest = idx;
            let mut point = vec![0.0; d];
            point[axis] = if upper { ortho.side(axis) } else { 0.0 };
            let mut weight = 1.0;
            for &i in &free {
                let g = rest % (cells * per_cell);
                rest /= cells * per_cell;
                let (c, q) = (g / per_cell, g % per_cell);
                let h = ortho.side(i) / cells as f64;
                point[i] = (c as f64 + gx[q]) * h;
                weight *= gw[q] * h;
            }
            let v = speed(&point);
            nodes.push(BoundaryNode { point, normal: normal.clone(), weight, speed: v, cell: None });
        }
        let uniform = nodes.windows(2).all(|w| w[0].speed == w[1].speed);
        Ok(BoundaryPerturbation { nodes, face_translation: uniform.then_some((axis, upper)) })
    }

    /// Boundary pieces of a mesh selected by `select(midpoint, normal)`, two Gauss points per edge.
    pub fn mesh_boundary<S, F>(mesh: &FemMesh, select: S, speed: F) -> Result<Self>
    where
        S: Fn(&[f64], &[f64]) -> bool,
        F: Fn(&[f64], &[f64]) -> f64,
    {
        let mut nodes = Vec::new();
        match mesh {
            FemMesh::Interval(m) => {
                let last = m.nodes.len() - 1;
                for (x, nu, cell) in [(m.nodes[0], -1.0, 0), (m.nodes[last], 1.0, last - 1)] {
                    let (p, n) = (vec![x], vec![nu]);
                    if select(&p, &n) {
                        let v = speed(&p, &n);
                        nodes.push(BoundaryNode { point: p, normal: n, weight: 1.0, speed: v, cell: Some(cell) });
                    }
                }
            }
            FemMesh::Triangle(m) => {
                let (gx, gw) = gauss_legendre_unit(2)?;
                for e in &m.boundary_edges {
                    let (a, b) = (m.vertices[e.vertices[0]], m.vertices[e.vertices[1]]);
                    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                    if !select(&mid, &e.normal) {
                        continue;
                    }
                    let len = e.length(m);
                    for (s, w) in gx.iter().zip(&gw) {
                        let p = vec![a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let v = speed(&p, &e.normal);
                        nodes.push(BoundaryNode {
                            point: p,
                            normal: e.normal.to_vec(),
                            weight: w * len,
                            speed: v,
                            cell: Some(e.triangle),
                        });
                    }
                }
            }
        }
        if nodes.is_empty() {
            return Err(invalid("no boundary piece selected"));
        }
        Ok(BoundaryPerturbation { nodes, face_translation: None })
    }

    /// Normal component of a velocity field on the selected boundary pieces.
    pub fn from_field<S>(mesh: &MeshedDomain, field: &VectorField2D, select: S) -> Result<Self>
    where
        S: Fn(&[f64], &[f64]) -> bool,
    {
        Self::mesh_boundary(&FemMesh::Triangle(mesh.clone()), select, |p, n| {
            let v = field.eval([p[0], p[1]]);
            v[0] * n[0] + v[1] * n[1]
        })
    }

    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    /// `|Gamma|`, the sum of the weights.
    pub fn measure(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn face_translation(&self) -> Option<(usize, bool)> {
        self.face_translation
    }

    /// Normal speed multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.nodes.iter_mut().for_each(|n| n.speed *= c);
        out
    }
}

/// `norm_constant * (k_axis / mu_axis) * cos(k_axis pi)`: the normal derivative of a
/// mode on the face `x_axis = mu_axis pi` is this constant times `prod_{i != axis} sin(k_i x_i / mu_i)`.
pub fn normal_derivative_constant(mode: &OrthotopeMode, ortho: &Orthotope, axis: usize) -> f64 {
    let k = mode.k[axis] as f64;
    mode.norm_constant * (k / ortho.mu()[axis]) * (k * PI).cos()
}

fn normal_derivatives(sys: &EigenSystem, pert: &BoundaryPerturbation, l: usize) -> Result<Vec<f64>> {
    match sys.functions() {
        Eigenfunctions::ClosedForm { orthotope, modes } => Ok(pert
            .nodes
            .iter()
            .map(|n| {
                let g = modes[l].gradient(orthotope, &n.point);
                g.iter().zip(&n.normal).map(|(a, b)| a * b).sum()
            })
            .collect()),
        Eigenfunctions::Nodal { mesh, values } => {
            let u = &values[l];
            pert.nodes
                .iter()
                .map(|n| {
                    let c = n.cell.ok_or_else(|| invalid("perturbation was not built on this mesh"))?;
                    match mesh.as_ref() {
                        FemMesh::Interval(m) => {
                            if c + 1 >= m.nodes.len() {
                                return Err(invalid("perturbation was not built on this mesh"));
                            }
                            let slope = (u[c + 1] - u[c]) / (m.nodes[c + 1] - m.nodes[c]);
                            Ok(slope * n.normal[0])
                        }
                        FemMesh::Triangle(m) => {
                            if c >= m.triangles.len() {
                                return Err(invalid("perturbation was not built on this mesh"));
                            }
                            let g = m.hat_gradients(c);
                            let tri = m.triangles[c];
                            let grad = (0..3).fold([0.0, 0.0], |acc, a| {
                                [acc[0] + u[tri[a]] * g[a][0], acc[1] + u[tri[a]] * g[a][1]]
                            });
                            Ok(grad[0] * n.normal[0] + grad[1] * n.normal[1])
                        }
                    }
                })
                .collect()
        }
    }
}

fn boundary_integral(sys: &EigenSystem, pert: &BoundaryPerturbation, l: usize) -> Result<f64> {
    if sys.dim() != pert.nodes[0].point.len() {
        return Err(invalid("perturbation dimension does not match the system"));
    }
    let dn = normal_derivatives(sys, pert, l)?;
    Ok(-pert.nodes.iter().zip(dn).map(|(n, d)| n.weight * d * d * n.speed).sum::<f64>())
}

/// `-int_Gamma (d phi_l / d nu)^2 (V . nu) dsigma` for a simple eigenvalue `l`.
pub fn hadamard_derivative(sys: &EigenSystem, pert: &BoundaryPerturbation, l: usize) -> Result<f64> {
    sys.require_simple(l)?;
    boundary_integral(sys, pert, l)
}

/// Like [`hadamard_derivative`], but also accepts a degenerate closed-form mode when the
/// perturbation translates a whole face at constant speed: the domain then stays an
/// orthotope and every separable mode follows its own analytic branch.
pub fn hadamard_derivative_branch(sys: &EigenSystem, pert: &BoundaryPerturbation, l: usize) -> Result<f64> {
    sys.check_index(l)?;
    if separable_branch(sys, pert) {
        boundary_integral(sys, pert, l)
    } else {
        hadamard_derivative(sys, pert, l)
    }
}

fn separable_branch(sys: &EigenSystem, pert: &BoundaryPerturbation) -> bool {
    sys.orthotope().is_some() && pert.face_translation().is_some()
}

fn mass_normalize(m: &CsrMatrix, u: &mut [f64]) {
    let s = dot(u, &m.mul_vec(u)).sqrt();
    if s > 0.0 {
        u.iter_mut().for_each(|v| *v /= s);
    }
}

/// Index and `|overlap|` of the eigenvector of `sys` closest to `reference` in the mass inner product.
fn best_overlap(sys: &EigenSystem, mass: &CsrMatrix, reference: &[f64]) -> (usize, f64) {
    let mr = mass.mul_vec(reference);
    (0..sys.len())
        .map(|j| (j, dot(sys.nodal_values(j).expect("nodal system"), &mr).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("at least one mode")
}

/// Outcome of a finite-difference check of the Hadamard formula.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeFdReport {
    pub mode: usize,
    pub dt: f64,
    pub hadamard: f64,
    pub fd_slope: f64,
    /// `|fd - hadamard| / |hadamard|`, or the absolute difference when the formula gives 0.
    pub relative_error: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// Sorted index of the followed branch at `-dt` and `+dt`.
    pub branch_indices: [usize; 2],
    pub overlaps: [f64; 2],
}

/// Central difference `(lambda_l(dt) - lambda_l(-dt)) / (2 dt)` of P1 eigenvalues on the
/// flowed meshes, against the Hadamard value computed from `formula`.
///
/// The branch is followed by eigenfunction overlap with mode `l` of `formula`
/// (sampled at the mesh nodes for closed forms). For a simple mode the branch must
/// keep its index on both sides, otherwise eigenvalues cross inside `[-dt, dt]`.
pub fn fd_shape_check(
    formula: &EigenSystem,
    pert: &BoundaryPerturbation,
    base: &MeshedDomain,
    field: &VectorField2D,
    l: usize,
    dt: f64,
    opts: &SolverOptions,
) -> Result<ShapeFdReport> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt must be positive"));
    }
    let hadamard = hadamard_derivative_branch(formula, pert, l)?;
    let strict = !(separable_branch(formula, pert) && formula.gap_flags()[l]);
    let base_mesh = FemMesh::Triangle(base.clone());
    let base_mass = base_mesh.assemble().1;
    let mut reference: Vec<f64> = match formula.functions() {
        Eigenfunctions::ClosedForm { orthotope, modes } => {
            (0..base_mesh.num_nodes()).map(|i| modes[l].eval(orthotope, &base_mesh.node(i))).collect()
        }
        Eigenfunctions::Nodal { mesh, values } => {
            if mesh.num_nodes() != base_mesh.num_nodes() {
                return Err(Error::IncompatibleMesh("formula system lives on a different mesh".into()));
            }
            values[l].clone()
        }
    };
    mass_normalize(&base_mass, &mut reference);
    let interior = base.num_interior_vertices();
    let count = (l + 3).min(interior.saturating_sub(1));
    if count <= l {
        return Err(invalid("mesh too coarse for the requested mode"));
    }
    let sides = [-dt, dt]
        .par_iter()
        .map(|&t| {
            let mesh = Arc::new(FemMesh::Triangle(flow_deform(base, field, t)?));
            let sys = solve_pencil(&mesh, count, None, opts)?;
            let mass = mesh.assemble().1;
            let (j, ov) = best_overlap(&sys, &mass, &reference);
            Ok((sys.lambdas()[j], j, ov))
        })
        .collect::<Result<Vec<_>>>()?;
    let (lm, jm, om) = sides[0];
    let (lp, jp, op) = sides[1];
    if om < MIN_PAIRING_OVERLAP || op < MIN_PAIRING_OVERLAP {
        return Err(Error::Validity(format!("mode {l} not followed across [-dt, dt] (overlaps {om:.3}, {op:.3})")));
    }
    if strict && (jm != l || jp != l) {
        return Err(Error::Validity(format!(
            "eigenvalue {l} crosses a neighbour inside [-{dt}, {dt}] (indices {jm}, {jp})"
        )));
    }
    let fd_slope = (lp - lm) / (2.0 * dt);
    let diff = (fd_slope - hadamard).abs();
    Ok(ShapeFdReport {
        mode: l,
        dt,
        hadamard,
        fd_slope,
        relative_error: if hadamard != 0.0 { diff / hadamard.abs() } else { diff },
        lambda_minus: lm,
        lambda_plus: lp,
        branch_indices: [jm, jp],
        overlaps: [om, op],
    })
}

/// `int V phi_k^2` for a simple eigenvalue `k`.
pub fn potential_derivative<V>(sys: &EigenSystem, v: V, k: usize) -> Result<f64>
where
    V: Fn(&[f64]) -> f64,
{
    sys.require_simple(k)?;
    let q = sys.default_quadrature()?;
    let phi = sys.values_on(&q, k)?;
    let vals: Vec<f64> = (0..q.len()).map(|i| v(q.point(i)) * phi[i] * phi[i]).collect();
    Ok(q.integrate(&vals))
}

/// Discretization of the potential term in `-Delta + eps V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialAssembly {
    /// `diag(V(x_i) m_i)` with lumped masses `m_i`.
    Lumped,
    /// `int V phi_i phi_j` by quadrature; `V = 1` reproduces the mass matrix exactly.
    Consistent,
}

/// Interior-node matrix of the potential term.
pub fn potential_matrix<V>(mesh: &FemMesh, v: V, assembly: PotentialAssembly) -> CsrMatrix
where
    V: Fn(&[f64]) -> f64,
{
    let sys = mesh.assemble_dirichlet();
    let full = match assembly {
        PotentialAssembly::Lumped => {
            let n = mesh.num_nodes();
            CsrMatrix::from_triplets(n, (0..n).map(|i| (i, i, v(&mesh.node(i)) * sys.lumped_mass_full[i])).collect())
        }
        PotentialAssembly::Consistent => {
            let q = Quadrature::on_mesh(mesh);
            let mut triplets = Vec::with_capacity(9 * q.len());
            for p in 0..q.len() {
                let w = q.weights()[p] * v(q.point(p));
                let entries = q.shape_entries(p).expect("mesh quadrature");
                for &(a, sa) in entries {
                    for &(b, sb) in entries {
                        triplets.push((a, b, w * sa * sb));
                    }
                }
            }
            CsrMatrix::from_triplets(mesh.num_nodes(), triplets)
        }
    };
    full.principal_submatrix(&sys.interior)
}

/// Outcome of a finite-difference check of the potential derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialFdReport {
    pub mode: usize,
    pub d_eps: f64,
    /// `int V phi_k^2` on the unperturbed discrete eigenfunction.
    pub formula: f64,
    pub fd_slope: f64,
    pub relative_error: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub assembly: PotentialAssembly,
}

/// Central difference of `lambda_k` of `-Delta + eps V` at `eps = 0` against `int V phi_k^2`.
pub fn fd_potential_check<V>(
    mesh: Arc<FemMesh>,
    v: V,
    k: usize,
    d_eps: f64,
    assembly: PotentialAssembly,
    opts: &SolverOptions,
) -> Result<PotentialFdReport>
where
    V: Fn(&[f64]) -> f64 + Sync,
{
    if !(d_eps > 0.0 && d_eps.is_finite()) {
        return Err(invalid("d_eps must be positive"));
    }
    let interior = mesh.interior_nodes().len();
    let count = (k + 3).min(interior.saturating_sub(1));
    if count <= k {
        return Err(invalid("mesh too coarse for the requested mode"));
    }
    let base = solve_pencil(&mesh, count, None, opts)?;
    let formula = potential_derivative(&base, &v, k)?;
    let p = potential_matrix(&mesh, &v, assembly);
    let mass = mesh.assemble().1;
    let reference = base.nodal_values(k).expect("nodal system").to_vec();
    let mut sides = Vec::with_capacity(2);
    for eps in [-d_eps, d_eps] {
        let scaled = p.scaled(eps);
        let sys = solve_pencil(&mesh, count, Some(&scaled), opts)?;
        let (j, ov) = best_overlap(&sys, &mass, &reference);
        if j != k || ov < MIN_PAIRING_OVERLAP {
            return Err(Error::Validity(format!("eigenvalue {k} is not simple for |eps| <= {d_eps}")));
        }
        sides.push(sys.lambdas()[k]);
    }
    let fd_slope = (sides[1] - sides[0]) / (2.0 * d_eps);
    let diff = (fd_slope - formula).abs();
    Ok(PotentialFdReport {
        mode: k,
        d_eps,
        formula,
        fd_slope,
        relative_error: if formula != 0.0 { diff / formula.abs() } else { diff },
        lambda_minus: sides[0],
        lambda_plus: sides[1],
        assembly,
    })
}

/// Options for [`track_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    /// Extra modes solved beyond `n` so curves leaving the window can be followed.
    pub guard: usize,
    pub crossing_tol: f64,
    pub min_overlap: f64,
    pub solver: SolverOptions,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            guard: 2,
            crossing_tol: DEFAULT_CROSSING_TOL,
            min_overlap: MIN_PAIRING_OVERLAP,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingKind {
    /// Two curves exchange their order between consecutive grid points.
    Swap,
    /// Local minimum of a gap below the threshold without an exchange.
    NearCrossing,
    /// A curve leaves the first `n` modes and another one enters.
    WindowExchange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub kind: CrossingKind,
    pub t_interval: (f64, f64),
    /// Curves involved (identified by their sorted index at `t = 0`).
    pub curves: (usize, usize),
    /// Sorted indices of the two curves at the start of the interval.
    pub modes: (usize, usize),
    pub min_gap: f64,
}

/// Eigenvalue curves along a path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPath {
    pub t_grid: Vec<f64>,
    /// `curves[c][s]`: value of curve `c` at grid point `s`.
    pub curves: Vec<Vec<f64>>,
    /// `pairing[s][c]`: sorted index of curve `c` at grid point `s`.
    pub pairing: Vec<Vec<usize>>,
    pub crossing_events: Vec<CrossingEvent>,
    /// Smallest assigned overlap between steps `s` and `s + 1`.
    pub step_overlaps: Vec<f64>,
}

impl EigenPath {
    /// Sorted spectrum at grid point `s`.
    pub fn sorted_at(&self, s: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.curves.iter().map(|c| c[s]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `t, lambda_1..lambda_n, pairing, crossing` rows.
    pub fn to_csv(&self) -> String {
        let n = self.curves.len();
        let mut out = String::from("t");
        for k in 1..=n {
            out.push_str(&format!(",lambda_{k}"));
        }
        out.push_str(",pairing,crossing\n");
        for (s, t) in self.t_grid.iter().enumerate() {
            out.push_str(&format!("{t:?}"));
            for v in self.sorted_at(s) {
                out.push_str(&format!(",{v:?}"));
            }
            let pairing: Vec<String> = self.pairing[s].iter().map(|p| p.to_string()).collect();
            let flag = self.crossing_events.iter().any(|e| e.t_interval.0 == *t);
            out.push_str(&format!(",{},{}\n", pairing.join(";"), u8::from(flag)));
        }
        out
    }
}

/// Greedy maximum-overlap assignment `sigma[i] = j` (largest overlaps first, ties by index).
fn assign(overlap: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let m = overlap.len();
    let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    pairs.sort_by(|a, b| overlap[b.0][b.1].total_cmp(&overlap[a.0][a.1]).then(a.cmp(b)));
    let mut sigma = vec![usize::MAX; m];
    let mut taken = vec![false; m];
    for (i, j) in pairs {
        if sigma[i] == usize::MAX && !taken[j] {
            sigma[i] = j;
            taken[j] = true;
        }
    }
    let best = (0..m).map(|i| overlap[i][sigma[i]]).collect();
    (sigma, best)
}

/// Spectra at every grid point of `path`, with modes paired across steps by
/// eigenfunction overlap and crossings flagged.
pub fn track_path(path: &DeformationPath, n: usize, opts: &TrackOptions) -> Result<EigenPath> {
    if n == 0 {
        return Err(invalid("need at least one mode"));
    }
    let grid = path.t_grid().to_vec();
    let m = n + opts.guard;
    let steps: Vec<(Arc<FemMesh>, EigenSystem, CsrMatrix)> = grid
        .par_iter()
        .map(|&t| {
            let mesh = Arc::new(FemMesh::Triangle(path.mesh_at(t)?));
            let sys = solve_pencil(&mesh, m, None, &opts.solver)?;
            let mass = mesh.assemble().1;
            Ok((mesh, sys, mass))
        })
        .collect::<Result<_>>()?;
    let lam = |s: usize, i: usize| steps[s].1.lambdas()[i];
    let mut idx: Vec<usize> = (0..n).collect();
    let mut pairing = vec![idx.clone()];
    let mut events = Vec::new();
    let mut step_overlaps = Vec::new();
    for s in 0..grid.len().saturating_sub(1) {
        let (a, b) = (&steps[s].1, &steps[s + 1].1);
        let mass = &steps[s + 1].2;
        let mb: Vec<Vec<f64>> = (0..m).map(|j| mass.mul_vec(b.nodal_values(j).expect("nodal"))).collect();
        let overlap: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| dot(a.nodal_values(i).expect("nodal"), &mb[j]).abs()).collect())
            .collect();
        let (sigma, best) = assign(&overlap);
        let mut next: Vec<usize> = idx.iter().map(|&i| sigma[i]).collect();
        // curves that left the window hand over to the modes entering it
        let entering_modes: Vec<usize> = (0..n).filter(|j| !next.contains(j)).collect();
        let mut entering = entering_modes.into_iter();
        for c in 0..n {
            if next[c] >= n {
                let j = entering.next().expect("window stays a permutation");
                events.push(CrossingEvent {
                    kind: CrossingKind::WindowExchange,
                    t_interval: (grid[s], grid[s + 1]),
                    curves: (c, c),
                    modes: (idx[c], next[c]),
                    min_gap: (lam(s + 1, next[c]) - lam(s + 1, j)).abs(),
                });
                next[c] = j;
            }
        }
        let mut crossing_step = false;
        for c in 0..n {
            for d in c + 1..n {
                if (idx[c] < idx[d]) != (next[c] < next[d]) {
                    crossing_step = true;
                    let (lo, hi) = if idx[c] < idx[d] { (c, d) } else { (d, c) };
                    events.push(CrossingEvent {
                        kind: CrossingKind::Swap,
                        t_interval: (grid[s], grid[s + 1]),
                        curves: (lo, hi),
                        modes: (idx[lo], idx[hi]),
                        min_gap: 0.0,
                    });
                }
            }
        }
        let tight = |st: usize| (0..m - 1).any(|i| lam(st, i + 1) - lam(st, i) < opts.crossing_tol * (1.0 + lam(st, i)));
        let worst = idx.iter().map(|&i| best[i]).fold(f64::INFINITY, f64::min);
        step_overlaps.push(worst);
        // a swap is only believed when each tracked mode still dominates its row and column
        let dominant = idx.iter().all(|&i| {
            let j = sigma[i];
            best[i] >= 0.5 && (0..m).all(|k| (k == j || overlap[i][k] < best[i]) && (k == i || overlap[k][j] < best[i]))
        });
        let required = if crossing_step { dominant } else { worst >= opts.min_overlap };
        if !required && !tight(s) && !tight(s + 1) {
            return Err(Error::Pairing { step: s + 1, overlap: worst });
        }
        idx = next;
        pairing.push(idx.clone());
    }
    // gaps with a strict interior local minimum below the threshold
    for i in 0..n.saturating_sub(1) {
        let gap = |s: usize| lam(s, i + 1) - lam(s, i);
        for s in 1..grid.len().saturating_sub(1) {
            let g = gap(s);
            if g < gap(s - 1) && g < gap(s + 1) && g < opts.crossing_tol * (1.0 + lam(s, i)) {
                let swapped = events.iter().any(|e| {
                    e.kind == CrossingKind::Swap && e.t_interval.0 >= grid[s - 1] && e.t_interval.1 <= grid[s + 1]
                });
                if !swapped {
                    let c = (0..n).find(|&c| pairing[s][c] == i).expect("permutation");
                    let d = (0..n).find(|&c| pairing[s][c] == i + 1).expect("permutation");
                    events.push(CrossingEvent {
                        kind: CrossingKind::NearCrossing,
                        t_interval: (grid[s - 1], grid[s + 1]),
                        curves: (c.min(d), c.max(d)),
                        modes: (i, i + 1),
                        min_gap: g,
                    });
                }
            }
        }
    }
    events.sort_by(|a, b| a.t_interval.0.total_cmp(&b.t_interval.0).then(a.modes.cmp(&b.modes)));
    let curves = (0..n).map(|c| (0..grid.len()).map(|s| lam(s, pairing[s][c])).collect()).collect();
    Ok(EigenPath { t_grid: grid, curves, pairing, crossing_events: events, step_overlaps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_assignment_prefers_large_overlaps() {
        let o = vec![vec![0.1, 0.95, 0.0], vec![0.97, 0.1, 0.0], vec![0.0, 0.0, 1.0]];
        let (sigma, best) = assign(&o);
        assert_eq!(sigma, vec![1, 0, 2]);
        assert_eq!(best, vec![0.95, 0.97, 1.0]);
    }
}
