//! First `n` Laplacian-Dirichlet eigenpairs.
//!
//! Orthotopes are handled by separation of variables. Meshed domains go
//! through the P1 generalized problem `K u = lambda M u`, solved by
//! shift-invert subspace iteration at shift zero with a Rayleigh-Ritz step.
//!
//! Within a degenerate cluster the eigenvectors are orthonormal but otherwise
//! arbitrary.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fem::FemMesh;
use crate::geometry::{make_orthotope, mesh_orthotope, mesh_polygon, regular_polygon, Orthotope};
use crate::quadrature::Quadrature;
use crate::sparse::{dot, norm, CsrMatrix, EnvelopeCholesky};

/// Default relative gap below which neighbouring eigenvalues are flagged as a cluster.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;

pub const SIGN_CONVENTION: &str = "largest |value| over sample points is positive; first such point on ties";

/// One separable mode `prod_i sin(k_i x_i / mu_i)` of an orthotope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthotopeMode {
    pub k: Vec<u32>,
    pub lambda: f64,
    pub norm_constant: f64,
}

impl OrthotopeMode {
    fn new(ortho: &Orthotope, k: Vec<u32>) -> Self {
        let lambda = k.iter().zip(ortho.mu()).map(|(&k, m)| (k as f64 / m).powi(2)).sum();
        let norm_constant = ortho.mu().iter().map(|m| (2.0 / (m * PI)).sqrt()).product();
        OrthotopeMode { k, lambda, norm_constant }
    }

    /// Value at `x`; zero outside the box.
    pub fn eval(&self, ortho: &Orthotope, x: &[f64]) -> f64 {
        if !ortho.contains(x) {
            return 0.0;
        }
        self.norm_constant * self.k.iter().zip(ortho.mu()).zip(x).map(|((&k, m), xi)| (k as f64 * xi / m).sin()).product::<f64>()
    }

    /// Gradient at `x` (inside the closed box).
    pub fn gradient(&self, ortho: &Orthotope, x: &[f64]) -> Vec<f64> {
        let d = ortho.dim();
        let args: Vec<f64> = (0..d).map(|i| self.k[i] as f64 * x[i] / ortho.mu()[i]).collect();
        (0..d)
            .map(|i| {
                let mut g = self.norm_constant * self.k[i] as f64 / ortho.mu()[i] * args[i].cos();
                for (j, a) in args.iter().enumerate() {
                    if j != i {
                        g *= a.sin();
                    }
                }
                g
            })
            .collect()
    }
}

/// Eigenfunction representation.
#[derive(Debug, Clone)]
pub enum Eigenfunctions {
    ClosedForm { orthotope: Orthotope, modes: Vec<OrthotopeMode> },
    /// Full nodal vectors (boundary nodes carry zeros).
    Nodal { mesh: Arc<FemMesh>, values: Vec<Vec<f64>> },
}

/// First `n` eigenpairs with L2-normalized, sign-fixed eigenfunctions.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    lambdas: Vec<f64>,
    functions: Eigenfunctions,
    /// `gap_flags[k]`: mode k lies within the gap tolerance of a neighbour.
    gap_flags: Vec<bool>,
    /// Estimate of eigenvalue `n + 1`, used to judge simplicity of the last mode.
    next_lambda: Option<f64>,
    residuals: Vec<f64>,
    gap_tol: f64,
}

fn cluster_flags(lambdas: &[f64], next: Option<f64>, gap_tol: f64) -> Vec<bool> {
    let mut all = lambdas.to_vec();
    all.extend(next);
    let close: Vec<bool> = all.windows(2).map(|w| w[1] - w[0] < gap_tol * (1.0 + w[0])).collect();
    (0..lambdas.len())
        .map(|k| (k > 0 && close[k - 1]) || close.get(k).copied().unwrap_or(false))
        .collect()
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn functions(&self) -> &Eigenfunctions {
        &self.functions
    }

    pub fn gap_flags(&self) -> &[bool] {
        &self.gap_flags
    }

    pub fn next_lambda(&self) -> Option<f64> {
        self.next_lambda
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn gap_tol(&self) -> f64 {
        self.gap_tol
    }

    pub fn dim(&self) -> usize {
        match &self.functions {
            Eigenfunctions::ClosedForm { orthotope, .. } => orthotope.dim(),
            Eigenfunctions::Nodal { mesh, .. } => mesh.dim(),
        }
    }

    pub fn orthotope(&self) -> Option<&Orthotope> {
        match &self.functions {
            Eigenfunctions::ClosedForm { orthotope, .. } => Some(orthotope),
            Eigenfunctions::Nodal { .. } => None,
        }
    }

    pub fn modes(&self) -> Option<&[OrthotopeMode]> {
        match &self.functions {
            Eigenfunctions::ClosedForm { modes, .. } => Some(modes),
            Eigenfunctions::Nodal { .. } => None,
        }
    }

    pub fn mesh(&self) -> Option<&Arc<FemMesh>> {
        match &self.functions {
            Eigenfunctions::Nodal { mesh, .. } => Some(mesh),
            Eigenfunctions::ClosedForm { .. } => None,
        }
    }

    pub fn nodal_values(&self, index: usize) -> Option<&[f64]> {
        match &self.functions {
            Eigenfunctions::Nodal { values, .. } => values.get(index).map(|v| v.as_slice()),
            Eigenfunctions::ClosedForm { .. } => None,
        }
    }

    /// Measure of the domain.
    pub fn measure(&self) -> f64 {
        match &self.functions {
            Eigenfunctions::ClosedForm { orthotope, .. } => orthotope.volume(),
            Eigenfunctions::Nodal { mesh, .. } => mesh.measure(),
        }
    }

    pub(crate) fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len() {
            return Err(invalid(format!("mode index {index} out of range for {} modes", self.len())));
        }
        Ok(())
    }

    /// Relative gap of mode `index` to its nearest neighbour (including mode n+1 when known).
    pub fn relative_gap(&self, index: usize) -> f64 {
        let l = &self.lambdas;
        let mut gap = f64::INFINITY;
        if index > 0 {
            gap = gap.min((l[index] - l[index - 1]) / (1.0 + l[index - 1]));
        }
        let next = l.get(index + 1).copied().or(self.next_lambda);
        if let Some(nx) = next {
            gap = gap.min((nx - l[index]) / (1.0 + l[index]));
        }
        gap
    }

    /// Fails with a simplicity violation when mode `index` sits in a cluster.
    pub fn require_simple(&self, index: usize) -> Result<()> {
        self.check_index(index)?;
        if self.gap_flags[index] {
            return Err(Error::SimplicityViolation { index, gap: self.relative_gap(index) });
        }
        Ok(())
    }

    /// Quadrature table suited to this system: the mesh rule for nodal fields, a
    /// tensor grid for closed forms.
    pub fn default_quadrature(&self) -> Result<Quadrature> {
        match &self.functions {
            Eigenfunctions::Nodal { mesh, .. } => Ok(Quadrature::on_mesh(mesh)),
            Eigenfunctions::ClosedForm { orthotope, .. } => match orthotope.dim() {
                1 => Quadrature::orthotope_grid(orthotope, 256, 4),
                2 => Quadrature::orthotope_grid(orthotope, 64, 3),
                _ => Quadrature::orthotope_grid(orthotope, 12, 3),
            },
        }
    }

    /// Values of mode `index` at the points of `q`. Mesh tables must come from the same mesh.
    pub fn values_on(&self, q: &Quadrature, index: usize) -> Result<Vec<f64>> {
        self.check_index(index)?;
        match &self.functions {
            Eigenfunctions::ClosedForm { orthotope, modes } => {
                if q.dim() != orthotope.dim() {
                    return Err(invalid("quadrature dimension does not match the domain"));
                }
                Ok(q.sample(|x| modes[index].eval(orthotope, x)))
            }
            Eigenfunctions::Nodal { values, .. } => q
                .interpolate(&values[index])
                .ok_or_else(|| invalid("nodal eigenfunctions need a quadrature built on their mesh")),
        }
    }

    /// JSON document: eigenvalues, mode descriptors or nodal arrays, mesh hash.
    pub fn to_json(&self) -> serde_json::Value {
        let functions = match &self.functions {
            Eigenfunctions::ClosedForm { orthotope, modes } => serde_json::json!({
                "kind": "closed_form",
                "mu": orthotope.mu(),
                "modes": modes,
            }),
            Eigenfunctions::Nodal { mesh, values } => serde_json::json!({
                "kind": "nodal",
                "mesh_hash": mesh.content_hash(),
                "num_nodes": mesh.num_nodes(),
                "values": values,
            }),
        };
        serde_json::json!({
            "lambdas": self.lambdas,
            "gap_flags": self.gap_flags,
            "gap_tol": self.gap_tol,
            "next_lambda": self.next_lambda,
            "residuals": self.residuals,
            "normalization": "L2",
            "sign_convention": SIGN_CONVENTION,
            "eigenfunctions": functions,
        })
    }

    /// `index,lambda` rows with a header; indices start at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,lambda\n");
        for (i, l) in self.lambdas.iter().enumerate() {
            out.push_str(&format!("{},{:?}\n", i + 1, l));
        }
        out
    }
}

#[derive(PartialEq)]
struct Frontier(f64, Vec<u32>);

impl Eq for Frontier {}

impl Ord for Frontier {
    // reversed so the max-heap pops the smallest eigenvalue, then the smallest K
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `count` lowest modes of an orthotope in nondecreasing order, ties by lexicographic K.
pub fn orthotope_modes(ortho: &Orthotope, count: usize) -> Vec<OrthotopeMode> {
    let d = ortho.dim();
    let w = ortho.inverse_squares();
    let lambda = |k: &[u32]| k.iter().zip(&w).map(|(&k, w)| (k as f64).powi(2) * w).sum::<f64>();
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = vec![1u32; d];
    heap.push(Frontier(lambda(&start), start.clone()));
    seen.insert(start);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let Frontier(_, k) = heap.pop().expect("frontier never empties");
        for i in 0..d {
            let mut next = k.clone();
            next[i] += 1;
            if seen.insert(next.clone()) {
                heap.push(Frontier(lambda(&next), next));
            }
        }
        out.push(OrthotopeMode::new(ortho, k));
    }
    out
}

/// Closed-form spectrum of an orthotope.
pub fn orthotope_spectrum(ortho: &Orthotope, n: usize) -> Result<EigenSystem> {
    orthotope_spectrum_with_gap(ortho, n, DEFAULT_GAP_TOL)
}

pub fn orthotope_spectrum_with_gap(ortho: &Orthotope, n: usize, gap_tol: f64) -> Result<EigenSystem> {
    if n == 0 {
        return Err(invalid("need at least one mode"));
    }
    let mut modes = orthotope_modes(ortho, n + 1);
    let next = modes.pop().map(|m| m.lambda);
    let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda).collect();
    Ok(EigenSystem {
        gap_flags: cluster_flags(&lambdas, next, gap_tol),
        next_lambda: next,
        residuals: vec![0.0; n],
        lambdas,
        functions: Eigenfunctions::ClosedForm { orthotope: ortho.clone(), modes },
        gap_tol,
    })
}

/// Controls for the iterative solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on `|K u - lambda M u| / |u|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub gap_tol: f64,
    /// Seed for the starting block.
    pub seed: u64,
    /// Iterations without halving the residual before the trailing block is restarted.
    pub stagnation_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-9, max_iterations: 2000, gap_tol: DEFAULT_GAP_TOL, seed: 0x5eed, stagnation_window: 60 }
    }
}

fn random_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..cols).map(|_| (0..rows).map(|_| rng.random::<f64>() - 0.5).collect()).collect()
}

struct RitzPairs {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

/// Lowest `n` eigenpairs of the pencil `(k, m)`, both symmetric positive definite.
fn subspace_iteration(k: &CsrMatrix, m: &CsrMatrix, n: usize, opts: &SolverOptions) -> Result<RitzPairs> {
    let dim = k.dim();
    let p = (n + 5).max(2 * n).min(dim);
    let chol = EnvelopeCholesky::factor(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = random_block(&mut rng, dim, p);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut last_residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let mx: Vec<Vec<f64>> = x.par_iter().map(|c| m.mul_vec(c)).collect();
        let y: Vec<Vec<f64>> = mx.par_iter().map(|c| chol.solve(c)).collect();
        let my: Vec<Vec<f64>> = y.par_iter().map(|c| m.mul_vec(c)).collect();
        // K Y = M X, so the projected stiffness is Y^T (M X)
        let kr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &mx[j]) + dot(&y[j], &mx[i])));
        let mr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &my[j]) + dot(&y[j], &my[i])));
        let (theta, z) = reduced_pencil(kr, mr)?;
        x = (0..p)
            .into_par_iter()
            .map(|j| {
                let mut col = vec![0.0; dim];
                for (i, yi) in y.iter().enumerate() {
                    let c = z[(i, j)];
                    if c != 0.0 {
                        col.iter_mut().zip(yi).for_each(|(a, b)| *a += c * b);
                    }
                }
                col
            })
            .collect();
        let residuals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let kx = k.mul_vec(&x[j]);
                let mxj = m.mul_vec(&x[j]);
                let r: Vec<f64> = kx.iter().zip(&mxj).map(|(a, b)| a - theta[j] * b).collect();
                norm(&r) / norm(&x[j])
            })
            .collect();
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        last_residual = worst;
        if worst <= opts.tolerance {
            return Ok(RitzPairs { values: theta, vectors: x, residuals });
        }
        if worst < 0.5 * best {
            best = worst;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stagnation_window && p > n {
                // restart the trailing part of the block
                let fresh = random_block(&mut rng, dim, p - n);
                x.splice(n.., fresh);
                since_best = 0;
                best = worst;
            }
        }
    }
    Err(Error::Convergence { iterations: opts.max_iterations, residual: last_residual })
}

/// Solves the small dense problem `kr z = theta mr z` with `mr`-orthonormal `z`, ascending.
fn reduced_pencil(kr: DMatrix<f64>, mr: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = kr.nrows();
    let l = mr
        .cholesky()
        .ok_or_else(|| Error::Numerical("projected mass matrix lost positive definiteness".into()))?
        .l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular projected mass factor".into()))?;
    let c = &linv * kr * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let w = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((theta, linv.transpose() * w))
}

/// Flips `u` so its entry of largest magnitude (first on ties) is positive.
pub(crate) fn fix_sign(u: &mut [f64]) {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            idx = i;
        }
    }
    if u.get(idx).is_some_and(|v| *v < 0.0) {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Lowest `n` eigenpairs of `(K + P) u = lambda M u` on the interior nodes.
///
/// `potential` is an interior-sized matrix `P`; `None` gives the plain Laplacian.
pub(crate) fn solve_pencil(
    mesh: &Arc<FemMesh>,
    n: usize,
    potential: Option<&CsrMatrix>,
    opts: &SolverOptions,
) -> Result<EigenSystem> {
    let sys = mesh.assemble_dirichlet();
    let interior = sys.interior.len();
    if n == 0 || n >= interior {
        return Err(invalid(format!("requested {n} modes but the mesh has {interior} interior vertices")));
    }
    let stiffness = match potential {
        Some(p) => sys.stiffness.minus_scaled(p, -1.0),
        None => sys.stiffness.clone(),
    };
    let ritz = subspace_iteration(&stiffness, &sys.mass, n, opts)?;
    let mut values = Vec::with_capacity(n);
    for j in 0..n {
        let mut u = ritz.vectors[j].clone();
        let mnorm = dot(&u, &sys.mass.mul_vec(&u)).sqrt();
        u.iter_mut().for_each(|v| *v /= mnorm);
        fix_sign(&mut u);
        values.push(sys.expand(&u, mesh.num_nodes()));
    }
    let lambdas = ritz.values[..n].to_vec();
    let next = ritz.values.get(n).copied();
    Ok(EigenSystem {
        gap_flags: cluster_flags(&lambdas, next, opts.gap_tol),
        next_lambda: next,
        residuals: ritz.residuals,
        lambdas,
        functions: Eigenfunctions::Nodal { mesh: mesh.clone(), values },
        gap_tol: opts.gap_tol,
    })
}

/// P1 finite-element spectrum of a mesh.
pub fn fem_spectrum(mesh: impl Into<FemMesh>, n: usize) -> Result<EigenSystem> {
    fem_spectrum_with(Arc::new(mesh.into()), n, &SolverOptions::default())
}

pub fn fem_spectrum_with(mesh: Arc<FemMesh>, n: usize, opts: &SolverOptions) -> Result<EigenSystem> {
    solve_pencil(&mesh, n, None, opts)
}

/// Values of mode `index` at `points`, extended by zero outside the domain.
pub fn evaluate_eigenfunction(sys: &EigenSystem, index: usize, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    sys.check_index(index)?;
    let d = sys.dim();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(invalid(format!("point {p:?} does not have dimension {d}")));
    }
    match &sys.functions {
        Eigenfunctions::ClosedForm { orthotope, modes } => {
            Ok(points.iter().map(|p| modes[index].eval(orthotope, p)).collect())
        }
        Eigenfunctions::Nodal { mesh, values } => {
            let u = &values[index];
            match mesh.as_ref() {
                FemMesh::Interval(m) => Ok(points
                    .iter()
                    .map(|p| match m.locate(p[0]) {
                        Some((c, s)) => (1.0 - s) * u[c] + s * u[c + 1],
                        None => 0.0,
                    })
                    .collect()),
                FemMesh::Triangle(m) => {
                    let loc = m.locator();
                    Ok(points
                        .iter()
                        .map(|p| match loc.locate([p[0], p[1]], 1e-9) {
                            Some((t, b)) => m.triangles[t].iter().zip(b).map(|(&v, w)| w * u[v]).sum(),
                            None => 0.0,
                        })
                        .collect())
                }
            }
        }
    }
}

/// Reference problems with known spectra.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvergenceTarget {
    Orthotope(Orthotope),
    /// Unit disk, meshed through inscribed regular polygons.
    Disk,
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h_requested: f64,
    /// Largest edge of the mesh actually used.
    pub h: f64,
    pub lambda_errors: Vec<f64>,
    pub phi_sup_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub exact_lambdas: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    /// Empirical orders between consecutive rows, per mode: `log(e_i/e_{i+1}) / log(h_i/h_{i+1})`.
    pub lambda_orders: Vec<Vec<f64>>,
}

impl ConvergenceTable {
    /// Smallest eigenvalue order over all modes and row pairs.
    pub fn min_lambda_order(&self) -> f64 {
        self.lambda_orders.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// First zero of `J_0`.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404825557695773;

/// `J_nu(x)` for `nu` in {0, 1} by its power series (accurate for `|x| <= 4`).
pub fn bessel_j(nu: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(nu as i32);
    let mut sum = term;
    for m in 1..40 {
        term *= -half * half / (m as f64 * (m + nu as usize) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn disk_mode(x: &[f64]) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    if r >= 1.0 {
        return 0.0;
    }
    let j = BESSEL_J0_FIRST_ZERO;
    bessel_j(0, j * r) / (PI.sqrt() * bessel_j(1, j).abs())
}

/// Eigenvalue and sup-norm eigenfunction errors against the closed form on decreasing mesh sizes.
pub fn convergence_study(target: &ConvergenceTarget, h_list: &[f64], n: usize) -> Result<ConvergenceTable> {
    if h_list.is_empty() || n == 0 {
        return Err(invalid("need at least one mesh size and one mode"));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("mesh sizes must be strictly decreasing"));
    }
    let exact_lambdas = match target {
        ConvergenceTarget::Orthotope(o) => {
            let sys = orthotope_spectrum(o, n)?;
            if let Some(k) = sys.gap_flags.iter().position(|f| *f) {
                return Err(Error::Precondition(format!("target eigenvalue {} is not simple", k + 1)));
            }
            sys.lambdas
        }
        ConvergenceTarget::Disk => {
            if n > 1 {
                return Err(Error::Precondition("the disk has a double second eigenvalue; use n = 1".into()));
            }
            vec![BESSEL_J0_FIRST_ZERO * BESSEL_J0_FIRST_ZERO]
        }
    };
    let exact_modes = match target {
        ConvergenceTarget::Orthotope(o) => orthotope_modes(o, n),
        ConvergenceTarget::Disk => Vec::new(),
    };
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mesh = match target {
            ConvergenceTarget::Orthotope(o) => FemMesh::from(mesh_orthotope(o, h)?),
            ConvergenceTarget::Disk => {
                FemMesh::from(mesh_polygon(&regular_polygon(crate::geometry::disk_sides(h), 1.0), h)?)
            }
        };
        let sys = fem_spectrum(mesh, n)?;
        let mesh = sys.mesh().expect("nodal system").clone();
        let lambda_errors = sys.lambdas.iter().zip(&exact_lambdas).map(|(a, b)| a - b).collect();
        let phi_sup_errors = (0..n)
            .map(|j| {
                let u = sys.nodal_values(j).expect("nodal system");
                let exact: Vec<f64> = (0..mesh.num_nodes())
                    .map(|i| {
                        let x = mesh.node(i);
                        match target {
                            ConvergenceTarget::Orthotope(o) => exact_modes[j].eval(o, &x),
                            ConvergenceTarget::Disk => disk_mode(&x),
                        }
                    })
                    .collect();
                let sup = |s: f64| u.iter().zip(&exact).map(|(a, b)| (a - s * b).abs()).fold(0.0, f64::max);
                sup(1.0).min(sup(-1.0))
            })
            .collect();
        rows.push(ConvergenceRow { h_requested: h, h: mesh.mesh_size(), lambda_errors, phi_sup_errors });
    }
    let lambda_orders = rows
        .windows(2)
        .map(|w| {
            w[0].lambda_errors
                .iter()
                .zip(&w[1].lambda_errors)
                .map(|(a, b)| (a.abs() / b.abs()).ln() / (w[0].h / w[1].h).ln())
                .collect()
        })
        .collect();
    Ok(ConvergenceTable { exact_lambdas, rows, lambda_orders })
}

/// Convenience: orthotope from side factors, then its closed-form spectrum.
pub fn orthotope_spectrum_from_mu(mu: &[f64], n: usize) -> Result<EigenSystem> {
    orthotope_spectrum(&make_orthotope(mu)?, n)
}
