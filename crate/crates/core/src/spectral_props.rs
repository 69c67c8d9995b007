//! Checks for simple spectrum, linear independence of squared eigenfunctions
//! and non-resonance.
//!
//! Floating-point spectra can only refute non-resonance, never prove it: a
//! `Holds` verdict for that property always means "no relation up to the
//! searched height". Closed-form orthotope spectra whose weights lie in a
//! single quadratic field get exact verdicts.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigensolver::{evaluate_eigenfunction, EigenSystem, Eigenfunctions};
use crate::error::{invalid, Error, Result};
use crate::exact::{recognize_weights, ExactSpectrum, QuadraticSurd};
use crate::fem::FemMesh;
use crate::geometry::Orthotope;

/// Default relative residual tolerance for integer relations.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-7;

/// Default bound on `k (2H + 1)^k` for the exhaustive relation search.
pub const DEFAULT_SEARCH_BUDGET: u128 = 2_000_000_000;

/// Relations kept in a report; the total count is reported separately.
pub const MAX_REPORTED_RELATIONS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyId {
    Simplicity,
    SquaredIndependence,
    Nonresonance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// Integer vector `q` with its residual `|sum q_l lambda_l|` and height `max |q_l|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalRelation {
    pub q: Vec<i64>,
    pub residual: f64,
    pub height: u64,
}

impl RationalRelation {
    pub fn new(q: Vec<i64>, lambdas: &[f64]) -> Result<Self> {
        if q.len() != lambdas.len() {
            return Err(invalid("relation length differs from the number of eigenvalues"));
        }
        if q.iter().all(|&c| c == 0) {
            return Err(invalid("a relation needs a nonzero coefficient"));
        }
        Ok(RationalRelation { residual: relation_residual(&q, lambdas), height: height(&q), q })
    }
}

fn height(q: &[i64]) -> u64 {
    q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
}

pub fn relation_residual(q: &[i64], lambdas: &[f64]) -> f64 {
    q.iter().zip(lambdas).map(|(&c, l)| c as f64 * l).sum::<f64>().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Gap { index: usize, lower: f64, upper: f64, relative_gap: f64 },
    Points { points: Vec<Vec<f64>>, determinant: f64, det_tol: f64, trials_run: usize },
    Gram { eigenvalues: Vec<f64>, min_eigenvalue: f64, quadrature_tolerance: f64 },
    Relations {
        relations: Vec<RationalRelation>,
        total_found: usize,
        /// Candidates of larger height proposed by lattice reduction, not exhaustively confirmed.
        unverified: Vec<RationalRelation>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: PropertyId,
    pub n: usize,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub tolerances: BTreeMap<String, f64>,
    /// Searched coefficient height for non-resonance.
    pub height: Option<u64>,
    pub seed: Option<u64>,
    /// Verdict obtained in exact arithmetic.
    pub exact: bool,
    pub note: Option<String>,
}

impl PropertyReport {
    fn new(property: PropertyId, n: usize, verdict: Verdict) -> Self {
        PropertyReport {
            property,
            n,
            verdict,
            witness: None,
            tolerances: BTreeMap::new(),
            height: None,
            seed: None,
            exact: false,
            note: None,
        }
    }

    fn tol(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    /// Relations carried by the witness (empty when there are none).
    pub fn relations(&self) -> &[RationalRelation] {
        match &self.witness {
            Some(Witness::Relations { relations, .. }) => relations,
            _ => &[],
        }
    }
}

/// Exact eigenvalues of a closed-form system when its weights are recognized.
pub fn exact_spectrum(sys: &EigenSystem) -> Option<ExactSpectrum> {
    let (ortho, modes) = match sys.functions() {
        Eigenfunctions::ClosedForm { orthotope, modes } => (orthotope, modes),
        Eigenfunctions::Nodal { .. } => return None,
    };
    let weights = recognize_weights(&ortho.inverse_squares())?;
    ExactSpectrum::from_modes(modes, &weights).ok()
}

/// Exact eigenvalues from caller-supplied axis weights `1/mu_i^2`.
pub fn exact_spectrum_with_weights(sys: &EigenSystem, weights: &[QuadraticSurd]) -> Result<ExactSpectrum> {
    let modes = sys.modes().ok_or_else(|| invalid("exact weights apply to closed-form systems only"))?;
    let ortho = sys.orthotope().expect("closed form");
    for (w, x) in weights.iter().zip(ortho.inverse_squares()) {
        if (w.to_f64() - x).abs() > 1e-12 * x {
            return Err(invalid(format!("exact weight {w} does not match 1/mu^2 = {x}")));
        }
    }
    ExactSpectrum::from_modes(modes, weights)
}

/// Holds iff every consecutive relative gap `(l_{k+1} - l_k) / (1 + l_k)` exceeds `gap_tol`.
///
/// Closed-form systems with recognized weights are decided exactly.
pub fn check_simplicity(sys: &EigenSystem, gap_tol: f64) -> PropertyReport {
    let l = sys.lambdas();
    let n = l.len();
    let mut rep = PropertyReport::new(PropertyId::Simplicity, n, Verdict::Holds).tol("gap_tol", gap_tol);
    if n < 2 {
        rep.note = Some("a single mode is trivially simple".into());
        return rep;
    }
    let (index, relative_gap) = l
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, (w[1] - w[0]) / (1.0 + w[0])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("two modes");
    rep.witness = Some(Witness::Gap { index, lower: l[index], upper: l[index + 1], relative_gap });
    match exact_spectrum(sys) {
        Some(ex) => {
            rep.exact = true;
            if let Some(k) = ex.first_coincidence() {
                rep.verdict = Verdict::Fails;
                rep.witness = Some(Witness::Gap { index: k, lower: l[k], upper: l[k + 1], relative_gap: 0.0 });
                rep.note = Some(format!("exact coincidence {} = {}", ex.values[k], ex.values[k + 1]));
            }
        }
        None => {
            if relative_gap <= gap_tol {
                rep.verdict = Verdict::Fails;
            }
        }
    }
    rep
}

/// Determinant of `M_ij = phi_j(x_i)^2`.
pub fn squared_independence_det(sys: &EigenSystem, points: &[Vec<f64>]) -> Result<f64> {
    Ok(squared_matrix(sys, points)?.determinant())
}

fn squared_matrix(sys: &EigenSystem, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = sys.len();
    if points.len() != n {
        return Err(invalid(format!("need {n} points, got {}", points.len())));
    }
    let cols = (0..n).map(|j| evaluate_eigenfunction(sys, j, points)).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i] * cols[j][i]))
}

fn first_primes(d: usize) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    let mut c = 2;
    while out.len() < d {
        if out.iter().all(|p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Shifted Halton sequence restricted to the domain by rejection.
struct DomainSampler<'a> {
    sys: &'a EigenSystem,
    lo: Vec<f64>,
    hi: Vec<f64>,
    bases: Vec<u32>,
    shift: Vec<f64>,
    index: u64,
}

impl<'a> DomainSampler<'a> {
    fn new(sys: &'a EigenSystem, seed: u64) -> Self {
        let (lo, hi) = match sys.functions() {
            Eigenfunctions::ClosedForm { orthotope, .. } => {
                (vec![0.0; orthotope.dim()], (0..orthotope.dim()).map(|i| orthotope.side(i)).collect())
            }
            Eigenfunctions::Nodal { mesh, .. } => match mesh.as_ref() {
                FemMesh::Interval(m) => (vec![m.nodes[0]], vec![*m.nodes.last().expect("nodes")]),
                FemMesh::Triangle(m) => {
                    let (a, b) = m.bounding_box();
                    (a.to_vec(), b.to_vec())
                }
            },
        };
        let d = lo.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..d).map(|_| rng.random::<f64>()).collect();
        DomainSampler { sys, lo, hi, bases: first_primes(d), shift, index: 1 }
    }

    fn inside(&self, x: &[f64]) -> bool {
        match self.sys.functions() {
            Eigenfunctions::ClosedForm { orthotope, .. } => orthotope.contains(x),
            Eigenfunctions::Nodal { mesh, .. } => match mesh.as_ref() {
                FemMesh::Interval(m) => x[0] > m.nodes[0] && x[0] < *m.nodes.last().expect("nodes"),
                FemMesh::Triangle(m) => m.locator().locate([x[0], x[1]], 0.0).is_some(),
            },
        }
    }

    fn next_point(&mut self) -> Vec<f64> {
        loop {
            let i = self.index;
            self.index += 1;
            let x: Vec<f64> = (0..self.lo.len())
                .map(|k| {
                    let u = (radical_inverse(i, self.bases[k]) + self.shift[k]).fract();
                    self.lo[k] + u * (self.hi[k] - self.lo[k])
                })
                .collect();
            if self.inside(&x) {
                return x;
            }
        }
    }
}

/// Searches `trials` seeded point tuples for a nonzero squared-eigenfunction determinant.
///
/// A tuple is accepted when `|det| > 1e-8 * prod_i |row_i|`. Without an accepted
/// tuple the verdict is inconclusive, never a failure.
pub fn squared_independence_search(sys: &EigenSystem, trials: usize, seed: u64) -> Result<PropertyReport> {
    let n = sys.len();
    let mut rep = PropertyReport::new(PropertyId::SquaredIndependence, n, Verdict::Inconclusive).tol("det_rel_tol", 1e-8);
    rep.seed = Some(seed);
    let mut sampler = DomainSampler::new(sys, seed);
    let mut best: Option<(f64, Vec<Vec<f64>>, f64, f64)> = None;
    for _ in 0..trials {
        let points: Vec<Vec<f64>> = (0..n).map(|_| sampler.next_point()).collect();
        let m = squared_matrix(sys, &points)?;
        let scale: f64 = m.row_iter().map(|r| r.norm()).product();
        let det = m.determinant();
        let det_tol = 1e-8 * scale;
        let ratio = if scale > 0.0 { det.abs() / scale } else { 0.0 };
        if best.as_ref().map_or(true, |b| ratio > b.0) {
            best = Some((ratio, points, det, det_tol));
        }
    }
    if let Some((ratio, points, determinant, det_tol)) = best {
        if ratio > 1e-8 {
            rep.verdict = Verdict::Holds;
        }
        rep.witness = Some(Witness::Points { points, determinant, det_tol, trials_run: trials });
    }
    Ok(rep)
}

/// Gram matrix of squared eigenfunctions and its spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    /// Estimated error of the integrals.
    pub quadrature_tolerance: f64,
    /// Integrals come from antiderivatives rather than quadrature.
    pub exact_integration: bool,
    pub subset_measure: f64,
}

impl GramReport {
    /// Certifies independence when the smallest eigenvalue clears `margin` times the tolerance.
    pub fn certifies(&self, margin: f64) -> bool {
        self.min_eigenvalue > margin * self.quadrature_tolerance
    }

    pub fn to_report(&self, n: usize) -> PropertyReport {
        let verdict = if self.certifies(1.0) { Verdict::Holds } else { Verdict::Inconclusive };
        let mut rep = PropertyReport::new(PropertyId::SquaredIndependence, n, verdict)
            .tol("quadrature_tolerance", self.quadrature_tolerance);
        rep.witness = Some(Witness::Gram {
            eigenvalues: self.eigenvalues.clone(),
            min_eigenvalue: self.min_eigenvalue,
            quadrature_tolerance: self.quadrature_tolerance,
        });
        rep.exact = self.exact_integration;
        rep
    }

    pub fn to_csv(&self) -> String {
        self.matrix
            .iter()
            .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",") + "\n")
            .collect()
    }
}

// int sin^2(a x) sin^2(b x) dx, a, b > 0
fn sin2_sin2_antiderivative(a: f64, b: f64, x: f64) -> f64 {
    let s = |c: f64| if c == 0.0 { x } else { (c * x).sin() / c };
    (x - s(2.0 * a) - s(2.0 * b) + 0.5 * (s(2.0 * (a - b)) + s(2.0 * (a + b)))) / 4.0
}

fn closed_form_gram(ortho: &Orthotope, sys: &EigenSystem, cells: &[(Vec<f64>, Vec<f64>)]) -> DMatrix<f64> {
    let modes = sys.modes().expect("closed form");
    let n = modes.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = (modes[i].norm_constant * modes[j].norm_constant).powi(2);
            let total: f64 = cells
                .iter()
                .map(|(lo, hi)| {
                    (0..ortho.dim())
                        .map(|ax| {
                            let a = modes[i].k[ax] as f64 / ortho.mu()[ax];
                            let b = modes[j].k[ax] as f64 / ortho.mu()[ax];
                            sin2_sin2_antiderivative(a, b, hi[ax]) - sin2_sin2_antiderivative(a, b, lo[ax])
                        })
                        .product::<f64>()
                })
                .sum();
            g[(i, j)] = c * total;
            g[(j, i)] = c * total;
        }
    }
    g
}

fn quadrature_gram(sys: &EigenSystem, q: &crate::quadrature::Quadrature) -> Result<DMatrix<f64>> {
    let n = sys.len();
    let sq: Vec<Vec<f64>> = (0..n)
        .map(|i| sys.values_on(q, i).map(|v| v.iter().map(|x| x * x).collect()))
        .collect::<Result<_>>()?;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = q.weights().iter().zip(&sq[i]).zip(&sq[j]).map(|((w, a), b)| w * a * b).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// `G_ij = int_omega phi_i^2 phi_j^2` over the masked cells (all cells when `subset` is `None`).
///
/// Cells are those of [`EigenSystem::default_quadrature`]. Closed forms are
/// integrated exactly through antiderivatives and the tolerance is the gap to
/// the tensor quadrature; nodal fields use the mesh rule, with the tolerance
/// taken from the gap to the second-order rule at the cell barycentres and edge
/// midpoints.
pub fn squared_gram(sys: &EigenSystem, subset: Option<&[bool]>) -> Result<GramReport> {
    let q_full = sys.default_quadrature()?;
    let mask: Vec<bool> = match subset {
        Some(m) => m.to_vec(),
        None => vec![true; q_full.num_cells()],
    };
    let q = q_full.restricted(&mask)?;
    let subset_measure: f64 = q.cell_areas().iter().zip(&mask).filter(|(_, m)| **m).map(|(a, _)| a).sum();
    if subset_measure <= 0.0 {
        return Err(invalid("subset has zero measure"));
    }
    let quad = quadrature_gram(sys, &q)?;
    let (g, tolerance, exact) = match sys.functions() {
        Eigenfunctions::ClosedForm { orthotope, .. } => {
            let cells = orthotope_cells(orthotope, &q_full, &mask);
            let g = closed_form_gram(orthotope, sys, &cells);
            let tol = (&g - &quad).abs().max().max(f64::EPSILON * g.abs().max() * 16.0);
            (g, tol, true)
        }
        Eigenfunctions::Nodal { mesh, values } => {
            let low = low_order_gram(mesh, values, &mask);
            let tol = (&quad - &low).abs().max();
            (quad, tol, false)
        }
    };
    let eig = SymmetricEigen::new(g.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(GramReport {
        matrix: g.row_iter().map(|r| r.iter().cloned().collect()).collect(),
        min_eigenvalue: eigenvalues[0],
        eigenvalues,
        quadrature_tolerance: tolerance,
        exact_integration: exact,
        subset_measure,
    })
}

fn orthotope_cells(ortho: &Orthotope, q: &crate::quadrature::Quadrature, mask: &[bool]) -> Vec<(Vec<f64>, Vec<f64>)> {
    // tensor grid: recover the cell boxes from the cell count per axis
    let d = ortho.dim();
    let per_axis = (q.num_cells() as f64).powf(1.0 / d as f64).round() as usize;
    let widths: Vec<f64> = (0..d).map(|i| ortho.side(i) / per_axis as f64).collect();
    (0..q.num_cells())
        .filter(|&c| mask[c])
        .map(|c| {
            let mut idx = c;
            let mut lo = Vec::with_capacity(d);
            let mut hi = Vec::with_capacity(d);
            for w in &widths {
                let k = idx % per_axis;
                idx /= per_axis;
                lo.push(k as f64 * w);
                hi.push((k + 1) as f64 * w);
            }
            (lo, hi)
        })
        .collect()
}

// Edge-midpoint rule (degree 2), only used to estimate the quadrature error.
fn low_order_gram(mesh: &FemMesh, values: &[Vec<f64>], mask: &[bool]) -> DMatrix<f64> {
    let n = values.len();
    let areas = mesh.cell_areas();
    let mut g = DMatrix::zeros(n, n);
    let mut sq = vec![0.0; n];
    for c in (0..mesh.num_cells()).filter(|&c| mask[c]) {
        let nodes = mesh.cell_nodes(c);
        let pairs: Vec<(usize, usize)> = if nodes.len() == 2 {
            vec![(nodes[0], nodes[1])]
        } else {
            vec![(nodes[0], nodes[1]), (nodes[1], nodes[2]), (nodes[2], nodes[0])]
        };
        let w = areas[c] / pairs.len() as f64;
        for (a, b) in pairs {
            for (s, u) in sq.iter_mut().zip(values) {
                let v = 0.5 * (u[a] + u[b]);
                *s = v * v;
            }
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += w * sq[i] * sq[j];
                }
            }
        }
    }
    g
}

/// Options for the integer-relation search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationSearch {
    pub height: u64,
    pub residual_tol: f64,
    pub budget: u128,
    /// Propose larger-height candidates by lattice reduction.
    pub lattice_pass: bool,
}

impl RelationSearch {
    pub fn new(height: u64) -> Self {
        RelationSearch { height, residual_tol: DEFAULT_RESIDUAL_TOL, budget: DEFAULT_SEARCH_BUDGET, lattice_pass: false }
    }
}

fn check_budget(k: usize, h: u64, budget: u128) -> Result<()> {
    let base = 2 * h as u128 + 1;
    let mut work = k as u128;
    for _ in 0..k {
        work = work.saturating_mul(base);
    }
    if work > budget {
        return Err(Error::Budget { work, budget });
    }
    Ok(())
}

/// Every canonical `q` (first nonzero entry positive, `0 < max|q| <= h`) accepted by `test`.
fn enumerate_relations<F>(k: usize, h: u64, test: F) -> Vec<Vec<i64>>
where
    F: Fn(&[i64]) -> bool + Sync,
{
    let h = h as i64;
    let leads: Vec<(usize, i64)> = (0..k).flat_map(|p| (1..=h).map(move |v| (p, v))).collect();
    leads
        .par_iter()
        .flat_map_iter(|&(p, v)| {
            let mut found = Vec::new();
            let mut q = vec![0i64; k];
            q[p] = v;
            for c in q.iter_mut().skip(p + 1) {
                *c = -h;
            }
            loop {
                if test(&q) {
                    found.push(q.clone());
                }
                // odometer over the free tail
                let mut i = k;
                loop {
                    if i == p + 1 {
                        return found;
                    }
                    i -= 1;
                    if q[i] < h {
                        q[i] += 1;
                        break;
                    }
                    q[i] = -h;
                }
            }
        })
        .collect()
}

fn sort_relations(rel: &mut [RationalRelation]) {
    rel.sort_by(|a, b| {
        a.residual.total_cmp(&b.residual).then(a.height.cmp(&b.height)).then_with(|| a.q.cmp(&b.q))
    });
}

fn relations_report(
    lambdas: &[f64],
    opts: &RelationSearch,
    mut found: Vec<RationalRelation>,
    unverified: Vec<RationalRelation>,
    exact: bool,
) -> PropertyReport {
    let verdict = if found.is_empty() { Verdict::Holds } else { Verdict::Fails };
    let mut rep = PropertyReport::new(PropertyId::Nonresonance, lambdas.len(), verdict)
        .tol("residual_tol", opts.residual_tol);
    rep.height = Some(opts.height);
    rep.exact = exact;
    sort_relations(&mut found);
    let total_found = found.len();
    found.truncate(MAX_REPORTED_RELATIONS);
    if !found.is_empty() || !unverified.is_empty() {
        rep.witness = Some(Witness::Relations { relations: found, total_found, unverified });
    }
    rep.note = Some(if verdict == Verdict::Holds {
        format!("no integer relation with height <= {}; larger heights not examined", opts.height)
    } else {
        "integer relation found".to_string()
    });
    rep
}

/// Exhaustive search for integer relations with `|sum q l| <= tol |lambda|_2 |q|_1`.
pub fn nonresonance_search(lambdas: &[f64], opts: &RelationSearch) -> Result<PropertyReport> {
    let k = lambdas.len();
    if k == 0 || opts.height == 0 {
        return Err(invalid("need at least one eigenvalue and height >= 1"));
    }
    if !(opts.residual_tol >= 0.0) {
        return Err(invalid("residual tolerance must be nonnegative"));
    }
    check_budget(k, opts.height, opts.budget)?;
    let scale = lambdas.iter().map(|l| l * l).sum::<f64>().sqrt();
    let tol = opts.residual_tol * scale;
    let hits = enumerate_relations(k, opts.height, |q| {
        let l1: i64 = q.iter().map(|c| c.abs()).sum();
        relation_residual(q, lambdas) <= tol * l1 as f64
    });
    let found = hits.into_iter().map(|q| RationalRelation::new(q, lambdas)).collect::<Result<Vec<_>>>()?;
    let unverified = if opts.lattice_pass { lattice_candidates(lambdas, opts) } else { Vec::new() };
    Ok(relations_report(lambdas, opts, found, unverified, false))
}

/// Exact relation search on quadratic-field eigenvalues.
pub fn nonresonance_search_exact(spectrum: &ExactSpectrum, opts: &RelationSearch) -> Result<PropertyReport> {
    let k = spectrum.values.len();
    if k == 0 || opts.height == 0 {
        return Err(invalid("need at least one eigenvalue and height >= 1"));
    }
    check_budget(k, opts.height, opts.budget)?;
    let (a, b) = spectrum.integer_coordinates();
    let hits = enumerate_relations(k, opts.height, |q| {
        let sa: i128 = q.iter().zip(&a).map(|(&c, x)| c as i128 * x).sum();
        let sb: i128 = q.iter().zip(&b).map(|(&c, x)| c as i128 * x).sum();
        sa == 0 && sb == 0
    });
    let lambdas: Vec<f64> = spectrum.values.iter().map(|v| v.to_f64()).collect();
    let found = hits.into_iter().map(|q| RationalRelation::new(q, &lambdas)).collect::<Result<Vec<_>>>()?;
    let mut opts = *opts;
    opts.residual_tol = 0.0;
    Ok(relations_report(&lambdas, &opts, found, Vec::new(), true))
}

/// Runs the exact search when the system is a recognized closed form, the float search otherwise.
pub fn check_nonresonance(sys: &EigenSystem, opts: &RelationSearch) -> Result<PropertyReport> {
    match exact_spectrum(sys) {
        Some(ex) => nonresonance_search_exact(&ex, opts),
        None => nonresonance_search(sys.lambdas(), opts),
    }
}

/// LLL-reduced basis of `[I | C lambda]`; short vectors beyond the searched height are candidates.
fn lattice_candidates(lambdas: &[f64], opts: &RelationSearch) -> Vec<RationalRelation> {
    let k = lambdas.len();
    if k < 2 {
        return Vec::new();
    }
    let scale = 1.0 / (opts.residual_tol.max(1e-14) * lambdas.iter().map(|l| l * l).sum::<f64>().sqrt());
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row = vec![0.0; k + 1];
            row[i] = 1.0;
            row[k] = scale * lambdas[i];
            row
        })
        .collect();
    lll_reduce(&mut basis, 0.75);
    let mut out: Vec<RationalRelation> = basis
        .iter()
        .filter_map(|row| {
            let mut q: Vec<i64> = row[..k].iter().map(|v| v.round() as i64).collect();
            if q.iter().all(|&c| c == 0) {
                return None;
            }
            if q.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0) {
                q.iter_mut().for_each(|c| *c = -*c);
            }
            let rel = RationalRelation::new(q, lambdas).ok()?;
            let l1: i64 = rel.q.iter().map(|c| c.abs()).sum();
            let ok = rel.height > opts.height
                && rel.residual <= opts.residual_tol * lambdas.iter().map(|l| l * l).sum::<f64>().sqrt() * l1 as f64;
            ok.then_some(rel)
        })
        .collect();
    sort_relations(&mut out);
    out.dedup_by(|a, b| a.q == b.q);
    out
}

/// Textbook LLL in floating point (Gram-Schmidt recomputed after each change).
fn lll_reduce(b: &mut [Vec<f64>], delta: f64) {
    let n = b.len();
    let gs = |b: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut bs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut mu = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut v = b[i].clone();
            for j in 0..i {
                let d: f64 = bs[j].iter().map(|x| x * x).sum();
                mu[i][j] = b[i].iter().zip(&bs[j]).map(|(x, y)| x * y).sum::<f64>() / d;
                v.iter_mut().zip(&bs[j]).for_each(|(x, y)| *x -= mu[i][j] * y);
            }
            bs.push(v);
        }
        (bs, mu)
    };
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (_, mu) = gs(b);
            let r = mu[k][j].round();
            if r != 0.0 {
                let bj = b[j].clone();
                b[k].iter_mut().zip(&bj).for_each(|(x, y)| *x -= r * y);
            }
        }
        let (bs, mu) = gs(b);
        let nk: f64 = bs[k].iter().map(|x| x * x).sum();
        let nk1: f64 = bs[k - 1].iter().map(|x| x * x).sum();
        if nk >= (delta - mu[k][k - 1] * mu[k][k - 1]) * nk1 {
            k += 1;
        } else {
            b.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
}

/// An analytic functional of `n(n+1)` arguments: `n^2` eigenfunction values in
/// point-major order `phi_1(x_1), .., phi_n(x_1), .., phi_n(x_n)`, then `lambda_1..lambda_n`.
pub struct Functional {
    arity: usize,
    f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl Functional {
    pub fn new(arity: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Functional { arity, f: Box::new(f) }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Last argument, i.e. `lambda_n`.
    pub fn last_argument(n: usize) -> Self {
        Self::new(n * (n + 1), |y| y[y.len() - 1])
    }

    /// Determinant of the squared value matrix, rows indexed by points.
    pub fn squared_determinant(n: usize) -> Self {
        Self::new(n * (n + 1), move |y| DMatrix::from_fn(n, n, |i, j| y[i * n + j] * y[i * n + j]).determinant())
    }

    /// `sum_l q_l lambda_l`.
    pub fn eigenvalue_combination(q: Vec<i64>) -> Self {
        let n = q.len();
        Self::new(n * (n + 1), move |y| q.iter().zip(&y[n * n..]).map(|(&c, l)| c as f64 * l).sum())
    }

    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        if args.len() != self.arity {
            return Err(invalid(format!("functional takes {} arguments, got {}", self.arity, args.len())));
        }
        Ok((self.f)(args))
    }
}

/// `F_n(phi_1(x_1), .., phi_n(x_n), lambda_1, .., lambda_n)`.
pub fn generic_fn(sys: &EigenSystem, points: &[Vec<f64>], functional: &Functional) -> Result<f64> {
    let n = sys.len();
    if functional.arity() != n * (n + 1) {
        return Err(invalid(format!("functional arity {} differs from n(n+1) = {}", functional.arity(), n * (n + 1))));
    }
    if points.len() != n {
        return Err(invalid(format!("need {n} points, got {}", points.len())));
    }
    let cols = (0..n).map(|j| evaluate_eigenfunction(sys, j, points)).collect::<Result<Vec<_>>>()?;
    let mut args = Vec::with_capacity(n * (n + 1));
    for i in 0..n {
        for c in &cols {
            args.push(c[i]);
        }
    }
    args.extend_from_slice(sys.lambdas());
    functional.eval(&args)
}
