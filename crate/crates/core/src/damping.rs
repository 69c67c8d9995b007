//! Damping placement: choose where to put a fixed area of damping so the
//! weakest of the first `N` modes is damped as much as possible.
//!
//! The relaxed design is a per-cell density `a` in `[0, 1]`, and the problem
//!
//! ```text
//! max t   s.t.  sum_c a_c w_{n,c} >= t  (n < N),   sum_c a_c area_c = budget,   0 <= a_c <= 1
//! ```
//!
//! with `w_{n,c}` the integral of `phi_n^2` over cell `c` is a linear program
//! with `N + 1` rows. It is solved by a dense revised simplex on bounded
//! variables, and the answer is certified by the gap to a dual value built
//! from the simplex multipliers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{EigenSystem, Eigenfunctions};
use crate::error::{invalid, Error, Result};
use crate::quadrature::Quadrature;

/// Half-width of the intermediate band `{eps <= a <= 1 - eps}`.
pub const DEFAULT_BANG_BANG_EPS: f64 = 1e-3;

/// Relative duality gap accepted as an optimality certificate.
pub const DUALITY_GAP_TOL: f64 = 1e-8;

/// Per-cell damping density with its area budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingDensity {
    pub values: Vec<f64>,
    pub budget: f64,
    pub cell_areas: Vec<f64>,
}

impl DampingDensity {
    /// Checks bounds and the budget; `values` and `cell_areas` must match.
    pub fn new(values: Vec<f64>, cell_areas: Vec<f64>) -> Result<Self> {
        if values.len() != cell_areas.len() {
            return Err(invalid(format!("{} density values for {} cells", values.len(), cell_areas.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("density value {v} outside [0, 1]")));
        }
        let budget = values.iter().zip(&cell_areas).map(|(a, s)| a * s).sum();
        Ok(DampingDensity { values, budget, cell_areas })
    }

    /// `a = budget / |Omega|` everywhere.
    pub fn uniform(cell_areas: Vec<f64>, budget: f64) -> Result<Self> {
        let total: f64 = cell_areas.iter().sum();
        if !(0.0..=total).contains(&budget) {
            return Err(invalid(format!("budget {budget} outside [0, {total}]")));
        }
        Self::new(vec![budget / total; cell_areas.len()], cell_areas)
    }

    /// Indicator of the cells whose flag is set.
    pub fn indicator(cell_areas: Vec<f64>, inside: &[bool]) -> Result<Self> {
        Self::new(inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(), cell_areas)
    }

    pub fn measure(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    /// Area of `{eps <= a <= 1 - eps}` and the number of its cells.
    pub fn intermediate(&self, eps: f64) -> (f64, usize) {
        self.values
            .iter()
            .zip(&self.cell_areas)
            .filter(|(a, _)| **a >= eps && **a <= 1.0 - eps)
            .fold((0.0, 0), |(s, k), (_, area)| (s + area, k + 1))
    }
}

/// Cells on which densities of `sys` live: the mesh triangles (or intervals)
/// for discretized systems, a uniform box grid for orthotopes.
pub fn damping_cells(sys: &EigenSystem) -> Result<Quadrature> {
    match sys.functions() {
        Eigenfunctions::Nodal { mesh, .. } => Ok(Quadrature::mesh_midpoint(mesh)),
        Eigenfunctions::ClosedForm { orthotope, .. } => {
            let cells = match orthotope.dim() {
                1 => 2048,
                2 => 96,
                3 => 20,
                _ => 8,
            };
            Quadrature::orthotope_grid(orthotope, cells, 3)
        }
    }
}

/// `w[n][c]`: integral of `phi_n^2` over cell `c`, for the first `count` modes.
pub fn modal_weights(sys: &EigenSystem, cells: &Quadrature, count: usize) -> Result<Vec<Vec<f64>>> {
    if count > sys.len() {
        return Err(invalid(format!("{count} modes requested from a system with {}", sys.len())));
    }
    (0..count)
        .into_par_iter()
        .map(|n| {
            let phi = sys.values_on(cells, n)?;
            let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
            Ok(cells.cell_integrals(&sq))
        })
        .collect()
}

fn check_density(cells: &Quadrature, density: &DampingDensity) -> Result<()> {
    if density.values.len() != cells.num_cells() {
        return Err(invalid(format!(
            "density has {} cells, the system's damping grid has {}",
            density.values.len(),
            cells.num_cells()
        )));
    }
    Ok(())
}

fn damped_masses(weights: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    weights.iter().map(|w| w.iter().zip(a).map(|(w, a)| w * a).sum()).collect()
}

/// `min_{n < big_n} int a phi_n^2`.
pub fn evaluate_jn(sys: &EigenSystem, density: &DampingDensity, big_n: usize) -> Result<f64> {
    if big_n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let cells = damping_cells(sys)?;
    check_density(&cells, density)?;
    let w = modal_weights(sys, &cells, big_n)?;
    Ok(damped_masses(&w, &density.values).into_iter().fold(f64::INFINITY, f64::min))
}

/// Optimal relaxed density with its certificate.
#[derive(Debug, Clone, Serialize)]
pub struct DampingSolution {
    pub density: DampingDensity,
    pub j_value: f64,
    /// Modes whose damped mass equals the minimum (relative tolerance 1e-9).
    pub active_modes: Vec<usize>,
    /// Simplex multipliers of the mode constraints: a probability vector.
    pub multipliers: Vec<f64>,
    /// Multiplier of the budget row.
    pub budget_multiplier: f64,
    pub intermediate_measure: f64,
    pub intermediate_cells: usize,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Some nonbasic cell has zero reduced cost, so other optimal vertices may exist.
    pub alternative_optima: bool,
    #[serde(skip)]
    weights: Vec<Vec<f64>>,
}

impl DampingSolution {
    /// Damped masses `int a phi_n^2` of every constrained mode.
    pub fn damped_masses(&self) -> Vec<f64> {
        damped_masses(&self.weights, &self.density.values)
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

/// Bounded-variable revised simplex for the max-min damping LP.
///
/// Columns: cells `0..C` in `[0, 1]`, then `t`, then the surplus of each mode
/// row, both in `[0, inf)`. Rows: the budget, then one row per mode.
struct Lp<'a> {
    weights: &'a [Vec<f64>],
    areas: &'a [f64],
    budget: f64,
}

struct LpResult {
    a: Vec<f64>,
    y: Vec<f64>,
    iterations: usize,
    alternative_optima: bool,
}

impl Lp<'_> {
    fn cells(&self) -> usize {
        self.areas.len()
    }

    fn rows(&self) -> usize {
        self.weights.len() + 1
    }

    fn column(&self, j: usize) -> DVector<f64> {
        let (c, m) = (self.cells(), self.rows());
        let mut col = DVector::zeros(m);
        if j < c {
            col[0] = self.areas[j];
            for (n, w) in self.weights.iter().enumerate() {
                col[n + 1] = w[j];
            }
        } else if j == c {
            for n in 1..m {
                col[n] = -1.0;
            }
        } else {
            col[j - c] = -1.0;
        }
        col
    }

    fn dot_column(&self, y: &DVector<f64>, j: usize) -> f64 {
        let c = self.cells();
        if j < c {
            y[0] * self.areas[j] + self.weights.iter().enumerate().map(|(n, w)| y[n + 1] * w[j]).sum::<f64>()
        } else if j == c {
            -(1..self.rows()).map(|n| y[n]).sum::<f64>()
        } else {
            -y[j - c]
        }
    }

    fn upper(&self, j: usize) -> f64 {
        if j < self.cells() {
            1.0
        } else {
            f64::INFINITY
        }
    }

    fn cost(&self, j: usize) -> f64 {
        if j == self.cells() {
            -1.0
        } else {
            0.0
        }
    }

    fn solve(&self) -> Result<LpResult> {
        let (c, m) = (self.cells(), self.rows());
        let nvars = c + m;
        let scale = self.weights.iter().flatten().chain(self.areas).fold(0.0f64, |s, v| s.max(v.abs()));
        let price_tol = 1e-11 * scale.max(1e-300);
        let pivot_tol = 1e-12;

        // greedy start: fill cells by total damped mass per area
        let mut order: Vec<usize> = (0..c).collect();
        let density = |j: usize| self.weights.iter().map(|w| w[j]).sum::<f64>() / self.areas[j];
        order.sort_by(|&i, &j| density(j).total_cmp(&density(i)).then(i.cmp(&j)));
        let mut status = vec![Status::Lower; nvars];
        let mut left = self.budget;
        let mut frac = order[c - 1];
        for &j in &order {
            if self.areas[j] < left {
                status[j] = Status::Upper;
                left -= self.areas[j];
            } else {
                frac = j;
                break;
            }
        }
        let mut basis: Vec<usize> = std::iter::once(frac).chain(c + 1..c + m).collect();
        status[frac] = Status::Basic;
        for &j in &basis[1..] {
            status[j] = Status::Basic;
        }

        let b = {
            let mut b = DVector::zeros(m);
            b[0] = self.budget;
            b
        };
        let max_iter = 50 * (nvars + m) + 1000;
        let mut degenerate_streak = 0usize;
        for iteration in 0..max_iter {
            let bmat = DMatrix::from_columns(&basis.iter().map(|&j| self.column(j)).collect::<Vec<_>>());
            let binv = bmat
                .try_inverse()
                .ok_or_else(|| Error::Internal("simplex basis became singular".into()))?;
            let mut rhs = b.clone();
            for j in (0..c).filter(|&j| status[j] == Status::Upper) {
                rhs -= self.column(j);
            }
            let xb = &binv * rhs;
            let cb = DVector::from_iterator(m, basis.iter().map(|&j| self.cost(j)));
            let y = binv.transpose() * cb;

            let improving = |j: usize| -> Option<f64> {
                let d = self.cost(j) - self.dot_column(&y, j);
                match status[j] {
                    Status::Lower if d < -price_tol => Some(-d),
                    Status::Upper if d > price_tol => Some(d),
                    _ => None,
                }
            };
            // Dantzig pricing, Bland's rule once pivots stall
            let entering = if degenerate_streak < 50 {
                (0..nvars)
                    .filter_map(|j| improving(j).map(|d| (j, d)))
                    .fold(None, |best: Option<(usize, f64)>, (j, d)| match best {
                        Some((_, bd)) if bd >= d => best,
                        _ => Some((j, d)),
                    })
                    .map(|(j, _)| j)
            } else {
                (0..nvars).find(|&j| improving(j).is_some())
            };
            let Some(q) = entering else {
                let x_basic: Vec<(usize, f64)> = basis.iter().copied().zip(xb.iter().copied()).collect();
                let mut a: Vec<f64> = (0..c).map(|j| if status[j] == Status::Upper { 1.0 } else { 0.0 }).collect();
                for (j, v) in x_basic.into_iter().filter(|(j, _)| *j < c) {
                    a[j] = v.clamp(0.0, 1.0);
                }
                let alternative_optima = (0..c)
                    .any(|j| status[j] != Status::Basic && (self.cost(j) - self.dot_column(&y, j)).abs() <= price_tol);
                return Ok(LpResult { a, y: y.iter().copied().collect(), iterations: iteration, alternative_optima });
            };

            let dir = if status[q] == Status::Upper { -1.0 } else { 1.0 };
            let u = &binv * self.column(q);
            // (step, leaving position or None for a bound flip, bound hit)
            let mut best: Option<(f64, Option<usize>, Status)> =
                self.upper(q).is_finite().then_some((self.upper(q), None, Status::Lower));
            for i in 0..m {
                let rate = dir * u[i];
                let j = basis[i];
                let cand = if rate > pivot_tol {
                    Some(((xb[i]).max(0.0) / rate, Status::Lower))
                } else if rate < -pivot_tol && self.upper(j).is_finite() {
                    Some(((self.upper(j) - xb[i]).max(0.0) / -rate, Status::Upper))
                } else {
                    None
                };
                if let Some((step, hit)) = cand {
                    let better = match best {
                        None => true,
                        Some((s, None, _)) => step < s,
                        Some((s, Some(p), _)) => step < s || (step == s && j < basis[p]),
                    };
                    if better {
                        best = Some((step, Some(i), hit));
                    }
                }
            }
            let Some((step, leave, hit)) = best else {
                return Err(Error::Internal("damping LP is unbounded".into()));
            };
            degenerate_streak = if step <= 0.0 { degenerate_streak + 1 } else { 0 };
            match leave {
                None => {
                    status[q] = if status[q] == Status::Upper { Status::Lower } else { Status::Upper };
                }
                Some(p) => {
                    status[basis[p]] = hit;
                    status[q] = Status::Basic;
                    basis[p] = q;
                }
            }
        }
        Err(Error::Internal(format!("damping LP did not terminate in {max_iter} iterations")))
    }
}

/// Dual objective `budget mu + sum_c max(0, sum_n alpha_n w_{n,c} - mu area_c)`, an upper bound on `t*`
/// for any probability vector `alpha`.
pub fn dual_value(weights: &[Vec<f64>], areas: &[f64], budget: f64, alpha: &[f64], mu: f64) -> f64 {
    budget * mu
        + (0..areas.len())
            .map(|c| {
                let g: f64 = alpha.iter().zip(weights).map(|(a, w)| a * w[c]).sum();
                (g - mu * areas[c]).max(0.0)
            })
            .sum::<f64>()
}

/// Solves the relaxed placement problem for the first `big_n` modes with area `budget`.
pub fn optimize_relaxed(sys: &EigenSystem, budget: f64, big_n: usize) -> Result<DampingSolution> {
    let cells = damping_cells(sys)?;
    let weights = modal_weights(sys, &cells, big_n.max(1))?;
    optimize_weights(weights, cells.cell_areas().to_vec(), budget)
}

/// The placement LP for explicit cell weights `w[n][c]`.
pub fn optimize_weights(weights: Vec<Vec<f64>>, areas: Vec<f64>, budget: f64) -> Result<DampingSolution> {
    if weights.is_empty() {
        return Err(invalid("N must be at least 1"));
    }
    if weights.iter().any(|w| w.len() != areas.len()) {
        return Err(invalid("weight rows do not match the cells"));
    }
    let total: f64 = areas.iter().sum();
    if !(budget > 0.0 && budget < total * (1.0 - 1e-12)) {
        return Err(Error::Precondition(format!("budget {budget} must lie strictly between 0 and |Omega| = {total}")));
    }
    // the pivot path depends only on the weights up to a common factor
    let wmax = weights.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(wmax > 0.0 && wmax.is_finite()) {
        return Err(invalid("cell weights must be finite and not all zero"));
    }
    let normalized: Vec<Vec<f64>> = weights.iter().map(|w| w.iter().map(|v| v / wmax).collect()).collect();
    let lp = Lp { weights: &normalized, areas: &areas, budget };
    let res = lp.solve()?;
    let alpha: Vec<f64> = res.y[1..].iter().map(|v| v.max(0.0)).collect();
    let mu = -res.y[0] * wmax;
    let dual = dual_value(&weights, &areas, budget, &alpha, mu);
    let masses = damped_masses(&weights, &res.a);
    let j_value = masses.iter().copied().fold(f64::INFINITY, f64::min);
    let gap = dual - j_value;
    if gap.abs() > DUALITY_GAP_TOL * j_value.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!("damping LP duality gap {gap:e} exceeds tolerance (t* = {j_value})")));
    }
    let active_modes = (0..masses.len()).filter(|&n| masses[n] - j_value <= 1e-9 * j_value.abs()).collect();
    let mut density = DampingDensity::new(res.a, areas)?;
    density.budget = budget;
    let (intermediate_measure, intermediate_cells) = density.intermediate(DEFAULT_BANG_BANG_EPS);
    Ok(DampingSolution {
        density,
        j_value,
        active_modes,
        multipliers: alpha,
        budget_multiplier: mu,
        intermediate_measure,
        intermediate_cells,
        dual_value: dual,
        duality_gap: gap,
        iterations: res.iterations,
        alternative_optima: res.alternative_optima,
        weights,
    })
}

/// Size of the intermediate band and the spread of the optimality condition on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BangBangReport {
    pub intermediate_area: f64,
    pub intermediate_cells: usize,
    /// Area-weighted standard deviation of `sum_n alpha_n phi_n^2` over the band.
    pub residual: f64,
}

/// Measures `{eps <= a* <= 1 - eps}` and how constant `sum_n alpha_n phi_n^2` is there.
pub fn bang_bang_report(sol: &DampingSolution, eps: f64) -> Result<BangBangReport> {
    if !(0.0..0.5).contains(&eps) {
        return Err(invalid(format!("eps {eps} must lie in [0, 0.5)")));
    }
    let d = &sol.density;
    let band: Vec<usize> = (0..d.values.len()).filter(|&c| d.values[c] >= eps && d.values[c] <= 1.0 - eps).collect();
    if band.is_empty() {
        return Ok(BangBangReport { intermediate_area: 0.0, intermediate_cells: 0, residual: 0.0 });
    }
    let g = |c: usize| -> f64 {
        sol.multipliers.iter().zip(&sol.weights).map(|(a, w)| a * w[c]).sum::<f64>() / d.cell_areas[c]
    };
    let area: f64 = band.iter().map(|&c| d.cell_areas[c]).sum();
    let mean = band.iter().map(|&c| g(c) * d.cell_areas[c]).sum::<f64>() / area;
    let var = band.iter().map(|&c| (g(c) - mean).powi(2) * d.cell_areas[c]).sum::<f64>() / area;
    Ok(BangBangReport { intermediate_area: area, intermediate_cells: band.len(), residual: var.sqrt() })
}

/// Decay rate of the damped wave equation projected on the first `m` modes:
/// `-max Re s` over the pencil `s^2 I + 2 k s B + Lambda`, `B_ij = int a phi_i phi_j`.
/// A truncated-modal estimate; compare several `m`.
pub fn modal_decay_rate(sys: &EigenSystem, density: &DampingDensity, k_damp: f64, m: usize) -> Result<f64> {
    if m == 0 || m > sys.len() {
        return Err(invalid(format!("need 1 <= M <= {} modes, got {m}", sys.len())));
    }
    if !(k_damp >= 0.0 && k_damp.is_finite()) {
        return Err(invalid(format!("damping coefficient {k_damp} must be nonnegative")));
    }
    let cells = damping_cells(sys)?;
    check_density(&cells, density)?;
    let a_at: Vec<f64> = cells.cell_of().iter().map(|&c| density.values[c]).collect();
    let phi: Vec<Vec<f64>> = (0..m).map(|i| sys.values_on(&cells, i)).collect::<Result<_>>()?;
    let mut bmat = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: Vec<f64> = (0..cells.len()).map(|q| a_at[q] * phi[i][q] * phi[j][q]).collect();
            let s = cells.integrate(&v);
            bmat[(i, j)] = s;
            bmat[(j, i)] = s;
        }
    }
    let mut comp = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        comp[(i, m + i)] = 1.0;
        comp[(m + i, i)] = -sys.lambdas()[i];
        for j in 0..m {
            comp[(m + i, m + j)] = -2.0 * k_damp * bmat[(i, j)];
        }
    }
    let schur = nalgebra::linalg::Schur::try_new(comp, 1e-14, 100_000)
        .ok_or_else(|| Error::Numerical("companion eigensolve did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    Ok(-eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp_matches_hand_solution() {
        // two cells of area 1, weights (1, 0) and (0, 1), budget 1: a = (1/2, 1/2), t = 1/2
        let w = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = optimize_weights(w, vec![1.0, 1.0], 1.0).unwrap();
        assert!((s.j_value - 0.5).abs() < 1e-14);
        assert!((s.multipliers[0] - 0.5).abs() < 1e-12 && (s.multipliers[1] - 0.5).abs() < 1e-12);
        assert_eq!(s.active_modes, vec![0, 1]);
        assert!(s.duality_gap.abs() < 1e-14);
    }

    #[test]
    fn single_mode_fills_heaviest_cells() {
        let w = vec![vec![0.1, 0.4, 0.3, 0.2]];
        let s = optimize_weights(w, vec![1.0; 4], 1.5).unwrap();
        assert_eq!(s.density.values, vec![0.0, 1.0, 0.5, 0.0]);
        assert!((s.j_value - 0.55).abs() < 1e-14);
        assert_eq!(s.intermediate_cells, 1);
    }

    #[test]
    fn budget_precondition() {
        let w = vec![vec![1.0, 1.0]];
        assert!(matches!(optimize_weights(w.clone(), vec![1.0, 1.0], 2.0), Err(Error::Precondition(_))));
        assert!(matches!(optimize_weights(w, vec![1.0, 1.0], 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn density_validation() {
        assert!(DampingDensity::new(vec![1.2], vec![1.0]).is_err());
        assert!(DampingDensity::new(vec![0.5], vec![1.0, 1.0]).is_err());
        let d = DampingDensity::uniform(vec![1.0, 3.0], 2.0).unwrap();
        assert_eq!(d.values, vec![0.5, 0.5]);
        assert_eq!(d.intermediate(1e-3), (4.0, 2));
    }
}
