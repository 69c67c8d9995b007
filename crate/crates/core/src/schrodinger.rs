//! Controllability precheck for the bilinear Schrödinger equation
//! `i psi_t = -Delta psi + u(t) W psi` with Dirichlet conditions.
//!
//! The sufficient condition asks for a non-resonant spectrum and nonzero
//! couplings `int W phi_k phi_{k+1}` for every `k`. Only finitely many modes and
//! a finite relation height can be checked, so a passing report is evidence,
//! not a proof.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigensolver::EigenSystem;
use crate::error::{invalid, Error, Result};
use crate::exact::ExactSpectrum;
use crate::quadrature::Quadrature;
use crate::spectral_props::{
    exact_spectrum, nonresonance_search, nonresonance_search_exact, PropertyReport, RelationSearch, Verdict,
};

/// Couplings below `COUPLING_TOL_FACTOR * sup |W|` count as vanishing.
pub const COUPLING_TOL_FACTOR: f64 = 1e-8;

pub const FINITE_CHECK_NOTE: &str = "finite-mode, finite-height necessary-evidence check; \
     the coupling condition is required for every k and non-resonance for every finite family";

/// `coef * prod_i x_i^powers[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Control potential `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Polynomial { terms: Vec<Monomial> },
    /// One value per cell of the system's default quadrature.
    Cells { values: Vec<f64> },
}

impl Potential {
    pub fn constant(c: f64) -> Self {
        Potential::Polynomial { terms: vec![Monomial { coef: c, powers: vec![] }] }
    }

    /// `W(x) = x_axis`.
    pub fn coordinate(axis: usize) -> Self {
        let mut powers = vec![0; axis + 1];
        powers[axis] = 1;
        Potential::Polynomial { terms: vec![Monomial { coef: 1.0, powers }] }
    }

    /// Samples at every point of `q`.
    pub fn sample(&self, q: &Quadrature) -> Result<Vec<f64>> {
        match self {
            Potential::Polynomial { terms } => {
                if let Some(t) = terms.iter().find(|t| t.powers.len() > q.dim()) {
                    return Err(invalid(format!("monomial {:?} has more variables than the domain", t.powers)));
                }
                Ok(q.sample(|x| self.eval(x).unwrap_or(f64::NAN)))
            }
            Potential::Cells { values } => {
                if values.len() != q.num_cells() {
                    return Err(invalid(format!("{} cell samples for {} cells", values.len(), q.num_cells())));
                }
                Ok(q.cell_of().iter().map(|&c| values[c]).collect())
            }
        }
    }

    /// Pointwise value; `None` for per-cell samples.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            Potential::Polynomial { terms } => Some(
                terms
                    .iter()
                    .map(|t| t.coef * t.powers.iter().zip(x).map(|(&p, xi)| xi.powi(p as i32)).product::<f64>())
                    .sum(),
            ),
            Potential::Cells { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Potential::Polynomial { terms } => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|t| {
                        let vars: Vec<String> = t
                            .powers
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0)
                            .map(|(i, &p)| if p == 1 { format!("x{}", i + 1) } else { format!("x{}^{p}", i + 1) })
                            .collect();
                        if vars.is_empty() {
                            format!("{:?}", t.coef)
                        } else {
                            format!("{:?}*{}", t.coef, vars.join("*"))
                        }
                    })
                    .collect();
                if parts.is_empty() {
                    "0".into()
                } else {
                    parts.join(" + ")
                }
            }
            Potential::Cells { values } => format!("per-cell samples ({} cells)", values.len()),
        }
    }
}

/// JSON, or a polynomial such as `x1`, `2.5`, `x1^2 - 0.5*x1*x2 + 1`.
impl FromStr for Potential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return Ok(serde_json::from_str(s)?);
        }
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(invalid("empty potential"));
        }
        let mut terms = Vec::new();
        let mut start = 0;
        let bytes = compact.as_bytes();
        for i in 1..=bytes.len() {
            let split = i == bytes.len() || ((bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E' | b'^'));
            if split {
                terms.push(parse_monomial(&compact[start..i])?);
                start = i;
            }
        }
        Ok(Potential::Polynomial { terms })
    }
}

fn parse_monomial(t: &str) -> Result<Monomial> {
    let bad = || invalid(format!("cannot parse potential term {t:?}"));
    let (sign, body) = match t.as_bytes().first() {
        Some(b'-') => (-1.0, &t[1..]),
        Some(b'+') => (1.0, &t[1..]),
        _ => (1.0, t),
    };
    let mut coef = sign;
    let mut powers: Vec<u32> = Vec::new();
    for factor in body.split('*') {
        if let Some(var) = factor.strip_prefix('x') {
            let (idx, pow) = var.split_once('^').unwrap_or((var, "1"));
            let i: usize = idx.parse().map_err(|_| bad())?;
            let p: u32 = pow.parse().map_err(|_| bad())?;
            if i == 0 {
                return Err(bad());
            }
            if powers.len() < i {
                powers.resize(i, 0);
            }
            powers[i - 1] += p;
        } else {
            coef *= factor.parse::<f64>().map_err(|_| bad())?;
        }
    }
    Ok(Monomial { coef, powers })
}

/// `int W phi_k phi_{k+1}` for `k < n - 1` (0-based), with the sampled sup norm of `W`.
pub fn coupling_integrals(sys: &EigenSystem, w: &Potential, n: usize) -> Result<(Vec<f64>, f64)> {
    if n < 2 || n > sys.len() {
        return Err(invalid(format!("need 2 <= n <= {} modes, got {n}", sys.len())));
    }
    let q = sys.default_quadrature()?;
    let wv = w.sample(&q)?;
    let sup = wv.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if !sup.is_finite() {
        return Err(invalid("potential is not bounded on the domain"));
    }
    let phi: Vec<Vec<f64>> = (0..n).map(|i| sys.values_on(&q, i)).collect::<Result<_>>()?;
    let couplings = (0..n - 1)
        .map(|k| {
            let v: Vec<f64> = (0..q.len()).map(|p| wv[p] * phi[k][p] * phi[k + 1][p]).collect();
            q.integrate(&v)
        })
        .collect();
    Ok((couplings, sup))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ControlVerdict {
    ConditionsMet,
    /// 1-based index of the first vanishing coupling `int W phi_k phi_{k+1}`.
    CouplingFails { k: usize },
    ResonanceFound,
    /// The relation search found only unverified candidates.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControllabilityReport {
    pub n_modes: usize,
    pub potential: String,
    pub couplings: Vec<f64>,
    pub coupling_tol: f64,
    pub vanishing: Vec<bool>,
    pub nonresonance: PropertyReport,
    pub verdict: ControlVerdict,
    pub note: &'static str,
}

/// Relation search on the first `n` eigenvalues, exact when the closed form allows it.
fn nonresonance_first(sys: &EigenSystem, n: usize, opts: &RelationSearch) -> Result<PropertyReport> {
    match exact_spectrum(sys) {
        Some(ex) => {
            let head = ExactSpectrum { values: ex.values[..n].to_vec(), radicand: ex.radicand };
            nonresonance_search_exact(&head, opts)
        }
        None => nonresonance_search(&sys.lambdas()[..n], opts),
    }
}

fn combine(couplings: Vec<f64>, sup: f64, nonresonance: PropertyReport, n: usize, w: &Potential) -> ControllabilityReport {
    let coupling_tol = COUPLING_TOL_FACTOR * sup;
    let vanishing: Vec<bool> = couplings.iter().map(|c| c.abs() <= coupling_tol).collect();
    let verdict = match vanishing.iter().position(|&v| v) {
        Some(k) => ControlVerdict::CouplingFails { k: k + 1 },
        None => match nonresonance.verdict {
            Verdict::Holds => ControlVerdict::ConditionsMet,
            Verdict::Fails => ControlVerdict::ResonanceFound,
            Verdict::Inconclusive => ControlVerdict::Inconclusive,
        },
    };
    ControllabilityReport {
        n_modes: n,
        potential: w.describe(),
        couplings,
        coupling_tol,
        vanishing,
        nonresonance,
        verdict,
        note: FINITE_CHECK_NOTE,
    }
}

/// Couplings plus the relation search up to `height`. A vanishing coupling
/// takes precedence in the verdict; the relation report is always included.
pub fn controllability_precheck(sys: &EigenSystem, w: &Potential, n: usize, height: u64) -> Result<ControllabilityReport> {
    let (couplings, sup) = coupling_integrals(sys, w, n)?;
    let nonresonance = nonresonance_first(sys, n, &RelationSearch::new(height))?;
    Ok(combine(couplings, sup, nonresonance, n, w))
}

/// Outcome of [`residual_potential_search`].
#[derive(Debug, Clone, Serialize)]
pub struct PotentialSearch {
    pub attempts: usize,
    pub seed: u64,
    pub degree: u32,
    /// First passing potential, if any.
    pub potential: Option<Potential>,
    pub report: ControllabilityReport,
}

/// Draws random polynomials of total degree `<= degree` (coefficients uniform
/// in `[-1, 1]`) until the precheck passes or `max_attempts` is reached.
/// Stops at once when the spectrum itself is resonant.
pub fn residual_potential_search(
    sys: &EigenSystem,
    n: usize,
    height: u64,
    degree: u32,
    max_attempts: usize,
    seed: u64,
) -> Result<PotentialSearch> {
    if max_attempts == 0 {
        return Err(invalid("need at least one attempt"));
    }
    let d = sys.dim();
    let mut exponents: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..d {
        exponents = exponents
            .into_iter()
            .flat_map(|e| {
                let used: u32 = e.iter().sum();
                (0..=degree - used).map(move |p| {
                    let mut f = e.clone();
                    f.push(p);
                    f
                })
            })
            .collect();
    }
    let nonresonance = nonresonance_first(sys, n, &RelationSearch::new(height))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for attempt in 1..=max_attempts {
        let w = Potential::Polynomial {
            terms: exponents
                .iter()
                .map(|p| Monomial { coef: rng.random_range(-1.0..=1.0), powers: p.clone() })
                .collect(),
        };
        let (couplings, sup) = coupling_integrals(sys, &w, n)?;
        let report = combine(couplings, sup, nonresonance.clone(), n, &w);
        let stop = match report.verdict {
            ControlVerdict::ConditionsMet => Some(Some(w)),
            ControlVerdict::ResonanceFound | ControlVerdict::Inconclusive => Some(None),
            ControlVerdict::CouplingFails { .. } => None,
        };
        if let Some(potential) = stop {
            return Ok(PotentialSearch { attempts: attempt, seed, degree, potential, report });
        }
        last = Some(report);
    }
    Ok(PotentialSearch { attempts: max_attempts, seed, degree, potential: None, report: last.expect("attempted") })
}
