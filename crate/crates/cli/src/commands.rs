use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use speclab_core::damping::{
    bang_bang_report, damping_cells, modal_decay_rate, optimize_relaxed, DampingDensity, DEFAULT_BANG_BANG_EPS,
};
use speclab_core::eigensolver::{
    convergence_study, fem_spectrum_with, orthotope_spectrum_with_gap, ConvergenceTarget, EigenSystem, SolverOptions,
    DEFAULT_GAP_TOL,
};
use speclab_core::fem::FemMesh;
use speclab_core::geometry::{
    flow_deform, make_orthotope, mesh_domain, rectangle_mesh, squashing_field, BallMap, DeformationPath,
    interpolation_path, DiagonalPattern, DomainSpec, IntervalMesh, MeshedDomain, Orthotope, VectorField2D, DEFAULT_RHO,
};
use speclab_core::perturbation::{
    fd_potential_check, fd_shape_check, hadamard_derivative_branch, potential_derivative, track_path,
    BoundaryPerturbation, PotentialAssembly, TrackOptions,
};
use speclab_core::schrodinger::{controllability_precheck, residual_potential_search, Potential};
use speclab_core::spectral_props::{
    check_nonresonance, check_simplicity, squared_gram, squared_independence_search, RelationSearch,
};

use crate::config::{RunConfig, DEFAULT_SEED};
use crate::error::{config, CliError};

/// Result document of one command: the JSON body, an optional CSV table and a
/// short summary for standard output.
pub struct Outcome {
    pub result: Value,
    pub csv: Option<String>,
    pub summary: Value,
}

type Res<T> = Result<T, CliError>;

fn to_value<T: Serialize>(v: &T) -> Res<Value> {
    Ok(serde_json::to_value(v)?)
}

fn domain(cfg: &RunConfig) -> Res<DomainSpec> {
    let text = cfg.domain.as_deref().ok_or_else(|| config("--domain is required"))?;
    text.parse().map_err(|e| config(format!("domain {text:?}: {e}")))
}

fn orthotope(cfg: &RunConfig) -> Res<Orthotope> {
    match domain(cfg)?.orthotope() {
        Some(o) => Ok(o?),
        None => Err(config("this command needs an orthotope domain")),
    }
}

fn solver(cfg: &RunConfig) -> SolverOptions {
    let d = SolverOptions::default();
    SolverOptions {
        tolerance: cfg.tolerance.unwrap_or(d.tolerance),
        max_iterations: cfg.max_iterations.unwrap_or(d.max_iterations),
        gap_tol: cfg.gap_tol.unwrap_or(d.gap_tol),
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        ..d
    }
}

fn mode_index(cfg: &RunConfig) -> usize {
    cfg.mode.unwrap_or(1) - 1
}

/// Finite-element mesh of the domain at size `h`; 1D orthotopes become intervals.
fn fem_mesh(spec: &DomainSpec, h: f64) -> Res<FemMesh> {
    if let Some(o) = spec.orthotope() {
        let o = o?;
        if o.dim() == 1 {
            let cells = (o.side(0) / h).ceil() as usize;
            return Ok(IntervalMesh::uniform(o.side(0), cells.max(2))?.into());
        }
        if o.dim() > 2 {
            return Err(config("the finite-element solver is 1D/2D; use --method closed for higher dimensions"));
        }
    }
    Ok(mesh_domain(spec, h)?.into())
}

fn use_closed_form(cfg: &RunConfig, spec: &DomainSpec) -> Res<bool> {
    let is_ortho = matches!(spec, DomainSpec::Orthotope { .. });
    match cfg.method.as_deref() {
        Some("closed") if is_ortho => Ok(true),
        Some("closed") => Err(config("closed-form spectra exist only for orthotopes")),
        Some("fem") => Ok(false),
        Some(other) => Err(config(format!("unknown method {other:?}; use closed or fem"))),
        None => Ok(is_ortho && cfg.h.is_none()),
    }
}

fn system(cfg: &RunConfig, n: usize) -> Res<EigenSystem> {
    let spec = domain(cfg)?;
    if use_closed_form(cfg, &spec)? {
        let o = spec.orthotope().expect("checked")?;
        return Ok(orthotope_spectrum_with_gap(&o, n, cfg.gap_tol.unwrap_or(DEFAULT_GAP_TOL))?);
    }
    let mesh = fem_mesh(&spec, cfg.h.unwrap_or(0.05))?;
    Ok(fem_spectrum_with(Arc::new(mesh), n, &solver(cfg))?)
}

fn potential(cfg: &RunConfig) -> Res<Potential> {
    let text = cfg.potential.as_deref().unwrap_or("x1");
    text.parse().map_err(|e| config(format!("potential {text:?}: {e}")))
}

fn top_of(mesh: &MeshedDomain) -> f64 {
    mesh.bounding_box().1[1]
}

/// `stretch[:ly[,rho]]` or `squash[:rho]`.
fn field(cfg: &RunConfig, mesh: &MeshedDomain) -> Res<VectorField2D> {
    let text = cfg.field.as_deref().ok_or_else(|| config("--field is required"))?;
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let nums: Vec<f64> = rest
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| config(format!("bad number in field {text:?}"))))
        .collect::<Res<_>>()?;
    match (kind, nums.as_slice()) {
        ("stretch", []) => Ok(VectorField2D::vertical_stretch(top_of(mesh), DEFAULT_RHO)?),
        ("stretch", [ly]) => Ok(VectorField2D::vertical_stretch(*ly, DEFAULT_RHO)?),
        ("stretch", [ly, rho]) => Ok(VectorField2D::vertical_stretch(*ly, *rho)?),
        ("squash", []) => Ok(squashing_field(DEFAULT_RHO)?),
        ("squash", [rho]) => Ok(squashing_field(*rho)?),
        _ => Err(config(format!("unknown field {text:?}; use stretch[:ly[,rho]] or squash[:rho]"))),
    }
}

pub fn spectrum(cfg: &RunConfig) -> Res<Outcome> {
    let sys = system(cfg, cfg.n.unwrap_or(6))?;
    Ok(Outcome {
        summary: json!({ "lambdas": sys.lambdas() }),
        csv: Some(sys.to_csv()),
        result: sys.to_json(),
    })
}

pub fn converge(cfg: &RunConfig) -> Res<Outcome> {
    let target = match domain(cfg)? {
        DomainSpec::Orthotope { mu } => ConvergenceTarget::Orthotope(make_orthotope(&mu)?),
        DomainSpec::MappedBall { map: BallMap::Identity } => ConvergenceTarget::Disk,
        _ => return Err(config("converge needs an orthotope or the disk")),
    };
    let h_list = cfg.h_list.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    let table = convergence_study(&target, &h_list, cfg.n.unwrap_or(1))?;
    let mut csv = String::from("h_requested,h");
    for i in 0..table.exact_lambdas.len() {
        csv += &format!(",lambda_error_{},phi_sup_error_{}", i + 1, i + 1);
    }
    csv.push('\n');
    for row in &table.rows {
        csv += &format!("{:?},{:?}", row.h_requested, row.h);
        for (e, p) in row.lambda_errors.iter().zip(&row.phi_sup_errors) {
            csv += &format!(",{e:?},{p:?}");
        }
        csv.push('\n');
    }
    Ok(Outcome {
        summary: json!({ "min_lambda_order": table.min_lambda_order() }),
        csv: Some(csv),
        result: to_value(&table)?,
    })
}

pub fn deform(cfg: &RunConfig) -> Res<Outcome> {
    let spec = domain(cfg)?;
    let base = mesh_domain(&spec, cfg.h.unwrap_or(0.1))?;
    let f = field(cfg, &base)?;
    let t = cfg.t.unwrap_or(0.1);
    let mesh = flow_deform(&base, &f, t)?;
    let mut result = json!({
        "field": f.name(),
        "t": t,
        "area_before": base.area(),
        "area": mesh.area(),
        "mesh_hash": mesh.content_hash(),
        "mesh": mesh,
    });
    let mut summary = json!({ "area": mesh.area(), "mesh_hash": mesh.content_hash() });
    if let Some(n) = cfg.n {
        let sys = fem_spectrum_with(Arc::new(mesh.clone().into()), n, &solver(cfg))?;
        result["lambdas"] = json!(sys.lambdas());
        summary["lambdas"] = json!(sys.lambdas());
    }
    let mut csv = String::from("x,y\n");
    for v in &mesh.vertices {
        csv += &format!("{:?},{:?}\n", v[0], v[1]);
    }
    Ok(Outcome { result, csv: Some(csv), summary })
}

pub fn track(cfg: &RunConfig) -> Res<Outcome> {
    let spec = domain(cfg)?;
    let h = cfg.h.unwrap_or(0.1);
    let steps = cfg.steps.unwrap_or(20);
    let path = match &cfg.to {
        Some(to) => {
            let end: DomainSpec = to.parse().map_err(|e| config(format!("--to {to:?}: {e}")))?;
            let (Some(a), Some(b)) = (spec.orthotope(), end.orthotope()) else {
                return Err(config("--to paths join two rectangles; use --field for other domains"));
            };
            let (a, b) = (a?, b?);
            if a.dim() != 2 || b.dim() != 2 {
                return Err(config("--to paths join two rectangles"));
            }
            let count = |l: f64| {
                let n = (l / h).ceil() as usize;
                n + n % 2
            };
            let nx = count(a.side(0).max(b.side(0)));
            let ny = count(a.side(1).max(b.side(1)));
            let m0 = rectangle_mesh(a.side(0), a.side(1), nx, ny, DiagonalPattern::Alternating)?;
            let m1 = rectangle_mesh(b.side(0), b.side(1), nx, ny, DiagonalPattern::Alternating)?;
            interpolation_path(&m0, &m1, steps)?
        }
        None => {
            let base = mesh_domain(&spec, h)?;
            let f = field(cfg, &base)?;
            DeformationPath::flow(base, f, cfg.t.unwrap_or(0.1), steps)?
        }
    };
    let d = TrackOptions::default();
    let opts = TrackOptions {
        guard: cfg.guard.unwrap_or(d.guard),
        crossing_tol: cfg.crossing_tol.unwrap_or(d.crossing_tol),
        solver: solver(cfg),
        ..d
    };
    let ep = track_path(&path, cfg.n.unwrap_or(4), &opts)?;
    Ok(Outcome {
        summary: json!({ "steps": ep.t_grid.len() - 1, "crossing_events": ep.crossing_events }),
        csv: Some(ep.to_csv()),
        result: to_value(&ep)?,
    })
}

pub fn check_simplicity_cmd(cfg: &RunConfig) -> Res<Outcome> {
    let sys = system(cfg, cfg.n.unwrap_or(8))?;
    let report = check_simplicity(&sys, cfg.gap_tol.unwrap_or(DEFAULT_GAP_TOL));
    Ok(Outcome {
        summary: json!({ "verdict": report.verdict, "exact": report.exact }),
        csv: None,
        result: json!({ "lambdas": sys.lambdas(), "report": report }),
    })
}

pub fn check_independence(cfg: &RunConfig) -> Res<Outcome> {
    let n = cfg.n.unwrap_or(6);
    let sys = system(cfg, n)?;
    let gram = squared_gram(&sys, None)?;
    let search = squared_independence_search(&sys, cfg.trials.unwrap_or(200), cfg.seed.unwrap_or(DEFAULT_SEED))?;
    let report = gram.to_report(n);
    Ok(Outcome {
        summary: json!({ "gram_verdict": report.verdict, "search_verdict": search.verdict, "min_eigenvalue": gram.min_eigenvalue }),
        csv: Some(gram.to_csv()),
        result: json!({ "gram": gram, "gram_report": report, "search": search }),
    })
}

pub fn check_resonance(cfg: &RunConfig) -> Res<Outcome> {
    let sys = system(cfg, cfg.n.unwrap_or(4))?;
    let mut opts = RelationSearch::new(cfg.height.unwrap_or(4));
    if let Some(r) = cfg.residual_tol {
        opts.residual_tol = r;
    }
    opts.lattice_pass = cfg.lattice.unwrap_or(false);
    let report = check_nonresonance(&sys, &opts)?;
    let first: Vec<&Vec<i64>> = report.relations().iter().take(5).map(|r| &r.q).collect();
    Ok(Outcome {
        summary: json!({ "verdict": report.verdict, "relations_found": report.relations().len(), "first_relations": first }),
        csv: None,
        result: json!({ "lambdas": sys.lambdas(), "report": report }),
    })
}

/// `x2+` -> (axis 1, upper).
fn face(cfg: &RunConfig, dim: usize) -> Res<(usize, bool)> {
    let default = format!("x{dim}+");
    let text = cfg.face.as_deref().unwrap_or(&default);
    let bad = || config(format!("face {text:?}: expected x<axis>+ or x<axis>-"));
    let body = text.strip_prefix('x').ok_or_else(bad)?;
    let (num, upper) = match body.as_bytes().last() {
        Some(b'+') => (&body[..body.len() - 1], true),
        Some(b'-') => (&body[..body.len() - 1], false),
        _ => return Err(bad()),
    };
    let axis: usize = num.parse().map_err(|_| bad())?;
    if axis == 0 || axis > dim {
        return Err(bad());
    }
    Ok((axis - 1, upper))
}

pub fn shape_derivative(cfg: &RunConfig) -> Res<Outcome> {
    let o = orthotope(cfg)?;
    let l = mode_index(cfg);
    let sys = orthotope_spectrum_with_gap(&o, l + 1, cfg.gap_tol.unwrap_or(DEFAULT_GAP_TOL))?;
    let (axis, upper) = face(cfg, o.dim())?;
    let speed = cfg.speed.unwrap_or(1.0);
    let pert = BoundaryPerturbation::orthotope_face(&o, axis, upper, |_| speed)?;
    let derivative = hadamard_derivative_branch(&sys, &pert, l)?;
    let mode = &sys.modes().expect("closed form")[l];
    let mut result = json!({
        "mode": cfg.mode.unwrap_or(1),
        "k": mode.k,
        "lambda": mode.lambda,
        "simple": !sys.gap_flags()[l],
        "face": { "axis": axis + 1, "upper": upper, "speed": speed },
        "derivative": derivative,
    });
    let mut summary = json!({ "derivative": derivative });
    if let Some(dt) = cfg.dt {
        if o.dim() != 2 || axis != 1 || !upper {
            return Err(config("the finite-difference check moves the x2+ face of a rectangle"));
        }
        let base = mesh_domain(&DomainSpec::Orthotope { mu: o.mu().to_vec() }, cfg.h.unwrap_or(0.05))?;
        let rho = 1.0 + (o.side(0).powi(2) + o.side(1).powi(2)) * 1.1;
        let f = VectorField2D::vertical_stretch(o.side(1), rho)?.scaled(speed);
        let formula = orthotope_spectrum_with_gap(&o, l + 3, cfg.gap_tol.unwrap_or(DEFAULT_GAP_TOL))?;
        let fd = fd_shape_check(&formula, &pert, &base, &f, l, dt, &solver(cfg))?;
        summary["relative_error"] = json!(fd.relative_error);
        result["fd_check"] = to_value(&fd)?;
    }
    Ok(Outcome { result, csv: None, summary })
}

pub fn potential_derivative_cmd(cfg: &RunConfig) -> Res<Outcome> {
    let w = potential(cfg)?;
    if w.eval(&[0.0; 3]).is_none() {
        return Err(config("potential derivatives need a polynomial potential"));
    }
    let v = |x: &[f64]| w.eval(x).expect("polynomial");
    let k = mode_index(cfg);
    let spec = domain(cfg)?;
    let formula_sys = system(cfg, k + 1)?;
    let derivative = potential_derivative(&formula_sys, v, k)?;
    let mut result = json!({
        "mode": cfg.mode.unwrap_or(1),
        "potential": w.describe(),
        "lambda": formula_sys.lambdas()[k],
        "derivative": derivative,
    });
    let mut summary = json!({ "derivative": derivative });
    if let Some(d_eps) = cfg.d_eps {
        let assembly = match cfg.assembly.as_deref().unwrap_or("lumped") {
            "lumped" => PotentialAssembly::Lumped,
            "consistent" => PotentialAssembly::Consistent,
            other => return Err(config(format!("unknown assembly {other:?}"))),
        };
        let h = cfg.h.unwrap_or(if formula_sys.dim() == 1 { PI / 2000.0 } else { 0.05 });
        let mesh = Arc::new(fem_mesh(&spec, h)?);
        let fd = fd_potential_check(mesh, v, k, d_eps, assembly, &solver(cfg))?;
        summary["relative_error"] = json!(fd.relative_error);
        result["fd_check"] = to_value(&fd)?;
    }
    Ok(Outcome { result, csv: None, summary })
}

pub fn optimize_damping(cfg: &RunConfig) -> Res<Outcome> {
    let big_n = cfg.big_n.unwrap_or(3);
    let ell = cfg.ell.ok_or_else(|| config("--ell is required"))?;
    let sys = system(cfg, big_n)?;
    let sol = optimize_relaxed(&sys, ell, big_n)?;
    let bang = bang_bang_report(&sol, cfg.eps.unwrap_or(DEFAULT_BANG_BANG_EPS))?;
    let mut csv = None;
    if let Some(k) = cfg.sweep {
        let total = sol.density.measure();
        let mut table = String::from("ell,t_star\n");
        for i in 1..=k {
            let l = total * i as f64 / (k + 1) as f64;
            table += &format!("{l:?},{:?}\n", optimize_relaxed(&sys, l, big_n)?.j_value);
        }
        csv = Some(table);
    }
    Ok(Outcome {
        summary: json!({
            "t_star": sol.j_value,
            "duality_gap": sol.duality_gap,
            "multipliers": sol.multipliers,
            "intermediate_cells": sol.intermediate_cells,
        }),
        csv,
        result: json!({ "solution": sol, "bang_bang": bang }),
    })
}

pub fn decay_rate(cfg: &RunConfig) -> Res<Outcome> {
    let m = cfg.big_m.unwrap_or(8);
    let sys = system(cfg, m)?;
    let areas = damping_cells(&sys)?.cell_areas().to_vec();
    let total: f64 = areas.iter().sum();
    let which = cfg.density.as_deref().unwrap_or("full");
    let density = match which {
        "full" => DampingDensity::new(vec![1.0; areas.len()], areas)?,
        "uniform" => DampingDensity::uniform(areas, cfg.ell.unwrap_or(total / 2.0))?,
        "optimal" => {
            let big_n = cfg.big_n.unwrap_or(1).min(m);
            optimize_relaxed(&sys, cfg.ell.unwrap_or(total / 2.0), big_n)?.density
        }
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| config(format!("density file {path}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| config(format!("density file {path}: {e}")))?
        }
    };
    let k_damp = cfg.k_damp.unwrap_or(0.5);
    let rate = modal_decay_rate(&sys, &density, k_damp, m)?;
    Ok(Outcome {
        summary: json!({ "decay_rate": rate }),
        csv: None,
        result: json!({
            "decay_rate": rate,
            "M": m,
            "k_damp": k_damp,
            "density": which,
            "budget": density.budget,
            "note": "truncated modal approximation; compare several M",
        }),
    })
}

pub fn schrodinger_check(cfg: &RunConfig) -> Res<Outcome> {
    let n = cfg.n.unwrap_or(4);
    let height = cfg.height.unwrap_or(10);
    let sys = system(cfg, n)?;
    if let Some(attempts) = cfg.search_attempts {
        let s = residual_potential_search(
            &sys,
            n,
            height,
            cfg.degree.unwrap_or(2),
            attempts,
            cfg.seed.unwrap_or(DEFAULT_SEED),
        )?;
        return Ok(Outcome {
            summary: json!({ "verdict": s.report.verdict, "attempts": s.attempts, "found": s.potential.is_some() }),
            csv: None,
            result: to_value(&s)?,
        });
    }
    let w = potential(cfg)?;
    let report = controllability_precheck(&sys, &w, n, height)?;
    Ok(Outcome {
        summary: json!({ "verdict": report.verdict, "couplings": report.couplings }),
        csv: None,
        result: to_value(&report)?,
    })
}
