use std::f64::consts::PI;

use proptest::prelude::*;
use speclab_core::damping::*;
use speclab_core::eigensolver::{fem_spectrum, orthotope_spectrum, EigenSystem};
use speclab_core::geometry::{make_orthotope, IntervalMesh};

fn interval(n: usize) -> EigenSystem {
    orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), n).unwrap()
}

fn rectangle(n: usize) -> EigenSystem {
    orthotope_spectrum(&make_orthotope(&[1.0, 2f64.powf(-0.25)]).unwrap(), n).unwrap()
}

fn areas(sys: &EigenSystem) -> Vec<f64> {
    damping_cells(sys).unwrap().cell_areas().to_vec()
}

fn middle_indicator(sys: &EigenSystem) -> DampingDensity {
    let q = damping_cells(sys).unwrap();
    let inside: Vec<bool> = q.cell_centers().iter().map(|c| c[0] > PI / 4.0 && c[0] < 3.0 * PI / 4.0).collect();
    DampingDensity::indicator(q.cell_areas().to_vec(), &inside).unwrap()
}

// max over feasible a of g.a: fill by g/area
fn knapsack(g: &[f64], areas: &[f64], budget: f64) -> f64 {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&i, &j| (g[j] / areas[j]).total_cmp(&(g[i] / areas[i])));
    let (mut left, mut value) = (budget, 0.0);
    for c in order {
        let take = (left / areas[c]).min(1.0);
        value += take * g[c];
        left -= take * areas[c];
        if left <= 0.0 {
            break;
        }
    }
    value
}

// t* = min over alpha of the knapsack value of alpha w1 + (1 - alpha) w2
fn two_mode_oracle(w: &[Vec<f64>], areas: &[f64], budget: f64) -> f64 {
    let g = |al: f64| {
        let mix: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| al * a + (1.0 - al) * b).collect();
        knapsack(&mix, areas, budget)
    };
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if g(x1) <= g(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    g(0.5 * (lo + hi))
}

#[test]
fn jn_examples() {
    let s = interval(3);
    let a = areas(&s);
    let full = DampingDensity::new(vec![1.0; a.len()], a.clone()).unwrap();
    assert!((evaluate_jn(&s, &full, 3).unwrap() - 1.0).abs() < 1e-12);
    let uni = DampingDensity::uniform(a, 1.0).unwrap();
    assert!((evaluate_jn(&s, &uni, 2).unwrap() - 1.0 / PI).abs() < 1e-12);
    let mid = middle_indicator(&s);
    assert!((evaluate_jn(&s, &mid, 1).unwrap() - (0.5 + 1.0 / PI)).abs() < 1e-12);
    assert!(evaluate_jn(&s, &mid, 4).is_err());
    assert!(evaluate_jn(&rectangle(2), &mid, 1).is_err());
}

#[test]
fn single_mode_interval_is_the_middle_half() {
    let s = interval(1);
    let sol = optimize_relaxed(&s, PI / 2.0, 1).unwrap();
    assert!((sol.j_value - (0.5 + 1.0 / PI)).abs() < 1e-4, "{}", sol.j_value);
    let cell = PI / 2048.0;
    assert!(sol.intermediate_measure <= cell + 1e-15);
    assert_eq!(sol.multipliers, vec![1.0]);
    assert!(sol.duality_gap.abs() <= 1e-8 * sol.j_value);
    // super-level set of phi_1^2 with the budget met, compared cellwise
    let mid = middle_indicator(&s);
    let differing = sol.density.values.iter().zip(&mid.values).filter(|(a, b)| (*a - *b).abs() > 1e-12).count();
    assert!(differing <= 1, "{differing}");
    let r = bang_bang_report(&sol, DEFAULT_BANG_BANG_EPS).unwrap();
    assert!(r.intermediate_cells <= 1 && r.residual == 0.0);
}

#[test]
fn full_budget_limit() {
    let s = interval(3);
    let total = PI;
    let sol = optimize_relaxed(&s, total - 1e-6, 3).unwrap();
    assert!((sol.j_value - 1.0).abs() < 1e-5);
    assert!(optimize_relaxed(&s, total, 3).is_err());
}

#[test]
fn square_two_modes_matches_dual_oracle() {
    let s = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 2).unwrap();
    let a = areas(&s);
    let budget = PI * PI / 2.0;
    let sol = optimize_relaxed(&s, budget, 2).unwrap();
    let oracle = two_mode_oracle(sol.weights(), &a, budget);
    assert!((sol.j_value - oracle).abs() < 1e-6, "{} vs {oracle}", sol.j_value);
}

#[test]
fn rectangle_three_modes_certificate() {
    let s = rectangle(3);
    let total = PI * PI * 2f64.powf(-0.25);
    let sol = optimize_relaxed(&s, 0.3 * total, 3).unwrap();
    assert!(sol.duality_gap.abs() <= 1e-8 * sol.j_value);
    assert!(sol.intermediate_cells <= 3, "{}", sol.intermediate_cells);
    let sum: f64 = sol.multipliers.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    for (n, &al) in sol.multipliers.iter().enumerate() {
        assert!(al >= 0.0);
        if al > 1e-12 {
            assert!(sol.active_modes.contains(&n));
        }
    }
    let masses = sol.damped_masses();
    assert!((masses.iter().copied().fold(f64::INFINITY, f64::min) - sol.j_value).abs() < 1e-15);
    let budget: f64 = sol.density.values.iter().zip(&sol.density.cell_areas).map(|(a, s)| a * s).sum();
    assert!((budget - 0.3 * total).abs() < 1e-9 * total);
    let r = bang_bang_report(&sol, DEFAULT_BANG_BANG_EPS).unwrap();
    assert_eq!(r.intermediate_cells, sol.intermediate_cells);
    assert!(r.residual.is_finite());
}

#[test]
fn value_is_concave_nondecreasing_in_budget() {
    let s = rectangle(3);
    let total = PI * PI * 2f64.powf(-0.25);
    let ts: Vec<f64> = (1..=10)
        .map(|i| optimize_relaxed(&s, total * i as f64 / 11.0, 3).unwrap().j_value)
        .collect();
    let d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(d.iter().all(|&x| x >= -1e-8), "{d:?}");
    assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-8), "{d:?}");
}

#[test]
fn scaling_weights_scales_value() {
    let s = rectangle(3);
    let q = damping_cells(&s).unwrap();
    let w = modal_weights(&s, &q, 3).unwrap();
    let a = q.cell_areas().to_vec();
    let base = optimize_weights(w.clone(), a.clone(), 4.0).unwrap();
    let scaled: Vec<Vec<f64>> = w.iter().map(|r| r.iter().map(|v| 4.0 * v).collect()).collect();
    let s3 = optimize_weights(scaled, a, 4.0).unwrap();
    assert!((s3.j_value - 4.0 * base.j_value).abs() < 1e-10 * s3.j_value);
    let diff = s3.density.values.iter().zip(&base.density.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(diff, 0.0);
    assert!(base.alternative_optima);
}

#[test]
fn nodal_system_uses_mesh_cells() {
    let s = fem_spectrum(IntervalMesh::uniform(PI, 400).unwrap(), 2).unwrap();
    let sol = optimize_relaxed(&s, PI / 2.0, 1).unwrap();
    assert_eq!(sol.density.values.len(), 400);
    assert!((sol.j_value - (0.5 + 1.0 / PI)).abs() < 1e-3);
}

#[test]
fn uniform_density_is_all_intermediate() {
    let s = interval(2);
    let sol = optimize_relaxed(&s, 1.0, 2).unwrap();
    let mut u = sol.clone();
    u.density = DampingDensity::uniform(u.density.cell_areas.clone(), 1.0).unwrap();
    let r = bang_bang_report(&u, DEFAULT_BANG_BANG_EPS).unwrap();
    assert!((r.intermediate_area - PI).abs() < 1e-12);
}

#[test]
fn decay_rate_examples() {
    let s = interval(16);
    let a = areas(&s);
    let full = DampingDensity::new(vec![1.0; a.len()], a.clone()).unwrap();
    for m in [4, 7, 12] {
        let r = modal_decay_rate(&s, &full, 0.5, m).unwrap();
        assert!((r - 0.5).abs() < 1e-6, "M={m}: {r}");
    }
    assert!(modal_decay_rate(&s, &full, 0.0, 6).unwrap().abs() < 1e-9);
    let mid = middle_indicator(&s);
    let r8 = modal_decay_rate(&s, &mid, 0.3, 8).unwrap();
    let r16 = modal_decay_rate(&s, &mid, 0.3, 16).unwrap();
    assert!(r8 > 0.0 && ((r8 - r16) / r16).abs() < 0.02, "{r8} {r16}");
    assert!(modal_decay_rate(&s, &full, 0.5, 17).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn optimum_beats_random_feasible_densities(seed in prop::collection::vec(0.0f64..1.0, 64)) {
        let s = interval(3);
        let a = areas(&s);
        let budget = PI / 3.0;
        let sol = optimize_relaxed(&s, budget, 3).unwrap();
        // piecewise-constant random profile on 64 blocks, rescaled onto the budget
        let raw: Vec<f64> = (0..a.len()).map(|c| seed[c * 64 / a.len()]).collect();
        let mass: f64 = raw.iter().zip(&a).map(|(r, s)| r * s).sum();
        prop_assume!(mass > budget);
        let d = DampingDensity::new(raw.iter().map(|r| r * budget / mass).collect(), a).unwrap();
        prop_assert!(evaluate_jn(&s, &d, 3).unwrap() <= sol.j_value + 1e-12);
    }
}
