use std::f64::consts::PI;

use proptest::prelude::*;
use speclab_core::eigensolver::{fem_spectrum, orthotope_spectrum};
use speclab_core::geometry::{make_orthotope, mesh_orthotope};
use speclab_core::spectral_props::*;

fn rect_mu() -> Vec<f64> {
    vec![1.0, 2f64.powf(-0.25)]
}

#[test]
fn simplicity_verdicts() {
    let sq = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 3).unwrap();
    let r = check_simplicity(&sq, 1e-6);
    assert_eq!(r.verdict, Verdict::Fails);
    assert!(r.exact);
    assert!(matches!(r.witness, Some(Witness::Gap { index: 1, lower, upper, .. }) if lower == 5.0 && upper == 5.0));

    let rect = orthotope_spectrum(&make_orthotope(&rect_mu()).unwrap(), 8).unwrap();
    let r = check_simplicity(&rect, 1e-6);
    assert_eq!(r.verdict, Verdict::Holds);
    assert!(r.exact);

    let one = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 1).unwrap();
    assert_eq!(check_simplicity(&one, 1e-6).verdict, Verdict::Holds);
}

#[test]
fn float_simplicity_on_fem_square() {
    let sq = make_orthotope(&[1.0, 1.0]).unwrap();
    let s = fem_spectrum(mesh_orthotope(&sq, 0.1).unwrap(), 3).unwrap();
    let r = check_simplicity(&s, 1e-6);
    assert_eq!(r.verdict, Verdict::Fails);
    assert!(!r.exact);
}

#[test]
fn determinant_examples() {
    let s = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), 2).unwrap();
    let d = squared_independence_det(&s, &[vec![PI / 2.0], vec![PI / 4.0]]).unwrap();
    assert!((d - 4.0 / (PI * PI)).abs() < 1e-14);
    let swapped = squared_independence_det(&s, &[vec![PI / 4.0], vec![PI / 2.0]]).unwrap();
    assert_eq!(swapped, -d);
    let dup = squared_independence_det(&s, &[vec![1.0], vec![1.0]]).unwrap();
    assert_eq!(dup, 0.0);
    // degenerate spectrum, independent squares
    let sq = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 2).unwrap();
    let d = squared_independence_det(&sq, &[vec![0.7, 1.3], vec![2.1, 0.4]]).unwrap();
    assert!(d.abs() > 1e-3);
}

#[test]
fn witness_search() {
    let s = orthotope_spectrum(&make_orthotope(&rect_mu()).unwrap(), 5).unwrap();
    let r = squared_independence_search(&s, 200, 7).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    assert_eq!(r.seed, Some(7));
    assert_eq!(squared_independence_search(&s, 200, 7).unwrap(), r);
    let none = squared_independence_search(&s, 0, 7).unwrap();
    assert_eq!(none.verdict, Verdict::Inconclusive);
    let one = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), 1).unwrap();
    assert_eq!(squared_independence_search(&one, 1, 0).unwrap().verdict, Verdict::Holds);
}

#[test]
fn witness_search_on_mesh() {
    let o = make_orthotope(&rect_mu()).unwrap();
    let s = fem_spectrum(mesh_orthotope(&o, 0.15).unwrap(), 4).unwrap();
    assert_eq!(squared_independence_search(&s, 50, 1).unwrap().verdict, Verdict::Holds);
}

#[test]
fn interval_gram_is_closed_form() {
    for n in 1..=12 {
        let s = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), n).unwrap();
        let g = squared_gram(&s, None).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = (if i == j { 0.5 } else { 0.0 } + 1.0) / PI;
                assert!((g.matrix[i][j] - want).abs() < 1e-13);
            }
        }
        let want = if n == 1 { 1.5 / PI } else { 0.5 / PI };
        assert!((g.min_eigenvalue - want).abs() < 1e-10, "n={n}: {}", g.min_eigenvalue);
    }
}

#[test]
fn gram_on_subsets() {
    let sq = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 4).unwrap();
    let full = squared_gram(&sq, None).unwrap();
    let cells = sq.default_quadrature().unwrap().num_cells();
    // left half: cell index c has x-index c % 64
    let left: Vec<bool> = (0..cells).map(|c| c % 64 < 32).collect();
    let half = squared_gram(&sq, Some(&left)).unwrap();
    assert!(half.min_eigenvalue > 10.0 * half.quadrature_tolerance);
    assert!((half.subset_measure - PI * PI / 2.0).abs() < 1e-12);
    // restriction can only shrink the Gram matrix in the Loewner order
    let diff = nalgebra::DMatrix::from_fn(4, 4, |i, j| full.matrix[i][j] - half.matrix[i][j]);
    let min = diff.symmetric_eigen().eigenvalues.min();
    assert!(min >= -1e-12);
    assert!(half.min_eigenvalue <= full.min_eigenvalue + 1e-12);
    assert!(squared_gram(&sq, Some(&vec![false; cells])).is_err());
    // the mesh Gram of the discrete square agrees with the closed form at discretization accuracy
    let fem = fem_spectrum(mesh_orthotope(&make_orthotope(&[1.0, 1.0]).unwrap(), 0.1).unwrap(), 1).unwrap();
    let g = squared_gram(&fem, None).unwrap();
    let exact = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 1).unwrap();
    let e = squared_gram(&exact, None).unwrap();
    assert!((g.matrix[0][0] / e.matrix[0][0] - 1.0).abs() < 0.01);
}

#[test]
fn rectangle_gram_has_margin() {
    let s = orthotope_spectrum(&make_orthotope(&rect_mu()).unwrap(), 6).unwrap();
    let g = squared_gram(&s, None).unwrap();
    assert!(g.certifies(10.0), "{} vs {}", g.min_eigenvalue, g.quadrature_tolerance);
    assert_eq!(g.to_report(6).verdict, Verdict::Holds);
}

#[test]
fn square_relations() {
    let l = [2.0, 5.0, 5.0, 8.0];
    let r = nonresonance_search(&l, &RelationSearch::new(1)).unwrap();
    assert_eq!(r.verdict, Verdict::Fails);
    assert_eq!(r.relations()[0].q, vec![0, 1, -1, 0]);
    let r = nonresonance_search(&l, &RelationSearch::new(4)).unwrap();
    let qs: Vec<_> = r.relations().iter().map(|x| x.q.clone()).collect();
    assert!(qs.contains(&vec![0, 1, -1, 0]));
    assert!(qs.contains(&vec![4, 0, 0, -1]));
    assert!(r.relations().iter().filter(|x| x.q == vec![4, 0, 0, -1]).all(|x| x.residual == 0.0));
}

#[test]
fn rectangle_relation_is_exact() {
    // 1/mu^2 = (1, sqrt 2): lambda_(1,1) - lambda_(2,1) - lambda_(1,2) + lambda_(2,2) = 0
    let s = orthotope_spectrum(&make_orthotope(&rect_mu()).unwrap(), 4).unwrap();
    let r = check_nonresonance(&s, &RelationSearch::new(20)).unwrap();
    assert!(r.exact);
    assert_eq!(r.verdict, Verdict::Fails);
    assert_eq!(r.relations()[0].q, vec![1, -1, -1, 1]);
}

#[test]
fn budget_is_enforced() {
    let l = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let opts = RelationSearch { budget: 1000, ..RelationSearch::new(5) };
    assert!(matches!(nonresonance_search(&l, &opts), Err(speclab_core::Error::Budget { .. })));
}

#[test]
fn holds_for_independent_numbers() {
    let l = [1.0, 2f64.sqrt(), 3f64.sqrt()];
    let r = nonresonance_search(&l, &RelationSearch::new(10)).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    assert_eq!(r.height, Some(10));
}

#[test]
fn lattice_candidates_are_flagged() {
    let l = [1.0, 2f64.sqrt(), 1.0 + 25.0 * 2f64.sqrt()];
    let opts = RelationSearch { lattice_pass: true, ..RelationSearch::new(3) };
    let r = nonresonance_search(&l, &opts).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    match r.witness {
        Some(Witness::Relations { unverified, .. }) => assert!(unverified.iter().any(|u| u.q == vec![1, 25, -1])),
        other => panic!("{other:?}"),
    }
}

#[test]
fn functionals() {
    let sq = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 4).unwrap();
    let pts = vec![vec![0.3, 0.4], vec![1.1, 2.0], vec![2.5, 0.9], vec![1.7, 1.7]];
    assert_eq!(generic_fn(&sq, &pts, &Functional::last_argument(4)).unwrap(), 8.0);
    let det = generic_fn(&sq, &pts, &Functional::squared_determinant(4)).unwrap();
    assert!((det - squared_independence_det(&sq, &pts).unwrap()).abs() < 1e-15);
    let comb = generic_fn(&sq, &pts, &Functional::eigenvalue_combination(vec![0, 1, -1, 0])).unwrap();
    assert_eq!(comb, 0.0);
    assert!(generic_fn(&sq, &pts, &Functional::last_argument(3)).is_err());
}

proptest! {
    #[test]
    fn relation_verdict_ignores_sign_and_order(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), scale in 0.5f64..3.0) {
        let l = [2.0 * scale, 5.0 * scale, 5.0 * scale, 8.0 * scale];
        let p: Vec<f64> = perm.iter().map(|&i| l[i]).collect();
        let a = nonresonance_search(&l, &RelationSearch::new(2)).unwrap();
        let b = nonresonance_search(&p, &RelationSearch::new(2)).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        let mut qa: Vec<Vec<i64>> = a.relations().iter().map(|r| r.q.clone()).collect();
        let mut qb: Vec<Vec<i64>> = b.relations().iter().map(|r| {
            let mut q = vec![0; 4];
            for (k, &i) in perm.iter().enumerate() { q[i] = r.q[k]; }
            if q.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0) { q.iter_mut().for_each(|c| *c = -*c); }
            q
        }).collect();
        qa.sort();
        qb.sort();
        prop_assert_eq!(qa, qb);
        for r in a.relations() {
            let neg: Vec<i64> = r.q.iter().map(|c| -c).collect();
            prop_assert_eq!(relation_residual(&neg, &l), r.residual);
        }
    }

    #[test]
    fn determinant_flips_under_swap(x in proptest::collection::vec(0.05f64..3.1, 3)) {
        let s = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), 3).unwrap();
        let pts: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let mut sw = pts.clone();
        sw.swap(0, 2);
        let a = squared_independence_det(&s, &pts).unwrap();
        let b = squared_independence_det(&s, &sw).unwrap();
        prop_assert!((a + b).abs() <= 1e-14 * (1.0 + a.abs()));
    }
}
