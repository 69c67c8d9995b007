use std::f64::consts::PI;

use speclab_core::eigensolver::{fem_spectrum, orthotope_spectrum};
use speclab_core::geometry::{make_orthotope, mesh_orthotope, mesh_polygon};
use speclab_core::schrodinger::*;
use speclab_core::spectral_props::Verdict;

fn x_squared_centered(c: f64) -> Potential {
    // (x1 - c)^2 + (x2 - c)^2 expanded
    let m = |coef: f64, powers: Vec<u32>| Monomial { coef, powers };
    Potential::Polynomial {
        terms: vec![
            m(1.0, vec![2, 0]),
            m(-2.0 * c, vec![1, 0]),
            m(1.0, vec![0, 2]),
            m(-2.0 * c, vec![0, 1]),
            m(2.0 * c * c, vec![]),
        ],
    }
}

#[test]
fn interval_linear_potential() {
    let s = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), 4).unwrap();
    let (c, _) = coupling_integrals(&s, &Potential::coordinate(0), 4).unwrap();
    assert!((c[0] + 16.0 / (9.0 * PI)).abs() < 1e-10, "{}", c[0]);
    for (k, v) in c.iter().enumerate() {
        let m = (2 * k + 3) as f64;
        assert!((v - (-2.0 + 2.0 / (m * m)) / PI).abs() < 1e-10);
    }
    let r = controllability_precheck(&s, &Potential::coordinate(0), 4, 10).unwrap();
    assert_eq!(r.verdict, ControlVerdict::ResonanceFound);
    assert!(r.nonresonance.relations().iter().any(|rel| rel.q == vec![4, -1, 0, 0]));
    assert!(r.note.contains("necessary-evidence"));
}

#[test]
fn constant_potential_fails_first_coupling() {
    let s = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), 4).unwrap();
    let r = controllability_precheck(&s, &Potential::constant(1.0), 4, 4).unwrap();
    assert_eq!(r.verdict, ControlVerdict::CouplingFails { k: 1 });
    assert!(r.couplings.iter().all(|c| c.abs() < 1e-12));
    assert!((r.coupling_tol - 1e-8).abs() < 1e-20);
}

#[test]
fn constants_add_nothing() {
    let s = orthotope_spectrum(&make_orthotope(&[1.0, 0.7]).unwrap(), 5).unwrap();
    let w = Potential::coordinate(1);
    let mut shifted = w.clone();
    if let Potential::Polynomial { terms } = &mut shifted {
        terms.push(Monomial { coef: 2.5, powers: vec![] });
    }
    let (a, _) = coupling_integrals(&s, &w, 5).unwrap();
    let (b, _) = coupling_integrals(&s, &shifted, 5).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn rectangle_first_modes() {
    // modes (1,1), (2,1), (1,2), (2,2)
    let s = orthotope_spectrum(&make_orthotope(&[1.0, 2f64.powf(-0.25)]).unwrap(), 4).unwrap();
    let r = controllability_precheck(&s, &Potential::coordinate(0), 4, 10).unwrap();
    assert!(r.couplings[0].abs() > 0.1 && r.couplings[2].abs() > 0.1);
    assert!(r.couplings[1].abs() < 1e-12);
    assert_eq!(r.vanishing, vec![false, true, false]);
    assert_eq!(r.verdict, ControlVerdict::CouplingFails { k: 2 });
    // the four eigenvalues satisfy lambda(1,1) - lambda(2,1) - lambda(1,2) + lambda(2,2) = 0 exactly
    assert_eq!(r.nonresonance.verdict, Verdict::Fails);
    assert!(r.nonresonance.exact);
    assert!(r.nonresonance.relations().iter().any(|rel| rel.q == vec![1, -1, -1, 1]));
}

#[test]
fn square_symmetry_kills_opposite_parity_couplings() {
    let s = orthotope_spectrum(&make_orthotope(&[1.0, 1.0]).unwrap(), 4).unwrap();
    let (c, _) = coupling_integrals(&s, &x_squared_centered(PI / 2.0), 4).unwrap();
    for v in c {
        assert!(v.abs() < 1e-10, "{v}");
    }
}

#[test]
fn nodal_couplings_and_cell_samples() {
    let s = fem_spectrum(mesh_orthotope(&make_orthotope(&[1.0, 0.8]).unwrap(), 0.15).unwrap(), 3).unwrap();
    let q = s.default_quadrature().unwrap();
    let (a, _) = coupling_integrals(&s, &Potential::constant(1.0), 3).unwrap();
    assert!(a.iter().all(|c| c.abs() < 1e-9), "{a:?}");
    let cells = Potential::Cells { values: vec![1.0; q.num_cells()] };
    let (b, _) = coupling_integrals(&s, &cells, 3).unwrap();
    assert_eq!(a, b);
    assert!(coupling_integrals(&s, &Potential::Cells { values: vec![1.0; 3] }, 3).is_err());
}

#[test]
fn random_potentials_pass_on_generic_rectangle() {
    // orthotope spectra are always resonant beyond d modes; use an irregular quadrilateral
    let quad = mesh_polygon(&[[0.0, 0.0], [3.0, 0.2], [2.6, 2.1], [0.3, 2.7]], 0.2).unwrap();
    let s = fem_spectrum(quad, 3).unwrap();
    let r = residual_potential_search(&s, 3, 6, 2, 20, 7).unwrap();
    assert!(r.potential.is_some(), "{:?}", r.report);
    assert_eq!(r.report.verdict, ControlVerdict::ConditionsMet);
    assert_eq!(r.attempts, 1);
    let again = residual_potential_search(&s, 3, 6, 2, 20, 7).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    let res = orthotope_spectrum(&make_orthotope(&[1.0]).unwrap(), 4).unwrap();
    let r = residual_potential_search(&res, 4, 4, 2, 20, 7).unwrap();
    assert!(r.potential.is_none());
    assert_eq!(r.report.verdict, ControlVerdict::ResonanceFound);
}

#[test]
fn potential_short_forms() {
    let w: Potential = "x1^2 - 0.5*x1*x2 + 1".parse().unwrap();
    assert_eq!(w.eval(&[2.0, 3.0]), Some(4.0 - 3.0 + 1.0));
    let w: Potential = "-2e-1*x2".parse().unwrap();
    assert_eq!(w.eval(&[5.0, 1.0]), Some(-0.2));
    assert_eq!("x1".parse::<Potential>().unwrap(), Potential::coordinate(0));
    let json = serde_json::to_string(&Potential::constant(1.5)).unwrap();
    assert_eq!(json.parse::<Potential>().unwrap(), Potential::constant(1.5));
    assert!("x0".parse::<Potential>().is_err());
    assert!("y".parse::<Potential>().is_err());
}
