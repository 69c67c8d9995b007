use std::f64::consts::PI;

use speclab_core::eigensolver::{
    convergence_study, evaluate_eigenfunction, fem_spectrum, orthotope_spectrum, ConvergenceTarget,
    BESSEL_J0_FIRST_ZERO,
};
use speclab_core::geometry::{
    make_orthotope, mesh_mapped_ball, mesh_orthotope, mesh_polygon, rectangle_mesh, regular_polygon, BallMap,
    DiagonalPattern,
};
use speclab_core::quadrature::Quadrature;

fn rect() -> speclab_core::geometry::Orthotope {
    make_orthotope(&[1.0, 2f64.powf(-0.25)]).unwrap()
}

#[test]
fn unit_square_first_eigenvalue() {
    // side 1: lambda_1 = 2 pi^2
    let m = rectangle_mesh(1.0, 1.0, 50, 50, DiagonalPattern::Alternating).unwrap();
    let s = fem_spectrum(m, 1).unwrap();
    let exact = 2.0 * PI * PI;
    assert!(s.lambdas()[0] >= exact);
    assert!((s.lambdas()[0] / exact - 1.0).abs() < 2e-3);
}

#[test]
fn disk_first_eigenvalue() {
    let m = mesh_mapped_ball(&BallMap::Identity, 0.05).unwrap();
    let s = fem_spectrum(m, 1).unwrap();
    let exact = BESSEL_J0_FIRST_ZERO * BESSEL_J0_FIRST_ZERO;
    assert!((s.lambdas()[0] / exact - 1.0).abs() < 5e-3, "{}", s.lambdas()[0]);
}

#[test]
fn square_degeneracy_is_reproduced() {
    let sq = make_orthotope(&[1.0, 1.0]).unwrap();
    let s = fem_spectrum(mesh_orthotope(&sq, 0.1).unwrap(), 3).unwrap();
    let l = s.lambdas();
    assert!((l[1] - l[2]).abs() < 1e-8 * l[1], "{l:?}");
    assert!((l[1] - 5.0).abs() < 0.05);
}

#[test]
fn upper_bounds_orthonormality_and_determinism() {
    let o = rect();
    let exact = orthotope_spectrum(&o, 6).unwrap();
    let mesh = mesh_orthotope(&o, 0.1).unwrap();
    let a = fem_spectrum(mesh.clone(), 6).unwrap();
    let b = fem_spectrum(mesh, 6).unwrap();
    for (h, e) in a.lambdas().iter().zip(exact.lambdas()) {
        assert!(h >= e);
    }
    let q = Quadrature::on_mesh(a.mesh().unwrap());
    for i in 0..6 {
        let vi = a.values_on(&q, i).unwrap();
        for j in 0..6 {
            let vj = a.values_on(&q, j).unwrap();
            let ip: f64 = q.integrate(&vi.iter().zip(&vj).map(|(x, y)| x * y).collect::<Vec<_>>());
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-6, "<{i},{j}> = {ip}");
        }
        assert_eq!(a.nodal_values(i).unwrap(), b.nodal_values(i).unwrap());
    }
}

#[test]
fn evaluation_outside_is_zero() {
    let o = rect();
    let s = fem_spectrum(mesh_orthotope(&o, 0.2).unwrap(), 2).unwrap();
    let v = evaluate_eigenfunction(&s, 0, &[vec![-1.0, 1.0], vec![1.5, 1.2]]).unwrap();
    assert_eq!(v[0], 0.0);
    assert!(v[1] > 0.0);
}

#[test]
fn rectangle_convergence_is_second_order() {
    let t = convergence_study(&ConvergenceTarget::Orthotope(rect()), &[0.1, 0.05, 0.025], 3).unwrap();
    assert!(t.min_lambda_order() >= 1.8, "{:?}", t.lambda_orders);
    for r in t.rows.windows(2) {
        for (a, b) in r[0].lambda_errors.iter().zip(&r[1].lambda_errors) {
            let ratio = a / b;
            assert!(ratio > 3.4 && ratio < 4.6, "{ratio}");
        }
    }
    // repeated mesh size gives identical rows
    let u = convergence_study(&ConvergenceTarget::Orthotope(rect()), &[0.1], 3).unwrap();
    assert_eq!(u.rows[0], t.rows[0]);
}

#[test]
fn disk_polygons_converge_monotonically() {
    let exact = BESSEL_J0_FIRST_ZERO * BESSEL_J0_FIRST_ZERO;
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&sides| {
            let m = mesh_polygon(&regular_polygon(sides, 1.0), 0.04).unwrap();
            (fem_spectrum(m, 1).unwrap().lambdas()[0] - exact).abs()
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    let t = convergence_study(&ConvergenceTarget::Disk, &[0.2, 0.1], 1).unwrap();
    assert!(t.rows[1].lambda_errors[0].abs() < t.rows[0].lambda_errors[0].abs());
}
