use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::mesh::{MeshedDomain, Point2};
use crate::error::{invalid, Error, Result};

type Evaluator = dyn Fn(Point2) -> Point2 + Send + Sync;

/// A planar velocity field that vanishes outside `|x|^2 > rho + 1`.
#[derive(Clone)]
pub struct VectorField2D {
    name: String,
    rho: f64,
    inner: Arc<Evaluator>,
}

impl fmt::Debug for VectorField2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField2D").field("name", &self.name).field("rho", &self.rho).finish()
    }
}

/// Quintic smoothstep cutoff in `s = |x|^2 - rho`: one for `s <= 0`, zero for `s >= 1`, C^2 across.
fn cutoff(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

impl VectorField2D {
    /// Wraps `f`, used verbatim for `|x|^2 <= rho` and blended to zero by `|x|^2 = rho + 1`.
    pub fn with_cutoff<F>(name: impl Into<String>, rho: f64, f: F) -> Result<Self>
    where
        F: Fn(Point2) -> Point2 + Send + Sync + 'static,
    {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid("support parameter rho must be positive"));
        }
        Ok(VectorField2D { name: name.into(), rho, inner: Arc::new(f) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support_radius(&self) -> f64 {
        self.rho
    }

    pub fn eval(&self, x: Point2) -> Point2 {
        let chi = cutoff(x[0] * x[0] + x[1] * x[1] - self.rho);
        if chi == 0.0 {
            return [0.0, 0.0];
        }
        let v = (self.inner)(x);
        [chi * v[0], chi * v[1]]
    }

    /// The field scaled by `c` (negation reverses the flow).
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.inner.clone();
        VectorField2D {
            name: format!("{}*{c}", self.name),
            rho: self.rho,
            inner: Arc::new(move |x| {
                let v = inner(x);
                [c * v[0], c * v[1]]
            }),
        }
    }

    /// `(0, y / ly)`: moves the top side `y = ly` of a rectangle outward at unit
    /// normal speed while the bottom stays fixed and the sides slide tangentially.
    pub fn vertical_stretch(ly: f64, rho: f64) -> Result<Self> {
        if !(ly > 0.0) {
            return Err(invalid("stretch height must be positive"));
        }
        Self::with_cutoff("vertical_stretch", rho, move |x| [0.0, x[1] / ly])
    }
}

/// Field that squashes the unit disk toward `(0, -1)` along circles through `(0, +-1)`:
/// `V(x) = (x_1 x_2, x_2^2 - (x_1^2 + x_2^2 + 1) / 2)` for `|x|^2 <= rho`.
pub fn squashing_field(rho: f64) -> Result<VectorField2D> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(invalid(format!("squashing field needs rho > 1, got {rho}")));
    }
    VectorField2D::with_cutoff("squashing", rho, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        [x[0] * x[1], x[1] * x[1] - 0.5 * (r2 + 1.0)]
    })
}

/// Default rho for the squashing field.
pub const DEFAULT_RHO: f64 = 4.0;

/// Local error target for the flow integrator.
pub const FLOW_TOLERANCE: f64 = 1e-10;

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Transports `x0` along the field for time `t` (negative `t` runs backward)
/// with an adaptive Dormand-Prince integrator.
pub fn integrate(field: &VectorField2D, x0: Point2, t: f64, tol: f64) -> Result<Point2> {
    if t == 0.0 {
        return Ok(x0);
    }
    let dir = t.signum();
    let total = t.abs();
    let mut x = x0;
    let mut done = 0.0;
    let mut step = (total / 16.0).min(0.05);
    let mut steps = 0usize;
    while done < total {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::Numerical("flow integrator exceeded its step budget".into()));
        }
        let hstep = step.min(total - done);
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut y = x;
            for (j, kj) in k.iter().enumerate().take(s) {
                y[0] += dir * hstep * A[s][j] * kj[0];
                y[1] += dir * hstep * A[s][j] * kj[1];
            }
            k[s] = field.eval(y);
        }
        let mut x5 = x;
        let mut err = [0.0; 2];
        for s in 0..7 {
            for d in 0..2 {
                x5[d] += dir * hstep * B5[s] * k[s][d];
                err[d] += dir * hstep * (B5[s] - B4[s]) * k[s][d];
            }
        }
        let scale = |d: usize| tol * (1.0 + x[d].abs().max(x5[d].abs()));
        let ratio = (err[0] / scale(0)).abs().max((err[1] / scale(1)).abs());
        if ratio <= 1.0 {
            x = x5;
            done += hstep;
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        step = (hstep * factor).max(1e-14 * total.max(1.0));
    }
    Ok(x)
}

/// Moves every vertex along the flow of `field` for time `t`.
///
/// Connectivity is kept; an inverted triangle yields a deformation error.
pub fn flow_deform(dom: &MeshedDomain, field: &VectorField2D, t: f64) -> Result<MeshedDomain> {
    if !t.is_finite() {
        return Err(invalid("flow time must be finite"));
    }
    if t == 0.0 {
        return Ok(dom.clone());
    }
    let moved = dom
        .vertices
        .par_iter()
        .map(|&p| integrate(field, p, t, FLOW_TOLERANCE))
        .collect::<Result<Vec<_>>>()?;
    dom.with_vertices(moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::meshing::{mesh_polygon, regular_polygon};

    #[test]
    fn squashing_values() {
        let v = squashing_field(4.0).unwrap();
        assert_eq!(v.eval([0.0, 1.0]), [0.0, 0.0]);
        assert_eq!(v.eval([0.0, -1.0]), [0.0, 0.0]);
        assert_eq!(v.eval([1.0, 0.0]), [0.0, -1.0]);
        assert_eq!(v.eval([3.0, 0.0]), [0.0, 0.0]);
        assert!(squashing_field(1.0).is_err());
    }

    #[test]
    fn cutoff_is_smooth_at_ends() {
        let eps = 1e-6;
        assert!((cutoff(eps) - 1.0).abs() < 1e-15);
        assert!(cutoff(1.0 - eps).abs() < 1e-15);
        assert!((cutoff(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn straight_line_flow() {
        let f = VectorField2D::with_cutoff("shift", 100.0, |_| [1.0, 0.0]).unwrap();
        let x = integrate(&f, [0.0, 0.0], 2.0, 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && x[1].abs() < 1e-15);
        let back = integrate(&f, x, -2.0, 1e-12).unwrap();
        assert!(back[0].abs() < 1e-12);
    }

    #[test]
    fn exponential_flow_matches_closed_form() {
        let f = VectorField2D::vertical_stretch(1.0, 100.0).unwrap();
        let x = integrate(&f, [0.3, 0.5], 0.7, 1e-11).unwrap();
        assert!((x[1] - 0.5 * 0.7f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_time_is_identity() {
        let m = mesh_polygon(&regular_polygon(16, 0.5), 0.2).unwrap();
        let f = squashing_field(4.0).unwrap();
        assert_eq!(flow_deform(&m, &f, 0.0).unwrap(), m);
    }
}
