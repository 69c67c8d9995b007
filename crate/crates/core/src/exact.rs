//! Exact arithmetic in a real quadratic field `Q(sqrt(s))`.
//!
//! Orthotope eigenvalues are integer combinations of the weights `1/mu_i^2`.
//! When every weight is rational or a rational multiple of one square root,
//! equalities and integer relations among the eigenvalues can be decided
//! exactly instead of up to a tolerance.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use serde::Serialize;

use crate::eigensolver::OrthotopeMode;
use crate::error::{invalid, Result};

pub type Rational = Ratio<i128>;

/// `rational + irrational * sqrt(radicand)` with a square-free radicand; radicand 1 means `irrational == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadraticSurd {
    pub rational: Rational,
    pub irrational: Rational,
    pub radicand: u64,
}

impl fmt::Display for QuadraticSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.irrational == Rational::from_integer(0) {
            write!(f, "{}", self.rational)
        } else {
            write!(f, "{} + {}*sqrt({})", self.rational, self.irrational, self.radicand)
        }
    }
}

impl Serialize for QuadraticSurd {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn is_square_free(s: u64) -> bool {
    (2..).take_while(|p| p * p <= s).all(|p| s % (p * p) != 0)
}

impl QuadraticSurd {
    pub fn rational(r: Rational) -> Self {
        QuadraticSurd { rational: r, irrational: Rational::from_integer(0), radicand: 1 }
    }

    /// `a + b sqrt(s)`; `s` must be square-free.
    pub fn new(a: Rational, b: Rational, s: u64) -> Result<Self> {
        if s == 0 || !is_square_free(s) {
            return Err(invalid(format!("radicand {s} is not square-free")));
        }
        if s == 1 {
            return Ok(Self::rational(a + b));
        }
        Ok(QuadraticSurd { rational: a, irrational: b, radicand: s })
    }

    pub fn is_rational(&self) -> bool {
        self.irrational == Rational::from_integer(0)
    }

    pub fn to_f64(&self) -> f64 {
        let f = |r: Rational| *r.numer() as f64 / *r.denom() as f64;
        f(self.rational) + f(self.irrational) * (self.radicand as f64).sqrt()
    }

    /// Recognizes `x` as a rational with denominator at most `1e6`, or as a rational
    /// with denominator at most `1e3` times `sqrt(s)` for square-free `s < 100`.
    pub fn recognize(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if let Some(r) = rational_approximation(x, 1_000_000, 1e-13) {
            return Some(Self::rational(r));
        }
        (2u64..100).filter(|&s| is_square_free(s)).find_map(|s| {
            let r = rational_approximation(x / (s as f64).sqrt(), 1000, 1e-13)?;
            Some(QuadraticSurd { rational: Rational::from_integer(0), irrational: r, radicand: s })
        })
    }
}

/// Best rational approximation with bounded denominator, accepted only within `rel_tol`.
pub fn rational_approximation(x: f64, max_den: i128, rel_tol: f64) -> Option<Rational> {
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let (p2, q2) = (ai * p1 + p0, ai * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if (p1 as f64 / q1 as f64 - x).abs() <= rel_tol * x.abs().max(1.0) {
            return Some(Rational::new(p1, q1));
        }
        let frac = v - a;
        if frac == 0.0 {
            break;
        }
        v = 1.0 / frac;
    }
    None
}

/// Exact eigenvalues in a common quadratic field, with denominators cleared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactSpectrum {
    pub values: Vec<QuadraticSurd>,
    pub radicand: u64,
}

impl ExactSpectrum {
    /// Combines separable modes `sum_i k_i^2 w_i` from exact axis weights.
    pub fn from_modes(modes: &[OrthotopeMode], weights: &[QuadraticSurd]) -> Result<Self> {
        let radicand = common_radicand(weights)?;
        let values = modes
            .iter()
            .map(|m| {
                if m.k.len() != weights.len() {
                    return Err(invalid("mode dimension does not match the weights"));
                }
                let mut a = Rational::from_integer(0);
                let mut b = Rational::from_integer(0);
                for (&k, w) in m.k.iter().zip(weights) {
                    let k2 = Rational::from_integer((k as i128) * (k as i128));
                    a += k2 * w.rational;
                    b += k2 * w.irrational;
                }
                Ok(QuadraticSurd { rational: a, irrational: b, radicand })
            })
            .collect::<Result<_>>()?;
        Ok(ExactSpectrum { values, radicand })
    }

    /// Integer coordinates `(A_l, B_l)` with `lambda_l = (A_l + B_l sqrt(s)) / D` for a common `D`.
    pub fn integer_coordinates(&self) -> (Vec<i128>, Vec<i128>) {
        let den = self
            .values
            .iter()
            .fold(1i128, |d, v| d.lcm(v.rational.denom()).lcm(v.irrational.denom()));
        let scale = |r: Rational| r.numer() * (den / r.denom());
        (
            self.values.iter().map(|v| scale(v.rational)).collect(),
            self.values.iter().map(|v| scale(v.irrational)).collect(),
        )
    }

    /// First pair of equal consecutive values, if any.
    pub fn first_coincidence(&self) -> Option<usize> {
        self.values.windows(2).position(|w| w[0] == w[1])
    }
}

fn common_radicand(weights: &[QuadraticSurd]) -> Result<u64> {
    let mut radicand = 1;
    for w in weights.iter().filter(|w| !w.is_rational()) {
        if radicand != 1 && w.radicand != radicand {
            return Err(invalid(format!(
                "weights involve both sqrt({radicand}) and sqrt({}); only one quadratic field is supported",
                w.radicand
            )));
        }
        radicand = w.radicand;
    }
    Ok(radicand)
}

/// Recognizes every weight `1/mu_i^2` of an orthotope exactly, or returns `None`.
pub fn recognize_weights(inverse_squares: &[f64]) -> Option<Vec<QuadraticSurd>> {
    let w: Vec<QuadraticSurd> = inverse_squares.iter().map(|&x| QuadraticSurd::recognize(x)).collect::<Option<_>>()?;
    common_radicand(&w).ok()?;
    Some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_rationals_and_surds() {
        assert_eq!(QuadraticSurd::recognize(0.25).unwrap(), QuadraticSurd::rational(Rational::new(1, 4)));
        let s = QuadraticSurd::recognize(1.0 / 2f64.powf(-0.25).powi(2)).unwrap();
        assert_eq!((s.irrational, s.radicand), (Rational::from_integer(1), 2));
        let t = QuadraticSurd::recognize(3.0 * 5f64.sqrt() / 7.0).unwrap();
        assert_eq!((t.irrational, t.radicand), (Rational::new(3, 7), 5));
        assert!(QuadraticSurd::recognize(std::f64::consts::PI).is_none());
    }

    #[test]
    fn mixed_fields_rejected() {
        let a = QuadraticSurd::new(Rational::from_integer(0), Rational::from_integer(1), 2).unwrap();
        let b = QuadraticSurd::new(Rational::from_integer(0), Rational::from_integer(1), 3).unwrap();
        assert!(common_radicand(&[a, b]).is_err());
        assert!(QuadraticSurd::new(Rational::from_integer(0), Rational::from_integer(1), 8).is_err());
    }

    #[test]
    fn integer_coordinates_clear_denominators() {
        let v = ExactSpectrum {
            values: vec![
                QuadraticSurd::new(Rational::new(1, 2), Rational::new(1, 3), 2).unwrap(),
                QuadraticSurd::new(Rational::from_integer(1), Rational::from_integer(0), 2).unwrap(),
            ],
            radicand: 2,
        };
        assert_eq!(v.integer_coordinates(), (vec![3, 6], vec![2, 0]));
    }
}
