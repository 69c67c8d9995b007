use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The box `(0, mu_1 pi) x ... x (0, mu_d pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orthotope {
    mu: Vec<f64>,
}

/// Builds the orthotope with side lengths `mu_i * pi`.
pub fn make_orthotope(mu: &[f64]) -> Result<Orthotope> {
    if mu.is_empty() {
        return Err(invalid("orthotope needs at least one side"));
    }
    if let Some(bad) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(invalid(format!("orthotope side factor {bad} is not positive")));
    }
    Ok(Orthotope { mu: mu.to_vec() })
}

impl Orthotope {
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Side length along `axis`, `mu_axis * pi`.
    pub fn side(&self, axis: usize) -> f64 {
        self.mu[axis] * PI
    }

    pub fn volume(&self) -> f64 {
        self.mu.iter().map(|m| m * PI).product()
    }

    /// Open-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, &xi)| xi > 0.0 && xi < self.side(i))
    }

    /// `1 / mu_i^2` for every axis; these are the eigenvalue weights.
    pub fn inverse_squares(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 1.0 / (m * m)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval() {
        let o = make_orthotope(&[1.0]).unwrap();
        assert_eq!(o.dim(), 1);
        assert!((o.side(0) - PI).abs() < 1e-15);
        assert!(o.contains(&[PI / 2.0]));
        assert!(!o.contains(&[PI]));
    }

    #[test]
    fn square_and_canonical_rectangle() {
        let sq = make_orthotope(&[1.0, 1.0]).unwrap();
        assert!((sq.volume() - PI * PI).abs() < 1e-12);
        let r = make_orthotope(&[1.0, 2f64.powf(-0.25)]).unwrap();
        let w = r.inverse_squares();
        assert!((w[1] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(make_orthotope(&[1.0, 0.0]).is_err());
        assert!(make_orthotope(&[-1.0]).is_err());
        assert!(make_orthotope(&[]).is_err());
        assert!(make_orthotope(&[f64::NAN]).is_err());
    }
}
