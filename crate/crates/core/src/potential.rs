//! Pairwise potential for collision avoidance and connectivity maintenance.
//!
//! For a bonded pair at distance `r`,
//!
//! ```text
//! V(r) = k (r - d)² (1/r + 1/(R - r)) = k R (r - d)² / (r (R - r))
//! V'(r) = k R (r - d) (r (R - 2d) + d R) / (r (R - r))²
//! ```
//!
//! `V` is zero only at `r = d`, grows without bound as `r → 0` and `r → R`,
//! and `sign V'(r) = sign(r - d)` on `(0, R)` whenever `0 < d < R`.
//! Non-bonded pairs contribute neither potential nor force.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DesiredDistance {
    Uniform(f64),
    /// Symmetric per-pair table; the diagonal is ignored.
    PerPair(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialParams {
    pub radius: f64,
    pub desired: DesiredDistance,
    pub gain: f64,
    pub force_cap: Option<f64>,
}

impl PotentialParams {
    pub fn uniform(radius: f64, desired: f64, gain: f64) -> Self {
        Self {
            radius,
            desired: DesiredDistance::Uniform(desired),
            gain,
            force_cap: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("potential.radius", "must be positive"));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::param("potential.k_p", "must be positive"));
        }
        if let Some(cap) = self.force_cap {
            if !(cap > 0.0) {
                return Err(Error::param("potential.force_cap", "must be positive"));
            }
        }
        let check = |d: f64| {
            if d > 0.0 && d < self.radius {
                Ok(())
            } else {
                Err(Error::param(
                    "potential.d",
                    format!("desired distance {d} must lie in (0, {})", self.radius),
                ))
            }
        };
        match &self.desired {
            DesiredDistance::Uniform(d) => check(*d),
            DesiredDistance::PerPair(table) => {
                if table.nrows() != n || table.ncols() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: table.nrows(),
                    });
                }
                for i in 0..n {
                    for j in i + 1..n {
                        check(table[(i, j)])?;
                        if table[(i, j)] != table[(j, i)] {
                            return Err(Error::param("potential.d", "table must be symmetric"));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    pub fn desired(&self, i: usize, j: usize) -> f64 {
        match &self.desired {
            DesiredDistance::Uniform(d) => *d,
            DesiredDistance::PerPair(table) => table[(i, j)],
        }
    }

    pub fn pair(&self, i: usize, j: usize) -> PairPotential {
        PairPotential {
            radius: self.radius,
            desired: self.desired(i, j),
            gain: self.gain,
            force_cap: self.force_cap,
        }
    }
}

/// Potential of one specific pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPotential {
    pub radius: f64,
    pub desired: f64,
    pub gain: f64,
    pub force_cap: Option<f64>,
}

/// Gradient of `V_ij` with respect to `x_i`, and whether the cap clamped it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairForce {
    pub grad: DVector<f64>,
    pub clamped: bool,
}

impl PairPotential {
    fn check_distance(&self, r: f64) -> Result<()> {
        if !(r > 0.0) {
            return Err(Error::param("r", format!("distance must be positive, got {r}")));
        }
        if r >= self.radius {
            return Err(Error::BeyondRadius {
                distance: r,
                radius: self.radius,
            });
        }
        Ok(())
    }

    pub fn value(&self, r: f64, bonded: bool) -> Result<f64> {
        if !bonded {
            return if r > 0.0 {
                Ok(0.0)
            } else {
                Err(Error::param("r", format!("distance must be positive, got {r}")))
            };
        }
        self.check_distance(r)?;
        let (big_r, d) = (self.radius, self.desired);
        let u = r - d;
        Ok(self.gain * big_r * u * u / (r * (big_r - r)))
    }

    /// `dV/dr`.
    pub fn slope(&self, r: f64, bonded: bool) -> Result<f64> {
        if !bonded {
            return if r > 0.0 {
                Ok(0.0)
            } else {
                Err(Error::param("r", format!("distance must be positive, got {r}")))
            };
        }
        self.check_distance(r)?;
        let (big_r, d) = (self.radius, self.desired);
        let q = r * (big_r - r);
        Ok(self.gain * big_r * (r - d) * (r * (big_r - 2.0 * d) + d * big_r) / (q * q))
    }

    /// Scalar `c` with `∂V/∂x_i = c (x_i - x_j)` after capping, and whether
    /// the cap applied.
    pub fn grad_coefficient(&self, offset: &DVector<f64>, bonded: bool) -> Result<(f64, bool)> {
        let r = offset.norm();
        if r == 0.0 {
            return Err(Error::param("offset", "coincident positions"));
        }
        let slope = self.slope(r, bonded)?;
        match self.force_cap {
            Some(cap) if slope.abs() > cap => {
                log::debug!("force clamped at r = {r}: |V'| = {} > {cap}", slope.abs());
                Ok((cap * slope.signum() / r, true))
            }
            _ => Ok((slope / r, false)),
        }
    }

    /// `∂V/∂x_i` given the offset `x_i - x_j`: `V'(r) (x_i - x_j) / r`.
    pub fn grad_from_offset(&self, offset: &DVector<f64>, bonded: bool) -> Result<PairForce> {
        let (c, clamped) = self.grad_coefficient(offset, bonded)?;
        Ok(PairForce {
            grad: offset * c,
            clamped,
        })
    }

    pub fn grad_wrt_i(
        &self,
        x_i: &DVector<f64>,
        x_j: &DVector<f64>,
        bonded: bool,
    ) -> Result<PairForce> {
        self.grad_from_offset(&(x_i - x_j), bonded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn reference_pair() -> PairPotential {
        PotentialParams::uniform(5.0, 0.5, 1.0).pair(0, 1)
    }

    #[test]
    fn value_examples() {
        let p = reference_pair();
        assert_eq!(p.value(0.5, true).unwrap(), 0.0);
        assert!(p.value(1e-6, true).unwrap() > 1e5);
        for r in [5.0, 7.0, 100.0] {
            assert_eq!(p.value(r, false).unwrap(), 0.0);
            assert_eq!(p.slope(r, false).unwrap(), 0.0);
        }
        assert!(p.value(0.0, true).is_err());
        assert!(p.value(-1.0, false).is_err());
        assert!(matches!(p.value(5.0, true), Err(Error::BeyondRadius { .. })));
    }

    #[test]
    fn blows_up_at_both_ends() {
        let p = reference_pair();
        assert!(p.value(0.01 * 0.5, true).unwrap() > p.value(0.1 * 0.5, true).unwrap());
        let near = |eps: f64| p.value(5.0 - eps, true).unwrap();
        assert!(near(1e-4) > near(1e-3));
        assert!(near(1e-6) > 1e6);
    }

    #[test]
    fn gradient_directions() {
        let p = reference_pair();
        let xi = dvector![0.0, 0.0];
        let f = p.grad_wrt_i(&xi, &dvector![0.5, 0.0], true).unwrap();
        assert_eq!(f.grad, dvector![0.0, 0.0]);

        // d < r < R: gradient points along x_i - x_j, so -grad pulls i toward j
        let xj = dvector![2.75, 0.0];
        let g = p.grad_wrt_i(&xi, &xj, true).unwrap().grad;
        assert!(g.dot(&(&xi - &xj)) > 0.0);

        let xj = dvector![0.2, 0.0];
        let g = p.grad_wrt_i(&xi, &xj, true).unwrap().grad;
        assert!(g.dot(&(&xi - &xj)) < 0.0);

        assert!(p.grad_wrt_i(&xi, &xi, true).is_err());
    }

    #[test]
    fn slope_vanishes_at_desired_distance() {
        let p = PotentialParams::uniform(5.0, 0.5, 3.0).pair(0, 1);
        assert!(p.slope(0.5, true).unwrap().abs() <= 1e-10);
        let h = 1e-7;
        let fd = (p.value(0.5 + h, true).unwrap() - p.value(0.5 - h, true).unwrap()) / (2.0 * h);
        assert!(fd.abs() <= 1e-10);
    }

    #[test]
    fn force_cap_clamps_and_reports() {
        let mut p = reference_pair();
        p.force_cap = Some(1.0);
        let f = p.grad_wrt_i(&dvector![0.0, 0.0], &dvector![0.01, 0.0], true).unwrap();
        assert!(f.clamped);
        assert!((f.grad.norm() - 1.0).abs() < 1e-12);
        let f = p.grad_wrt_i(&dvector![0.0, 0.0], &dvector![0.51, 0.0], true).unwrap();
        assert!(!f.clamped);
    }

    #[test]
    fn non_negative_and_zero_only_at_d() {
        let p = reference_pair();
        for k in 1..5000 {
            let r = 5.0 * k as f64 / 5000.0;
            let v = p.value(r, true).unwrap();
            assert!(v >= 0.0);
            if (r - 0.5).abs() > 1e-12 {
                assert!(v > 0.0, "V({r}) = {v}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(PotentialParams::uniform(5.0, 5.0, 1.0).validate(2).is_err());
        assert!(PotentialParams::uniform(5.0, 0.5, 0.0).validate(2).is_err());
        assert!(PotentialParams::uniform(5.0, 0.5, 1.0).validate(2).is_ok());
        let mut t = DMatrix::from_element(2, 2, 0.7);
        t[(1, 0)] = 0.8;
        let p = PotentialParams {
            desired: DesiredDistance::PerPair(t),
            ..PotentialParams::uniform(5.0, 0.5, 1.0)
        };
        assert!(p.validate(2).is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric_gradient(
            a in proptest::collection::vec(-1.4f64..1.4, 3),
            b in proptest::collection::vec(-1.4f64..1.4, 3),
            cap in proptest::option::of(0.1f64..10.0),
        ) {
            let mut p = reference_pair();
            p.force_cap = cap;
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            prop_assume!((&a - &b).norm() > 1e-6);
            let gij = p.grad_wrt_i(&a, &b, true).unwrap().grad;
            let gji = p.grad_wrt_i(&b, &a, true).unwrap().grad;
            prop_assert_eq!(gij + gji, DVector::zeros(3));
        }

        #[test]
        fn slope_sign_matches_offset(r in 1e-3f64..4.999, d in 0.05f64..4.9) {
            prop_assume!(d < 5.0);
            let p = PotentialParams::uniform(5.0, d, 1.0).pair(0, 1);
            let s = p.slope(r, true).unwrap();
            prop_assert!(s * (r - d) >= 0.0);
        }
    }
}
