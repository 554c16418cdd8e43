//! Time-varying local costs whose gradient is affine in the position,
//! `∇f(x, t) = σ x + g(t)`, and the team optimum they induce.
//!
//! The scalar value is reconstructed as `f(x, t) = σ/2 ‖x‖² + g(t)ᵀx`
//! (additive constant dropped). Controllers only consume derivatives; the
//! value exists for finite-difference and grid-search oracles.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coordinate of a time signal. All kinds have closed-form first and
/// second derivatives for `t >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSignal {
    /// `A sin(ωt + θ)`
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `A cos(ωt + θ)`
    Cosine {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `A sin(ωt) / (t + 1)`
    Damped { amplitude: f64, omega: f64 },
    /// `Σ cₖ tᵏ`, coefficients in ascending order.
    Polynomial { coeffs: Vec<f64> },
    Constant { value: f64 },
}

impl ScalarSignal {
    pub fn zero() -> Self {
        ScalarSignal::Constant { value: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ScalarSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            ScalarSignal::Cosine {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).cos(),
            ScalarSignal::Damped { amplitude, omega } => amplitude * (omega * t).sin() / (t + 1.0),
            ScalarSignal::Polynomial { ref coeffs } => horner(coeffs, t),
            ScalarSignal::Constant { value } => value,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            ScalarSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * omega * (omega * t + phase).cos(),
            ScalarSignal::Cosine {
                amplitude,
                omega,
                phase,
            } => -amplitude * omega * (omega * t + phase).sin(),
            ScalarSignal::Damped { amplitude, omega } => {
                let (s, c) = (omega * t).sin_cos();
                let p = t + 1.0;
                amplitude * (omega * c / p - s / (p * p))
            }
            ScalarSignal::Polynomial { ref coeffs } => horner(&poly_derivative(coeffs), t),
            ScalarSignal::Constant { .. } => 0.0,
        }
    }

    pub fn accel(&self, t: f64) -> f64 {
        match *self {
            ScalarSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => -amplitude * omega * omega * (omega * t + phase).sin(),
            ScalarSignal::Cosine {
                amplitude,
                omega,
                phase,
            } => -amplitude * omega * omega * (omega * t + phase).cos(),
            ScalarSignal::Damped { amplitude, omega } => {
                // h = s/p, h'' = s''/p - 2 s'/p² + 2 s/p³
                let (s, c) = (omega * t).sin_cos();
                let p = t + 1.0;
                amplitude
                    * (-omega * omega * s / p - 2.0 * omega * c / (p * p) + 2.0 * s / (p * p * p))
            }
            ScalarSignal::Polynomial { ref coeffs } => {
                horner(&poly_derivative(&poly_derivative(coeffs)), t)
            }
            ScalarSignal::Constant { .. } => 0.0,
        }
    }

    /// Multiplies the signal by `k` (amplitudes, coefficients or value).
    pub fn scaled(&self, k: f64) -> Self {
        match self.clone() {
            ScalarSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => ScalarSignal::Sinusoid {
                amplitude: k * amplitude,
                omega,
                phase,
            },
            ScalarSignal::Cosine {
                amplitude,
                omega,
                phase,
            } => ScalarSignal::Cosine {
                amplitude: k * amplitude,
                omega,
                phase,
            },
            ScalarSignal::Damped { amplitude, omega } => ScalarSignal::Damped {
                amplitude: k * amplitude,
                omega,
            },
            ScalarSignal::Polynomial { coeffs } => ScalarSignal::Polynomial {
                coeffs: coeffs.into_iter().map(|c| k * c).collect(),
            },
            ScalarSignal::Constant { value } => ScalarSignal::Constant { value: k * value },
        }
    }

    fn params_finite(&self) -> bool {
        match self {
            ScalarSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            }
            | ScalarSignal::Cosine {
                amplitude,
                omega,
                phase,
            } => amplitude.is_finite() && omega.is_finite() && phase.is_finite(),
            ScalarSignal::Damped { amplitude, omega } => amplitude.is_finite() && omega.is_finite(),
            ScalarSignal::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
            ScalarSignal::Constant { value } => value.is_finite(),
        }
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Vector-valued signal `g(t)`, one scalar signal per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    coords: Vec<ScalarSignal>,
}

impl TimeSignal {
    pub fn new(coords: Vec<ScalarSignal>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::param("signal", "needs at least one coordinate"));
        }
        if !coords.iter().all(ScalarSignal::params_finite) {
            return Err(Error::NonFinite("signal parameters".into()));
        }
        Ok(Self { coords })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            coords: vec![ScalarSignal::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[ScalarSignal] {
        &self.coords
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.coords.iter().map(|s| s.value(t)))
    }

    pub fn rate(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.coords.iter().map(|s| s.rate(t)))
    }

    pub fn accel(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.coords.iter().map(|s| s.accel(t)))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|s| s.scaled(k)).collect(),
        }
    }
}

/// Local cost with gradient `σ x + g(t)` and Hessian `σ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGradientCost {
    sigma: f64,
    signal: TimeSignal,
}

impl AffineGradientCost {
    pub fn new(sigma: f64, signal: TimeSignal) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::param(
                "sigma",
                format!("must be positive and finite, got {sigma}"),
            ));
        }
        Ok(Self { sigma, signal })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.signal.dim()
    }

    pub fn signal(&self) -> &TimeSignal {
        &self.signal
    }

    pub fn value(&self, x: &DVector<f64>, t: f64) -> f64 {
        0.5 * self.sigma * x.norm_squared() + self.signal.value(t).dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        x * self.sigma + self.signal.value(t)
    }

    /// `(∂∇f/∂t, ∂²∇f/∂t²) = (ġ(t), g̈(t))`, independent of `x`.
    pub fn grad_time_derivatives(&self, _x: &DVector<f64>, t: f64) -> (DVector<f64>, DVector<f64>) {
        (self.signal.rate(t), self.signal.accel(t))
    }

    /// Minimizer of this cost alone, `-g(t)/σ`.
    pub fn local_minimizer(&self, t: f64) -> DVector<f64> {
        self.signal.value(t) / -self.sigma
    }
}

/// Sum of local costs; all members share `σ` and the dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamCost {
    members: Vec<AffineGradientCost>,
}

impl TeamCost {
    pub fn new(members: Vec<AffineGradientCost>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::param("cost", "team needs at least one member"))?;
        for m in &members[1..] {
            if m.sigma != first.sigma {
                return Err(Error::Mismatch {
                    what: "sigma",
                    a: first.sigma,
                    b: m.sigma,
                });
            }
            if m.dim() != first.dim() {
                return Err(Error::Dimension {
                    expected: first.dim(),
                    got: m.dim(),
                });
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[AffineGradientCost] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &AffineGradientCost {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.members[0].sigma
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// Team cost `Σ fᵢ(x, t)` at a common point.
    pub fn value(&self, x: &DVector<f64>, t: f64) -> f64 {
        self.members.iter().map(|m| m.value(x, t)).sum()
    }

    /// `Σⱼ ∇fⱼ(xⱼ, t)` with each member evaluated at its own agent's position.
    pub fn sum_gradient(&self, positions: &[DVector<f64>], t: f64) -> DVector<f64> {
        self.members
            .iter()
            .zip(positions)
            .fold(DVector::zeros(self.dim()), |acc, (m, x)| acc + m.gradient(x, t))
    }

    /// Optimal position and velocity `x* = -Σg/(Nσ)`, `v* = -Σġ/(Nσ)`.
    pub fn team_optimum(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let scale = -1.0 / (self.len() as f64 * self.sigma());
        let mut g = DVector::zeros(self.dim());
        let mut gd = DVector::zeros(self.dim());
        for m in &self.members {
            g += m.signal.value(t);
            gd += m.signal.rate(t);
        }
        (g * scale, gd * scale)
    }

    /// Snapshot of the team value at time `t` for repeated evaluation.
    pub fn frozen_value(&self, t: f64) -> FrozenTeamValue {
        FrozenTeamValue {
            sigma_sum: self.members.iter().map(|m| m.sigma).sum(),
            linear: self
                .members
                .iter()
                .fold(DVector::zeros(self.dim()), |acc, m| acc + m.signal.value(t)),
        }
    }
}

/// `Σᵢ (σ/2 ‖x‖² + gᵢ(t)ᵀx)` with the signals already evaluated.
#[derive(Debug, Clone)]
pub struct FrozenTeamValue {
    sigma_sum: f64,
    linear: DVector<f64>,
}

impl FrozenTeamValue {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let quad: f64 = x.iter().map(|v| v * v).sum();
        let lin: f64 = x.iter().zip(self.linear.iter()).map(|(a, b)| a * b).sum();
        0.5 * self.sigma_sum * quad + lin
    }
}

/// Exhaustive grid minimization of the team value over an axis-aligned box.
///
/// Only value evaluations are used. Returns `BoxTooSmall` if the minimizing
/// grid point lies on the box boundary.
pub fn brute_force_optimum(
    team: &TeamCost,
    t: f64,
    bounds: &[(f64, f64)],
    grid_step: f64,
) -> Result<DVector<f64>> {
    if bounds.len() != team.dim() {
        return Err(Error::Dimension {
            expected: team.dim(),
            got: bounds.len(),
        });
    }
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::param("grid_step", "must be positive"));
    }
    let counts: Vec<usize> = bounds
        .iter()
        .map(|&(lo, hi)| {
            if hi > lo {
                ((hi - lo) / grid_step).round() as usize + 1
            } else {
                1
            }
        })
        .collect();
    let f = team.frozen_value(t);
    let dim = bounds.len();
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    let mut best = (f64::INFINITY, idx.clone());
    loop {
        for k in 0..dim {
            point[k] = bounds[k].0 + idx[k] as f64 * grid_step;
        }
        let v = f.eval(&point);
        if v < best.0 {
            best = (v, idx.clone());
        }
        // mixed-radix increment
        let mut k = 0;
        loop {
            if k == dim {
                let (_, arg) = best;
                for (c, (&i, &n)) in arg.iter().zip(&counts).enumerate() {
                    if n > 1 && (i == 0 || i == n - 1) {
                        return Err(Error::BoxTooSmall { coord: c });
                    }
                }
                return Ok(DVector::from_iterator(
                    dim,
                    arg.iter()
                        .zip(bounds)
                        .map(|(&i, &(lo, _))| lo + i as f64 * grid_step),
                ));
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Default search box `±(2 + 2·max|g|/σ)` per coordinate at time `t`.
pub fn default_search_box(team: &TeamCost, t: f64) -> Vec<(f64, f64)> {
    let max_g = team
        .members()
        .iter()
        .map(|m| m.signal().value(t).amax())
        .fold(0.0, f64::max);
    let half = 2.0 + 2.0 * max_g / team.sigma();
    vec![(-half, half); team.dim()]
}

/// Index-scaled family `gᵢ(t) = i · template(t)` for agents `i = 1..=n`.
pub fn index_scaled_team(sigma: f64, template: &TimeSignal, n: usize) -> Result<TeamCost> {
    let members = (1..=n)
        .map(|i| AffineGradientCost::new(sigma, template.scaled(i as f64)))
        .collect::<Result<Vec<_>>>()?;
    TeamCost::new(members)
}

/// `gᵢ(t) = -2i (sin 0.2t, cos 0.2t)`, σ = 2, i.e. `fᵢ = ‖x - i(sin 0.2t, cos 0.2t)‖²`.
pub fn orbit_team(n: usize) -> TeamCost {
    let template = TimeSignal::new(vec![
        ScalarSignal::Sinusoid {
            amplitude: -2.0,
            omega: 0.2,
            phase: 0.0,
        },
        ScalarSignal::Cosine {
            amplitude: -2.0,
            omega: 0.2,
            phase: 0.0,
        },
    ])
    .expect("finite template");
    index_scaled_team(2.0, &template, n).expect("valid team")
}

/// `gᵢ(t) = (4i sin(0.5t)/(t+1), 2i sin(0.1t))`, σ = 2.
pub fn damped_team(n: usize) -> TeamCost {
    let template = TimeSignal::new(vec![
        ScalarSignal::Damped {
            amplitude: 4.0,
            omega: 0.5,
        },
        ScalarSignal::Sinusoid {
            amplitude: 2.0,
            omega: 0.1,
            phase: 0.0,
        },
    ])
    .expect("finite template");
    index_scaled_team(2.0, &template, n).expect("valid team")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn gradient_examples() {
        let team = orbit_team(6);
        let g = team.member(0).gradient(&dvector![0.0, 0.0], 0.0);
        assert!(close(&g, &dvector![0.0, -2.0], 1e-15));

        let zero = AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap();
        assert_eq!(zero.gradient(&dvector![0.0, 0.0], 3.0), dvector![0.0, 0.0]);
        assert_eq!(zero.gradient(&dvector![1.0, -1.0], 3.0), dvector![2.0, -2.0]);
    }

    #[test]
    fn time_derivative_examples() {
        let team = orbit_team(1);
        let (gd, gdd) = team.member(0).grad_time_derivatives(&dvector![0.0, 0.0], 0.0);
        assert!(close(&gd, &dvector![-0.4, 0.0], 1e-15));
        assert!(close(&gdd, &dvector![0.0, 0.08], 1e-15));

        let c = AffineGradientCost::new(
            1.0,
            TimeSignal::new(vec![ScalarSignal::Constant { value: 3.0 }]).unwrap(),
        )
        .unwrap();
        let (gd, gdd) = c.grad_time_derivatives(&dvector![1.0], 2.0);
        assert_eq!((gd[0], gdd[0]), (0.0, 0.0));

        let p = AffineGradientCost::new(
            1.0,
            TimeSignal::new(vec![
                ScalarSignal::Polynomial {
                    coeffs: vec![0.0, 0.0, 1.0],
                },
                ScalarSignal::zero(),
            ])
            .unwrap(),
        )
        .unwrap();
        let (gd, gdd) = p.grad_time_derivatives(&dvector![0.0, 0.0], 1.0);
        assert_eq!(gd, dvector![2.0, 0.0]);
        assert_eq!(gdd, dvector![2.0, 0.0]);
    }

    #[test]
    fn damped_derivatives_at_origin() {
        // hand-differentiated: h = 4 sin(0.5t)/(t+1), h'(0) = 2, h''(0) = -4
        let s = ScalarSignal::Damped {
            amplitude: 4.0,
            omega: 0.5,
        };
        assert_eq!(s.value(0.0), 0.0);
        assert!((s.rate(0.0) - 2.0).abs() < 1e-15);
        assert!((s.accel(0.0) + 4.0).abs() < 1e-15);
    }

    #[test]
    fn team_optimum_examples() {
        let (x, _) = orbit_team(6).team_optimum(0.0);
        assert!(close(&x, &dvector![0.0, 3.5], 1e-14));

        let zero = TeamCost::new(vec![
            AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap();
            3
        ])
        .unwrap();
        let (x, v) = zero.team_optimum(1.0);
        assert_eq!((x.amax(), v.amax()), (0.0, 0.0));

        let c = 1.5;
        let single = TeamCost::new(vec![AffineGradientCost::new(
            2.0,
            TimeSignal::new(vec![
                ScalarSignal::Constant { value: c },
                ScalarSignal::Constant { value: c },
            ])
            .unwrap(),
        )
        .unwrap()])
        .unwrap();
        let (x, v) = single.team_optimum(4.0);
        assert!(close(&x, &dvector![-c / 2.0, -c / 2.0], 1e-15));
        assert_eq!(v.amax(), 0.0);
    }

    #[test]
    fn mismatched_sigma_rejected() {
        let a = AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap();
        let b = AffineGradientCost::new(3.0, TimeSignal::zero(2)).unwrap();
        assert!(matches!(
            TeamCost::new(vec![a, b]),
            Err(Error::Mismatch { what: "sigma", .. })
        ));
        assert!(AffineGradientCost::new(-1.0, TimeSignal::zero(2)).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let team = orbit_team(6);
        let x = brute_force_optimum(&team, 0.0, &[(-5.0, 5.0), (-5.0, 5.0)], 0.01).unwrap();
        assert!(close(&x, &dvector![0.0, 3.5], 0.01));

        let zero = TeamCost::new(vec![
            AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap();
            2
        ])
        .unwrap();
        let x = brute_force_optimum(&zero, 0.0, &[(-1.0, 1.0), (-1.0, 1.0)], 0.5).unwrap();
        assert!(close(&x, &dvector![0.0, 0.0], 1e-12));

        let one = TeamCost::new(vec![AffineGradientCost::new(
            2.0,
            TimeSignal::new(vec![
                ScalarSignal::Constant { value: 2.0 },
                ScalarSignal::zero(),
            ])
            .unwrap(),
        )
        .unwrap()])
        .unwrap();
        let x = brute_force_optimum(&one, 0.0, &[(-3.0, 3.0), (-3.0, 3.0)], 0.05).unwrap();
        assert!(close(&x, &dvector![-1.0, 0.0], 0.05));
    }

    #[test]
    fn brute_force_rejects_small_box() {
        let team = orbit_team(6);
        let err = brute_force_optimum(&team, 0.0, &[(-1.0, 1.0), (-1.0, 1.0)], 0.1);
        assert_eq!(err, Err(Error::BoxTooSmall { coord: 1 }));
    }

    proptest! {
        #[test]
        fn strongly_convex(
            x in proptest::collection::vec(-10.0f64..10.0, 2),
            y in proptest::collection::vec(-10.0f64..10.0, 2),
            t in 0.0f64..60.0,
            i in 0usize..6,
        ) {
            let team = damped_team(6);
            let c = team.member(i);
            let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
            let lhs = (&y - &x).dot(&(c.gradient(&y, t) - c.gradient(&x, t)));
            prop_assert!(lhs >= c.sigma() * (&y - &x).norm_squared() - 1e-9);
        }

        #[test]
        fn gradient_matches_value_differences(
            x in proptest::collection::vec(-10.0f64..10.0, 2),
            t in 0.0f64..60.0,
        ) {
            let c = orbit_team(4).member(3).clone();
            let x = DVector::from_vec(x);
            let h = 1e-5;
            let g = c.gradient(&x, t);
            for k in 0..2 {
                let mut p = x.clone();
                let mut m = x.clone();
                p[k] += h;
                m[k] -= h;
                let fd = (c.value(&p, t) - c.value(&m, t)) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + g.norm()));
            }
        }
    }
}
