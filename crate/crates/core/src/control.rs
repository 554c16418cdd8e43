//! The two swarm-tracking control laws.
//!
//! Single integrator (`ẋᵢ = uᵢ`):
//!
//! ```text
//! uᵢ = -α Σⱼ ∂Vᵢⱼ/∂xᵢ - β sgn(Σⱼ ∂Vᵢⱼ/∂xᵢ) + φᵢ
//! φᵢ = -(1/σ) (τ ∇fᵢ + ġᵢ)
//! ```
//!
//! Double integrator (`ẋᵢ = vᵢ, v̇ᵢ = uᵢ`):
//!
//! ```text
//! uᵢ = -Σⱼ ∂Vᵢⱼ/∂xᵢ - α Σⱼ (vᵢ - vⱼ) - β Σⱼ sgn(vᵢ - vⱼ) + φᵢ
//! φᵢ = -(1/σ) (g̈ᵢ + σ vᵢ + ġᵢ) - σ ∇fᵢ
//! ```
//!
//! Sums run over bonded neighbors. Controllers see an agent's own state and
//! its offsets to neighbors only, through [`LocalView`].

use nalgebra::DVector;

use crate::cost::{AffineGradientCost, TeamCost};
use crate::error::{Error, Result};
use crate::graph::{ProximityGraph, CONNECTIVITY_TOL};
use crate::potential::{PairPotential, PotentialParams};
use crate::sim::{Dynamics, SwarmState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainsSingle {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl GainsSingle {
    pub fn new(alpha: f64, beta: f64, tau: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::param("gains.alpha", "must be non-negative"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("gains.beta", "must be positive"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param("gains.tau", "must be positive"));
        }
        Ok(Self { alpha, beta, tau })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainsDouble {
    pub alpha: f64,
    pub beta: f64,
}

impl GainsDouble {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("gains.alpha", "must be positive"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("gains.beta", "must be positive"));
        }
        Ok(Self { alpha, beta })
    }
}

/// Gains together with the dynamics they drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlLaw {
    Single(GainsSingle),
    Double(GainsDouble),
}

impl ControlLaw {
    pub fn dynamics(&self) -> Dynamics {
        match self {
            ControlLaw::Single(_) => Dynamics::Single,
            ControlLaw::Double(_) => Dynamics::Double,
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            ControlLaw::Single(g) => g.beta,
            ControlLaw::Double(g) => g.beta,
        }
    }
}

/// Componentwise signum, exact or smoothed as `tanh(y/κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SgnMode {
    Exact,
    BoundaryLayer { kappa: f64 },
}

impl SgnMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SgnMode::BoundaryLayer { kappa } if !(kappa > 0.0 && kappa.is_finite()) => {
                Err(Error::param("integration.kappa", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn scalar(&self, y: f64) -> f64 {
        match *self {
            SgnMode::Exact => {
                if y > 0.0 {
                    1.0
                } else if y < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            // built on |y| so that oddness is exact
            SgnMode::BoundaryLayer { kappa } => y.signum() * (y.abs() / kappa).tanh(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|y| self.scalar(y))
    }
}

/// `φ` of the single-integrator law: `-(1/σ)(τ(σx + g) + ġ)`.
pub fn phi_single(cost: &AffineGradientCost, x: &DVector<f64>, t: f64, tau: f64) -> DVector<f64> {
    let (g_dot, _) = cost.grad_time_derivatives(x, t);
    (cost.gradient(x, t) * tau + g_dot) / -cost.sigma()
}

/// `φ` of the double-integrator law for the affine family (constant Hessian):
/// `-(1/σ)(g̈ + σv + ġ) - σ(σx + g)`.
pub fn phi_double(
    cost: &AffineGradientCost,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let sigma = cost.sigma();
    let coords = cost.signal().coords();
    DVector::from_fn(x.len(), |k, _| {
        let s = &coords[k];
        -(s.accel(t) + sigma * v[k] + s.rate(t)) / sigma - sigma * (sigma * x[k] + s.value(t))
    })
}

#[derive(Debug, Clone)]
pub struct NeighborView {
    pub pair: PairPotential,
    /// `xᵢ - xⱼ`
    pub offset: DVector<f64>,
    /// `vᵢ - vⱼ`
    pub rel_velocity: DVector<f64>,
}

/// Everything agent `i` may use: its own state and relative states of its
/// bonded neighbors.
#[derive(Debug, Clone)]
pub struct LocalView {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub neighbors: Vec<NeighborView>,
}

impl LocalView {
    pub fn gather(
        i: usize,
        state: &SwarmState,
        graph: &ProximityGraph,
        potentials: &PotentialParams,
    ) -> Self {
        let (xi, vi) = (&state.positions[i], &state.velocities[i]);
        let mut neighbors = Vec::with_capacity(graph.len().saturating_sub(1));
        neighbors.extend(graph.neighbors(i).map(|j| NeighborView {
            pair: potentials.pair(i, j),
            offset: xi - &state.positions[j],
            rel_velocity: vi - &state.velocities[j],
        }));
        Self {
            position: xi.clone(),
            velocity: vi.clone(),
            neighbors,
        }
    }

    /// `Σⱼ ∂Vᵢⱼ/∂xᵢ` and the number of capped pair forces.
    pub fn potential_gradient(&self) -> Result<(DVector<f64>, usize)> {
        let mut sum = DVector::zeros(self.position.len());
        let mut clamps = 0;
        for nb in &self.neighbors {
            let (c, clamped) = nb.pair.grad_coefficient(&nb.offset, true)?;
            sum.axpy(c, &nb.offset, 1.0);
            clamps += usize::from(clamped);
        }
        Ok((sum, clamps))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    pub clamps: usize,
}

pub fn control_single_local(
    view: &LocalView,
    cost: &AffineGradientCost,
    gains: &GainsSingle,
    mode: SgnMode,
    t: f64,
) -> Result<ControlOutput> {
    let (grad, clamps) = view.potential_gradient()?;
    let mut u = phi_single(cost, &view.position, t, gains.tau);
    u.axpy(-gains.alpha, &grad, 1.0);
    for (uk, gk) in u.iter_mut().zip(grad.iter()) {
        *uk -= gains.beta * mode.scalar(*gk);
    }
    Ok(ControlOutput { u, clamps })
}

pub fn control_double_local(
    view: &LocalView,
    cost: &AffineGradientCost,
    gains: &GainsDouble,
    mode: SgnMode,
    t: f64,
) -> Result<ControlOutput> {
    let (grad, clamps) = view.potential_gradient()?;
    let mut u = phi_double(cost, &view.position, &view.velocity, t);
    u -= grad;
    for nb in &view.neighbors {
        for (uk, dv) in u.iter_mut().zip(nb.rel_velocity.iter()) {
            *uk -= gains.alpha * dv + gains.beta * mode.scalar(*dv);
        }
    }
    Ok(ControlOutput { u, clamps })
}

#[allow(clippy::too_many_arguments)]
pub fn control_single(
    i: usize,
    state: &SwarmState,
    graph: &ProximityGraph,
    potentials: &PotentialParams,
    cost: &AffineGradientCost,
    gains: &GainsSingle,
    mode: SgnMode,
    t: f64,
) -> Result<ControlOutput> {
    control_single_local(&LocalView::gather(i, state, graph, potentials), cost, gains, mode, t)
}

#[allow(clippy::too_many_arguments)]
pub fn control_double(
    i: usize,
    state: &SwarmState,
    graph: &ProximityGraph,
    potentials: &PotentialParams,
    cost: &AffineGradientCost,
    gains: &GainsDouble,
    mode: SgnMode,
    t: f64,
) -> Result<ControlOutput> {
    control_double_local(&LocalView::gather(i, state, graph, potentials), cost, gains, mode, t)
}

/// Deviations from the swarm mean, `(Π ⊗ I) X` and `(Π ⊗ I) V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusError {
    pub e_x: Vec<DVector<f64>>,
    pub e_v: Vec<DVector<f64>>,
}

impl ConsensusError {
    pub fn position_norm(&self) -> f64 {
        stacked_norm(&self.e_x)
    }

    pub fn velocity_norm(&self) -> f64 {
        stacked_norm(&self.e_v)
    }
}

fn stacked_norm(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

fn centered(vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let dim = vs.first().map_or(0, |v| v.len());
    let mean = vs.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / vs.len().max(1) as f64;
    vs.iter().map(|v| v - &mean).collect()
}

pub fn consensus_error(state: &SwarmState) -> ConsensusError {
    ConsensusError {
        e_x: centered(&state.positions),
        e_v: centered(&state.velocities),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainStatus {
    Satisfied,
    Violated,
    /// The bound is undefined (disconnected graph).
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainReport {
    /// Smallest `β` the hypothesis admits at this state.
    pub required_beta: f64,
    pub beta: f64,
    pub status: GainStatus,
}

impl GainReport {
    pub fn ok(&self) -> Option<bool> {
        match self.status {
            GainStatus::Satisfied => Some(true),
            GainStatus::Violated => Some(false),
            GainStatus::Indeterminate => None,
        }
    }
}

/// Checks `β ≥ maxᵢ ‖φᵢ‖₁` at the given state.
pub fn gain_check_single(state: &SwarmState, team: &TeamCost, t: f64, gains: &GainsSingle) -> GainReport {
    let required = team
        .members()
        .iter()
        .zip(&state.positions)
        .map(|(c, x)| phi_single(c, x, t, gains.tau).lp_norm(1))
        .fold(0.0, f64::max);
    GainReport {
        required_beta: required,
        beta: gains.beta,
        status: if gains.beta >= required {
            GainStatus::Satisfied
        } else {
            GainStatus::Violated
        },
    }
}

/// Checks `β ≥ ‖(Π ⊗ I)Φ‖₂ / √λ₂`.
pub fn gain_check_double(
    state: &SwarmState,
    team: &TeamCost,
    t: f64,
    lambda2: f64,
    gains: &GainsDouble,
) -> GainReport {
    let phis: Vec<_> = team
        .members()
        .iter()
        .zip(state.positions.iter().zip(&state.velocities))
        .map(|(c, (x, v))| phi_double(c, x, v, t))
        .collect();
    let spread = stacked_norm(&centered(&phis));
    if !(lambda2 > CONNECTIVITY_TOL) {
        return GainReport {
            required_beta: f64::INFINITY,
            beta: gains.beta,
            status: GainStatus::Indeterminate,
        };
    }
    let required = spread / lambda2.sqrt();
    GainReport {
        required_beta: required,
        beta: gains.beta,
        status: if gains.beta >= required {
            GainStatus::Satisfied
        } else {
            GainStatus::Violated
        },
    }
}
