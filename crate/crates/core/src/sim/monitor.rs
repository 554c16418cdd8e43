//! Runtime monitors tied to the convergence arguments: Lyapunov functions,
//! tracking errors, connectivity and gain hypotheses.

use nalgebra::DVector;

use crate::control::{consensus_error, gain_check_double, gain_check_single, ControlLaw};
use crate::cost::TeamCost;
use crate::graph::ProximityGraph;
use crate::potential::PotentialParams;

use super::SwarmState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Single,
    Double,
}

/// Formation Lyapunov function over ordered pairs `i ≠ j`:
/// `½ ΣΣ Vᵢⱼ` (single) or `(1/N) ΣΣ Vᵢⱼ + ½ ‖e_V‖²` (double).
///
/// A bonded pair at or beyond the radius, or coincident agents, yield `+∞`.
pub fn lyapunov_w(
    state: &SwarmState,
    graph: &ProximityGraph,
    potentials: &PotentialParams,
    dynamics: Dynamics,
) -> f64 {
    let n = state.len();
    let mut pair_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = (&state.positions[i] - &state.positions[j]).norm();
            pair_sum += potentials
                .pair(i, j)
                .value(r, graph.is_bonded(i, j))
                .unwrap_or(f64::INFINITY);
        }
    }
    match dynamics {
        Dynamics::Single => 0.5 * pair_sum,
        Dynamics::Double => {
            let ev = consensus_error(state).velocity_norm();
            pair_sum / n as f64 + 0.5 * ev * ev
        }
    }
}

/// Tracking Lyapunov function `½ ‖Σ∇fⱼ‖²`, plus `½ ‖Σvⱼ - ΣSⱼ‖²` for the
/// double integrator with `Sⱼ = (1/σ)(ġⱼ + σxⱼ + gⱼ)`.
pub fn lyapunov_w1(state: &SwarmState, team: &TeamCost, t: f64, dynamics: Dynamics) -> f64 {
    let z = team.sum_gradient(&state.positions, t);
    let base = 0.5 * z.norm_squared();
    match dynamics {
        Dynamics::Single => base,
        Dynamics::Double => {
            let sigma = team.sigma();
            let mut mismatch = DVector::zeros(team.dim());
            for ((c, x), v) in team.members().iter().zip(&state.positions).zip(&state.velocities) {
                let (g_dot, _) = c.grad_time_derivatives(x, t);
                let s = (g_dot + c.gradient(x, t)) / sigma;
                mismatch += v - s;
            }
            base + 0.5 * mismatch.norm_squared()
        }
    }
}

/// Monitor outputs for one recorded step. `None` marks a column that does
/// not apply (velocity columns for single-integrator runs, gain status on
/// a disconnected graph).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub t: f64,
    pub center_error: f64,
    pub velocity_center_error: Option<f64>,
    pub min_pair_distance: f64,
    pub lambda2: f64,
    pub sum_grad_norm: f64,
    pub consensus_vel_norm: Option<f64>,
    pub lyap_w: f64,
    pub lyap_w1: f64,
    pub remark1_ok: bool,
    pub gain_ok: Option<bool>,
    pub clamp_events: usize,
}

pub fn measure(
    state: &SwarmState,
    graph: &ProximityGraph,
    potentials: &PotentialParams,
    team: &TeamCost,
    law: &ControlLaw,
    clamp_events: usize,
) -> Metrics {
    let t = state.t;
    let dynamics = law.dynamics();
    let (x_star, v_star) = team.team_optimum(t);
    let n = state.len();
    let lambda2 = graph.lambda2();
    let max_dev = state
        .positions
        .iter()
        .map(|x| (x - &x_star).norm())
        .fold(0.0, f64::max);
    let gain = match law {
        ControlLaw::Single(g) => gain_check_single(state, team, t, g),
        ControlLaw::Double(g) => gain_check_double(state, team, t, lambda2, g),
    };
    let double = dynamics == Dynamics::Double;
    Metrics {
        t,
        center_error: (state.mean_position() - &x_star).norm(),
        velocity_center_error: double.then(|| (state.mean_velocity() - &v_star).norm()),
        min_pair_distance: state.min_pair_distance().map_or(f64::INFINITY, |m| m.0),
        lambda2,
        sum_grad_norm: team.sum_gradient(&state.positions, t).norm(),
        consensus_vel_norm: double.then(|| consensus_error(state).velocity_norm()),
        lyap_w: lyapunov_w(state, graph, potentials, dynamics),
        lyap_w1: lyapunov_w1(state, team, t, dynamics),
        remark1_ok: max_dev < n as f64 * graph.radius(),
        gain_ok: gain.ok(),
        clamp_events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{orbit_team, AffineGradientCost, TimeSignal};
    use crate::graph::WeightRule;
    use nalgebra::dvector;

    fn setup(r: f64) -> (SwarmState, ProximityGraph, PotentialParams) {
        let s = SwarmState::at_rest(0.0, vec![dvector![0.0, 0.0], dvector![r, 0.0]]).unwrap();
        let g = ProximityGraph::build_initial(&s.positions, 5.0, 0.5, WeightRule::Unit).unwrap();
        (s, g, PotentialParams::uniform(5.0, 0.5, 1.0))
    }

    #[test]
    fn w_examples() {
        let (s, g, p) = setup(0.5);
        assert_eq!(lyapunov_w(&s, &g, &p, Dynamics::Single), 0.0);

        let r = (0.5 + 5.0) / 2.0;
        let (s, g, p) = setup(r);
        let w = lyapunov_w(&s, &g, &p, Dynamics::Single);
        assert!((w - p.pair(0, 1).value(r, true).unwrap()).abs() < 1e-12);

        let (mut s, g, p) = setup(0.5);
        s.velocities = vec![dvector![1.0, 0.0], dvector![-1.0, 0.0]];
        assert!((lyapunov_w(&s, &g, &p, Dynamics::Double) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn w1_examples() {
        let team = TeamCost::new(vec![AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap()]).unwrap();
        let s = SwarmState::at_rest(0.0, vec![dvector![1.0, 0.0]]).unwrap();
        assert_eq!(lyapunov_w1(&s, &team, 0.0, Dynamics::Single), 2.0);

        let team = orbit_team(6);
        let t = 3.7;
        let (x_star, _) = team.team_optimum(t);
        let s = SwarmState::at_rest(t, vec![x_star; 6]).unwrap();
        assert!(lyapunov_w1(&s, &team, t, Dynamics::Single) < 1e-24);

        let zero = TeamCost::new(vec![AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap(); 2]).unwrap();
        let s = SwarmState::at_rest(0.0, vec![dvector![1.0, 1.0], dvector![-1.0, -1.0]]).unwrap();
        assert_eq!(lyapunov_w1(&s, &zero, 0.0, Dynamics::Double), 0.0);
    }
}
