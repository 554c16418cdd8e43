//! Fixed-step integration of the closed loop with per-record monitoring.
//!
//! The bonded edge set is frozen for the duration of a step (all RK4 stages
//! see the same graph) and updated from the new positions afterwards.

mod monitor;
mod state;

use nalgebra::DVector;

pub use monitor::{lyapunov_w, lyapunov_w1, measure, Dynamics, Metrics};
pub use state::SwarmState;

use crate::control::{control_double_local, control_single_local, ControlLaw, LocalView, SgnMode};
use crate::cost::TeamCost;
use crate::error::{Error, Result};
use crate::graph::{EdgeEvent, ProximityGraph, WeightRule, CONNECTIVITY_TOL};
use crate::potential::PotentialParams;

/// Pairs closer than this abort the run.
pub const COLLISION_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub law: ControlLaw,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub record_every: usize,
    pub sgn: SgnMode,
    pub potential: PotentialParams,
    pub hysteresis: f64,
    pub weights: WeightRule,
}

impl SimConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("integration.dt", "must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("integration.t_end", "must be non-negative"));
        }
        if self.record_every == 0 {
            return Err(Error::param("integration.record_every", "must be at least 1"));
        }
        self.sgn.validate()?;
        self.potential.validate(n)?;
        if !(self.hysteresis > 0.0 && self.hysteresis < self.potential.radius) {
            return Err(Error::param(
                "potential.hysteresis",
                format!("must lie in (0, {})", self.potential.radius),
            ));
        }
        Ok(())
    }

    pub fn dynamics(&self) -> Dynamics {
        self.law.dynamics()
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Why a run stopped before `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    Collision { t: f64, i: usize, j: usize, distance: f64 },
    ConnectivityLost { t: f64, i: usize, j: usize, distance: f64 },
    NonFinite { t: f64 },
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortReason::Collision { t, i, j, distance } => {
                write!(f, "collision between agents {i} and {j} at t={t} (distance {distance:e})")
            }
            AbortReason::ConnectivityLost { t, i, j, distance } => write!(
                f,
                "bonded agents {i} and {j} separated to {distance} at t={t}"
            ),
            AbortReason::NonFinite { t } => write!(f, "non-finite state at t={t}"),
        }
    }
}

struct Derivative {
    dx: Vec<DVector<f64>>,
    dv: Vec<DVector<f64>>,
    clamps: usize,
}

pub struct Simulation {
    config: SimConfig,
    team: TeamCost,
    graph: ProximityGraph,
    state: SwarmState,
    steps_taken: usize,
    clamp_events: usize,
}

impl Simulation {
    /// Agents start at rest at the given positions at `t = 0`.
    pub fn new(config: SimConfig, team: TeamCost, positions: Vec<DVector<f64>>) -> Result<Self> {
        let state = SwarmState::at_rest(0.0, positions)?;
        Self::with_state(config, team, state)
    }

    pub fn with_state(config: SimConfig, team: TeamCost, state: SwarmState) -> Result<Self> {
        let n = state.len();
        config.validate(n)?;
        if team.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: team.len(),
            });
        }
        if team.dim() != state.dim() {
            return Err(Error::Dimension {
                expected: state.dim(),
                got: team.dim(),
            });
        }
        if !state.is_finite() {
            return Err(Error::NonFinite("initial state".into()));
        }
        let graph = ProximityGraph::build_initial(
            &state.positions,
            config.potential.radius,
            config.hysteresis,
            config.weights.clone(),
        )?;
        Ok(Self {
            config,
            team,
            graph,
            state,
            steps_taken: 0,
            clamp_events: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SwarmState {
        &self.state
    }

    pub fn graph(&self) -> &ProximityGraph {
        &self.graph
    }

    pub fn team(&self) -> &TeamCost {
        &self.team
    }

    pub fn metrics(&self) -> Metrics {
        measure(
            &self.state,
            &self.graph,
            &self.config.potential,
            &self.team,
            &self.config.law,
            self.clamp_events,
        )
    }

    fn derivative(&self, state: &SwarmState) -> std::result::Result<Derivative, AbortReason> {
        let n = state.len();
        let mut dx = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        let mut clamps = 0;
        for i in 0..n {
            let view = LocalView::gather(i, state, &self.graph, &self.config.potential);
            let cost = self.team.member(i);
            let out = match &self.config.law {
                ControlLaw::Single(g) => control_single_local(&view, cost, g, self.config.sgn, state.t),
                ControlLaw::Double(g) => control_double_local(&view, cost, g, self.config.sgn, state.t),
            }
            .map_err(|e| self.classify(state, i, e))?;
            clamps += out.clamps;
            match self.config.dynamics() {
                Dynamics::Single => {
                    dx.push(out.u);
                    dv.push(DVector::zeros(state.dim()));
                }
                Dynamics::Double => {
                    dx.push(state.velocities[i].clone());
                    dv.push(out.u);
                }
            }
        }
        Ok(Derivative { dx, dv, clamps })
    }

    fn classify(&self, state: &SwarmState, i: usize, err: Error) -> AbortReason {
        let nearest = self
            .graph
            .neighbors(i)
            .map(|j| (j, (&state.positions[i] - &state.positions[j]).norm()));
        match err {
            Error::BeyondRadius { .. } => {
                let (j, distance) = nearest
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((i, f64::NAN));
                AbortReason::ConnectivityLost { t: state.t, i, j, distance }
            }
            _ => {
                let (j, distance) = nearest
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((i, f64::NAN));
                AbortReason::Collision { t: state.t, i, j, distance }
            }
        }
    }

    fn advanced(base: &SwarmState, k: &Derivative, h: f64, t: f64) -> SwarmState {
        SwarmState {
            t,
            positions: base
                .positions
                .iter()
                .zip(&k.dx)
                .map(|(x, d)| x + d * h)
                .collect(),
            velocities: base
                .velocities
                .iter()
                .zip(&k.dv)
                .map(|(v, d)| v + d * h)
                .collect(),
        }
    }

    /// Advances one step and returns the edge events it produced.
    pub fn step(&mut self) -> std::result::Result<Vec<EdgeEvent>, AbortReason> {
        let dt = self.config.dt;
        let t0 = self.state.t;
        let t1 = (self.steps_taken + 1) as f64 * dt;
        let next = match self.config.integrator {
            Integrator::Euler => {
                let k = self.derivative(&self.state)?;
                self.clamp_events += k.clamps;
                Self::advanced(&self.state, &k, dt, t1)
            }
            Integrator::Rk4 => {
                let s = &self.state;
                let k1 = self.derivative(s)?;
                let k2 = self.derivative(&Self::advanced(s, &k1, dt / 2.0, t0 + dt / 2.0))?;
                let k3 = self.derivative(&Self::advanced(s, &k2, dt / 2.0, t0 + dt / 2.0))?;
                let k4 = self.derivative(&Self::advanced(s, &k3, dt, t1))?;
                self.clamp_events += k1.clamps + k2.clamps + k3.clamps + k4.clamps;
                let w = dt / 6.0;
                let combine = |base: &[DVector<f64>], parts: [&[DVector<f64>]; 4]| -> Vec<DVector<f64>> {
                    base.iter()
                        .enumerate()
                        .map(|(i, b)| {
                            b + (&parts[0][i] + &parts[1][i] * 2.0 + &parts[2][i] * 2.0 + &parts[3][i]) * w
                        })
                        .collect()
                };
                SwarmState {
                    t: t1,
                    positions: combine(&s.positions, [&k1.dx, &k2.dx, &k3.dx, &k4.dx]),
                    velocities: combine(&s.velocities, [&k1.dv, &k2.dv, &k3.dv, &k4.dv]),
                }
            }
        };
        if !next.is_finite() {
            return Err(AbortReason::NonFinite { t: t1 });
        }
        if let Some((distance, i, j)) = next.min_pair_distance() {
            if distance < COLLISION_DISTANCE {
                return Err(AbortReason::Collision { t: t1, i, j, distance });
            }
        }
        let events = self.graph.update_edges(&next.positions);
        self.state = next;
        self.steps_taken += 1;
        if let Some(EdgeEvent::ConnectivityViolation { i, j, distance }) = events
            .iter()
            .find(|e| matches!(e, EdgeEvent::ConnectivityViolation { .. }))
        {
            return Err(AbortReason::ConnectivityLost {
                t: t1,
                i: *i,
                j: *j,
                distance: *distance,
            });
        }
        Ok(events)
    }

    /// Runs to `t_end` (or the first abort), recording the initial state,
    /// every `record_every`-th step and the final state.
    pub fn run(mut self) -> RunOutput {
        let total = self.config.step_count();
        let every = self.config.record_every;
        let initial_connected = self.graph.len() < 2 || self.graph.lambda2() > CONNECTIVITY_TOL;
        if !initial_connected {
            log::warn!("initial proximity graph is disconnected; convergence hypotheses do not hold");
        }
        let mut out = RunOutput {
            trace: vec![self.state.clone()],
            metrics: vec![self.metrics()],
            events: Vec::new(),
            abort: None,
            initial_connected,
            steps: 0,
        };
        for k in 1..=total {
            match self.step() {
                Ok(events) => {
                    let t = self.state.t;
                    out.events.extend(events.into_iter().map(|e| (t, e)));
                }
                Err(reason) => {
                    log::error!("run aborted: {reason}");
                    out.abort = Some(reason);
                    break;
                }
            }
            out.steps = k;
            if k % every == 0 || k == total {
                out.trace.push(self.state.clone());
                out.metrics.push(self.metrics());
            }
        }
        if out.abort.is_some() && out.trace.last().map(|s| s.t) != Some(self.state.t) {
            out.trace.push(self.state.clone());
            out.metrics.push(self.metrics());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<SwarmState>,
    pub metrics: Vec<Metrics>,
    pub events: Vec<(f64, EdgeEvent)>,
    pub abort: Option<AbortReason>,
    pub initial_connected: bool,
    pub steps: usize,
}

impl RunOutput {
    pub fn report(&self) -> RunReport {
        RunReport::from_run(self)
    }
}

/// Min, max and final value of one metric series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub last: f64,
}

impl Extremes {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut ext: Option<Extremes> = None;
        for v in values {
            ext = Some(match ext {
                None => Extremes { min: v, max: v, last: v },
                Some(e) => Extremes {
                    min: e.min.min(v),
                    max: e.max.max(v),
                    last: v,
                },
            });
        }
        ext
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub completed: bool,
    pub abort: Option<AbortReason>,
    pub t_final: f64,
    pub steps: usize,
    pub records: usize,
    pub initial_connected: bool,
    pub collision_events: usize,
    pub disconnection_events: usize,
    pub nonfinite_events: usize,
    pub new_bonds: usize,
    pub disconnected_records: usize,
    pub remark1_violations: usize,
    pub gain_violations: usize,
    pub gain_indeterminate: usize,
    pub clamp_events: usize,
    pub series: Vec<(&'static str, Extremes)>,
}

impl RunReport {
    fn from_run(run: &RunOutput) -> Self {
        let m = &run.metrics;
        let mut series = Vec::new();
        let mut push = |name: &'static str, vals: Vec<f64>| {
            if let Some(e) = Extremes::of(vals.into_iter()) {
                series.push((name, e));
            }
        };
        push("center_error", m.iter().map(|r| r.center_error).collect());
        push(
            "velocity_center_error",
            m.iter().filter_map(|r| r.velocity_center_error).collect(),
        );
        push("min_pair_distance", m.iter().map(|r| r.min_pair_distance).collect());
        push("lambda2", m.iter().map(|r| r.lambda2).collect());
        push("sum_grad_norm", m.iter().map(|r| r.sum_grad_norm).collect());
        push(
            "consensus_vel_norm",
            m.iter().filter_map(|r| r.consensus_vel_norm).collect(),
        );
        push("lyap_W", m.iter().map(|r| r.lyap_w).collect());
        push("lyap_W1", m.iter().map(|r| r.lyap_w1).collect());

        let n_agents = run.trace.first().map_or(0, |s| s.len());
        let count = |f: &dyn Fn(&AbortReason) -> bool| run.abort.as_ref().map_or(0, |a| usize::from(f(a)));
        Self {
            completed: run.abort.is_none(),
            abort: run.abort.clone(),
            t_final: run.trace.last().map_or(0.0, |s| s.t),
            steps: run.steps,
            records: m.len(),
            initial_connected: run.initial_connected,
            collision_events: count(&|a| matches!(a, AbortReason::Collision { .. })),
            disconnection_events: count(&|a| matches!(a, AbortReason::ConnectivityLost { .. })),
            nonfinite_events: count(&|a| matches!(a, AbortReason::NonFinite { .. })),
            new_bonds: run
                .events
                .iter()
                .filter(|(_, e)| matches!(e, EdgeEvent::Bonded { .. }))
                .count(),
            disconnected_records: if n_agents < 2 {
                0
            } else {
                m.iter().filter(|r| !(r.lambda2 > CONNECTIVITY_TOL)).count()
            },
            remark1_violations: m.iter().filter(|r| !r.remark1_ok).count(),
            gain_violations: m.iter().filter(|r| r.gain_ok == Some(false)).count(),
            gain_indeterminate: m.iter().filter(|r| r.gain_ok.is_none()).count(),
            clamp_events: m.last().map_or(0, |r| r.clamp_events),
            series,
        }
    }

    /// Collision, loss of connectivity or a non-finite state.
    pub fn has_monitor_violation(&self) -> bool {
        self.collision_events + self.disconnection_events + self.nonfinite_events > 0
            || (self.initial_connected && self.disconnected_records > 0)
    }

    pub fn extremes(&self, name: &str) -> Option<Extremes> {
        self.series.iter().find(|(n, _)| *n == name).map(|(_, e)| *e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{GainsDouble, GainsSingle};
    use crate::cost::{orbit_team, AffineGradientCost, TimeSignal};
    use nalgebra::dvector;

    fn config(law: ControlLaw, integrator: Integrator) -> SimConfig {
        SimConfig {
            law,
            dt: 1e-3,
            t_end: 0.1,
            integrator,
            record_every: 1,
            sgn: SgnMode::BoundaryLayer { kappa: 0.01 },
            potential: PotentialParams::uniform(5.0, 0.5, 0.1),
            hysteresis: 0.5,
            weights: WeightRule::Unit,
        }
    }

    fn zero_team(n: usize) -> TeamCost {
        TeamCost::new(vec![AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap(); n]).unwrap()
    }

    #[test]
    fn equilibrium_is_stationary() {
        // zero gains and zero signal make φ vanish; a pair at distance d feels no force
        let law = ControlLaw::Single(GainsSingle { alpha: 0.0, beta: 0.0, tau: 0.0 });
        let start = vec![dvector![0.3, -0.2], dvector![0.8, -0.2]];
        let mut sim = Simulation::new(config(law, Integrator::Rk4), zero_team(2), start.clone()).unwrap();
        for _ in 0..10 {
            sim.step().unwrap();
        }
        for (a, b) in sim.state().positions.iter().zip(&start) {
            assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn isolated_double_agent_stays_at_origin() {
        let law = ControlLaw::Double(GainsDouble::new(10.0, 20.0).unwrap());
        let mut sim = Simulation::new(config(law, Integrator::Rk4), zero_team(1), vec![dvector![0.0, 0.0]])
            .unwrap();
        for _ in 0..100 {
            sim.step().unwrap();
        }
        assert_eq!(sim.state().positions[0], dvector![0.0, 0.0]);
        assert_eq!(sim.state().velocities[0], dvector![0.0, 0.0]);
    }

    #[test]
    fn zero_duration_records_only_initial_state() {
        let law = ControlLaw::Single(GainsSingle::new(2.0, 5.0, 1.0).unwrap());
        let mut cfg = config(law, Integrator::Rk4);
        cfg.t_end = 0.0;
        let out = Simulation::new(cfg, orbit_team(2), vec![dvector![0.0, 0.0], dvector![1.0, 0.0]])
            .unwrap()
            .run();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.metrics.len(), 1);
        assert!(out.report().completed);
    }

    #[test]
    fn records_follow_cadence() {
        let law = ControlLaw::Single(GainsSingle::new(2.0, 5.0, 1.0).unwrap());
        let mut cfg = config(law, Integrator::Euler);
        cfg.record_every = 30;
        let out = Simulation::new(cfg, orbit_team(2), vec![dvector![0.0, 0.0], dvector![1.0, 0.0]])
            .unwrap()
            .run();
        let times: Vec<f64> = out.trace.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 5); // 0, 30, 60, 90, 100
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!((times[4] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let law = ControlLaw::Single(GainsSingle::new(2.0, 5.0, 1.0).unwrap());
        let mut cfg = config(law, Integrator::Rk4);
        cfg.dt = 0.0;
        assert!(Simulation::new(cfg, zero_team(1), vec![dvector![0.0, 0.0]]).is_err());
        let cfg = config(law, Integrator::Rk4);
        assert!(Simulation::new(cfg, zero_team(2), vec![dvector![0.0, 0.0]]).is_err());
    }

    #[test]
    fn separating_pair_aborts_with_connectivity_loss() {
        // two bonded agents with opposite, strong drifts and a tiny switching gain
        let team = TeamCost::new(vec![
            AffineGradientCost::new(
                1.0,
                TimeSignal::new(vec![crate::cost::ScalarSignal::Constant { value: 1e4 }, crate::cost::ScalarSignal::zero()])
                    .unwrap(),
            )
            .unwrap(),
            AffineGradientCost::new(
                1.0,
                TimeSignal::new(vec![crate::cost::ScalarSignal::Constant { value: -1e4 }, crate::cost::ScalarSignal::zero()])
                    .unwrap(),
            )
            .unwrap(),
        ])
        .unwrap();
        let law = ControlLaw::Single(GainsSingle::new(0.0, 1e-3, 1.0).unwrap());
        let mut cfg = config(law, Integrator::Euler);
        cfg.t_end = 1.0;
        let out = Simulation::new(cfg, team, vec![dvector![0.0, 0.0], dvector![1.0, 0.0]])
            .unwrap()
            .run();
        let report = out.report();
        assert!(!report.completed);
        assert!(matches!(out.abort, Some(AbortReason::ConnectivityLost { .. })));
        assert!(report.has_monitor_violation());
    }
}
