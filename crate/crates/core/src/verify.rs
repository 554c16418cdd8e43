//! Independent numerical oracles for the analytic quantities used elsewhere.
//!
//! Finite-difference checks sample values only, the optimum check minimizes
//! over a grid, and the averaged-dynamics check integrates the uncoupled
//! closed loop with its own RK4 loop.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{phi_double, phi_single};
use crate::cost::{brute_force_optimum, default_search_box, AffineGradientCost, TeamCost, TimeSignal};
use crate::error::{Error, Result};
use crate::potential::{PairPotential, PotentialParams};
use crate::scenario::Scenario;
use crate::sim::Dynamics;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSpec {
    pub h: f64,
    pub rel_tol: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        Self { h: 1e-5, rel_tol: 1e-6 }
    }
}

impl FdSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h > 0.0 && self.h.is_finite() && self.rel_tol > 0.0 {
            Ok(())
        } else {
            Err(Error::param("fd.h", "step and tolerance must be positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    fn new(name: impl Into<String>, samples: usize, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: max_error <= tolerance,
            samples,
            max_error,
            tolerance,
        }
    }

    fn flag(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            samples: 1,
            max_error: if passed { 0.0 } else { 1.0 },
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn extend(&mut self, other: VerifyReport) {
        self.checks.extend(other.checks);
    }

    pub fn get(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Keeps the worst sample per check name, in first-seen order.
    fn merged(reports: impl IntoIterator<Item = VerifyReport>) -> VerifyReport {
        let mut out = VerifyReport::default();
        for c in reports.into_iter().flat_map(|r| r.checks) {
            match out.checks.iter_mut().find(|o| o.name == c.name) {
                Some(o) => {
                    o.samples += c.samples;
                    o.max_error = o.max_error.max(c.max_error);
                    o.passed &= c.passed;
                }
                None => out.checks.push(c),
            }
        }
        out
    }

    pub fn to_human(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<40} max_error={:.3e} tol={:.1e} samples={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.max_error,
                c.tolerance,
                c.samples
            );
        }
        let _ = writeln!(
            s,
            "{} of {} checks passed",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        );
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verify.passed={}", self.passed());
        let _ = writeln!(s, "verify.checks={}", self.checks.len());
        for c in &self.checks {
            let _ = writeln!(s, "check.{}.passed={}", c.name, c.passed);
            let _ = writeln!(s, "check.{}.max_error={:e}", c.name, c.max_error);
            let _ = writeln!(s, "check.{}.tolerance={:e}", c.name, c.tolerance);
            let _ = writeln!(s, "check.{}.samples={}", c.name, c.samples);
        }
        s
    }
}

fn rel_err(analytic: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (analytic - fd).norm() / (1.0 + analytic.norm())
}

/// Compares `∇f`, `ġ` and `g̈` with finite differences of `f` and `g`
/// values at random `(x, t)`, `x ∈ [-10, 10]^m`, `t ∈ [0.01, 50]`.
///
/// `g̈` uses a Richardson-extrapolated second difference with step `√h`,
/// since a plain second difference at `h` is dominated by roundoff.
pub fn fd_gradient_check(cost: &AffineGradientCost, samples: usize, seed: u64) -> VerifyReport {
    fd_gradient_check_with(cost, samples, seed, FdSpec::default())
}

pub fn fd_gradient_check_with(
    cost: &AffineGradientCost,
    samples: usize,
    seed: u64,
    spec: FdSpec,
) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = cost.dim();
    let h = spec.h;
    let h2 = h.sqrt();
    let g = |t: f64| cost.gradient(&DVector::zeros(m), t);
    let second = |t: f64, k: f64| (g(t + k) - g(t) * 2.0 + g(t - k)) / (k * k);
    let (mut e_grad, mut e_rate, mut e_accel) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = DVector::from_fn(m, |_, _| rng.gen_range(-10.0..10.0));
        let t = rng.gen_range(0.01..50.0);

        let fd_grad = DVector::from_fn(m, |k, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            (cost.value(&xp, t) - cost.value(&xm, t)) / (2.0 * h)
        });
        e_grad = e_grad.max(rel_err(&cost.gradient(&x, t), &fd_grad));

        let (rate, accel) = cost.grad_time_derivatives(&x, t);
        let fd_rate = (g(t + h) - g(t - h)) / (2.0 * h);
        e_rate = e_rate.max(rel_err(&rate, &fd_rate));

        let fd_accel = (second(t, h2 / 2.0) * 4.0 - second(t, h2)) / 3.0;
        e_accel = e_accel.max(rel_err(&accel, &fd_accel));
    }
    VerifyReport {
        checks: vec![
            CheckReport::new("cost.gradient", samples, e_grad, spec.rel_tol),
            CheckReport::new("cost.rate", samples, e_rate, spec.rel_tol),
            CheckReport::new("cost.accel", samples, e_accel, spec.rel_tol),
        ],
    }
}

/// Runs [`fd_gradient_check`] on every member, keeping the worst error.
pub fn fd_team_check(team: &TeamCost, samples: usize, seed: u64) -> VerifyReport {
    VerifyReport::merged(
        team.members()
            .iter()
            .enumerate()
            .map(|(i, c)| fd_gradient_check(c, samples, seed.wrapping_add(i as u64))),
    )
}

/// Checks the potential of every distinct pair: `V'(d) ≈ 0`, growth toward
/// both singularities, and analytic slope and gradient against finite
/// differences of `V` at random distances in `[0.05R, 0.95R]`.
///
/// The force cap is ignored, since it deliberately departs from `∇V`.
pub fn fd_potential_check(params: &PotentialParams, samples: usize, seed: u64) -> VerifyReport {
    let n = match &params.desired {
        crate::potential::DesiredDistance::Uniform(_) => 2,
        crate::potential::DesiredDistance::PerPair(t) => t.nrows(),
    };
    let mut reports = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut pair = params.pair(i, j);
            pair.force_cap = None;
            reports.push(fd_pair_check(&pair, samples, seed, FdSpec::default()));
        }
    }
    VerifyReport::merged(reports)
}

fn fd_pair_check(p: &PairPotential, samples: usize, seed: u64, spec: FdSpec) -> VerifyReport {
    let (big_r, d, h) = (p.radius, p.desired, spec.h);
    let v = |r: f64| p.value(r, true).unwrap_or(f64::NAN);
    let mut out = VerifyReport::default();

    let slope_d = p.slope(d, true).map_or(f64::INFINITY, f64::abs);
    out.checks.push(CheckReport::new("potential.slope_at_d", 1, slope_d, 1e-10));

    let grows_inner = v(0.01 * d) > v(0.1 * d) && v(0.1 * d) > v(0.5 * d);
    let grows_outer = v(big_r - 1e-4 * big_r) > v(big_r - 1e-3 * big_r)
        && v(big_r - 1e-3 * big_r) > v(big_r - 1e-2 * big_r);
    out.checks.push(CheckReport::flag("potential.blowup", grows_inner && grows_outer));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut e_slope, mut e_grad) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let r = rng.gen_range(0.05 * big_r..0.95 * big_r);
        let an = p.slope(r, true).unwrap_or(f64::NAN);
        let fd = (v(r + h) - v(r - h)) / (2.0 * h);
        e_slope = e_slope.max(((an - fd) / (1.0 + an.abs())).abs());

        let dim = rng.gen_range(1..=3);
        let dir = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let dir = if dir.norm() > 1e-3 { dir.normalize() } else { DVector::from_element(dim, 1.0).normalize() };
        let xj = DVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0));
        let xi = &xj + dir * r;
        let an = p
            .grad_wrt_i(&xi, &xj, true)
            .map_or_else(|_| DVector::from_element(dim, f64::NAN), |f| f.grad);
        let fd = DVector::from_fn(dim, |k, _| {
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[k] += h;
            xm[k] -= h;
            (v((&xp - &xj).norm()) - v((&xm - &xj).norm())) / (2.0 * h)
        });
        let e = rel_err(&an, &fd);
        e_grad = e_grad.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    let e_slope = if e_slope.is_nan() { f64::INFINITY } else { e_slope };
    out.checks.push(CheckReport::new("potential.slope_fd", samples, e_slope, spec.rel_tol));
    out.checks.push(CheckReport::new("potential.gradient_fd", samples, e_grad, spec.rel_tol));
    out
}

/// Grid minimizer against the closed-form team optimum at each time.
/// `bounds = None` uses [`default_search_box`]. Passes when every
/// coordinate agrees within one grid step.
pub fn optimum_cross_check(
    team: &TeamCost,
    times: &[f64],
    bounds: Option<&[(f64, f64)]>,
    step: f64,
) -> CheckReport {
    let mut worst = 0.0f64;
    for &t in times {
        let owned;
        let b = match bounds {
            Some(b) => b,
            None => {
                owned = default_search_box(team, t);
                &owned
            }
        };
        let dev = match brute_force_optimum(team, t, b, step) {
            Ok(grid) => (grid - team.team_optimum(t).0).amax(),
            Err(e) => {
                log::warn!("grid oracle failed at t = {t}: {e}");
                f64::INFINITY
            }
        };
        worst = worst.max(dev);
    }
    CheckReport::new("optimum.grid", times.len(), worst, step)
}

/// Integrates the uncoupled closed loop (`α = β = 0`, no potentials), where
/// only the `φᵢ` terms act, and tracks `z = Σ∇fⱼ(xⱼ, t)`.
///
/// Single: `‖z(t)‖/‖z(0)‖` must stay within 5% of `e^{-τt}` on `[1, 10]`.
/// Double: `‖z(T)‖ ≤ 1e-3 ‖z(0)‖`. If `z(0) = 0` the whole trajectory must
/// be exactly zero.
pub fn averaged_dynamics_check(
    team: &TeamCost,
    dynamics: Dynamics,
    tau: f64,
    start: &[DVector<f64>],
    duration: f64,
    dt: f64,
) -> CheckReport {
    let name = match dynamics {
        Dynamics::Single => "averaged.single",
        Dynamics::Double => "averaged.double",
    };
    let n = start.len();
    let steps = (duration / dt).round() as usize;
    let deriv = |t: f64, x: &[DVector<f64>], v: &[DVector<f64>]| -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        match dynamics {
            Dynamics::Single => (
                (0..n).map(|i| phi_single(team.member(i), &x[i], t, tau)).collect(),
                vec![DVector::zeros(team.dim()); n],
            ),
            Dynamics::Double => (
                v.to_vec(),
                (0..n).map(|i| phi_double(team.member(i), &x[i], &v[i], t)).collect(),
            ),
        }
    };
    let shift = |base: &[DVector<f64>], k: &[DVector<f64>], h: f64| -> Vec<DVector<f64>> {
        base.iter().zip(k).map(|(b, d)| b + d * h).collect()
    };

    let mut x = start.to_vec();
    let mut v = vec![DVector::zeros(team.dim()); n];
    let z0 = team.sum_gradient(&x, 0.0).norm();
    let mut worst = 0.0f64;
    let mut samples = 0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let (a1, b1) = deriv(t, &x, &v);
        let (a2, b2) = deriv(t + dt / 2.0, &shift(&x, &a1, dt / 2.0), &shift(&v, &b1, dt / 2.0));
        let (a3, b3) = deriv(t + dt / 2.0, &shift(&x, &a2, dt / 2.0), &shift(&v, &b2, dt / 2.0));
        let (a4, b4) = deriv(t + dt, &shift(&x, &a3, dt), &shift(&v, &b3, dt));
        for i in 0..n {
            x[i] += (&a1[i] + &a2[i] * 2.0 + &a3[i] * 2.0 + &a4[i]) * (dt / 6.0);
            v[i] += (&b1[i] + &b2[i] * 2.0 + &b3[i] * 2.0 + &b4[i]) * (dt / 6.0);
        }
        let t1 = (k + 1) as f64 * dt;
        let z = team.sum_gradient(&x, t1).norm();
        if z0 == 0.0 {
            worst = worst.max(z);
            samples += 1;
        } else if dynamics == Dynamics::Single && (1.0..=10.0).contains(&t1) {
            worst = worst.max((z / z0 / (-tau * t1).exp() - 1.0).abs());
            samples += 1;
        }
    }
    match (z0 == 0.0, dynamics) {
        (true, _) => CheckReport::new(format!("{name}.zero"), samples, worst, 0.0),
        (false, Dynamics::Single) => CheckReport::new(name, samples, worst, 0.05),
        (false, Dynamics::Double) => {
            let ratio = team.sum_gradient(&x, steps as f64 * dt).norm() / z0;
            CheckReport::new(name, 1, ratio, 1e-3)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Cost,
    Potential,
    Optimum,
    Averaged,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

/// Runs the oracle suites on the given scenarios (the built-in presets when
/// none is given). Deterministic for a fixed seed.
pub fn run_suite(suite: Suite, seed: u64, scenarios: &[Scenario]) -> Result<VerifyReport> {
    let owned;
    let scenarios = if scenarios.is_empty() {
        owned = Scenario::preset_names()
            .iter()
            .filter_map(|n| Scenario::preset(n))
            .collect::<Vec<_>>();
        &owned[..]
    } else {
        scenarios
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport::default();
    for sc in scenarios {
        let resolved = sc.resolve().map_err(|e| match e {
            crate::scenario::ScenarioError::Invalid(inner) => inner,
            other => Error::param("scenario", other.to_string()),
        })?;
        let team = &resolved.team;
        if suite.includes(Suite::Cost) {
            report.extend(fd_team_check(team, 100, rng.gen()));
        }
        if suite.includes(Suite::Potential) {
            report.extend(fd_potential_check(&resolved.config.potential, 100, rng.gen()));
            let unit = PotentialParams {
                gain: 1.0,
                ..resolved.config.potential.clone()
            };
            report.extend(fd_potential_check(&unit, 100, rng.gen()));
        }
        if suite.includes(Suite::Optimum) {
            let times: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..50.0)).collect();
            report.checks.push(optimum_cross_check(team, &times, None, 0.01));
        }
        if suite.includes(Suite::Averaged) {
            let dynamics = resolved.config.dynamics();
            let tau = sc.gains.tau.unwrap_or(1.0);
            let mut start = resolved.positions.clone();
            if team.sum_gradient(&start, 0.0).norm() < 1e-9 {
                // z(0) = 0 would make the decay ratio meaningless
                for x in &mut start {
                    x[0] += 1.0;
                }
            }
            let duration = match dynamics {
                Dynamics::Single => 10.0,
                Dynamics::Double => 50.0,
            };
            report.checks.push(averaged_dynamics_check(team, dynamics, tau, &start, duration, 1e-3));
            let zero = TeamCost::new(
                (0..team.len())
                    .map(|_| AffineGradientCost::new(team.sigma(), TimeSignal::zero(team.dim())))
                    .collect::<Result<Vec<_>>>()?,
            )?;
            let at_opt = vec![DVector::zeros(team.dim()); team.len()];
            report.checks.push(averaged_dynamics_check(&zero, dynamics, tau, &at_opt, 5.0, 1e-3));
        }
    }
    Ok(VerifyReport::merged([report]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{damped_team, orbit_team, ScalarSignal};
    use nalgebra::dvector;

    #[test]
    fn fd_passes_on_preset_costs() {
        for team in [orbit_team(6), damped_team(6)] {
            let r = fd_team_check(&team, 100, 3);
            assert!(r.passed(), "{}", r.to_human());
            assert_eq!(r.checks.len(), 3);
            assert_eq!(r.checks[0].samples, 600);
        }
    }

    #[test]
    fn fd_exact_for_zero_and_polynomial_signals() {
        let zero = AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap();
        let r = fd_gradient_check(&zero, 50, 1);
        assert_eq!(r.get("cost.rate").unwrap().max_error, 0.0);
        assert_eq!(r.get("cost.accel").unwrap().max_error, 0.0);

        let poly = TimeSignal::new(vec![
            ScalarSignal::Polynomial { coeffs: vec![1.0, -0.5, 0.25] },
            ScalarSignal::Polynomial { coeffs: vec![0.0, 2.0] },
        ])
        .unwrap();
        let r = fd_gradient_check(&AffineGradientCost::new(1.5, poly).unwrap(), 100, 2);
        assert!(r.get("cost.gradient").unwrap().max_error <= 1e-9);
        assert!(r.get("cost.rate").unwrap().max_error <= 1e-9);
        // second differences of a quadratic are exact; what remains is
        // roundoff of order eps·|g|/h ≈ 1e-16 · 625 / 2.5e-6
        assert!(r.get("cost.accel").unwrap().max_error <= 1e-7);
    }

    #[test]
    fn coarse_step_is_detected() {
        let good = AffineGradientCost::new(
            2.0,
            TimeSignal::new(vec![ScalarSignal::Sinusoid { amplitude: 1.0, omega: 1.0, phase: 0.0 }]).unwrap(),
        )
        .unwrap();
        let r = fd_gradient_check_with(&good, 20, 4, FdSpec { h: 1e-5, rel_tol: 1e-6 });
        assert!(r.passed());
        let too_coarse = fd_gradient_check_with(&good, 20, 4, FdSpec { h: 0.5, rel_tol: 1e-6 });
        assert!(!too_coarse.passed());
    }

    #[test]
    fn potential_checks_pass() {
        for gain in [5e-4, 1.0, 3.0] {
            let r = fd_potential_check(&PotentialParams::uniform(5.0, 0.5, gain), 200, 11);
            assert!(r.passed(), "{}", r.to_human());
        }
    }

    #[test]
    fn optimum_examples() {
        let r = optimum_cross_check(&orbit_team(6), &[0.0, 5.0, 10.0], None, 0.01);
        assert!(r.passed && r.max_error <= 0.01, "{r:?}");

        let zero = TeamCost::new(vec![AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap(); 3]).unwrap();
        let r = optimum_cross_check(&zero, &[0.0, 1.0], Some(&[(-1.0, 1.0), (-1.0, 1.0)]), 0.5);
        assert_eq!(r.max_error, 0.0);

        let one = TeamCost::new(vec![AffineGradientCost::new(
            2.0,
            TimeSignal::new(vec![ScalarSignal::Constant { value: 2.0 }, ScalarSignal::Constant { value: 0.0 }])
                .unwrap(),
        )
        .unwrap()])
        .unwrap();
        let r = optimum_cross_check(&one, &[3.0], Some(&[(-3.0, 2.0), (-2.0, 2.0)]), 0.01);
        assert!(r.passed, "{r:?}");

        let r = optimum_cross_check(&orbit_team(6), &[0.0], Some(&[(-1.0, 1.0), (-1.0, 1.0)]), 0.01);
        assert!(!r.passed);
    }

    #[test]
    fn averaged_single_is_exponential() {
        let team = orbit_team(6);
        let start: Vec<_> = (0..6).map(|i| dvector![1.5 * (i as f64).cos(), 1.5 * (i as f64).sin()]).collect();
        let r = averaged_dynamics_check(&team, Dynamics::Single, 1.0, &start, 10.0, 1e-3);
        assert!(r.passed, "{r:?}");
        // the averaged system is linear, so RK4 reproduces e^{-t} far below 5%
        assert!(r.max_error < 1e-6, "{r:?}");
    }

    #[test]
    fn averaged_double_decays() {
        let team = damped_team(6);
        let start: Vec<_> = (0..6).map(|i| dvector![1.0 + i as f64 * 0.3, -1.0]).collect();
        let r = averaged_dynamics_check(&team, Dynamics::Double, 1.0, &start, 50.0, 1e-3);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn averaged_zero_signal_stays_zero() {
        let zero = TeamCost::new(vec![AffineGradientCost::new(2.0, TimeSignal::zero(2)).unwrap(); 4]).unwrap();
        let start = vec![dvector![0.0, 0.0]; 4];
        for dynamics in [Dynamics::Single, Dynamics::Double] {
            let r = averaged_dynamics_check(&zero, dynamics, 1.0, &start, 2.0, 1e-2);
            assert_eq!(r.max_error, 0.0);
            assert!(r.passed);
        }
    }

    #[test]
    fn suite_is_deterministic_and_passes() {
        let a = run_suite(Suite::All, 7, &[]).unwrap();
        let b = run_suite(Suite::All, 7, &[]).unwrap();
        assert_eq!(a, b);
        assert!(a.passed(), "{}", a.to_human());
        assert!(a.to_kv().contains("verify.passed=true"));
    }

    #[test]
    fn suite_rejects_invalid_scenario() {
        let mut s = Scenario::single_fig1();
        s.cost.sigma = -2.0;
        assert!(run_suite(Suite::Cost, 1, &[s]).is_err());
    }
}
