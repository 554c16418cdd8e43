//! TOML scenario files: schema, `section.key=value` overrides, validation
//! into simulation inputs, and the two built-in presets.
//!
//! ```toml
//! [dynamics]
//! kind = "single"            # or "double"
//!
//! [agents]
//! count = 6
//! dim = 2
//! placement = { kind = "circle", radius = 1.5 }
//!
//! [cost]
//! family = "affine"
//! sigma = 2.0
//! index_scaled = true        # agent i (1-based) gets i × signal
//! signal = [
//!   { kind = "sinusoid", amplitude = -2.0, omega = 0.2 },
//!   { kind = "cosine", amplitude = -2.0, omega = 0.2 },
//! ]
//!
//! [gains]
//! alpha = 2.0
//! beta = 5.0
//! tau = 1.0                  # single only
//!
//! [potential]
//! R = 5.0
//! d = 0.5
//! k_p = 0.0005
//! hysteresis = 0.5           # optional, default 0.1 R
//!
//! [integration]
//! dt = 0.001
//! t_end = 50.0
//! integrator = "rk4"
//! sgn = "boundary_layer"
//! kappa = 0.01
//! record_every = 1
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlLaw, GainsDouble, GainsSingle, SgnMode};
use crate::cost::{AffineGradientCost, ScalarSignal, TeamCost, TimeSignal};
use crate::graph::WeightRule;
use crate::potential::{DesiredDistance, PotentialParams};
use crate::sim::{Integrator, SimConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid override `{entry}`: {reason}")]
    Override { entry: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(#[from] crate::Error),
}

pub type ScenarioResult<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub dynamics: DynamicsSection,
    pub agents: AgentsSection,
    pub cost: CostSection,
    pub gains: GainsSection,
    pub potential: PotentialSection,
    pub integration: IntegrationSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub kind: DynamicsKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    pub count: usize,
    pub dim: usize,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// Evenly spaced on a circle in the first two coordinates.
    Circle {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Explicit { positions: Vec<Vec<f64>> },
    /// Uniform in `[-half_width, half_width]^dim`, resampled until every pair
    /// is at least `min_separation` apart.
    RandomBox {
        half_width: f64,
        seed: u64,
        #[serde(default = "default_min_separation")]
        min_separation: f64,
    },
}

fn default_min_separation() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub family: String,
    pub sigma: f64,
    #[serde(default)]
    pub index_scaled: bool,
    /// One signal shared by all agents (scaled by index if requested).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<Vec<ScalarSignal>>,
    /// Explicit per-agent signals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<Vec<ScalarSignal>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(rename = "R")]
    pub radius: f64,
    pub d: f64,
    pub k_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hysteresis: Option<f64>,
    /// Per-pair desired distances `[i, j, d]` (1-based) overriding `d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_pairs: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgnKind {
    Exact,
    BoundaryLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub dt: f64,
    pub t_end: f64,
    pub integrator: IntegratorKind,
    pub sgn: SgnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub record_every: usize,
}

/// Validated simulation inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: SimConfig,
    pub team: TeamCost,
    pub positions: Vec<DVector<f64>>,
}

fn invalid(name: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(crate::Error::InvalidParameter {
        name: name.into(),
        reason: reason.into(),
    })
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> ScenarioResult<Self> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Parses `text`, applies `section.key=value` overrides, and deserializes.
    pub fn from_toml_str_with(text: &str, overrides: &[String]) -> ScenarioResult<Self> {
        if overrides.is_empty() {
            return Self::from_toml_str(text);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        Self::deserialize(toml::Value::Table(table)).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> ScenarioResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str_with(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Flattened `section.key=value` lines.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("scenario serializes");
        let mut out = Vec::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn resolve(&self) -> ScenarioResult<Resolved> {
        let n = self.agents.count;
        let dim = self.agents.dim;
        if n == 0 {
            return Err(invalid("agents.count", "must be at least 1"));
        }
        if dim == 0 {
            return Err(invalid("agents.dim", "must be at least 1"));
        }
        let team = self.resolve_team()?;
        let positions = self.resolve_positions()?;

        let law = match self.dynamics.kind {
            DynamicsKind::Single => {
                let tau = self
                    .gains
                    .tau
                    .ok_or_else(|| invalid("gains.tau", "required for single-integrator dynamics"))?;
                ControlLaw::Single(GainsSingle::new(self.gains.alpha, self.gains.beta, tau)?)
            }
            DynamicsKind::Double => {
                if self.gains.tau.is_some() {
                    return Err(invalid("gains.tau", "not used by double-integrator dynamics"));
                }
                ControlLaw::Double(GainsDouble::new(self.gains.alpha, self.gains.beta)?)
            }
        };

        let p = &self.potential;
        let desired = match &p.d_pairs {
            None => DesiredDistance::Uniform(p.d),
            Some(pairs) => {
                let mut table = DMatrix::from_element(n, n, p.d);
                for &(i, j, d) in pairs {
                    if i == 0 || j == 0 || i > n || j > n || i == j {
                        return Err(invalid("potential.d_pairs", format!("bad pair ({i}, {j})")));
                    }
                    table[(i - 1, j - 1)] = d;
                    table[(j - 1, i - 1)] = d;
                }
                DesiredDistance::PerPair(table)
            }
        };
        let potential = PotentialParams {
            radius: p.radius,
            desired,
            gain: p.k_p,
            force_cap: p.force_cap,
        };

        let it = &self.integration;
        let sgn = match it.sgn {
            SgnKind::Exact => SgnMode::Exact,
            SgnKind::BoundaryLayer => SgnMode::BoundaryLayer {
                kappa: it
                    .kappa
                    .ok_or_else(|| invalid("integration.kappa", "required for boundary_layer"))?,
            },
        };
        let config = SimConfig {
            law,
            dt: it.dt,
            t_end: it.t_end,
            integrator: match it.integrator {
                IntegratorKind::Euler => Integrator::Euler,
                IntegratorKind::Rk4 => Integrator::Rk4,
            },
            record_every: it.record_every,
            sgn,
            hysteresis: p.hysteresis.unwrap_or(0.1 * p.radius),
            potential,
            weights: WeightRule::Unit,
        };
        config.validate(n)?;
        Ok(Resolved {
            config,
            team,
            positions,
        })
    }

    fn resolve_team(&self) -> ScenarioResult<TeamCost> {
        let c = &self.cost;
        let (n, dim) = (self.agents.count, self.agents.dim);
        if c.family != "affine" {
            return Err(invalid("cost.family", format!("unsupported family `{}`", c.family)));
        }
        let signals: Vec<TimeSignal> = match (&c.signal, &c.agents) {
            (Some(template), None) => {
                let base = TimeSignal::new(template.clone())?;
                (1..=n)
                    .map(|i| if c.index_scaled { base.scaled(i as f64) } else { base.clone() })
                    .collect()
            }
            (None, Some(per_agent)) => {
                if per_agent.len() != n {
                    return Err(invalid(
                        "cost.agents",
                        format!("expected {n} entries, got {}", per_agent.len()),
                    ));
                }
                per_agent
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let sig = TimeSignal::new(s.clone())?;
                        Ok(if c.index_scaled { sig.scaled((i + 1) as f64) } else { sig })
                    })
                    .collect::<crate::Result<_>>()?
            }
            _ => return Err(invalid("cost", "give exactly one of `signal` or `agents`")),
        };
        if let Some(s) = signals.iter().find(|s| s.dim() != dim) {
            return Err(invalid(
                "cost.signal",
                format!("signal has {} coordinates, agents.dim is {dim}", s.dim()),
            ));
        }
        let members = signals
            .into_iter()
            .map(|s| AffineGradientCost::new(c.sigma, s))
            .collect::<crate::Result<Vec<_>>>()
            .map_err(|e| match e {
                crate::Error::InvalidParameter { reason, .. } => invalid("cost.sigma", reason),
                other => other.into(),
            })?;
        Ok(TeamCost::new(members)?)
    }

    fn resolve_positions(&self) -> ScenarioResult<Vec<DVector<f64>>> {
        let (n, dim) = (self.agents.count, self.agents.dim);
        match &self.agents.placement {
            Placement::Circle { radius, center } => {
                if dim < 2 {
                    return Err(invalid("agents.placement", "circle placement needs dim >= 2"));
                }
                if !(*radius > 0.0) {
                    return Err(invalid("agents.placement.radius", "must be positive"));
                }
                let center = match center {
                    Some(c) if c.len() != dim => {
                        return Err(invalid("agents.placement.center", format!("needs {dim} coordinates")))
                    }
                    Some(c) => DVector::from_vec(c.clone()),
                    None => DVector::zeros(dim),
                };
                Ok((0..n)
                    .map(|i| {
                        let a = 2.0 * PI * i as f64 / n as f64;
                        let mut p = center.clone();
                        p[0] += radius * a.cos();
                        p[1] += radius * a.sin();
                        p
                    })
                    .collect())
            }
            Placement::Explicit { positions } => {
                if positions.len() != n {
                    return Err(invalid(
                        "agents.placement.positions",
                        format!("expected {n} positions, got {}", positions.len()),
                    ));
                }
                positions
                    .iter()
                    .map(|p| {
                        if p.len() == dim {
                            Ok(DVector::from_vec(p.clone()))
                        } else {
                            Err(invalid("agents.placement.positions", format!("each needs {dim} coordinates")))
                        }
                    })
                    .collect()
            }
            Placement::RandomBox {
                half_width,
                seed,
                min_separation,
            } => {
                if !(*half_width > 0.0) || !(*min_separation >= 0.0) {
                    return Err(invalid("agents.placement", "half_width must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut pts: Vec<DVector<f64>> = Vec::with_capacity(n);
                let mut attempts = 0usize;
                while pts.len() < n {
                    attempts += 1;
                    if attempts > 100_000 {
                        return Err(invalid("agents.placement", "cannot satisfy min_separation in box"));
                    }
                    let p = DVector::from_fn(dim, |_, _| rng.gen_range(-half_width..=*half_width));
                    if pts.iter().all(|q| (q - &p).norm() >= *min_separation) {
                        pts.push(p);
                    }
                }
                Ok(pts)
            }
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "single_fig1" => Some(Self::single_fig1()),
            "double_fig2" => Some(Self::double_fig2()),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["single_fig1", "double_fig2"]
    }

    /// Six planar single integrators, `fᵢ = ‖x - i(sin 0.2t, cos 0.2t)‖²`,
    /// α = 2, β = 5, τ = 1.
    pub fn single_fig1() -> Self {
        Self {
            dynamics: DynamicsSection {
                kind: DynamicsKind::Single,
            },
            agents: preset_agents(),
            cost: CostSection {
                family: "affine".into(),
                sigma: 2.0,
                index_scaled: true,
                signal: Some(vec![
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
                ]),
                agents: None,
            },
            gains: GainsSection {
                alpha: 2.0,
                beta: 5.0,
                tau: Some(1.0),
            },
            potential: preset_potential(),
            integration: IntegrationSection {
                dt: 1e-3,
                t_end: 50.0,
                integrator: IntegratorKind::Rk4,
                sgn: SgnKind::BoundaryLayer,
                kappa: Some(0.01),
                record_every: 1,
            },
        }
    }

    /// Six planar double integrators,
    /// `fᵢ = (x + 2i sin(0.5t)/(t+1))² + (y + i sin(0.1t))²`, α = 10, β = 20.
    pub fn double_fig2() -> Self {
        Self {
            dynamics: DynamicsSection {
                kind: DynamicsKind::Double,
            },
            agents: preset_agents(),
            cost: CostSection {
                family: "affine".into(),
                sigma: 2.0,
                index_scaled: true,
                signal: Some(vec![
                    ScalarSignal::Damped {
                        amplitude: 4.0,
                        omega: 0.5,
                    },
                    ScalarSignal::Sinusoid {
                        amplitude: 2.0,
                        omega: 0.1,
                        phase: 0.0,
                    },
                ]),
                agents: None,
            },
            gains: GainsSection {
                alpha: 10.0,
                beta: 20.0,
                tau: None,
            },
            potential: preset_potential(),
            integration: IntegrationSection {
                dt: 2e-4,
                t_end: 50.0,
                integrator: IntegratorKind::Rk4,
                sgn: SgnKind::BoundaryLayer,
                kappa: Some(0.01),
                record_every: 50,
            },
        }
    }
}

fn preset_agents() -> AgentsSection {
    AgentsSection {
        count: 6,
        dim: 2,
        placement: Placement::Circle {
            radius: 1.5,
            center: None,
        },
    }
}

fn preset_potential() -> PotentialSection {
    PotentialSection {
        radius: 5.0,
        d: 0.5,
        k_p: 5e-4,
        force_cap: None,
        hysteresis: Some(0.5),
        d_pairs: None,
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::Array(items) if items.iter().any(|v| v.is_table()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Applies `a.b.c=value` entries to a parsed document. The parent table must
/// exist; the value is parsed as a TOML value, falling back to a string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> ScenarioResult<()> {
    for entry in overrides {
        let bad = |reason: &str| ScenarioError::Override {
            entry: entry.clone(),
            reason: reason.to_string(),
        };
        let (path, raw) = entry.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(bad("empty path component"));
        }
        let (last, parents) = keys.split_last().expect("non-empty");
        let mut cursor = &mut *table;
        for k in parents {
            cursor = match cursor.get_mut(*k) {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(bad(&format!("no table `{k}` in scenario"))),
            };
        }
        let raw = raw.trim();
        let mut value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (cursor.get(*last), &value) {
            value = toml::Value::Float(*i as f64);
        }
        cursor.insert((*last).to_string(), value);
    }
    Ok(())
}
